//! Energy-minimal content switching and transmit-power scheduling for
//! Gaussian-splatting assisted robotic mixed-reality uplinks.
//!
//! Each frame is either uploaded as a full image or replaced by a pose key
//! from which the server renders the view with its GS model. The
//! [`apo_solver`] chooses the switching pattern and powers that minimize
//! uplink energy while the mean rendering loss stays below a threshold.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the un-suffixed
//! type names default to `f64` and `*F32` aliases are provided below.

pub mod apo_solver;
pub mod baselines;
pub mod channel_sim;
pub mod error;
pub mod experiments;
pub mod link_model;
pub mod mr_imaging;
pub mod report;
pub mod scalar;
pub mod trace;

pub use apo_solver::{apo_solve, ranking_init, ApoConfig, BetaSchedule, DcIterate};
pub use baselines::{EnergyBudget, LocalSearchConfig};
pub use channel_sim::{Distances, RicianParams};
pub use error::{GsError, Result};
pub use link_model::{FeasibilityReport, Schedule, SystemParams};
pub use mr_imaging::{Dssim, ImageFrame, Mask};
pub use report::{IterateSummary, SolveReport};
pub use scalar::Scalar;
pub use trace::{FrameQuality, FrameTrace};

/// Default working precision.
pub type Real = f64;

pub type SystemParamsF32 = SystemParams<f32>;
pub type ScheduleF32 = Schedule<f32>;
pub type FrameTraceF32 = FrameTrace<f32>;
pub type RicianParamsF32 = RicianParams<f32>;
pub type SolveReportF32 = SolveReport<f32>;
pub type DcIterateF32 = DcIterate<f32>;
