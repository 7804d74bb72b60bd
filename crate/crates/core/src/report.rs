use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::link_model::{check_feasible, schedule_energy, Schedule, SystemParams};
use crate::scalar::Scalar;
use crate::trace::FrameTrace;

/// Per-iteration statistics of the DC loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterateSummary<T = f64> {
    pub n: usize,
    /// `‖x^[n] − x^[n−1]‖₂`; zero for the initial point.
    pub step_norm: T,
    /// `φ(x) / T`, the mean of `x_t (1 − x_t)`.
    pub zero_one_loss: T,
    /// `τ Σ p_t + penalty(x)` in joules.
    pub penalized_objective: T,
    pub energy: T,
    pub beta: T,
    /// Multiplier of the loss constraint.
    pub multiplier: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport<T = f64> {
    pub solver: String,
    pub schedule: Schedule<T>,
    pub energy: T,
    pub mean_masked_loss: T,
    pub upload_fraction: T,
    /// Rate and loss constraints hold within the model tolerances.
    pub feasible: bool,
    pub binary: bool,
    /// Frames whose allocated rate cannot carry even a pose key.
    #[serde(default)]
    pub undelivered: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<IterateSummary<T>>,
    #[serde(default)]
    pub history: Vec<IterateSummary<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<f64>,
}

impl<T: Scalar> SolveReport<T> {
    pub(crate) fn finish(
        solver: &str,
        schedule: Schedule<T>,
        trace: &FrameTrace<T>,
        params: &SystemParams<T>,
        started: Instant,
    ) -> Result<Self> {
        let feas = check_feasible(&schedule, trace, params)?;
        Ok(Self {
            solver: solver.to_string(),
            energy: schedule_energy(&schedule, params),
            mean_masked_loss: feas.mean_masked_loss,
            upload_fraction: schedule.upload_fraction(),
            feasible: feas.feasible(),
            binary: feas.binary,
            undelivered: Vec::new(),
            initial: None,
            history: Vec::new(),
            wall_ms: Some(started.elapsed().as_secs_f64() * 1e3),
            schedule,
        })
    }

    /// Binary content decision, `x_t ≥ 0.5`.
    pub fn uploads(&self) -> Vec<bool> {
        self.schedule.x.iter().map(|&x| x >= T::lit(0.5)).collect()
    }

    /// Drops wall-clock data so that serialized reports are reproducible.
    pub fn without_timing(mut self) -> Self {
        self.wall_ms = None;
        self
    }
}
