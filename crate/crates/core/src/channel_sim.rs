//! Seeded Rician block-fading gain traces.
//!
//! The random stream is `rand_chacha::ChaCha8Rng` seeded through
//! `SeedableRng::seed_from_u64`; both are value-stable across platforms.
//! Uniform variates take the top 53 bits of `next_u64` and are shifted to the
//! open interval (0, 1). Per slot the draw order is: LOS phase `ψ`, then the
//! two Box–Muller uniforms of the scattered component.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GsError, Result};
use crate::scalar::Scalar;

/// K-factors at or above this value are treated as pure line-of-sight.
pub const LOS_ONLY_K: f64 = 1e12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Distances<T = f64> {
    Fixed(T),
    PerFrame(Vec<T>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RicianParams<T = f64> {
    /// Linear path gain at 1 m.
    pub pathloss_ref: T,
    pub exponent: T,
    pub rician_k: T,
    /// Robot-to-server distance in metres.
    pub distances: Distances<T>,
    pub seed: u64,
}

impl<T: Scalar> Default for RicianParams<T> {
    /// -30 dB at 1 m, exponent 3, K = 1, 10 m.
    fn default() -> Self {
        Self {
            pathloss_ref: T::lit(1e-3),
            exponent: T::lit(3.0),
            rician_k: T::one(),
            distances: Distances::Fixed(T::lit(10.0)),
            seed: 0,
        }
    }
}

impl<T: Scalar> RicianParams<T> {
    pub fn validate(&self, frames: usize) -> Result<()> {
        if !(self.pathloss_ref > T::zero()) {
            return Err(GsError::InvalidParam("pathloss_ref must be positive".into()));
        }
        if !(self.exponent > T::zero()) {
            return Err(GsError::InvalidParam("pathloss exponent must be positive".into()));
        }
        if !(self.rician_k >= T::zero()) {
            return Err(GsError::InvalidParam("Rician K-factor must be non-negative".into()));
        }
        match &self.distances {
            Distances::Fixed(d) if !(*d > T::zero() && d.is_finite()) => {
                Err(GsError::InvalidParam(format!("distance must be positive, got {d}")))
            }
            Distances::PerFrame(ds) if ds.len() < frames => {
                Err(GsError::LengthMismatch { what: "distance vector", got: ds.len(), expected: frames })
            }
            Distances::PerFrame(ds) => match ds.iter().position(|d| !(*d > T::zero() && d.is_finite())) {
                Some(i) => Err(GsError::InvalidParam(format!("distance of frame {i} must be positive"))),
                None => Ok(()),
            },
            _ => Ok(()),
        }
    }

    fn distance(&self, t: usize) -> f64 {
        match &self.distances {
            Distances::Fixed(d) => d.to_f64_lossy(),
            Distances::PerFrame(ds) => ds[t].to_f64_lossy(),
        }
    }
}

/// Uniform on the open interval (0, 1).
#[inline]
fn open_unit(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// One circularly-symmetric `CN(0, 1)` sample via Box–Muller.
fn complex_gaussian(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let u1 = open_unit(rng);
    let u2 = open_unit(rng);
    let r = (-2.0 * u1.ln()).sqrt();
    let theta = std::f64::consts::TAU * u2;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    (s * r * theta.cos(), s * r * theta.sin())
}

/// Draws `frames` channel power gains `|h_t|²`.
pub fn generate_channel<T: Scalar>(params: &RicianParams<T>, frames: usize) -> Result<Vec<T>> {
    if frames == 0 {
        return Err(GsError::InvalidParam("number of frames must be at least 1".into()));
    }
    params.validate(frames)?;
    let rho0 = params.pathloss_ref.to_f64_lossy();
    let alpha = params.exponent.to_f64_lossy();
    let k = params.rician_k.to_f64_lossy();
    let los_only = k >= LOS_ONLY_K;
    let w_los = (k / (1.0 + k)).sqrt();
    let w_nlos = (1.0 / (1.0 + k)).sqrt();

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut gains = Vec::with_capacity(frames);
    for t in 0..frames {
        let large_scale = rho0 / params.distance(t).powf(alpha);
        if los_only {
            gains.push(T::lit(large_scale));
            continue;
        }
        let gain = loop {
            let psi = std::f64::consts::PI * (2.0 * open_unit(&mut rng) - 1.0);
            let phase = -std::f64::consts::PI * psi.sin();
            let (nr, ni) = complex_gaussian(&mut rng);
            let re = w_los * phase.cos() + w_nlos * nr;
            let im = w_los * phase.sin() + w_nlos * ni;
            let g = large_scale * (re * re + im * im);
            if g > 0.0 {
                break g;
            }
        };
        gains.push(T::lit(gain));
    }
    Ok(gains)
}

pub fn equal_gain_trace<T: Scalar>(gain: T, frames: usize) -> Vec<T> {
    vec![gain; frames]
}
