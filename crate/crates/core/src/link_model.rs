//! Physical-layer model of the uplink: achievable rate, minimal power for a
//! given payload, per-frame data volume, schedule energy and feasibility.

use serde::{Deserialize, Serialize};

use crate::error::{GsError, Result};
use crate::scalar::{exp2_m1, Scalar};
use crate::trace::FrameTrace;

/// Relative slack allowed on the per-frame rate constraint.
pub const RATE_SLACK_REL: f64 = 1e-9;
/// Absolute slack allowed on the mean loss constraint.
pub const LOSS_SLACK: f64 = 1e-9;
/// Largest `x(1 - x)` for which a schedule still counts as binary.
pub const BINARY_TOL: f64 = 1e-6;

/// Scalar constants of the link and of the scheduling problem.
///
/// Everything is linear SI: seconds, hertz, watts and bits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemParams<T = f64> {
    /// Slot duration in seconds.
    pub slot_duration: T,
    /// Uplink bandwidth in Hz.
    pub bandwidth: T,
    /// Noise plus interference power in watts.
    pub noise_power: T,
    /// Payload of a full image upload in bits.
    pub image_bits: T,
    /// Payload of a pose key in bits.
    pub pose_bits: T,
    /// Bound on the mean per-frame loss.
    pub loss_threshold: T,
    /// Weight of the DSSIM term in the frame loss.
    pub ssim_weight: T,
    /// Penalty parameter; `None` selects the scale-aware default of the solver.
    #[serde(default)]
    pub penalty_beta: Option<T>,
}

impl<T: Scalar> SystemParams<T> {
    /// The experimental setup: 0.1 s slots, 1 MHz, -60 dBm noise,
    /// 67.2 kbit images, 192 bit poses, λ = 0.2, loss threshold 0.03.
    pub fn standard() -> Self {
        Self {
            slot_duration: T::lit(0.1),
            bandwidth: T::lit(1e6),
            noise_power: T::lit(dbm_to_watts(-60.0)),
            image_bits: T::lit(67_200.0),
            pose_bits: T::lit(192.0),
            loss_threshold: T::lit(0.03),
            ssim_weight: T::lit(0.2),
            penalty_beta: None,
        }
    }

    pub fn with_loss_threshold(mut self, l_th: T) -> Self {
        self.loss_threshold = l_th;
        self
    }

    /// Checks the parameter invariants. `image_bits == pose_bits` is accepted
    /// (content switching is then vacuous and the solvers short-circuit).
    pub fn validate(&self) -> Result<()> {
        let positive = |v: T, name: &str| -> Result<()> {
            if v > T::zero() && v.is_finite() {
                Ok(())
            } else {
                Err(GsError::InvalidParam(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive(self.slot_duration, "slot_duration")?;
        positive(self.bandwidth, "bandwidth")?;
        positive(self.noise_power, "noise_power")?;
        positive(self.pose_bits, "pose_bits")?;
        positive(self.image_bits, "image_bits")?;
        positive(self.loss_threshold, "loss_threshold")?;
        if self.image_bits < self.pose_bits {
            return Err(GsError::InvalidParam(format!(
                "image_bits ({}) must not be smaller than pose_bits ({})",
                self.image_bits, self.pose_bits
            )));
        }
        if !(self.ssim_weight >= T::zero() && self.ssim_weight <= T::one()) {
            return Err(GsError::InvalidParam(format!("ssim_weight must lie in [0, 1], got {}", self.ssim_weight)));
        }
        if let Some(beta) = self.penalty_beta {
            if !(beta > T::zero()) || beta.is_nan() {
                return Err(GsError::InvalidParam(format!("penalty_beta must be positive, got {beta}")));
            }
        }
        Ok(())
    }

    /// Payload bits per hertz-slot, `τB`.
    #[inline]
    pub(crate) fn slot_capacity(&self) -> T {
        self.slot_duration * self.bandwidth
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// `B log2(1 + g p / σ²)` in bits per second.
pub fn achievable_rate<T: Scalar>(power: T, gain: T, params: &SystemParams<T>) -> Result<T> {
    if power < T::zero() {
        return Err(GsError::NegativePower(power.to_f64_lossy()));
    }
    let snr = gain * power / params.noise_power;
    Ok(params.bandwidth * snr.ln_1p() / T::LN_2())
}

/// Smallest power that delivers `bits` within one slot: `(σ²/g)(2^{D/(τB)} − 1)`.
pub fn min_power<T: Scalar>(bits: T, gain: T, params: &SystemParams<T>) -> T {
    params.noise_power / gain * exp2_m1(bits / params.slot_capacity())
}

/// Energy of one slot spent at [`min_power`].
#[inline]
pub fn frame_energy<T: Scalar>(bits: T, gain: T, params: &SystemParams<T>) -> T {
    params.slot_duration * min_power(bits, gain, params)
}

/// `x I + (1 − x) S`.
#[inline]
pub fn data_volume<T: Scalar>(x: T, params: &SystemParams<T>) -> T {
    x * params.image_bits + (T::one() - x) * params.pose_bits
}

/// Content-switching decision and transmit powers for every frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule<T = f64> {
    pub x: Vec<T>,
    pub p: Vec<T>,
}

impl<T: Scalar> Schedule<T> {
    pub fn new(x: Vec<T>, p: Vec<T>) -> Result<Self> {
        if x.len() != p.len() {
            return Err(GsError::LengthMismatch { what: "power vector", got: p.len(), expected: x.len() });
        }
        check_box(&x)?;
        if let Some(&bad) = p.iter().find(|v| !(**v >= T::zero())) {
            return Err(GsError::NegativePower(bad.to_f64_lossy()));
        }
        Ok(Self { x, p })
    }

    /// Places every frame on its tight rate constraint for the given `x`.
    pub fn tight(x: Vec<T>, gains: &[T], params: &SystemParams<T>) -> Result<Self> {
        if x.len() != gains.len() {
            return Err(GsError::LengthMismatch { what: "gain vector", got: gains.len(), expected: x.len() });
        }
        check_box(&x)?;
        let p = x.iter().zip(gains).map(|(&xt, &g)| min_power(data_volume(xt, params), g, params)).collect();
        Ok(Self { x, p })
    }

    pub fn from_binary(upload: &[bool], gains: &[T], params: &SystemParams<T>) -> Result<Self> {
        let x = upload.iter().map(|&u| if u { T::one() } else { T::zero() }).collect();
        Self::tight(x, gains, params)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn upload_fraction(&self) -> T {
        if self.x.is_empty() {
            return T::zero();
        }
        self.x.iter().copied().sum::<T>() / T::from_usize_lossy(self.x.len())
    }
}

pub(crate) fn check_box<T: Scalar>(x: &[T]) -> Result<()> {
    match x.iter().position(|v| !(*v >= T::zero() && *v <= T::one())) {
        Some(index) => Err(GsError::OutOfBox { index, value: x[index].to_f64_lossy() }),
        None => Ok(()),
    }
}

/// `τ Σ p_t`.
pub fn schedule_energy<T: Scalar>(sched: &Schedule<T>, params: &SystemParams<T>) -> T {
    params.slot_duration * sched.p.iter().copied().sum::<T>()
}

/// `(1/T) Σ L_t (1 − x_t)`.
pub fn mean_masked_loss<T: Scalar>(x: &[T], losses: &[T]) -> T {
    if x.is_empty() {
        return T::zero();
    }
    let total: T = x.iter().zip(losses).map(|(&xt, &l)| l * (T::one() - xt)).sum();
    total / T::from_usize_lossy(x.len())
}

/// Loss constraint test shared by every constructive algorithm.
#[inline]
pub fn loss_within<T: Scalar>(mean_loss: T, params: &SystemParams<T>) -> bool {
    mean_loss <= params.loss_threshold + T::lit(LOSS_SLACK)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport<T = f64> {
    /// `τ R_t(p_t) − D_t` per frame, in bits.
    pub rate_slack: Vec<T>,
    pub mean_masked_loss: T,
    /// `L_th` minus the mean masked loss.
    pub loss_slack: T,
    /// `max_t x_t (1 − x_t)`.
    pub binariness: T,
    pub rate_ok: bool,
    pub loss_ok: bool,
    pub binary: bool,
}

impl<T> FeasibilityReport<T> {
    /// Rate and loss constraints both hold (binary-ness is reported separately).
    pub fn feasible(&self) -> bool {
        self.rate_ok && self.loss_ok
    }
}

pub fn check_feasible<T: Scalar>(
    sched: &Schedule<T>,
    trace: &FrameTrace<T>,
    params: &SystemParams<T>,
) -> Result<FeasibilityReport<T>> {
    if sched.x.len() != trace.len() {
        return Err(GsError::LengthMismatch { what: "schedule", got: sched.x.len(), expected: trace.len() });
    }
    if sched.p.len() != trace.len() {
        return Err(GsError::LengthMismatch { what: "power vector", got: sched.p.len(), expected: trace.len() });
    }
    let rel = T::lit(RATE_SLACK_REL);
    let mut rate_ok = true;
    let mut rate_slack = Vec::with_capacity(trace.len());
    for ((&x, &p), &g) in sched.x.iter().zip(&sched.p).zip(trace.gains()) {
        let demand = data_volume(x, params);
        let slack = params.slot_duration * achievable_rate(p, g, params)? - demand;
        rate_ok &= slack >= -rel * demand;
        rate_slack.push(slack);
    }
    let mean = mean_masked_loss(&sched.x, trace.losses());
    let binariness = sched.x.iter().map(|&x| x * (T::one() - x)).fold(T::zero(), T::max);
    Ok(FeasibilityReport {
        rate_slack,
        mean_masked_loss: mean,
        loss_slack: params.loss_threshold - mean,
        binariness,
        rate_ok,
        loss_ok: loss_within(mean, params),
        binary: binariness <= T::lit(BINARY_TOL),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn link() -> SystemParams<f64> {
        SystemParams::standard()
    }

    /// Independent inverse of the rate by bisection.
    fn bisect_power(bits: f64, gain: f64, params: &SystemParams<f64>) -> f64 {
        let (mut lo, mut hi) = (0.0, 1.0);
        while params.slot_duration * achievable_rate(hi, gain, params).unwrap() < bits {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if params.slot_duration * achievable_rate(mid, gain, params).unwrap() < bits {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    #[test]
    fn rate_edge_values() {
        let params = link();
        assert_eq!(achievable_rate(0.0, 1e-6, &params).unwrap(), 0.0);
        let unit_snr = params.noise_power / 1e-6;
        let r = achievable_rate(unit_snr, 1e-6, &params).unwrap();
        assert!((r - params.bandwidth).abs() < 1e-6);
        assert!(matches!(achievable_rate(-1e-3, 1e-6, &params), Err(GsError::NegativePower(_))));
    }

    #[test]
    fn image_and_pose_power_match_bisection() {
        let params = link();
        let p_img = min_power(67_200.0, 1e-6, &params);
        let oracle = bisect_power(67_200.0, 1e-6, &params);
        assert!((p_img - oracle).abs() <= 1e-12 * oracle);
        assert!((p_img - 5.934e-4).abs() < 5e-7, "{p_img}");
        let r = achievable_rate(5.934e-4, 1e-6, &params).unwrap();
        assert!((r - 6.72e5).abs() / 6.72e5 < 1e-3, "{r}");

        let p_pose = min_power(192.0, 1e-6, &params);
        let oracle = bisect_power(192.0, 1e-6, &params);
        assert!((p_pose - oracle).abs() <= 1e-12 * oracle);
        assert!((p_pose - 1.33173e-6).abs() < 1e-5 * p_pose, "{p_pose}");
        assert!((p_pose - 1.3325e-6).abs() < 1e-3 * p_pose);
        let ratio_db = 10.0 * (p_img / p_pose).log10();
        assert!((ratio_db - 26.5).abs() < 0.05, "{ratio_db}");
        assert_eq!(min_power(0.0, 1e-6, &params), 0.0);
    }

    #[test]
    fn data_volume_interpolates() {
        let params = link();
        assert_eq!(data_volume(1.0, &params), 67_200.0);
        assert_eq!(data_volume(0.0, &params), 192.0);
        assert_eq!(data_volume(0.5, &params), 33_696.0);
    }

    #[test]
    fn energy_sums_powers() {
        let params = link();
        let sched = Schedule::new(vec![1.0, 1.0], vec![1e-3, 2e-3]).unwrap();
        assert!((schedule_energy(&sched, &params) - 3e-4).abs() < 1e-18);
        let zero = Schedule::new(vec![0.0; 4], vec![0.0; 4]).unwrap();
        assert_eq!(schedule_energy(&zero, &params), 0.0);

        let gains = vec![1e-6; 288];
        let all_up = Schedule::from_binary(&vec![true; 288], &gains, &params).unwrap();
        let e = schedule_energy(&all_up, &params);
        let per_frame = frame_energy(67_200.0, 1e-6, &params);
        assert!((e - 288.0 * per_frame).abs() < 1e-15);
        assert!((e - 1.709e-2).abs() < 5e-5, "{e}");
    }

    #[test]
    fn feasibility_of_reference_schedules() {
        let params = link();
        let trace = FrameTrace::new(vec![1e-6, 2e-6, 5e-7], vec![0.01, 0.09, 0.02]).unwrap();
        let all_up = Schedule::from_binary(&[true; 3], trace.gains(), &params).unwrap();
        let rep = check_feasible(&all_up, &trace, &params).unwrap();
        assert!(rep.feasible() && rep.binary);
        assert_eq!(rep.mean_masked_loss, 0.0);

        let silent = Schedule::new(vec![0.0; 3], vec![0.0; 3]).unwrap();
        let rep = check_feasible(&silent, &trace, &params).unwrap();
        assert!(!rep.rate_ok);
        assert!(rep.rate_slack.iter().all(|&s| s < 0.0));

        let short = Schedule::new(vec![0.0; 2], vec![0.0; 2]).unwrap();
        assert!(matches!(check_feasible(&short, &trace, &params), Err(GsError::LengthMismatch { .. })));
    }

    #[test]
    fn schedule_rejects_bad_vectors() {
        assert!(matches!(Schedule::new(vec![1.5], vec![0.0]), Err(GsError::OutOfBox { index: 0, .. })));
        assert!(Schedule::new(vec![0.5], vec![-1.0]).is_err());
        assert!(Schedule::new(vec![0.5, 0.2], vec![0.0]).is_err());
    }

    #[test]
    fn params_validation() {
        let mut p = link();
        assert!(p.validate().is_ok());
        p.pose_bits = 1e6;
        assert!(p.validate().is_err());
        let mut p = link();
        p.ssim_weight = 1.5;
        assert!(p.validate().is_err());
        let mut p = link();
        p.penalty_beta = Some(0.0);
        assert!(p.validate().is_err());
    }

    #[test]
    fn single_precision_instantiation() {
        let params = SystemParams::<f32>::standard();
        let p = min_power(67_200.0_f32, 1e-6, &params);
        assert!((p - 5.934e-4).abs() < 1e-6);
    }
}
