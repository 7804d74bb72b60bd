//! Comparison schemes: exhaustive search, relax-and-round, local search and
//! the two rate-driven power allocations (water-filling, max-min fairness).

use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::apo_solver::{dc_subproblem, ranking_init, repair_loss, round_and_repair};
use crate::error::{GsError, Result};
use crate::link_model::{achievable_rate, frame_energy, loss_within, Schedule, SystemParams, RATE_SLACK_REL};
use crate::report::SolveReport;
use crate::scalar::Scalar;
use crate::trace::FrameTrace;

/// Default frame limit of [`brute_force`].
pub const BRUTE_FORCE_MAX_FRAMES: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyBudget<T = f64> {
    pub total_energy: T,
}

impl<T: Scalar> EnergyBudget<T> {
    pub fn new(total_energy: T) -> Result<Self> {
        if !(total_energy >= T::zero()) || !total_energy.is_finite() {
            return Err(GsError::InvalidParam(format!(
                "energy budget must be finite and non-negative, got {total_energy}"
            )));
        }
        Ok(Self { total_energy })
    }
}

fn setup<T: Scalar>(trace: &FrameTrace<T>, params: &SystemParams<T>) -> Result<()> {
    params.validate()?;
    if trace.is_empty() {
        return Err(GsError::EmptyTrace);
    }
    Ok(())
}

/// Per-frame pose energy and extra energy of an image upload over a pose.
fn frame_costs<T: Scalar>(trace: &FrameTrace<T>, params: &SystemParams<T>) -> (Vec<T>, Vec<T>) {
    trace
        .gains()
        .iter()
        .map(|&g| {
            let pose = frame_energy(params.pose_bits, g, params);
            (pose, frame_energy(params.image_bits, g, params) - pose)
        })
        .unzip()
}

/// Exact optimum by enumeration of all `2^T` content decisions. Ties go to
/// the lexicographically smallest `x`.
pub fn brute_force<T: Scalar>(
    trace: &FrameTrace<T>,
    params: &SystemParams<T>,
    max_frames: usize,
) -> Result<SolveReport<T>> {
    let started = Instant::now();
    setup(trace, params)?;
    let n = trace.len();
    if n > max_frames || n >= 63 {
        return Err(GsError::TooManyFrames { frames: n, max: max_frames.min(62) });
    }
    let pose_e: Vec<T> = trace.gains().iter().map(|&g| frame_energy(params.pose_bits, g, params)).collect();
    let img_e: Vec<T> = trace.gains().iter().map(|&g| frame_energy(params.image_bits, g, params)).collect();
    let losses = trace.losses();
    let frames = T::from_usize_lossy(n);

    let mut best: Option<(T, u64)> = None;
    // Bit (n − 1 − t) holds x_t, so ascending masks are lexicographic in x.
    for mask in 0u64..(1u64 << n) {
        let mut loss = T::zero();
        let mut energy = T::zero();
        for t in 0..n {
            if mask >> (n - 1 - t) & 1 == 1 {
                energy = energy + img_e[t];
            } else {
                energy = energy + pose_e[t];
                loss = loss + losses[t];
            }
        }
        if !loss_within(loss / frames, params) {
            continue;
        }
        if best.map_or(true, |(e, _)| energy < e) {
            best = Some((energy, mask));
        }
    }
    // All uploads always satisfy the loss constraint.
    let (_, mask) = best.expect("all-upload assignment is feasible");
    let upload: Vec<bool> = (0..n).map(|t| mask >> (n - 1 - t) & 1 == 1).collect();
    let sched = Schedule::from_binary(&upload, trace.gains(), params)?;
    SolveReport::finish("brute", sched, trace, params, started)
}

/// Continuous relaxation without penalty, rounded at 0.5 and repaired.
pub fn relax_and_round<T: Scalar>(trace: &FrameTrace<T>, params: &SystemParams<T>) -> Result<SolveReport<T>> {
    let started = Instant::now();
    setup(trace, params)?;
    if params.image_bits == params.pose_bits {
        let mut report = crate::apo_solver::apo_solve(trace, params, &Default::default())?;
        report.solver = "round".into();
        return Ok(report);
    }
    let anchor = vec![T::zero(); trace.len()];
    let relaxed = dc_subproblem(trace, params, &anchor, T::infinity(), T::lit(1e-12))?;
    let sched = round_and_repair(&relaxed.x, trace, params)?;
    SolveReport::finish("round", sched, trace, params, started)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalSearchConfig {
    /// Extra runs from random feasible starts after the all-upload run.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for LocalSearchConfig {
    fn default() -> Self {
        Self { restarts: 0, seed: 0 }
    }
}

/// First-improvement descent over single flips and upload/pose swaps.
/// Moves must keep the loss constraint and lower the energy; at equal energy a
/// move that lowers the pose loss is also taken.
fn descend<T: Scalar>(upload: &mut [bool], extra: &[T], losses: &[T], params: &SystemParams<T>) {
    let n = upload.len();
    let frames = T::from_usize_lossy(n);
    let mut pose_loss: T = (0..n).filter(|&t| !upload[t]).map(|t| losses[t]).sum();
    let fits = |l: T| loss_within(l / frames, params);
    'restart: loop {
        for i in 0..n {
            // 1 → 0 flips save energy; 0 → 1 flips never do.
            if upload[i] && fits(pose_loss + losses[i]) && extra[i] > T::zero() {
                upload[i] = false;
                pose_loss = pose_loss + losses[i];
                continue 'restart;
            }
        }
        for i in 0..n {
            if !upload[i] {
                continue;
            }
            for j in 0..n {
                if upload[j] {
                    continue;
                }
                // i: upload → pose, j: pose → upload
                let d_energy = extra[j] - extra[i];
                let d_loss = losses[i] - losses[j];
                let better = d_energy < T::zero() || (d_energy == T::zero() && d_loss < T::zero());
                if better && fits(pose_loss + d_loss) {
                    upload[i] = false;
                    upload[j] = true;
                    pose_loss = pose_loss + d_loss;
                    continue 'restart;
                }
            }
        }
        return;
    }
}

pub fn local_search<T: Scalar>(
    trace: &FrameTrace<T>,
    params: &SystemParams<T>,
    config: &LocalSearchConfig,
) -> Result<SolveReport<T>> {
    let started = Instant::now();
    setup(trace, params)?;
    let n = trace.len();
    let (_, extra) = frame_costs(trace, params);
    let losses = trace.losses();
    let cost = |u: &[bool]| u.iter().zip(&extra).filter(|(&b, _)| b).map(|(_, &e)| e).sum::<T>();

    let mut best = vec![true; n];
    descend(&mut best, &extra, losses, params);
    let mut best_cost = cost(&best);

    let mut master = ChaCha8Rng::seed_from_u64(config.seed);
    for _ in 0..config.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(master.next_u64());
        let mut cand: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        repair_loss(&mut cand, losses, params);
        descend(&mut cand, &extra, losses, params);
        let c = cost(&cand);
        if c < best_cost {
            best = cand;
            best_cost = c;
        }
    }
    let sched = Schedule::from_binary(&best, trace.gains(), params)?;
    SolveReport::finish("search", sched, trace, params, started)
}

/// Content choice for a fixed power allocation: an image when the slot
/// carries `I` bits, a pose when it carries `S`, otherwise the frame is lost.
fn map_content<T: Scalar>(
    solver: &str,
    powers: Vec<T>,
    trace: &FrameTrace<T>,
    params: &SystemParams<T>,
    started: Instant,
) -> Result<SolveReport<T>> {
    let rel = T::one() - T::lit(RATE_SLACK_REL);
    let mut x = Vec::with_capacity(powers.len());
    let mut undelivered = Vec::new();
    for (t, (&p, &g)) in powers.iter().zip(trace.gains()).enumerate() {
        let bits = params.slot_duration * achievable_rate(p, g, params)?;
        if bits >= params.image_bits * rel {
            x.push(T::one());
        } else {
            if bits < params.pose_bits * rel {
                undelivered.push(t);
            }
            x.push(T::zero());
        }
    }
    let sched = Schedule::new(x, powers)?;
    let mut report = SolveReport::finish(solver, sched, trace, params, started)?;
    report.undelivered = undelivered;
    Ok(report)
}

/// Sum-rate maximizing powers `max(0, ν − σ²/g_t)` with `Σ p_t = total`.
/// Returns the powers and the water level `ν`.
pub fn water_fill<T: Scalar>(noise_to_gain: &[T], total_power: T) -> (Vec<T>, T) {
    let floor = noise_to_gain.iter().copied().fold(T::infinity(), T::min);
    if total_power <= T::zero() || noise_to_gain.is_empty() {
        return (vec![T::zero(); noise_to_gain.len()], floor);
    }
    let used = |level: T| noise_to_gain.iter().map(|&a| (level - a).max(T::zero())).sum::<T>();
    let (mut lo, mut hi) = (floor, floor + total_power);
    for _ in 0..200 {
        let mid = lo + (hi - lo) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        if used(mid) < total_power {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Exact level for the active set found by bisection.
    let active: Vec<T> = noise_to_gain.iter().copied().filter(|&a| a < hi).collect();
    let level = (total_power + active.iter().copied().sum::<T>()) / T::from_usize_lossy(active.len());
    let powers = noise_to_gain.iter().map(|&a| (level - a).max(T::zero())).collect();
    (powers, level)
}

/// Stationarity residual of a water-filling allocation:
/// `max |(σ²/g_t + p_t)/ν − 1|` over active frames, and the largest relative
/// amount by which an inactive frame sits below the water level.
pub fn water_fill_residual<T: Scalar>(noise_to_gain: &[T], powers: &[T], level: T) -> T {
    noise_to_gain
        .iter()
        .zip(powers)
        .map(
            |(&a, &p)| {
                if p > T::zero() {
                    ((a + p) / level - T::one()).abs()
                } else {
                    ((level - a) / level).max(T::zero())
                }
            },
        )
        .fold(T::zero(), T::max)
}

pub fn water_filling<T: Scalar>(
    trace: &FrameTrace<T>,
    params: &SystemParams<T>,
    budget: EnergyBudget<T>,
) -> Result<SolveReport<T>> {
    let started = Instant::now();
    setup(trace, params)?;
    let a: Vec<T> = trace.gains().iter().map(|&g| params.noise_power / g).collect();
    let (powers, _) = water_fill(&a, budget.total_energy / params.slot_duration);
    map_content("waterfill", powers, trace, params, started)
}

/// Equal rate on every frame, `p_t = (σ²/g_t)(2^{R/B} − 1)`, with the common
/// rate chosen so the budget is spent exactly.
pub fn max_min_fairness<T: Scalar>(
    trace: &FrameTrace<T>,
    params: &SystemParams<T>,
    budget: EnergyBudget<T>,
) -> Result<SolveReport<T>> {
    let started = Instant::now();
    setup(trace, params)?;
    let a: Vec<T> = trace.gains().iter().map(|&g| params.noise_power / g).collect();
    let total_power = budget.total_energy / params.slot_duration;
    // Σ a_t (2^{R/B} − 1) = P has the closed-form root 2^{R/B} − 1 = P / Σ a_t.
    let snr_factor = total_power / a.iter().copied().sum::<T>();
    let powers = a.iter().map(|&v| v * snr_factor).collect();
    map_content("fairness", powers, trace, params, started)
}

/// Common rate `B log2(1 + P / Σ σ²/g_t)` reached by [`max_min_fairness`].
pub fn fairness_rate<T: Scalar>(trace: &FrameTrace<T>, params: &SystemParams<T>, budget: EnergyBudget<T>) -> T {
    let sum_a: T = trace.gains().iter().map(|&g| params.noise_power / g).sum();
    let ratio = budget.total_energy / params.slot_duration / sum_a;
    params.bandwidth * ratio.ln_1p() / T::LN_2()
}

/// Energy of uploading every frame at its minimal power.
pub fn all_upload<T: Scalar>(trace: &FrameTrace<T>, params: &SystemParams<T>) -> Result<SolveReport<T>> {
    let started = Instant::now();
    setup(trace, params)?;
    let sched = Schedule::from_binary(&vec![true; trace.len()], trace.gains(), params)?;
    SolveReport::finish("robomr", sched, trace, params, started)
}

/// Pose keys only.
pub fn all_pose<T: Scalar>(trace: &FrameTrace<T>, params: &SystemParams<T>) -> Result<SolveReport<T>> {
    let started = Instant::now();
    setup(trace, params)?;
    let sched = Schedule::from_binary(&vec![false; trace.len()], trace.gains(), params)?;
    SolveReport::finish("robogs", sched, trace, params, started)
}

pub fn ranking<T: Scalar>(trace: &FrameTrace<T>, params: &SystemParams<T>) -> Result<SolveReport<T>> {
    let started = Instant::now();
    setup(trace, params)?;
    let sched = ranking_init(trace, params)?;
    SolveReport::finish("ranking", sched, trace, params, started)
}
