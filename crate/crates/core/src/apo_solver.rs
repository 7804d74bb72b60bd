//! Accelerated penalty optimization for the joint content-switching and
//! power-allocation problem.
//!
//! The binary decisions are relaxed to `[0, 1]` and pushed back to the
//! vertices by the exact penalty `(1/β) Σ x(1 − x)`. The concave part of the
//! penalty is linearized around the previous iterate, which leaves a convex
//! problem per outer iteration. That problem is solved exactly: the powers are
//! eliminated onto the tight rate constraints, the single loss constraint is
//! dualized, every frame then has a closed-form minimizer, and the multiplier
//! is found by bisection.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{GsError, Result};
use crate::link_model::{check_box, frame_energy, loss_within, mean_masked_loss, Schedule, SystemParams};
use crate::report::{IterateSummary, SolveReport};
use crate::scalar::{clamp01, Scalar};
use crate::trace::FrameTrace;

/// Doublings of the multiplier tried before bracketing is declared failed.
pub const MAX_BRACKET_DOUBLINGS: usize = 128;
const MAX_BISECTION_STEPS: usize = 400;
/// Default `β` is this many times the inverse of the costliest upload.
pub const DEFAULT_BETA_SCALE: f64 = 1e4;
/// Fractional frames whose both roundings are tried at termination; the rest
/// are rounded at 0.5.
pub const MAX_BRANCH_FRAMES: usize = 10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaSchedule {
    #[default]
    Fixed,
    /// Halve `β` (double the penalty weight) whenever the loop settles on a
    /// point that is not yet binary.
    Halving,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ApoConfig {
    pub max_outer_iters: usize,
    pub x_step_tol: f64,
    pub binary_tol: f64,
    pub dual_tol: f64,
    pub beta_schedule: BetaSchedule,
    pub seed: u64,
}

impl Default for ApoConfig {
    fn default() -> Self {
        Self {
            max_outer_iters: 10,
            x_step_tol: 1e-3,
            binary_tol: 1e-6,
            dual_tol: 1e-10,
            beta_schedule: BetaSchedule::Fixed,
            seed: 0,
        }
    }
}

impl ApoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_outer_iters == 0 {
            return Err(GsError::InvalidParam("max_outer_iters must be at least 1".into()));
        }
        for (name, v) in [("x_step_tol", self.x_step_tol), ("binary_tol", self.binary_tol), ("dual_tol", self.dual_tol)]
        {
            if !(v > 0.0) {
                return Err(GsError::InvalidParam(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

fn check_len<T>(x: &[T], expected: usize, what: &'static str) -> Result<()> {
    if x.len() != expected {
        return Err(GsError::LengthMismatch { what, got: x.len(), expected });
    }
    Ok(())
}

/// `(1/β) Σ x_t (1 − x_t)`.
pub fn penalty<T: Scalar>(x: &[T], beta: T) -> Result<T> {
    check_box(x)?;
    Ok(x.iter().map(|&v| v * (T::one() - v)).sum::<T>() / beta)
}

/// Linearization of the penalty at `anchor`: `Σ (x − 2 x̄ x + x̄²) / β`.
/// It majorizes [`penalty`] and touches it at `x = anchor`.
pub fn surrogate<T: Scalar>(x: &[T], anchor: &[T], beta: T) -> Result<T> {
    check_len(anchor, x.len(), "anchor")?;
    check_box(x)?;
    check_box(anchor)?;
    let two = T::lit(2.0);
    Ok(x.iter().zip(anchor).map(|(&v, &a)| v - two * a * v + a * a).sum::<T>() / beta)
}

/// `(1/T) Σ x_t (1 − x_t)`.
pub fn zero_one_loss<T: Scalar>(x: &[T]) -> T {
    if x.is_empty() {
        return T::zero();
    }
    x.iter().map(|&v| v * (T::one() - v)).sum::<T>() / T::from_usize_lossy(x.len())
}

/// `β = DEFAULT_BETA_SCALE / max_t τ p_min(I, h_t)`.
pub fn default_beta<T: Scalar>(trace: &FrameTrace<T>, params: &SystemParams<T>) -> T {
    let e_max = trace.gains().iter().map(|&g| frame_energy(params.image_bits, g, params)).fold(T::zero(), T::max);
    T::lit(DEFAULT_BETA_SCALE) / e_max
}

pub(crate) fn resolve_beta<T: Scalar>(trace: &FrameTrace<T>, params: &SystemParams<T>) -> T {
    params.penalty_beta.unwrap_or_else(|| default_beta(trace, params))
}

/// Frames in ascending loss order, ties by index.
pub(crate) fn ascending_loss_order<T: Scalar>(losses: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..losses.len()).collect();
    order.sort_by(|&a, &b| losses[a].partial_cmp(&losses[b]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    order
}

/// Flips pose frames to uploads, largest loss first, until the mean loss
/// constraint holds.
pub(crate) fn repair_loss<T: Scalar>(upload: &mut [bool], losses: &[T], params: &SystemParams<T>) {
    let as_x = |u: &[bool]| u.iter().map(|&b| if b { T::one() } else { T::zero() }).collect::<Vec<T>>();
    if loss_within(mean_masked_loss(&as_x(upload), losses), params) {
        return;
    }
    for &t in ascending_loss_order(losses).iter().rev() {
        if !upload[t] {
            upload[t] = true;
            if loss_within(mean_masked_loss(&as_x(upload), losses), params) {
                return;
            }
        }
    }
}

/// Pose keys for the smallest-loss frames, as many as the loss budget allows,
/// images for the rest; powers on the tight rate constraints.
pub fn ranking_init<T: Scalar>(trace: &FrameTrace<T>, params: &SystemParams<T>) -> Result<Schedule<T>> {
    if trace.is_empty() {
        return Err(GsError::EmptyTrace);
    }
    let losses = trace.losses();
    let frames = T::from_usize_lossy(trace.len());
    let mut upload = vec![true; trace.len()];
    let mut pose_loss = T::zero();
    for t in ascending_loss_order(losses) {
        let next = pose_loss + losses[t];
        if !loss_within(next / frames, params) {
            break;
        }
        pose_loss = next;
        upload[t] = false;
    }
    Schedule::from_binary(&upload, trace.gains(), params)
}

/// Closed-form data of the convex subproblem for one frame.
struct FrameTerms<T> {
    /// `ln κ_t`, where `κ_t 2^{k x}` is the marginal energy of raising `x_t`.
    ln_kappa: T,
    /// Linear coefficient `(1 − 2 x̄_t) / β` of the surrogate.
    slope: T,
    /// `L_t / T`.
    weight: T,
}

struct Subproblem<'a, T> {
    params: &'a SystemParams<T>,
    frames: Vec<FrameTerms<T>>,
    /// `k = (I − S) / (τ B)`.
    k: T,
}

impl<'a, T: Scalar> Subproblem<'a, T> {
    fn new(trace: &FrameTrace<T>, params: &'a SystemParams<T>, anchor: &[T], beta: T) -> Self {
        let cap = params.slot_capacity();
        let k = (params.image_bits - params.pose_bits) / cap;
        let inv_beta = T::one() / beta;
        let frames_n = T::from_usize_lossy(trace.len());
        let two = T::lit(2.0);
        let frames = trace
            .gains()
            .iter()
            .zip(trace.losses())
            .zip(anchor)
            .map(|((&g, &l), &a)| {
                // d/dx τ (σ²/g)(2^{(S + x(I−S))/(τB)} − 1) = κ 2^{k x}
                let ln_kappa = (params.slot_duration * params.noise_power / g * T::LN_2() * k).ln()
                    + params.pose_bits / cap * T::LN_2();
                FrameTerms { ln_kappa, slope: (T::one() - two * a) * inv_beta, weight: l / frames_n }
            })
            .collect();
        Self { params, frames, k }
    }

    fn x_at(&self, eta: T) -> Vec<T> {
        self.frames
            .iter()
            .map(|f| {
                let drive = eta * f.weight - f.slope;
                if drive <= T::zero() {
                    T::zero()
                } else {
                    clamp01((drive.ln() - f.ln_kappa) / (self.k * T::LN_2()))
                }
            })
            .collect()
    }

    fn loss_at(&self, x: &[T]) -> T {
        self.frames.iter().zip(x).map(|(f, &v)| f.weight * (T::one() - v)).sum()
    }

    /// Multiplier at which the frame with the largest loss is driven to 1.
    fn eta_scale(&self) -> T {
        let (mut best_w, mut need) = (T::zero(), T::zero());
        for f in &self.frames {
            let top = (f.ln_kappa + self.k * T::LN_2()).exp() + f.slope.abs();
            need = need.max(top);
            best_w = best_w.max(f.weight);
        }
        if best_w > T::zero() {
            need / best_w
        } else {
            T::one()
        }
    }

    fn solve(&self, dual_tol: T) -> Result<(Vec<T>, T)> {
        let l_th = self.params.loss_threshold;
        let x0 = self.x_at(T::zero());
        if self.loss_at(&x0) <= l_th {
            return Ok((x0, T::zero()));
        }
        let mut hi = self.eta_scale();
        let mut lo = T::zero();
        let mut doublings = 0;
        let mut x_hi = self.x_at(hi);
        while self.loss_at(&x_hi) > l_th {
            if doublings == MAX_BRACKET_DOUBLINGS {
                return Err(GsError::Solver(format!(
                    "loss multiplier not bracketed after {MAX_BRACKET_DOUBLINGS} doublings"
                )));
            }
            lo = hi;
            hi = hi + hi;
            doublings += 1;
            x_hi = self.x_at(hi);
        }
        for _ in 0..MAX_BISECTION_STEPS {
            if hi - lo <= dual_tol * hi {
                break;
            }
            let mid = lo + (hi - lo) / T::lit(2.0);
            if mid <= lo || mid >= hi {
                break;
            }
            let x_mid = self.x_at(mid);
            if self.loss_at(&x_mid) > l_th {
                lo = mid;
            } else {
                hi = mid;
                x_hi = x_mid;
            }
        }
        Ok((x_hi, hi))
    }
}

/// Solution of one convex subproblem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DcIterate<T = f64> {
    pub x: Vec<T>,
    pub p: Vec<T>,
    /// Loss-constraint multiplier `η`.
    pub multiplier: T,
    /// `τ Σ p_t + penalty(x)` with the `β` used for this step.
    pub penalized_objective: T,
    pub step_norm: T,
    pub zero_one_loss: T,
}

/// Minimizes `τ Σ p_t + surrogate(x | anchor)` subject to the rate and loss
/// constraints and the unit box. Pass `β = ∞` to drop the penalty.
pub fn dc_subproblem<T: Scalar>(
    trace: &FrameTrace<T>,
    params: &SystemParams<T>,
    anchor: &[T],
    beta: T,
    dual_tol: T,
) -> Result<DcIterate<T>> {
    if trace.is_empty() {
        return Err(GsError::EmptyTrace);
    }
    check_len(anchor, trace.len(), "anchor")?;
    check_box(anchor)?;
    if params.image_bits <= params.pose_bits {
        return Err(GsError::InvalidParam("subproblem needs image_bits > pose_bits".into()));
    }
    let sub = Subproblem::new(trace, params, anchor, beta);
    let (x, multiplier) = sub.solve(dual_tol)?;
    let sched = Schedule::tight(x, trace.gains(), params)?;
    let energy = params.slot_duration * sched.p.iter().copied().sum::<T>();
    let step_norm = sched.x.iter().zip(anchor).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>().sqrt();
    Ok(DcIterate {
        penalized_objective: energy + penalty(&sched.x, beta)?,
        zero_one_loss: zero_one_loss(&sched.x),
        step_norm,
        multiplier,
        x: sched.x,
        p: sched.p,
    })
}

fn summarize<T: Scalar>(n: usize, it: &DcIterate<T>, params: &SystemParams<T>, beta: T) -> IterateSummary<T> {
    IterateSummary {
        n,
        step_norm: it.step_norm,
        zero_one_loss: it.zero_one_loss,
        penalized_objective: it.penalized_objective,
        energy: params.slot_duration * it.p.iter().copied().sum::<T>(),
        beta,
        multiplier: it.multiplier,
    }
}

fn initial_summary<T: Scalar>(sched: &Schedule<T>, params: &SystemParams<T>, beta: T) -> Result<IterateSummary<T>> {
    let energy = params.slot_duration * sched.p.iter().copied().sum::<T>();
    Ok(IterateSummary {
        n: 0,
        step_norm: T::zero(),
        zero_one_loss: zero_one_loss(&sched.x),
        penalized_objective: energy + penalty(&sched.x, beta)?,
        energy,
        beta,
        multiplier: T::zero(),
    })
}

/// Rounds at 0.5, repairs the loss constraint and re-derives tight powers.
pub(crate) fn round_and_repair<T: Scalar>(
    x: &[T],
    trace: &FrameTrace<T>,
    params: &SystemParams<T>,
) -> Result<Schedule<T>> {
    let mut upload: Vec<bool> = x.iter().map(|&v| v >= T::lit(0.5)).collect();
    repair_loss(&mut upload, trace.losses(), params);
    Schedule::from_binary(&upload, trace.gains(), params)
}

/// Extra energy of an image over a pose key, per frame.
fn upload_premium<T: Scalar>(trace: &FrameTrace<T>, params: &SystemParams<T>) -> Vec<T> {
    trace
        .gains()
        .iter()
        .map(|&g| frame_energy(params.image_bits, g, params) - frame_energy(params.pose_bits, g, params))
        .collect()
}

struct Knapsack<'a, T> {
    losses: &'a [T],
    premium: &'a [T],
    params: &'a SystemParams<T>,
    frames: T,
    /// Frames by decreasing premium, ties by index.
    prune_order: Vec<usize>,
}

impl<'a, T: Scalar> Knapsack<'a, T> {
    fn new(losses: &'a [T], premium: &'a [T], params: &'a SystemParams<T>) -> Self {
        let mut prune_order: Vec<usize> = (0..losses.len()).collect();
        prune_order
            .sort_by(|&a, &b| premium[b].partial_cmp(&premium[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
        Self { losses, premium, params, frames: T::from_usize_lossy(losses.len()), prune_order }
    }

    fn ok(&self, pose_loss: T) -> bool {
        loss_within(pose_loss / self.frames, self.params)
    }

    fn pose_loss(&self, upload: &[bool]) -> T {
        upload.iter().zip(self.losses).filter(|(&u, _)| !u).map(|(_, &l)| l).sum()
    }

    fn cost(&self, upload: &[bool]) -> T {
        upload.iter().zip(self.premium).filter(|(&u, _)| u).map(|(_, &e)| e).sum()
    }

    /// Drops uploads, most expensive first, while the constraint holds.
    fn prune(&self, mut upload: Vec<bool>, mut pose_loss: T) -> Vec<bool> {
        for &t in &self.prune_order {
            if upload[t] && self.ok(pose_loss + self.losses[t]) {
                upload[t] = false;
                pose_loss = pose_loss + self.losses[t];
            }
        }
        upload
    }

    /// Greedy completion of a possibly infeasible schedule. Frames that close
    /// the remaining deficit on their own are each tried as the last flip;
    /// the others are added by loss removed per joule.
    fn repair(&self, mut upload: Vec<bool>) -> (T, Vec<bool>) {
        let mut pose_loss = self.pose_loss(&upload);
        let mut best: Option<(T, Vec<bool>)> = None;
        let offer = |cand: Vec<bool>, pose_loss: T, best: &mut Option<(T, Vec<bool>)>| {
            let cand = self.prune(cand, pose_loss);
            let cost = self.cost(&cand);
            if best.as_ref().map_or(true, |(c, _)| cost < *c) {
                *best = Some((cost, cand));
            }
        };
        while !self.ok(pose_loss) {
            let mut fill: Option<usize> = None;
            for t in 0..upload.len() {
                if upload[t] {
                    continue;
                }
                let after = pose_loss - self.losses[t];
                if self.ok(after) {
                    let mut cand = upload.clone();
                    cand[t] = true;
                    offer(cand, after, &mut best);
                } else if fill.map_or(true, |f| self.losses[t] * self.premium[f] > self.losses[f] * self.premium[t]) {
                    fill = Some(t);
                }
            }
            match fill {
                Some(t) => {
                    upload[t] = true;
                    pose_loss = pose_loss - self.losses[t];
                }
                None => break,
            }
        }
        if self.ok(pose_loss) {
            offer(upload, pose_loss, &mut best);
        }
        best.unwrap_or_else(|| {
            let all = vec![true; self.losses.len()];
            (self.cost(&all), all)
        })
    }
}

/// Binary schedule from a relaxed point: both roundings of the most
/// fractional frames are enumerated, each completed by [`Knapsack::repair`],
/// and the cheapest result is kept.
pub(crate) fn round_enumerated<T: Scalar>(
    x: &[T],
    trace: &FrameTrace<T>,
    params: &SystemParams<T>,
    binary_tol: T,
) -> Result<Schedule<T>> {
    let premium = upload_premium(trace, params);
    let knap = Knapsack::new(trace.losses(), &premium, params);
    let mut branch: Vec<usize> = (0..x.len()).filter(|&t| x[t] * (T::one() - x[t]) > binary_tol).collect();
    branch.sort_by(|&a, &b| {
        let (fa, fb) = (x[a] * (T::one() - x[a]), x[b] * (T::one() - x[b]));
        fb.partial_cmp(&fa).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    branch.truncate(MAX_BRANCH_FRAMES);
    let base: Vec<bool> = x.iter().map(|&v| v >= T::lit(0.5)).collect();
    let mut best: Option<(T, Vec<bool>)> = None;
    for mask in 0u32..(1u32 << branch.len()) {
        let mut upload = base.clone();
        for (bit, &t) in branch.iter().enumerate() {
            upload[t] = mask >> bit & 1 == 1;
        }
        let (cost, cand) = knap.repair(upload);
        if best.as_ref().map_or(true, |(c, _)| cost < *c) {
            best = Some((cost, cand));
        }
    }
    let upload = best.map(|(_, u)| u).unwrap_or(base);
    Schedule::from_binary(&upload, trace.gains(), params)
}

/// Full APO run: ranking initialization, DC iterations, rounding and repair.
pub fn apo_solve<T: Scalar>(
    trace: &FrameTrace<T>,
    params: &SystemParams<T>,
    config: &ApoConfig,
) -> Result<SolveReport<T>> {
    let started = Instant::now();
    params.validate()?;
    config.validate()?;
    let init = ranking_init(trace, params)?;

    if params.image_bits == params.pose_bits {
        let all_pose = vec![false; trace.len()];
        let zeros = vec![T::zero(); trace.len()];
        let sched = if loss_within(mean_masked_loss(&zeros, trace.losses()), params) {
            Schedule::from_binary(&all_pose, trace.gains(), params)?
        } else {
            init
        };
        return SolveReport::finish("apo", sched, trace, params, started);
    }

    let mut beta = resolve_beta(trace, params);
    let initial = initial_summary(&init, params, beta)?;
    let dual_tol = T::lit(config.dual_tol);
    let mut history = Vec::with_capacity(config.max_outer_iters);
    let mut x = init.x.clone();
    for n in 1..=config.max_outer_iters {
        let it = dc_subproblem(trace, params, &x, beta, dual_tol)?;
        history.push(summarize(n, &it, params, beta));
        let settled = it.step_norm <= T::lit(config.x_step_tol);
        let not_binary = it.zero_one_loss > T::lit(config.binary_tol);
        x = it.x;
        if settled {
            if config.beta_schedule == BetaSchedule::Halving && not_binary {
                beta = beta / T::lit(2.0);
                continue;
            }
            break;
        }
    }

    let rounded = round_enumerated(&x, trace, params, T::lit(config.binary_tol))?;
    let pick = |s: &Schedule<T>| params.slot_duration * s.p.iter().copied().sum::<T>();
    let sched = if pick(&rounded) <= pick(&init) { rounded } else { init };
    let mut report = SolveReport::finish("apo", sched, trace, params, started)?;
    report.initial = Some(initial);
    report.history = history;
    report.wall_ms = Some(started.elapsed().as_secs_f64() * 1e3);
    Ok(report)
}
