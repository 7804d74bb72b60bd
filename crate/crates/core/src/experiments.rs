//! Threshold sweeps, convergence traces and their CSV / SVG artifacts.

use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::apo_solver::{apo_solve, ApoConfig};
use crate::baselines::{
    all_pose, all_upload, brute_force, local_search, max_min_fairness, ranking, relax_and_round, water_filling,
    EnergyBudget, LocalSearchConfig, BRUTE_FORCE_MAX_FRAMES,
};
use crate::channel_sim::{generate_channel, RicianParams};
use crate::error::{GsError, Result};
use crate::link_model::SystemParams;
use crate::mr_imaging::psnr_from_mse;
use crate::report::SolveReport;
use crate::scalar::Scalar;
use crate::trace::{read_trace, FrameTrace};

/// Loss thresholds of the reference sweep.
pub const DEFAULT_THRESHOLDS: [f64; 5] = [0.02, 0.025, 0.03, 0.035, 0.04];
pub const SWEEP_HEADER: &str =
    "solver,L_th,rep,energy_J,energy_dB_vs_robomr,mean_loss,psnr_dB,ssim,upload_fraction,feasible,wall_ms";
pub const CONVERGENCE_HEADER: &str = "n,step_norm,zero_one_loss,penalized_objective_J";

/// Good-frame loss range of [`synthetic_losses`].
pub const GOOD_LOSS_RANGE: (f64, f64) = (0.005, 0.03);
/// Discrepancy-frame loss range of [`synthetic_losses`].
pub const BAD_LOSS_RANGE: (f64, f64) = (0.1, 0.5);

/// Mixture of good frames (probability `good_fraction`) and discrepancy
/// frames, each uniform over its range.
pub fn synthetic_losses<T: Scalar>(frames: usize, good_fraction: f64, seed: u64) -> Result<Vec<T>> {
    if !(0.0..=1.0).contains(&good_fraction) {
        return Err(GsError::InvalidParam(format!("good_fraction must lie in [0, 1], got {good_fraction}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..frames)
        .map(|_| {
            let (lo, hi) = if rng.gen::<f64>() < good_fraction { GOOD_LOSS_RANGE } else { BAD_LOSS_RANGE };
            T::lit(rng.gen_range(lo..hi))
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Apo,
    Ranking,
    Brute,
    Round,
    Search,
    Waterfill,
    Fairness,
    Robomr,
    Robogs,
}

impl SolverKind {
    pub const ALL: [SolverKind; 9] = [
        SolverKind::Apo,
        SolverKind::Ranking,
        SolverKind::Brute,
        SolverKind::Round,
        SolverKind::Search,
        SolverKind::Waterfill,
        SolverKind::Fairness,
        SolverKind::Robomr,
        SolverKind::Robogs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Apo => "apo",
            SolverKind::Ranking => "ranking",
            SolverKind::Brute => "brute",
            SolverKind::Round => "round",
            SolverKind::Search => "search",
            SolverKind::Waterfill => "waterfill",
            SolverKind::Fairness => "fairness",
            SolverKind::Robomr => "robomr",
            SolverKind::Robogs => "robogs",
        }
    }

    /// Power-allocation schemes that spend a given energy budget.
    pub fn needs_budget(self) -> bool {
        matches!(self, SolverKind::Waterfill | SolverKind::Fairness)
    }
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = GsError;

    fn from_str(s: &str) -> Result<Self> {
        SolverKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| GsError::InvalidParam(format!("unknown solver `{s}`")))
    }
}

/// Settings shared by every solver call.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, bound = "T: Scalar")]
pub struct SolverSettings<T = f64> {
    pub apo: ApoConfig,
    pub search: LocalSearchConfig,
    /// Budget for water-filling and fairness; APO's energy when absent.
    pub budget: Option<T>,
}

/// Runs one solver. Budgeted schemes without an explicit budget spend what
/// APO spends on the same instance.
pub fn run_solver<T: Scalar>(
    kind: SolverKind,
    trace: &FrameTrace<T>,
    params: &SystemParams<T>,
    settings: &SolverSettings<T>,
) -> Result<SolveReport<T>> {
    let budget = || -> Result<EnergyBudget<T>> {
        let total = match settings.budget {
            Some(b) => b,
            None => apo_solve(trace, params, &settings.apo)?.energy,
        };
        EnergyBudget::new(total)
    };
    match kind {
        SolverKind::Apo => apo_solve(trace, params, &settings.apo),
        SolverKind::Ranking => ranking(trace, params),
        SolverKind::Brute => brute_force(trace, params, BRUTE_FORCE_MAX_FRAMES),
        SolverKind::Round => relax_and_round(trace, params),
        SolverKind::Search => local_search(trace, params, &settings.search),
        SolverKind::Waterfill => water_filling(trace, params, budget()?),
        SolverKind::Fairness => max_min_fairness(trace, params, budget()?),
        SolverKind::Robomr => all_upload(trace, params),
        SolverKind::Robogs => all_pose(trace, params),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "T: Scalar")]
pub enum TraceSource<T = f64> {
    File { path: PathBuf },
    Synthetic { frames: usize, good_fraction: f64, channel: RicianParams<T> },
}

impl<T: Scalar> Default for TraceSource<T> {
    fn default() -> Self {
        TraceSource::Synthetic { frames: 288, good_fraction: 0.9, channel: RicianParams::default() }
    }
}

impl<T: Scalar> TraceSource<T> {
    /// Trace of repetition `rep`. Synthetic traces draw channel and loss
    /// seeds from a stream keyed by `seed`; files are read as they are.
    pub fn load(&self, seed: u64, rep: usize) -> Result<FrameTrace<T>> {
        match self {
            TraceSource::File { path } => read_trace(path),
            TraceSource::Synthetic { frames, good_fraction, channel } => {
                let mut master = ChaCha8Rng::seed_from_u64(seed);
                let mut keys = (0, 0);
                for _ in 0..=rep {
                    keys = (master.next_u64(), master.next_u64());
                }
                let gains = generate_channel(&RicianParams { seed: keys.0, ..channel.clone() }, *frames)?;
                let losses = synthetic_losses(*frames, *good_fraction, keys.1)?;
                FrameTrace::new(gains, losses)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, bound = "T: Scalar")]
pub struct SweepSpec<T = f64> {
    pub thresholds: Vec<f64>,
    pub solvers: Vec<SolverKind>,
    pub source: TraceSource<T>,
    pub repetitions: usize,
    pub seed: u64,
    pub settings: SolverSettings<T>,
    /// Record per-row wall time.
    pub timing: bool,
}

impl<T: Scalar> Default for SweepSpec<T> {
    fn default() -> Self {
        Self {
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            solvers: vec![
                SolverKind::Apo,
                SolverKind::Ranking,
                SolverKind::Round,
                SolverKind::Search,
                SolverKind::Waterfill,
                SolverKind::Fairness,
            ],
            source: TraceSource::default(),
            repetitions: 1,
            seed: 0,
            settings: SolverSettings::default(),
            timing: false,
        }
    }
}

impl<T: Scalar> SweepSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if self.thresholds.is_empty() {
            return Err(GsError::InvalidParam("sweep needs at least one threshold".into()));
        }
        if self.thresholds.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(GsError::InvalidParam("thresholds must be positive and finite".into()));
        }
        if self.thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(GsError::InvalidParam("thresholds must be strictly ascending".into()));
        }
        if self.solvers.is_empty() {
            return Err(GsError::InvalidParam("sweep needs at least one solver".into()));
        }
        if self.repetitions == 0 {
            return Err(GsError::InvalidParam("repetitions must be at least 1".into()));
        }
        self.settings.apo.validate()
    }

    /// Requested solvers followed by whichever reference schemes are missing.
    pub fn row_solvers(&self) -> Vec<SolverKind> {
        let mut out = Vec::new();
        for &k in self.solvers.iter().chain(&[SolverKind::Robomr, SolverKind::Robogs]) {
            if !out.contains(&k) {
                out.push(k);
            }
        }
        out
    }
}

/// One line of `sweep.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub solver: String,
    #[serde(rename = "L_th")]
    pub l_th: f64,
    pub rep: usize,
    #[serde(rename = "energy_J")]
    pub energy_j: f64,
    #[serde(rename = "energy_dB_vs_robomr")]
    pub energy_db_vs_robomr: f64,
    pub mean_loss: f64,
    /// Empty when the trace carries no image-quality columns.
    #[serde(rename = "psnr_dB")]
    pub psnr_db: Option<f64>,
    pub ssim: Option<f64>,
    pub upload_fraction: f64,
    pub feasible: bool,
    pub wall_ms: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RowFailure {
    pub solver: SolverKind,
    pub l_th: f64,
    pub rep: usize,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<ComparisonRow>,
    pub failures: Vec<RowFailure>,
}

/// `10 log10(E_a / E_b)`.
pub fn energy_saving_factor<T: Scalar>(a: &SolveReport<T>, b: &SolveReport<T>) -> Result<f64> {
    let (ea, eb) = (a.energy.to_f64_lossy(), b.energy.to_f64_lossy());
    if eb == 0.0 {
        return Err(GsError::InvalidParam("energy of the reference report is zero".into()));
    }
    Ok(10.0 * (ea / eb).log10())
}

/// Displayed-stream quality: uploaded frames are shown as captured (MSE 0,
/// SSIM 1), pose frames as rendered, undelivered frames as blank (MSE 1,
/// SSIM 0). Returns `(PSNR in dB, mean SSIM)`.
pub fn aggregate_quality<T: Scalar>(report: &SolveReport<T>, trace: &FrameTrace<T>) -> Option<(f64, f64)> {
    let quality = trace.quality()?;
    if quality.is_empty() {
        return None;
    }
    let uploads = report.uploads();
    let (mut mse, mut ssim) = (0.0, 0.0);
    for (t, q) in quality.iter().enumerate() {
        let (m, s) = if report.undelivered.contains(&t) {
            (1.0, 0.0)
        } else if uploads[t] {
            (0.0, 1.0)
        } else {
            (q.mse.to_f64_lossy(), q.ssim.to_f64_lossy())
        };
        mse += m;
        ssim += s;
    }
    let n = quality.len() as f64;
    Some((psnr_from_mse(mse / n), ssim / n))
}

fn comparison_row<T: Scalar>(
    report: &SolveReport<T>,
    trace: &FrameTrace<T>,
    l_th: f64,
    rep: usize,
    reference_energy: f64,
    timing: bool,
) -> ComparisonRow {
    let energy = report.energy.to_f64_lossy();
    let quality = aggregate_quality(report, trace);
    ComparisonRow {
        solver: report.solver.clone(),
        l_th,
        rep,
        energy_j: energy,
        energy_db_vs_robomr: 10.0 * (energy / reference_energy).log10(),
        mean_loss: report.mean_masked_loss.to_f64_lossy(),
        psnr_db: quality.map(|q| q.0),
        ssim: quality.map(|q| q.1),
        upload_fraction: report.upload_fraction.to_f64_lossy(),
        feasible: report.feasible,
        wall_ms: if timing { report.wall_ms } else { None },
    }
}

type CellResult = std::result::Result<ComparisonRow, RowFailure>;

fn sweep_cell<T: Scalar>(
    spec: &SweepSpec<T>,
    base: &SystemParams<T>,
    trace: &FrameTrace<T>,
    l_th: f64,
    rep: usize,
) -> Vec<CellResult> {
    let kinds = spec.row_solvers();
    let params = base.clone().with_loss_threshold(T::lit(l_th));
    let fail = |solver, message: String| RowFailure { solver, l_th, rep, message };
    let reference = match all_upload(trace, &params) {
        Ok(r) => r.energy.to_f64_lossy(),
        Err(e) => return kinds.into_iter().map(|k| Err(fail(k, e.to_string()))).collect(),
    };
    let mut settings = spec.settings.clone();
    let mut apo: Option<std::result::Result<SolveReport<T>, String>> = None;
    if settings.budget.is_none() && kinds.iter().any(|k| k.needs_budget() || *k == SolverKind::Apo) {
        let r = apo_solve(trace, &params, &settings.apo).map_err(|e| e.to_string());
        if let Ok(rep) = &r {
            settings.budget = Some(rep.energy);
        }
        apo = Some(r);
    }
    kinds
        .into_iter()
        .map(|kind| {
            let report = match (kind, &apo) {
                (SolverKind::Apo, Some(r)) => r.clone(),
                (k, Some(Err(e))) if k.needs_budget() => Err(format!("no budget: {e}")),
                _ => run_solver(kind, trace, &params, &settings).map_err(|e| e.to_string()),
            };
            report.map(|r| comparison_row(&r, trace, l_th, rep, reference, spec.timing)).map_err(|e| fail(kind, e))
        })
        .collect()
}

/// One row per (repetition, threshold, solver), in that nesting order. Cells
/// run in parallel; a failing solver is recorded and the sweep continues.
pub fn run_sweep<T: Scalar>(spec: &SweepSpec<T>, base: &SystemParams<T>) -> Result<SweepTable> {
    spec.validate()?;
    base.validate()?;
    let traces = (0..spec.repetitions).map(|rep| spec.source.load(spec.seed, rep)).collect::<Result<Vec<_>>>()?;
    let cells: Vec<(usize, f64)> =
        (0..spec.repetitions).flat_map(|rep| spec.thresholds.iter().map(move |&l| (rep, l))).collect();
    let results: Vec<Vec<CellResult>> =
        cells.par_iter().map(|&(rep, l_th)| sweep_cell(spec, base, &traces[rep], l_th, rep)).collect();
    let mut table = SweepTable::default();
    for r in results.into_iter().flatten() {
        match r {
            Ok(row) => table.rows.push(row),
            Err(f) => {
                log::warn!("{} at L_th={} rep {} failed: {}", f.solver, f.l_th, f.rep, f.message);
                table.failures.push(f);
            }
        }
    }
    Ok(table)
}

/// One line of `convergence.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub step_norm: f64,
    pub zero_one_loss: f64,
    #[serde(rename = "penalized_objective_J")]
    pub penalized_objective_j: f64,
}

/// APO iterate statistics; row 0 is the ranking initialization.
pub fn convergence_trace<T: Scalar>(
    trace: &FrameTrace<T>,
    params: &SystemParams<T>,
    config: &ApoConfig,
) -> Result<Vec<ConvergenceRow>> {
    let report = apo_solve(trace, params, config)?;
    Ok(report
        .initial
        .iter()
        .chain(&report.history)
        .map(|s| ConvergenceRow {
            n: s.n,
            step_norm: s.step_norm.to_f64_lossy(),
            zero_one_loss: s.zero_one_loss.to_f64_lossy(),
            penalized_objective_j: s.penalized_objective.to_f64_lossy(),
        })
        .collect())
}

fn write_rows<R: Serialize, W: Write>(rows: &[R], header: &str, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(header.split(','))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<R: for<'de> Deserialize<'de>, I: Read>(input: I, header: &str) -> Result<Vec<R>> {
    let mut r = csv::Reader::from_reader(input);
    let got = r.headers()?.iter().collect::<Vec<_>>().join(",");
    if got != header {
        return Err(GsError::TraceFormat(format!("expected header `{header}`, found `{got}`")));
    }
    r.deserialize().map(|row| row.map_err(GsError::from)).collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[ComparisonRow], out: W) -> Result<()> {
    write_rows(rows, SWEEP_HEADER, out)
}

pub fn read_sweep_csv<R: Read>(input: R) -> Result<Vec<ComparisonRow>> {
    read_rows(input, SWEEP_HEADER)
}

pub fn write_convergence_csv<W: Write>(rows: &[ConvergenceRow], out: W) -> Result<()> {
    write_rows(rows, CONVERGENCE_HEADER, out)
}

pub fn read_convergence_csv<R: Read>(input: R) -> Result<Vec<ConvergenceRow>> {
    read_rows(input, CONVERGENCE_HEADER)
}

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 400.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 10] =
    ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];
/// Values below this are drawn at this height on log axes.
const LOG_FLOOR: f64 = 1e-16;

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Static line chart with a log10 y axis.
fn log_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        let ly = y.max(LOG_FLOOR).log10();
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(ly);
        y1 = y1.max(ly);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    let (y0, y1) = (y0.floor(), y1.ceil().max(y0.floor() + 1.0));
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (SVG_W - 2.0 * MARGIN);
    let py = |ly: f64| SVG_H - MARGIN - (ly - y0) / (y1 - y0) * (SVG_H - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W}" height="{SVG_H}" viewBox="0 0 {SVG_W} {SVG_H}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ =
        writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{}</text>"#, SVG_W / 2.0, escape(title));
    let (left, right, top, bottom) = (MARGIN, SVG_W - MARGIN, MARGIN, SVG_H - MARGIN);
    let _ = writeln!(s, r#"<path d="M{left} {top} L{left} {bottom} L{right} {bottom}" fill="none" stroke="black"/>"#);
    for e in (y0 as i32)..=(y1 as i32) {
        let y = py(e as f64);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-size="11">1e{e}</text>"#,
            left - 6.0,
            y + 4.0
        );
    }
    for (x, anchor) in [(x0, "start"), (x1, "end")] {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="{anchor}" font-size="11">{x}</text>"#,
            px(x),
            bottom + 16.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>"#,
        SVG_W / 2.0,
        SVG_H - 16.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{0}" text-anchor="middle" font-size="12" transform="rotate(-90 16 {0})">{1}</text>"#,
        SVG_H / 2.0,
        escape(y_label)
    );
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> =
            ser.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y.max(LOG_FLOOR).log10()))).collect();
        let _ = writeln!(
            s,
            r#"<polyline data-series="{}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            escape(&ser.label),
            coords.join(" ")
        );
        let ly = top + 14.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" fill="{color}">{}</text>"#,
            right - 90.0,
            ly + 4.0,
            escape(&ser.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Energy against threshold, one polyline per solver (mean over
/// repetitions of the feasible rows).
pub fn sweep_svg(rows: &[ComparisonRow]) -> String {
    let mut names: Vec<&str> = Vec::new();
    for r in rows {
        if !names.contains(&r.solver.as_str()) {
            names.push(&r.solver);
        }
    }
    let series: Vec<Series> = names
        .into_iter()
        .map(|name| {
            let mut points: Vec<(f64, f64, usize)> = Vec::new();
            for r in rows.iter().filter(|r| r.solver == name && r.feasible && r.energy_j.is_finite()) {
                match points.iter_mut().find(|p| p.0 == r.l_th) {
                    Some(p) => {
                        p.1 += r.energy_j;
                        p.2 += 1;
                    }
                    None => points.push((r.l_th, r.energy_j, 1)),
                }
            }
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series { label: name.to_string(), points: points.into_iter().map(|(x, e, k)| (x, e / k as f64)).collect() }
        })
        .collect();
    log_chart("Energy versus loss threshold", "L_th", "energy (J)", &series)
}

/// Step norm and zero-one loss against the iteration index.
pub fn convergence_svg(rows: &[ConvergenceRow]) -> String {
    let series = [
        Series { label: "step_norm".into(), points: rows.iter().map(|r| (r.n as f64, r.step_norm)).collect() },
        Series { label: "zero_one_loss".into(), points: rows.iter().map(|r| (r.n as f64, r.zero_one_loss)).collect() },
    ];
    log_chart("APO convergence", "iteration", "value", &series)
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, fs::File)> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let file = fs::File::create(&path)?;
    Ok((path, file))
}

/// Writes `sweep.csv` and `sweep.svg`.
pub fn emit_sweep(rows: &[ComparisonRow], out_dir: &Path) -> Result<Vec<PathBuf>> {
    let (csv_path, f) = create(out_dir, "sweep.csv")?;
    write_sweep_csv(rows, std::io::BufWriter::new(f))?;
    let (svg_path, mut f) = create(out_dir, "sweep.svg")?;
    f.write_all(sweep_svg(rows).as_bytes())?;
    Ok(vec![csv_path, svg_path])
}

/// Writes `convergence.csv` and `convergence.svg`.
pub fn emit_convergence(rows: &[ConvergenceRow], out_dir: &Path) -> Result<Vec<PathBuf>> {
    let (csv_path, f) = create(out_dir, "convergence.csv")?;
    write_convergence_csv(rows, std::io::BufWriter::new(f))?;
    let (svg_path, mut f) = create(out_dir, "convergence.svg")?;
    f.write_all(convergence_svg(rows).as_bytes())?;
    Ok(vec![csv_path, svg_path])
}

/// Both artifact pairs.
pub fn emit_artifacts(sweep: &[ComparisonRow], convergence: &[ConvergenceRow], out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = emit_sweep(sweep, out_dir)?;
    paths.extend(emit_convergence(convergence, out_dir)?);
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::link_model::frame_energy;
    use crate::trace::FrameQuality;

    #[test]
    fn mixture_ranges_and_fraction() {
        let l: Vec<f64> = synthetic_losses(20_000, 0.9, 3).unwrap();
        let good = l.iter().filter(|&&v| (0.005..0.03).contains(&v)).count();
        assert!(l.iter().all(|&v| (0.005..0.03).contains(&v) || (0.1..0.5).contains(&v)));
        let frac = good as f64 / l.len() as f64;
        assert!((frac - 0.9).abs() < 0.01, "{frac}");
        assert_eq!(l, synthetic_losses::<f64>(20_000, 0.9, 3).unwrap());
        assert!(synthetic_losses::<f64>(3, 1.5, 0).is_err());
        assert!(synthetic_losses::<f64>(100, 1.0, 1).unwrap().iter().all(|&v| v < 0.03));
    }

    #[test]
    fn solver_names_round_trip() {
        for k in SolverKind::ALL {
            assert_eq!(k.name().parse::<SolverKind>().unwrap(), k);
        }
        assert!("maxrate".parse::<SolverKind>().is_err());
    }

    #[test]
    fn saving_factor() {
        let trace = FrameTrace::new(vec![1e-6; 4], vec![0.01; 4]).unwrap();
        let p = SystemParams::<f64>::standard();
        let up = all_upload(&trace, &p).unwrap();
        let pose = all_pose(&trace, &p).unwrap();
        assert_eq!(energy_saving_factor(&up, &up).unwrap(), 0.0);
        let db = energy_saving_factor(&up, &pose).unwrap();
        let want = 10.0 * (frame_energy(67_200.0, 1e-6, &p) / frame_energy(192.0, 1e-6, &p)).log10();
        assert!((db - want).abs() < 1e-9 && (db - 26.5).abs() < 0.05, "{db}");
        let mut zero = pose.clone();
        zero.energy = 0.0;
        assert!(energy_saving_factor(&up, &zero).is_err());
    }

    #[test]
    fn quality_counts_uploads_as_lossless() {
        let q = vec![FrameQuality { mse: 0.01, ssim: 0.8 }, FrameQuality { mse: 0.03, ssim: 0.6 }];
        let trace = FrameTrace::new(vec![1e-6; 2], vec![0.01, 0.05]).unwrap().with_quality(q).unwrap();
        let p = SystemParams::standard();
        let pose = all_pose(&trace, &p).unwrap();
        let (psnr, ssim) = aggregate_quality(&pose, &trace).unwrap();
        assert!((psnr - psnr_from_mse(0.02)).abs() < 1e-12);
        assert!((ssim - 0.7).abs() < 1e-12);
        let up = all_upload(&trace, &p).unwrap();
        assert_eq!(aggregate_quality(&up, &trace).unwrap(), (f64::INFINITY, 1.0));
        let bare = FrameTrace::new(vec![1e-6; 2], vec![0.01, 0.05]).unwrap();
        assert!(aggregate_quality(&up, &bare).is_none());
    }

    #[test]
    fn spec_validation() {
        let mut spec = SweepSpec::<f64>::default();
        spec.validate().unwrap();
        spec.thresholds = vec![0.03, 0.02];
        assert!(spec.validate().is_err());
        spec.thresholds = vec![0.0];
        assert!(spec.validate().is_err());
        spec.thresholds = vec![0.02];
        spec.solvers.clear();
        assert!(spec.validate().is_err());
        spec.solvers = vec![SolverKind::Robomr];
        spec.repetitions = 0;
        assert!(spec.validate().is_err());
        spec.repetitions = 1;
        assert_eq!(spec.row_solvers(), vec![SolverKind::Robomr, SolverKind::Robogs]);
    }

    #[test]
    fn synthetic_source_is_keyed_by_seed_and_rep() {
        let src = TraceSource::<f64>::default();
        let a = src.load(5, 0).unwrap();
        assert_eq!(a, src.load(5, 0).unwrap());
        assert_ne!(a, src.load(5, 1).unwrap());
        assert_ne!(a, src.load(6, 0).unwrap());
        assert_eq!(a.len(), 288);
    }

    #[test]
    fn log_chart_handles_zeros_and_empty_input() {
        let rows = vec![
            ConvergenceRow { n: 0, step_norm: 0.0, zero_one_loss: 0.0, penalized_objective_j: 1.0 },
            ConvergenceRow { n: 1, step_norm: 0.3, zero_one_loss: 0.01, penalized_objective_j: 0.9 },
        ];
        let svg = convergence_svg(&rows);
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
        let empty = sweep_svg(&[]);
        assert!(empty.starts_with("<svg") && !empty.contains("<polyline"));
    }
}
