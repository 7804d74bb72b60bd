//! The `gsrmr` command line: argument parsing, configuration layering and
//! the subcommands.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gsrmr_core::experiments::{
    convergence_trace, emit_convergence, emit_sweep, energy_saving_factor, run_solver, run_sweep, SolverKind,
};
use gsrmr_core::mr_imaging::ingest_frame_dir;
use gsrmr_core::trace::{read_trace, write_trace};
use gsrmr_core::{baselines, GsError};

use crate::config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "gsrmr", version, about = "Energy-minimal content switching for GS-assisted robotic MR uplinks")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// TOML or JSON run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Trace CSV/JSON (output of gen-channel, input of the other commands).
    #[arg(long, global = true, value_name = "PATH")]
    trace: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_name = "NAME")]
    solver: Option<SolverKind>,
    /// Loss threshold L_th.
    #[arg(long, global = true, value_name = "X")]
    lth: Option<f64>,
    /// Record wall-clock times in the outputs.
    #[arg(long, global = true)]
    timing: bool,
    /// Noise power in dBm.
    #[arg(long, global = true, value_name = "DBM", allow_negative_numbers = true)]
    noise_dbm: Option<f64>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a fading channel trace with synthetic losses.
    GenChannel(GenChannel),
    /// Compute per-frame losses from a frame directory and join them with a trace.
    ComputeLosses(ComputeLosses),
    /// Solve one instance and write a JSON report.
    Solve(Solve),
    /// Energy versus loss threshold for several solvers.
    Sweep(Sweep),
    /// Per-iteration statistics of APO.
    Convergence(Convergence),
}

#[derive(Args, Debug)]
struct GenChannel {
    /// Number of frames.
    #[arg(long = "T", value_name = "N")]
    frames: Option<usize>,
    /// Rician K factor.
    #[arg(long = "K", value_name = "X")]
    rician_k: Option<f64>,
    /// Distance in metres.
    #[arg(long = "d", value_name = "M")]
    distance: Option<f64>,
    /// Path-loss exponent.
    #[arg(long, value_name = "X")]
    alpha: Option<f64>,
    /// Path gain at 1 m in dB.
    #[arg(long, value_name = "DB", allow_negative_numbers = true)]
    pathloss_db: Option<f64>,
    /// Share of low-loss frames in the synthetic loss column.
    #[arg(long, value_name = "Q")]
    good_fraction: Option<f64>,
}

#[derive(Args, Debug)]
struct ComputeLosses {
    /// Directory with real_/gs_/virtual_/mask_NNNNN.png files.
    #[arg(long, value_name = "DIR")]
    frames: PathBuf,
}

#[derive(Args, Debug)]
struct Solve {
    /// Energy budget in joules for waterfill / fairness.
    #[arg(long, value_name = "J")]
    budget: Option<f64>,
}

#[derive(Args, Debug)]
struct Sweep {
    /// Comma-separated thresholds.
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    thresholds: Option<Vec<f64>>,
    /// Comma-separated solver names.
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    solvers: Option<Vec<SolverKind>>,
    #[arg(long, value_name = "N")]
    reps: Option<usize>,
}

#[derive(Args, Debug)]
struct Convergence {
    /// Outer iteration limit.
    #[arg(long, value_name = "N")]
    iters: Option<usize>,
}

/// Failure class, mapped to the process exit code.
#[derive(Debug)]
enum Failure {
    Config(anyhow::Error),
    Io(anyhow::Error),
    Solver(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Io(_) => 3,
            Failure::Solver(_) => 4,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Config(e) | Failure::Io(e) | Failure::Solver(e) => e,
        }
    }

    /// Classifies a library error by what went wrong.
    fn from_core(e: GsError) -> Self {
        match e {
            GsError::Io(_) | GsError::Image(_) => Failure::Io(e.into()),
            GsError::Solver(_) => Failure::Solver(e.into()),
            _ => Failure::Config(e.into()),
        }
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn config_err<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Config(e.into())
}

fn effective_config(cli: &Cli) -> Outcome<RunConfig> {
    let c = &cli.common;
    let mut cfg = match &c.config {
        Some(path) if !path.exists() => {
            return Err(Failure::Io(anyhow::anyhow!("config file {} not found", path.display())))
        }
        Some(path) => RunConfig::load(path).map_err(config_err)?,
        None => RunConfig::default(),
    };
    if let Some(v) = c.seed {
        cfg.seed = v;
    }
    if let Some(v) = &c.out {
        cfg.out = v.clone();
    }
    if let Some(v) = &c.trace {
        cfg.trace = Some(v.clone());
    }
    if let Some(v) = c.solver {
        cfg.solver.name = v;
    }
    if let Some(v) = c.lth {
        cfg.system.loss_threshold = v;
    }
    if let Some(v) = c.noise_dbm {
        cfg.system.noise_power_dbm = v;
    }
    cfg.timing |= c.timing;
    match &cli.command {
        Command::GenChannel(g) => {
            let ch = &mut cfg.channel;
            if let Some(v) = g.frames {
                ch.frames = v;
            }
            if let Some(v) = g.rician_k {
                ch.rician_k = v;
            }
            if let Some(v) = g.distance {
                ch.distance_m = v;
            }
            if let Some(v) = g.alpha {
                ch.exponent = v;
            }
            if let Some(v) = g.pathloss_db {
                ch.pathloss_ref_db = v;
            }
            if let Some(v) = g.good_fraction {
                ch.good_fraction = v;
            }
        }
        Command::Solve(s) => {
            if let Some(v) = s.budget {
                cfg.solver.budget_j = Some(v);
            }
        }
        Command::Sweep(s) => {
            if let Some(v) = &s.thresholds {
                cfg.sweep.thresholds = v.clone();
            }
            if let Some(v) = &s.solvers {
                cfg.sweep.solvers = v.clone();
            }
            if let Some(v) = s.reps {
                cfg.sweep.repetitions = v;
            }
        }
        Command::Convergence(s) => {
            if let Some(v) = s.iters {
                cfg.solver.apo.max_outer_iters = v;
            }
        }
        Command::ComputeLosses(_) => {}
    }
    cfg.validate().map_err(config_err)?;
    Ok(cfg)
}

fn create_out_dir(dir: &Path) -> Outcome<()> {
    fs::create_dir_all(dir).map_err(|e| Failure::Io(anyhow::anyhow!("creating {}: {e}", dir.display())))
}

fn require_trace(cfg: &RunConfig) -> Outcome<&Path> {
    cfg.trace.as_deref().ok_or_else(|| config_err(anyhow::anyhow!("--trace is required for this command")))
}

fn gen_channel(cfg: &RunConfig) -> Outcome<()> {
    let trace = cfg.synthetic_source().load(cfg.seed, 0).map_err(Failure::from_core)?;
    let path = match &cfg.trace {
        Some(p) => p.clone(),
        None => {
            create_out_dir(&cfg.out)?;
            cfg.out.join("trace.csv")
        }
    };
    write_trace(&trace, &path).map_err(Failure::from_core)?;
    let mean_gain = trace.gains().iter().sum::<f64>() / trace.len() as f64;
    println!("wrote {} frames to {}", trace.len(), path.display());
    println!("mean gain {mean_gain:.6e}");
    Ok(())
}

fn compute_losses(cfg: &RunConfig, args: &ComputeLosses) -> Outcome<()> {
    let input = require_trace(cfg)?;
    let trace = read_trace::<f64>(input).map_err(Failure::from_core)?;
    let ingested = ingest_frame_dir(&args.frames, &cfg.ingest_options()).map_err(Failure::from_core)?;
    if ingested.losses.len() != trace.len() {
        return Err(config_err(anyhow::anyhow!(
            "frame directory has {} frames but the trace has {}",
            ingested.losses.len(),
            trace.len()
        )));
    }
    for &t in &ingested.missing_renders {
        log::warn!("frame {t} has no GS render; loss set to {}", cfg.imaging.missing_render_loss);
    }
    let joined = trace
        .with_losses(ingested.losses)
        .and_then(|t| t.with_quality(ingested.quality))
        .map_err(Failure::from_core)?;
    create_out_dir(&cfg.out)?;
    let path = cfg.out.join("trace_losses.csv");
    write_trace(&joined, &path).map_err(Failure::from_core)?;
    let mean = joined.losses().iter().sum::<f64>() / joined.len() as f64;
    println!("wrote {} frames to {}", joined.len(), path.display());
    println!("mean loss {mean:.6e}, missing renders {}", ingested.missing_renders.len());
    Ok(())
}

fn solve(cfg: &RunConfig) -> Outcome<()> {
    let trace = read_trace::<f64>(require_trace(cfg)?).map_err(Failure::from_core)?;
    let params = cfg.params();
    let report =
        run_solver(cfg.solver.name, &trace, &params, &cfg.settings()).map_err(|e| Failure::Solver(e.into()))?;
    let reference = baselines::all_upload(&trace, &params).map_err(|e| Failure::Solver(e.into()))?;
    let report = if cfg.timing { report } else { report.without_timing() };
    create_out_dir(&cfg.out)?;
    let path = cfg.out.join("report.json");
    let json = serde_json::to_string_pretty(&report).map_err(|e| Failure::Io(e.into()))?;
    fs::write(&path, json + "\n").map_err(|e| Failure::Io(anyhow::anyhow!("writing {}: {e}", path.display())))?;
    println!("solver          {}", report.solver);
    println!("energy          {:.6e} J", report.energy);
    match energy_saving_factor(&report, &reference) {
        Ok(db) => println!("vs robomr       {db:.3} dB"),
        Err(_) => println!("vs robomr       n/a"),
    }
    println!("mean loss       {:.6e}", report.mean_masked_loss);
    println!("upload fraction {:.4}", report.upload_fraction);
    println!("feasible        {}", report.feasible);
    if !report.undelivered.is_empty() {
        println!("undelivered     {} frames", report.undelivered.len());
    }
    println!("report          {}", path.display());
    Ok(())
}

fn sweep(cfg: &RunConfig) -> Outcome<()> {
    let spec = cfg.sweep_spec();
    let table = run_sweep(&spec, &cfg.params()).map_err(Failure::from_core)?;
    for f in &table.failures {
        eprintln!("row failed: {} L_th={} rep {}: {}", f.solver, f.l_th, f.rep, f.message);
    }
    if table.rows.is_empty() {
        return Err(Failure::Solver(anyhow::anyhow!("every sweep row failed")));
    }
    let paths = emit_sweep(&table.rows, &cfg.out).map_err(Failure::from_core)?;
    println!("{} rows, {} failures", table.rows.len(), table.failures.len());
    for p in paths {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn convergence(cfg: &RunConfig) -> Outcome<()> {
    let trace = cfg.source().load(cfg.seed, 0).map_err(Failure::from_core)?;
    let rows = convergence_trace(&trace, &cfg.params(), &cfg.settings().apo).map_err(|e| Failure::Solver(e.into()))?;
    let paths = emit_convergence(&rows, &cfg.out).map_err(Failure::from_core)?;
    if let Some(last) = rows.last() {
        println!("{} iterations, final step {:.3e}, zero-one loss {:.3e}", last.n, last.step_norm, last.zero_one_loss);
    }
    for p in paths {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn run(cli: &Cli) -> Outcome<()> {
    let cfg = effective_config(cli)?;
    println!("# effective config");
    print!("{}", cfg.to_toml());
    println!("# end config");
    match &cli.command {
        Command::GenChannel(_) => gen_channel(&cfg),
        Command::ComputeLosses(args) => compute_losses(&cfg, args),
        Command::Solve(_) => solve(&cfg),
        Command::Sweep(_) => sweep(&cfg),
        Command::Convergence(_) => convergence(&cfg),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with<I, A>(args: I) -> ExitCode
where
    I: IntoIterator<Item = A>,
    A: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::parse_from(args);
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
