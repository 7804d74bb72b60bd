//! Run configuration: built-in defaults, overridden by a TOML or JSON file,
//! overridden by command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use gsrmr_core::apo_solver::ApoConfig;
use gsrmr_core::experiments::{SolverKind, SolverSettings, SweepSpec, TraceSource, DEFAULT_THRESHOLDS};
use gsrmr_core::link_model::{db_to_linear, dbm_to_watts};
use gsrmr_core::mr_imaging::{Dssim, IngestOptions, MISSING_RENDER_LOSS};
use gsrmr_core::{Distances, LocalSearchConfig, RicianParams, SystemParams};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSection {
    pub slot_duration_s: f64,
    pub bandwidth_hz: f64,
    pub noise_power_dbm: f64,
    pub image_bits: f64,
    pub pose_bits: f64,
    pub loss_threshold: f64,
    pub ssim_weight: f64,
    pub penalty_beta: Option<f64>,
}

impl Default for SystemSection {
    fn default() -> Self {
        let p = SystemParams::<f64>::standard();
        Self {
            slot_duration_s: p.slot_duration,
            bandwidth_hz: p.bandwidth,
            noise_power_dbm: -60.0,
            image_bits: p.image_bits,
            pose_bits: p.pose_bits,
            loss_threshold: p.loss_threshold,
            ssim_weight: p.ssim_weight,
            penalty_beta: None,
        }
    }
}

impl SystemSection {
    pub fn params(&self) -> SystemParams {
        SystemParams {
            slot_duration: self.slot_duration_s,
            bandwidth: self.bandwidth_hz,
            noise_power: dbm_to_watts(self.noise_power_dbm),
            image_bits: self.image_bits,
            pose_bits: self.pose_bits,
            loss_threshold: self.loss_threshold,
            ssim_weight: self.ssim_weight,
            penalty_beta: self.penalty_beta,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub frames: usize,
    pub pathloss_ref_db: f64,
    pub exponent: f64,
    pub rician_k: f64,
    pub distance_m: f64,
    /// Share of low-loss frames in the synthetic loss column.
    pub good_fraction: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self { frames: 288, pathloss_ref_db: -30.0, exponent: 3.0, rician_k: 1.0, distance_m: 10.0, good_fraction: 0.9 }
    }
}

impl ChannelSection {
    pub fn rician(&self, seed: u64) -> RicianParams {
        RicianParams {
            pathloss_ref: db_to_linear(self.pathloss_ref_db),
            exponent: self.exponent,
            rician_k: self.rician_k,
            distances: Distances::Fixed(self.distance_m),
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub name: SolverKind,
    /// Energy budget of water-filling and fairness in joules.
    pub budget_j: Option<f64>,
    pub apo: ApoConfig,
    pub search: LocalSearchConfig,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self { name: SolverKind::Apo, budget_j: None, apo: ApoConfig::default(), search: LocalSearchConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub thresholds: Vec<f64>,
    pub solvers: Vec<SolverKind>,
    pub repetitions: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        let spec = SweepSpec::<f64>::default();
        Self { thresholds: DEFAULT_THRESHOLDS.to_vec(), solvers: spec.solvers, repetitions: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImagingSection {
    pub dssim: Dssim,
    pub missing_render_loss: f64,
}

impl Default for ImagingSection {
    fn default() -> Self {
        Self { dssim: Dssim::Halved, missing_render_loss: MISSING_RENDER_LOSS }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub trace: Option<PathBuf>,
    pub timing: bool,
    pub system: SystemSection,
    pub channel: ChannelSection,
    pub solver: SolverSection,
    pub sweep: SweepSection,
    pub imaging: ImagingSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            trace: None,
            timing: false,
            system: SystemSection::default(),
            channel: ChannelSection::default(),
            solver: SolverSection::default(),
            sweep: SweepSection::default(),
            imaging: ImagingSection::default(),
        }
    }
}

impl RunConfig {
    /// Reads a config file; `.json` files are JSON, everything else TOML.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let cfg = if is_json {
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        } else {
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        };
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_else(|e| format!("# config not printable: {e}\n"))
    }

    pub fn params(&self) -> SystemParams {
        self.system.params()
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.params().validate()?;
        self.solver.apo.validate()?;
        if self.channel.frames == 0 {
            bail!("number of frames must be at least 1");
        }
        if let Some(b) = self.solver.budget_j {
            if !(b >= 0.0) || !b.is_finite() {
                bail!("budget must be finite and non-negative, got {b}");
            }
        }
        Ok(())
    }

    pub fn synthetic_source(&self) -> TraceSource {
        TraceSource::Synthetic {
            frames: self.channel.frames,
            good_fraction: self.channel.good_fraction,
            channel: self.channel.rician(0),
        }
    }

    pub fn source(&self) -> TraceSource {
        match &self.trace {
            Some(path) => TraceSource::File { path: path.clone() },
            None => self.synthetic_source(),
        }
    }

    /// Local search restarts draw from the run seed.
    pub fn settings(&self) -> SolverSettings {
        SolverSettings {
            apo: ApoConfig { seed: self.seed, ..self.solver.apo.clone() },
            search: LocalSearchConfig { seed: self.seed, ..self.solver.search },
            budget: self.solver.budget_j,
        }
    }

    pub fn sweep_spec(&self) -> SweepSpec {
        SweepSpec {
            thresholds: self.sweep.thresholds.clone(),
            solvers: self.sweep.solvers.clone(),
            source: self.source(),
            repetitions: self.sweep.repetitions,
            seed: self.seed,
            settings: self.settings(),
            timing: self.timing,
        }
    }

    pub fn ingest_options(&self) -> IngestOptions {
        IngestOptions {
            ssim_weight: self.system.ssim_weight,
            dssim: self.imaging.dssim,
            missing_render_loss: self.imaging.missing_render_loss,
        }
    }
}
