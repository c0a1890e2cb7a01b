//! JSON run configuration.

use std::path::{Path, PathBuf};

use postprice::adversary::{DensityDist, RequirementDist};
use postprice::{CostModel, Setup};
use serde::Deserialize;

use crate::error::CliError;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_DELTA: f64 = 1e-4;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub setup: SetupConfig,
    #[serde(default)]
    pub instance: Option<InstanceConfig>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlotConfig {
    pub cost: CostModel,
    pub p_low: f64,
    pub p_high: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetupConfig {
    pub cost: CostModel,
    pub p_low: f64,
    pub p_high: f64,
    /// Additional slots; when present the first slot is the top-level setup.
    #[serde(default)]
    pub slots: Option<Vec<SlotConfig>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceConfig {
    Random {
        n: usize,
        #[serde(default = "default_density")]
        density: DensityDist,
        /// Defaults to a constant requirement equal to `delta`.
        #[serde(default)]
        requirement: Option<RequirementDist>,
    },
    /// Omitting `rho` scans for the level with the largest measured ratio.
    WorstCaseRho {
        #[serde(default)]
        rho: Option<f64>,
    },
    IdenticalDensity { density: f64, total: f64 },
    DensityGroups {
        p_end: f64,
        #[serde(default = "default_eta_step")]
        eta_step: f64,
    },
    Csv { path: PathBuf },
    Empty,
}

fn default_density() -> DensityDist {
    DensityDist::Uniform
}

fn default_eta_step() -> f64 {
    1e-2
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: default_dir() }
    }
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default = "default_step_slack")]
    pub step_slack: f64,
    #[serde(default = "default_final_slack")]
    pub final_slack: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { tol: None, step_slack: default_step_slack(), final_slack: default_final_slack() }
    }
}

fn default_step_slack() -> f64 {
    postprice::mechanism::CERT_STEP_SLACK
}

fn default_final_slack() -> f64 {
    postprice::mechanism::CERT_FINAL_SLACK
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    PHigh,
    PLow,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::PHigh => "p_high",
            SweepParameter::PLow => "p_low",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: SweepParameter,
    pub from: f64,
    pub to: f64,
    pub steps: usize,
}

impl SweepConfig {
    pub fn points(&self) -> Vec<f64> {
        match self.steps {
            0 => vec![],
            1 => vec![self.from],
            n => (0..n)
                .map(|i| if i + 1 == n { self.to } else { self.from + (self.to - self.from) * i as f64 / (n - 1) as f64 })
                .collect(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    /// All slots in order; a single-slot config yields one setup.
    pub fn setups(&self) -> Result<Vec<Setup>, CliError> {
        let s = &self.setup;
        let mut out = vec![classify("setup", s.cost, s.p_low, s.p_high)?];
        for (i, slot) in s.slots.iter().flatten().enumerate() {
            out.push(classify(&format!("setup.slots[{i}]"), slot.cost, slot.p_low, slot.p_high)?);
        }
        Ok(out)
    }
}

pub fn classify(field: &str, cost: CostModel, p_low: f64, p_high: f64) -> Result<Setup, CliError> {
    Setup::classify(cost, p_low, p_high).map_err(|e| CliError::Usage(format!("{field}: {e}")))
}
