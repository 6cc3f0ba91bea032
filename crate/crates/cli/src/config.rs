//! JSON run configuration. A run is reproducible from the config and seed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use seqcv::crossval::{CvPlan, DEFAULT_GRID_SIZE, DEFAULT_S0, DEFAULT_XI_MAX};
use seqcv::limit_oracle::DEFAULT_TOLERANCE;
use seqcv::{BandwidthSource, DetectorSpec, Direction, ErrorModel, Kernel, LimitMode, ScenarioParams, StartRule};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    #[serde(default = "default_kernel")]
    pub kernel: String,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default = "default_s0")]
    pub s0: f64,
    #[serde(default)]
    pub checkpoints: Option<Checkpoints>,
    /// Fixed bandwidth for `smooth`, as `h` or as `ξ` with `h = T/ξ`.
    #[serde(default)]
    pub bandwidth: Option<Bandwidth>,
    #[serde(default)]
    pub detector: Option<DetectorConfig>,
    #[serde(default)]
    pub scenario: Option<ScenarioParams>,
    #[serde(default)]
    pub errors: Option<ErrorModel>,
    #[serde(default)]
    pub limit: Option<LimitConfig>,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_kernel() -> String {
    "gaussian".into()
}

fn default_s0() -> f64 {
    DEFAULT_S0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_xi_min")]
    pub xi_min: f64,
    #[serde(default = "default_xi_max")]
    pub xi_max: f64,
    #[serde(default = "default_grid_size")]
    pub size: usize,
    /// Golden-section refinement inside the best grid cell.
    #[serde(default)]
    pub refine: bool,
}

fn default_xi_min() -> f64 {
    1.0
}
fn default_xi_max() -> f64 {
    DEFAULT_XI_MAX
}
fn default_grid_size() -> usize {
    DEFAULT_GRID_SIZE
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            xi_min: default_xi_min(),
            xi_max: default_xi_max(),
            size: default_grid_size(),
            refine: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Checkpoints {
    /// Time fractions in `(s0, 1]`.
    Fractions(Vec<f64>),
    /// Observation indices `i`, turned into `i/T`.
    Indices(Vec<usize>),
    /// `N` equispaced points `s0 + k(1 - s0)/N`, `k = 1..=N`.
    Count(usize),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Bandwidth {
    H(f64),
    Xi(f64),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum StartConfig {
    Fixed(usize),
    /// `min(cap, h*(s_1))`, floored, at least 2.
    CappedBandwidth(usize),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    pub direction: Direction,
    #[serde(default)]
    pub control_limit: Option<f64>,
    #[serde(default)]
    pub target_arl: Option<f64>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub bracket: Option<(f64, f64)>,
    pub start: StartConfig,
    /// Fixed bandwidth; without it the cross-validated path is used.
    #[serde(default)]
    pub bandwidth: Option<Bandwidth>,
}

fn default_replications() -> usize {
    1000
}

/// Mean functions on `[0, 1]` the limit evaluator can be asked about.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeanConfig {
    Constant {
        value: f64,
    },
    /// `Σ_k c_k u^k`.
    Polynomial {
        coefficients: Vec<f64>,
    },
    /// `level + amplitude · sin(2π frequency u)`.
    Sine {
        level: f64,
        amplitude: f64,
        frequency: f64,
    },
}

impl MeanConfig {
    pub fn function(&self) -> Box<dyn Fn(f64) -> f64 + Send + Sync> {
        match self.clone() {
            MeanConfig::Constant { value } => Box::new(move |_| value),
            MeanConfig::Polynomial { coefficients } => {
                Box::new(move |u| coefficients.iter().rev().fold(0.0, |acc, c| acc * u + c))
            }
            MeanConfig::Sine {
                level,
                amplitude,
                frequency,
            } => Box::new(move |u| level + amplitude * (2.0 * std::f64::consts::PI * frequency * u).sin()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitConfig {
    pub mean: MeanConfig,
    #[serde(default = "default_mode")]
    pub mode: LimitMode,
    #[serde(default = "default_tol")]
    pub tolerance: f64,
    /// Time fractions at which the limit curve is evaluated.
    pub s: Vec<f64>,
}

fn default_mode() -> LimitMode {
    LimitMode::SelfConsistent
}
fn default_tol() -> f64 {
    DEFAULT_TOLERANCE
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default = "default_sim_replications")]
    pub replications: usize,
    /// Jump sizes for a delay table; needs a detector with a control limit.
    #[serde(default)]
    pub deltas: Vec<f64>,
}

fn default_sim_replications() -> usize {
    1
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: Config =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        // Residual files are relative to the config file.
        if let Some(ErrorModel::IidResample { file: Some(f), .. }) = &mut cfg.errors {
            let p = Path::new(f.as_str());
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *f = dir.join(p).display().to_string();
                }
            }
        }
        Ok(cfg)
    }

    pub fn kernel(&self) -> Result<Kernel, CliError> {
        Ok(Kernel::by_name(&self.kernel)?)
    }

    pub fn xi_grid(&self) -> Result<Vec<f64>, CliError> {
        let g = &self.grid;
        if g.xi_min < 1.0 {
            return Err(CliError::Config(format!("grid.xi_min must be >= 1, got {}", g.xi_min)));
        }
        Ok(CvPlan::equispaced_grid(g.xi_min, g.xi_max, g.size)?)
    }

    pub fn plan(&self, horizon: usize) -> Result<CvPlan, CliError> {
        let checkpoints = match &self.checkpoints {
            None => return Err(CliError::Config("checkpoints are required".into())),
            Some(Checkpoints::Fractions(f)) => f.clone(),
            Some(Checkpoints::Indices(idx)) => {
                if let Some(bad) = idx.iter().find(|&&i| i > horizon) {
                    return Err(CliError::Config(format!(
                        "checkpoint index {bad} exceeds T = {horizon}"
                    )));
                }
                CvPlan::checkpoints_at(idx, horizon)
            }
            Some(Checkpoints::Count(n)) => {
                if *n == 0 {
                    return Err(CliError::Config("checkpoint count must be positive".into()));
                }
                (1..=*n)
                    .map(|k| self.s0 + k as f64 * (1.0 - self.s0) / *n as f64)
                    .collect()
            }
        };
        Ok(CvPlan::new(self.xi_grid()?, self.s0, checkpoints)?.with_refinement(self.grid.refine))
    }

    pub fn errors(&self) -> Result<ErrorModel, CliError> {
        let model = self
            .errors
            .clone()
            .ok_or_else(|| CliError::Config("an `errors` block is required".into()))?;
        let model = model.load_residuals()?;
        model.validate()?;
        Ok(model)
    }

    pub fn scenario(&self) -> Result<ScenarioParams, CliError> {
        let p = self
            .scenario
            .ok_or_else(|| CliError::Config("a `scenario` block is required".into()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn detector_config(&self) -> Result<&DetectorConfig, CliError> {
        self.detector
            .as_ref()
            .ok_or_else(|| CliError::Config("a `detector` block is required".into()))
    }

    /// Detector with `control_limit` as configured (NaN when absent).
    pub fn detector(&self, horizon: usize) -> Result<DetectorSpec, CliError> {
        let d = self.detector_config()?;
        let bandwidth = match d.bandwidth {
            Some(b) => BandwidthSource::Fixed(resolve_bandwidth(b, horizon)?),
            None => BandwidthSource::CrossValidated(self.plan(horizon)?),
        };
        let start = match d.start {
            StartConfig::Fixed(index) => StartRule::Fixed { index },
            StartConfig::CappedBandwidth(cap) => StartRule::CappedBandwidth { cap },
        };
        Ok(DetectorSpec {
            direction: d.direction,
            control_limit: d.control_limit.unwrap_or(f64::NAN),
            start,
            kernel: self.kernel()?,
            bandwidth,
        })
    }
}

pub fn resolve_bandwidth(b: Bandwidth, horizon: usize) -> Result<f64, CliError> {
    let h = match b {
        Bandwidth::H(h) => h,
        Bandwidth::Xi(xi) => {
            if !(xi.is_finite() && xi > 0.0) {
                return Err(CliError::Config(format!("ξ must be positive, got {xi}")));
            }
            horizon as f64 / xi
        }
    };
    if !(h.is_finite() && h > 0.0) {
        return Err(CliError::Config(format!("bandwidth must be positive, got {h}")));
    }
    Ok(h)
}
