//! JSON run configuration and its translation into solver inputs.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use oce_control::grid::UniformGrid;
use oce_control::{CflPolicy, ControlBox, ControlProblem, Drift, LossSpec, SchemeOptions, Terminal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum LossConfig {
    Entropic,
    Mmv,
    Avar { gamma: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftConfig {
    /// `b = a`.
    Identity,
    Zero,
    Constant { mu: f64 },
    Affine { mu: f64, gain: f64 },
    MeanReverting { kappa: f64, mean: f64, gain: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TerminalConfig {
    Constant { c: f64 },
    Linear { slope: f64, intercept: f64 },
    ClampedLinear { slope: f64, lo: f64, hi: f64 },
    Tanh { scale: f64, amplitude: f64 },
    Quadratic { coeff: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub drift: DriftConfig,
    pub sigma: f64,
    /// `[lo, hi]`; equal ends give a singleton.
    pub controls: [f64; 2],
    pub terminal: TerminalConfig,
    pub horizon: f64,
    #[serde(default = "default_y_box")]
    pub y_box: [f64; 2],
    /// Defaults to `[0, 1/γ]` for AVaR and `[0.05, 8]` otherwise.
    #[serde(default)]
    pub z_box: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_t: usize,
    pub n_y: usize,
    pub n_z: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { n_t: 201, n_y: 201, n_z: 81 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyChoice {
    /// The policy read off the HJBI solve.
    Optimal,
    Constant { alpha: f64, beta: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub paths: usize,
    pub steps: usize,
    /// Also tilt the paths by the adversary and carry `Z`.
    pub tilted: bool,
    pub policy: PolicyChoice,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { paths: 100_000, steps: 200, tilted: false, policy: PolicyChoice::Optimal }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateConfig {
    /// Subset of `properties`, `dpp`, `reduction`, `r_sweep`, `mc`; empty
    /// runs every check that applies to the loss.
    pub checks: Vec<String>,
    pub rel_tol: f64,
    /// Absolute floor added to the relative tolerance.
    pub abs_tol: f64,
    /// `[n_t, n_y]` of the one-dimensional oracle solves.
    pub oracle_grid: [usize; 2],
    /// Nested grid for the refinement error; defaults to half the cells.
    pub coarse_grid: Option<GridConfig>,
    pub z_values: Vec<f64>,
    /// `[lo, hi, nodes]`; defaults to `[min f - 3, max f + 3]` at spacing 0.25.
    pub r_grid: Option<[f64; 3]>,
    pub paths: usize,
    pub steps: usize,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self {
            checks: Vec::new(),
            rel_tol: 0.02,
            abs_tol: 1e-9,
            oracle_grid: [101, 1601],
            coarse_grid: None,
            z_values: vec![0.5, 1.0, 2.0],
            r_grid: None,
            paths: 100_000,
            steps: 200,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub bounds: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { bounds: vec![2.0, 4.0, 8.0, 16.0] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub loss: LossConfig,
    #[serde(default)]
    pub problem: Option<ProblemConfig>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default = "default_beta_bound")]
    pub beta_bound: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default = "default_cfl_policy")]
    pub cfl_policy: CflPolicy,
    #[serde(default)]
    pub y0: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Empirical distribution for the `oce` subcommand.
    #[serde(default)]
    pub outcomes: Option<Vec<f64>>,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub validate: ValidateConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

fn default_y_box() -> [f64; 2] {
    [-8.0, 8.0]
}

fn default_beta_bound() -> f64 {
    8.0
}

fn default_cfl() -> f64 {
    0.9
}

fn default_cfl_policy() -> CflPolicy {
    CflPolicy::Adaptive
}

/// Configuration mistakes; reported with exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let at = e.path().to_string();
            let at = if at == "." { String::new() } else { format!("{at}: ") };
            config_error(format!("{at}{}", e.inner()))
        })
    }

    pub fn spec(&self) -> anyhow::Result<LossSpec<f64>> {
        match self.loss {
            LossConfig::Entropic => Ok(LossSpec::entropic()),
            LossConfig::Mmv => Ok(LossSpec::monotone_mean_variance()),
            LossConfig::Avar { gamma } => LossSpec::avar(gamma).map_err(|e| config_error(format!("loss.gamma: {e}"))),
        }
    }

    pub fn options(&self) -> anyhow::Result<SchemeOptions> {
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            bail!(config_error(format!("cfl: must lie in (0, 1], got {}", self.cfl)));
        }
        Ok(SchemeOptions { cfl: self.cfl, cfl_policy: self.cfl_policy, ..SchemeOptions::default() })
    }

    /// The control problem, validated against the loss so a bad `z_box` is
    /// caught before any solve starts.
    pub fn problem(&self) -> anyhow::Result<ControlProblem<f64>> {
        let pc = self.problem.as_ref().ok_or_else(|| config_error("problem: required by this subcommand"))?;
        let drift = match pc.drift {
            DriftConfig::Identity => Drift::identity(),
            DriftConfig::Zero => Drift::zero(),
            DriftConfig::Constant { mu } => Drift::Constant { mu: vec![mu] },
            DriftConfig::Affine { mu, gain } => Drift::Affine { mu: vec![mu], gain: vec![gain] },
            DriftConfig::MeanReverting { kappa, mean, gain } => Drift::MeanReverting { kappa, mean: vec![mean], gain: vec![gain] },
        };
        let terminal = match pc.terminal {
            TerminalConfig::Constant { c } => Terminal::Constant { c },
            TerminalConfig::Linear { slope, intercept } => Terminal::Linear { slope, intercept },
            TerminalConfig::ClampedLinear { slope, lo, hi } => Terminal::ClampedLinear { slope, lo, hi },
            TerminalConfig::Tanh { scale, amplitude } => Terminal::Tanh { scale, amplitude },
            TerminalConfig::Quadratic { coeff } => Terminal::Quadratic { coeff },
        };
        let spec = self.spec()?;
        let mut problem = ControlProblem::scalar(drift, pc.sigma, ControlBox::interval(pc.controls[0], pc.controls[1]), terminal, pc.horizon)
            .with_y_box(pc.y_box[0], pc.y_box[1]);
        problem = match pc.z_box {
            Some([lo, hi]) => problem.with_z_box(lo, hi),
            None if spec.avar_level().is_some() => problem.with_z_box_for(&spec),
            None => problem,
        };
        problem.validate().map_err(|e| config_error(format!("problem: {e}")))?;
        problem.validate_z_box(&spec).map_err(|e| config_error(format!("problem.z_box: {e}")))?;
        Ok(problem)
    }

    pub fn coarse_grid(&self) -> GridConfig {
        self.validate.coarse_grid.unwrap_or(GridConfig {
            n_t: self.grid.n_t / 2 + 1,
            n_y: self.grid.n_y / 2 + 1,
            n_z: self.grid.n_z / 2 + 1,
        })
    }

    pub fn r_grid(&self, problem: &ControlProblem<f64>) -> anyhow::Result<UniformGrid<f64>> {
        let [lo, hi, n] = match self.validate.r_grid {
            Some(g) => g,
            None => {
                let (a, b) = (problem.y_box[0].0, problem.y_box[0].1);
                let fs: Vec<f64> = (0..=400).map(|i| problem.terminal.eval(a + (b - a) * i as f64 / 400.0)).collect();
                let lo = fs.iter().copied().fold(f64::INFINITY, f64::min) - 3.0;
                let hi = fs.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0;
                [lo, hi, ((hi - lo) / 0.25).ceil() + 1.0]
            }
        };
        UniformGrid::new(lo, hi, n as usize).map_err(|e| config_error(format!("validate.r_grid: {e}")))
    }
}
