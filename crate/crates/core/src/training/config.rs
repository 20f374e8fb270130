//! Run configuration, read from TOML with sections `[scenario]`, `[network]`,
//! `[scales]`, `[loss]`, `[optim]`, `[data]` and `[output]`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::network::{CheckpointFormat, FieldMode};
use crate::optim::{AdamConfig, WolfeParams};
use crate::physics::ReferenceScales;
use crate::sampling::{ScenarioConfig, ScenarioSpec};

use super::TrainError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    /// Hidden layers.
    pub hidden_layers: usize,
    /// Neurons per hidden layer.
    pub width: usize,
    pub n_sd: usize,
    /// Defaults to whether the scenario is parametric.
    #[serde(default)]
    pub parametric: Option<bool>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: FieldMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    #[serde(default = "default_f_bc")]
    pub f_bc: f64,
    #[serde(default = "default_f_sigma")]
    pub f_sigma: f64,
}

fn default_f_bc() -> f64 {
    10.0
}

fn default_f_sigma() -> f64 {
    1.0
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { f_bc: default_f_bc(), f_sigma: default_f_sigma() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    pub adam_iters: u64,
    pub adam_lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// L-BFGS inner iterations per batch and epoch.
    pub lbfgs_inner: usize,
    pub lbfgs_history: usize,
    pub max_epochs: u64,
    pub wolfe_c1: f64,
    pub wolfe_c2: f64,
    pub max_line_search_evals: usize,
    /// Fixed-size reduction chunks, independent of the thread count.
    pub deterministic: bool,
}

impl Default for OptimConfig {
    fn default() -> Self {
        let a = AdamConfig::default();
        let w = WolfeParams::default();
        Self {
            adam_iters: 10_000,
            adam_lr: a.lr,
            adam_beta1: a.beta1,
            adam_beta2: a.beta2,
            adam_eps: a.eps,
            lbfgs_inner: 20,
            lbfgs_history: 50,
            max_epochs: 100,
            wolfe_c1: w.c1,
            wolfe_c2: w.c2,
            max_line_search_evals: w.max_evals,
            deterministic: true,
        }
    }
}

impl OptimConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.adam_lr, beta1: self.adam_beta1, beta2: self.adam_beta2, eps: self.adam_eps }
    }

    pub fn wolfe(&self) -> WolfeParams {
        WolfeParams { c1: self.wolfe_c1, c2: self.wolfe_c2, max_evals: self.max_line_search_evals, initial_step: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Point-set CSV.
    #[serde(default)]
    pub points: Option<PathBuf>,
    /// Reference solution CSV for the relative L2 test loss.
    #[serde(default)]
    pub reference: Option<PathBuf>,
    /// Geometry parameter the reference was computed at; defaults to the
    /// scenario's reference value.
    #[serde(default)]
    pub reference_k: Option<f64>,
    /// Unset trains full-batch.
    #[serde(default)]
    pub max_batch_size: Option<usize>,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    /// Iterations between test-loss evaluations; 0 evaluates only at the
    /// start and the end.
    #[serde(default = "default_test_interval")]
    pub test_interval: u64,
}

fn default_test_fraction() -> f64 {
    0.01
}

fn default_test_interval() -> u64 {
    100
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckpointEncoding {
    #[default]
    Text,
    Binary,
}

impl From<&CheckpointEncoding> for CheckpointFormat {
    fn from(e: &CheckpointEncoding) -> Self {
        match e {
            CheckpointEncoding::Text => CheckpointFormat::Text,
            CheckpointEncoding::Binary => CheckpointFormat::Binary,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub checkpoint_format: CheckpointEncoding,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub scenario: ScenarioConfig,
    pub network: NetworkConfig,
    pub scales: ReferenceScales,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub optim: OptimConfig,
    pub data: DataConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self, TrainError> {
        let cfg: Self = toml::from_str(text).map_err(|e| TrainError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths are taken relative to its folder.
    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TrainError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            TrainError::Config(m) => TrainError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(q) = p {
                if q.is_relative() {
                    *q = base.join(&*q);
                }
            }
        };
        rebase(&mut cfg.data.points);
        rebase(&mut cfg.data.reference);
        rebase(&mut cfg.output.dir);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serialisable")
    }

    pub fn scenario_spec(&self) -> Result<ScenarioSpec, TrainError> {
        let spec = ScenarioSpec::from_config(&self.scenario)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn parametric(&self) -> Result<bool, TrainError> {
        let scenario = self.scenario_spec()?.parametric;
        Ok(self.network.parametric.unwrap_or(scenario))
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |key: &str, msg: String| Err(TrainError::Config(format!("{key}: {msg}")));
        if !(self.loss.f_bc > 0.0 && self.loss.f_bc.is_finite()) {
            return bad("loss.f_bc", format!("must be positive, got {}", self.loss.f_bc));
        }
        if !(self.loss.f_sigma > 0.0 && self.loss.f_sigma.is_finite()) {
            return bad("loss.f_sigma", format!("must be positive, got {}", self.loss.f_sigma));
        }
        if let Err(e) = self.scales.validate() {
            return bad("scales", e.to_string());
        }
        if !matches!(self.network.n_sd, 2 | 3) {
            return bad("network.n_sd", format!("must be 2 or 3, got {}", self.network.n_sd));
        }
        if self.network.hidden_layers == 0 || self.network.width == 0 {
            return bad("network", "hidden_layers and width must be positive".into());
        }
        let scenario = self.scenario_spec()?;
        if let Some(p) = self.network.parametric {
            if p != scenario.parametric {
                return bad(
                    "network.parametric",
                    format!("{p} disagrees with scenario '{}' (parametric = {})", scenario.name, scenario.parametric),
                );
            }
        }
        if self.data.max_batch_size == Some(0) {
            return bad("data.max_batch_size", "must be at least 1".into());
        }
        if !(self.data.test_fraction >= 0.0 && self.data.test_fraction < 1.0) {
            return bad("data.test_fraction", format!("must lie in [0, 1), got {}", self.data.test_fraction));
        }
        let o = &self.optim;
        if !(o.adam_lr > 0.0) || !(o.adam_eps > 0.0) || !(0.0..1.0).contains(&o.adam_beta1) || !(0.0..1.0).contains(&o.adam_beta2) {
            return bad("optim", "Adam hyperparameters out of range".into());
        }
        if !(0.0 < o.wolfe_c1 && o.wolfe_c1 < o.wolfe_c2 && o.wolfe_c2 < 1.0) {
            return bad("optim", format!("need 0 < wolfe_c1 < wolfe_c2 < 1, got {} and {}", o.wolfe_c1, o.wolfe_c2));
        }
        if o.lbfgs_history == 0 || o.max_line_search_evals == 0 {
            return bad("optim", "lbfgs_history and max_line_search_evals must be positive".into());
        }
        Ok(())
    }
}
