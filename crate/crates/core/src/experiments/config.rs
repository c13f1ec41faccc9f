//! Experiment configuration, read from TOML (or JSON by extension).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{DecaySpec, KernelSpec, DEFAULT_TRUNCATION};
use crate::nystrom::SizeRuleParams;
use crate::spectral::IndexFunction;
use crate::synthetic::{CoefficientLaw, NoiseSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub phi: IndexFunction,
    #[serde(default)]
    pub law: CoefficientLaw,
    /// Spectrum the target lives in when the kernel is closed-form.
    #[serde(default)]
    pub decay: Option<DecaySpec>,
    #[serde(default)]
    pub truncation: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LambdaPolicy {
    #[default]
    Lambda0,
    Fixed {
        value: f64,
    },
    Grid {
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LambdaSweepConfig {
    /// Sample size; defaults to the last entry of `n_grid`.
    pub n: Option<usize>,
    pub points: usize,
    /// Grid spans `[λ₀/span, λ₀·span]`.
    pub span: f64,
    /// `error(λ₀)` must be within this factor of the grid minimum.
    pub factor: f64,
    /// Changes in log median error below this are treated as flat when
    /// counting slope sign changes.
    pub flat_tolerance: f64,
}

impl Default for LambdaSweepConfig {
    fn default() -> Self {
        LambdaSweepConfig {
            n: None,
            points: 21,
            span: 100.0,
            factor: 3.0,
            flat_tolerance: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    pub truncation: usize,
    pub n: usize,
    /// Defaults to `λ₀(n)` of the truncated analytic profile.
    pub lambda: Option<f64>,
    /// Defaults to the size rule at `λ`.
    pub m: Option<usize>,
    pub trials: usize,
    /// Sample sizes for the operator-concentration slope fit; empty skips it.
    pub slope_n_grid: Vec<usize>,
    pub slope_truncation: usize,
    pub slope_lambda: f64,
    pub slope_tolerance: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            truncation: 256,
            n: 2048,
            lambda: None,
            m: None,
            trials: 200,
            slope_n_grid: vec![],
            slope_truncation: 8,
            slope_lambda: 1e-2,
            slope_tolerance: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Expected rate exponent; defaults to `−r/(s+1)` for Hölder targets
    /// under a designed kernel.
    pub rate_exponent: Option<f64>,
    pub rate_tolerance: f64,
    pub min_r_squared: f64,
    /// Bound on the median Nyström/KRR error ratio when the baseline runs.
    pub nystrom_ratio: f64,
    pub cost_tolerance: f64,
    pub cost_ceiling: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rate_exponent: None,
            rate_tolerance: 0.15,
            min_r_squared: 0.9,
            nystrom_ratio: 1.5,
            cost_tolerance: 0.2,
            cost_ceiling: 1.8,
        }
    }
}

fn default_reps() -> usize {
    1
}

fn default_outputs() -> PathBuf {
    PathBuf::from("results")
}

fn default_mc_samples() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kernel: KernelSpec,
    pub target: TargetConfig,
    pub noise: NoiseSpec,
    pub n_grid: Vec<usize>,
    #[serde(default = "default_reps")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub size_rule: SizeRuleParams,
    #[serde(default)]
    pub lambda_policy: LambdaPolicy,
    #[serde(default = "default_outputs")]
    pub outputs: PathBuf,
    /// Also fit full-data KRR for every `n` up to this size.
    #[serde(default)]
    pub krr_baseline_max_n: Option<usize>,
    /// Monte-Carlo draws for the error under closed-form kernels.
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
    /// Fill the `wall_ms` column. Off by default so reruns are
    /// byte-identical.
    #[serde(default)]
    pub timing: bool,
    #[serde(default)]
    pub lambda_sweep: LambdaSweepConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| cfg_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| cfg_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads `.json` files as JSON and everything else as TOML.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        };
        parsed.map_err(|e| match e {
            Error::Config(msg) => cfg_err(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| cfg_err(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate().map_err(|e| cfg_err(format!("kernel: {e}")))?;
        self.target.phi.validate().map_err(|e| cfg_err(format!("target.phi: {e}")))?;
        if let Some(d) = self.target.decay {
            d.validate().map_err(|e| cfg_err(format!("target.decay: {e}")))?;
        }
        if self.target.truncation == Some(0) {
            return Err(cfg_err("target.truncation must be at least 1"));
        }
        self.noise.validate().map_err(|e| cfg_err(format!("noise: {e}")))?;
        if self.n_grid.is_empty() {
            return Err(cfg_err("n_grid must not be empty"));
        }
        if self.n_grid.contains(&0) {
            return Err(cfg_err("n_grid entries must be positive"));
        }
        if self.n_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(cfg_err(format!("n_grid must be strictly increasing, got {:?}", self.n_grid)));
        }
        if self.repetitions == 0 {
            return Err(cfg_err("repetitions must be at least 1"));
        }
        self.size_rule.validate().map_err(|e| cfg_err(format!("size_rule: {e}")))?;
        match &self.lambda_policy {
            LambdaPolicy::Lambda0 => {}
            LambdaPolicy::Fixed { value } => {
                if !(*value > 0.0 && *value < 1.0) {
                    return Err(cfg_err(format!("lambda_policy.value must lie in (0, 1), got {value}")));
                }
            }
            LambdaPolicy::Grid { values } => {
                if values.is_empty() || values.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
                    return Err(cfg_err("lambda_policy.values must be a nonempty list in (0, 1)"));
                }
            }
        }
        if self.mc_samples == 0 {
            return Err(cfg_err("mc_samples must be at least 1"));
        }
        let ls = &self.lambda_sweep;
        if ls.points < 3 || !(ls.span > 1.0) || !(ls.factor >= 1.0) || !(ls.flat_tolerance >= 0.0) {
            return Err(cfg_err("lambda_sweep needs points >= 3, span > 1, factor >= 1, flat_tolerance >= 0"));
        }
        let d = &self.diagnostics;
        if d.trials == 0 || d.n == 0 || d.truncation == 0 || d.slope_truncation == 0 {
            return Err(cfg_err("diagnostics needs positive trials, n and truncations"));
        }
        if let Some(l) = d.lambda {
            if !(l > 0.0 && l < 1.0) {
                return Err(cfg_err(format!("diagnostics.lambda must lie in (0, 1), got {l}")));
            }
        }
        if self.size_rule.c_gamma.is_some() && self.size_rule.gamma.is_none() {
            return Err(cfg_err("size_rule.c_gamma needs size_rule.gamma"));
        }
        Ok(())
    }

    /// Spectrum `(decay, T)` that defines the target.
    pub fn target_spectrum(&self) -> (DecaySpec, usize) {
        match self.kernel.designed_parts() {
            Some((d, t)) => (
                self.target.decay.unwrap_or(d),
                self.target.truncation.unwrap_or(t),
            ),
            None => (
                self.target.decay.unwrap_or(DecaySpec { s: 0.5 }),
                self.target.truncation.unwrap_or(DEFAULT_TRUNCATION),
            ),
        }
    }

    /// `−r/(s+1)` when it is defined by the configuration.
    pub fn expected_rate(&self) -> Option<f64> {
        if let Some(e) = self.tolerances.rate_exponent {
            return Some(e);
        }
        match (self.target.phi, self.kernel.designed_parts()) {
            (IndexFunction::Holder { r }, Some((d, _))) => Some(-r / (d.s + 1.0)),
            _ => None,
        }
    }
}
