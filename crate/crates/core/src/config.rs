//! Experiment configuration, read from TOML or JSON. Unknown keys are
//! rejected and every block is validated before any computation starts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{KsdError, Result};
use crate::experiments::Estimator;
use crate::gof::GofConfig;
use crate::io::matrix_rows;
use crate::kernels::RadialKernel;
use crate::ksdstats::StatKind;
use crate::manifolds::Manifold;
use crate::matalg::Mat;
use crate::models::{ExpFamilyKind, ExponentialFamily, Family, ScoreModel};
use crate::sampling::MhOptions;

pub const DEFAULT_SEED: u64 = 20_240_229;
pub const DEFAULT_REPLICATES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMethod {
    /// Exact sampler when one exists, Metropolis-Hastings otherwise.
    #[default]
    Auto,
    Uniform,
    Rejection,
    MetropolisHastings,
    WishartExact,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    #[serde(default)]
    pub method: SamplerMethod,
    #[serde(default = "default_n")]
    pub n: usize,
    pub step: Option<f64>,
    pub burn_in: Option<usize>,
    pub thin: Option<usize>,
}

fn default_n() -> usize {
    100
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { method: SamplerMethod::Auto, n: default_n(), step: None, burn_in: None, thin: None }
    }
}

impl SamplerConfig {
    pub fn mh_options(&self, m: &Manifold) -> MhOptions {
        let d = MhOptions::for_manifold(m);
        MhOptions {
            step: self.step.unwrap_or(d.step),
            burn_in: self.burn_in.unwrap_or(d.burn_in),
            thin: self.thin.unwrap_or(d.thin),
            init: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    #[serde(default = "default_kind")]
    pub kind: StatKind,
    /// Exponential family to fit; defaults to the kind of the `family` block.
    pub family: Option<ExpFamilyKind>,
    /// Also report the numeric matrix Fisher MLE.
    #[serde(default)]
    pub compare_mle: bool,
}

fn default_kind() -> StatKind {
    StatKind::V
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self { kind: StatKind::V, family: None, compare_mle: false }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledMatrix {
    pub label: String,
    #[serde(with = "matrix_rows")]
    pub f: Mat,
}

/// Sweep of the simulation studies. Unset lists fall back to the defaults of
/// each study.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub n_values: Option<Vec<usize>>,
    pub replicates: Option<usize>,
    pub f0: Option<Vec<LabeledMatrix>>,
    pub estimators: Option<Vec<Estimator>>,
    pub kinds: Option<Vec<StatKind>>,
    /// Uniform draws used for the Monte Carlo normalizer of the numeric MLE.
    pub mle_pool_size: Option<usize>,
}

impl SweepConfig {
    pub fn replicates(&self) -> usize {
        self.replicates.unwrap_or(DEFAULT_REPLICATES)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
    /// Whitespace-separated plot data.
    Dat,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Csv, OutputFormat::Json]
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_dir(), formats: default_formats() }
    }
}

impl OutputConfig {
    pub fn wants(&self, f: OutputFormat) -> bool {
        self.formats.contains(&f)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub manifold: Option<Manifold>,
    #[serde(default)]
    pub kernel: RadialKernel,
    pub family: Option<Family>,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub gof: GofConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            manifold: None,
            kernel: RadialKernel::default(),
            family: None,
            sampler: SamplerConfig::default(),
            estimator: EstimatorConfig::default(),
            gof: GofConfig::default(),
            sweep: SweepConfig::default(),
            seed: DEFAULT_SEED,
            output: OutputConfig::default(),
        }
    }
}

fn config_err(msg: impl Into<String>) -> KsdError {
    KsdError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: Self = toml::from_str(s).map_err(|e| config_err(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s).map_err(|e| config_err(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Load by extension: `.json` is JSON, anything else TOML.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        let parsed = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json_str(&text),
            _ => Self::from_toml_str(&text),
        };
        parsed.map_err(|e| match e {
            KsdError::Config(m) => config_err(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |key: &str, e: KsdError| config_err(format!("{key}: {e}"));
        if let Some(m) = self.manifold {
            m.checked().map_err(|e| wrap("manifold", e))?;
        }
        self.kernel.checked().map_err(|e| wrap("kernel", e))?;
        if let (Some(m), Some(f)) = (self.manifold, &self.family) {
            ScoreModel::new(m, f.clone()).map_err(|e| wrap("family", e))?;
        }
        if self.sampler.n == 0 {
            return Err(config_err("sampler.n: must be at least 1"));
        }
        if let Some(step) = self.sampler.step {
            if !(step > 0.0 && step.is_finite()) {
                return Err(config_err(format!("sampler.step: must be positive, got {step}")));
            }
        }
        if self.sampler.thin == Some(0) {
            return Err(config_err("sampler.thin: must be at least 1"));
        }
        if !(self.gof.beta > 0.0 && self.gof.beta < 1.0) {
            return Err(config_err(format!("gof.beta: must lie in (0, 1), got {}", self.gof.beta)));
        }
        if self.gof.n_sim == 0 {
            return Err(config_err("gof.n_sim: must be at least 1"));
        }
        if let Some(ns) = &self.sweep.n_values {
            if ns.is_empty() || ns.contains(&0) {
                return Err(config_err("sweep.n_values: must be a non-empty list of positive sizes"));
            }
        }
        if self.sweep.replicates == Some(0) {
            return Err(config_err("sweep.replicates: must be at least 1"));
        }
        if let Some(f0) = &self.sweep.f0 {
            if f0.is_empty() {
                return Err(config_err("sweep.f0: must not be empty"));
            }
            let shape = f0[0].f.shape();
            if f0.iter().any(|l| l.f.shape() != shape || l.f.iter().any(|v| !v.is_finite())) {
                return Err(config_err("sweep.f0: matrices must be finite and share one shape"));
            }
        }
        if self.sweep.mle_pool_size == Some(0) {
            return Err(config_err("sweep.mle_pool_size: must be at least 1"));
        }
        if let Some(kind) = self.estimator.family {
            if let Some(m) = self.manifold {
                ExponentialFamily::new(m, kind).map_err(|e| wrap("estimator.family", e))?;
            }
        }
        Ok(())
    }

    pub fn require_manifold(&self) -> Result<Manifold> {
        self.manifold.ok_or_else(|| config_err("manifold: block is required for this command"))
    }

    pub fn require_model(&self) -> Result<ScoreModel> {
        let m = self.require_manifold()?;
        let f = self.family.clone().ok_or_else(|| config_err("family: block is required for this command"))?;
        ScoreModel::new(m, f)
    }

    /// Exponential family to estimate: `estimator.family`, else the kind of
    /// `family` (the config block, or the one recorded with the sample).
    pub fn exp_family_kind(&self, family: Option<&Family>) -> Result<ExpFamilyKind> {
        if let Some(k) = self.estimator.family {
            return Ok(k);
        }
        match family.or(self.family.as_ref()) {
            Some(Family::MatrixFisher { .. }) => Ok(ExpFamilyKind::MatrixFisher),
            Some(Family::MatrixBingham { .. }) => Ok(ExpFamilyKind::MatrixBingham),
            Some(Family::MatrixFisherBingham { .. }) => Ok(ExpFamilyKind::MatrixFisherBingham),
            Some(f) => Err(config_err(format!(
                "estimator.family: {} is not an exponential family; set estimator.family",
                f.label()
            ))),
            None => Err(config_err("estimator.family: required when no family is given")),
        }
    }
}
