//! Tool configuration: a single JSON document with one section per pipeline
//! stage, strict about unknown keys, hashed for reproducibility logging.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::learner::{build_loss, FeatureMap, OptimizerConfig};
use crate::regress::RegressorConfig;
use crate::synthetic::{BaseSpec, DecisionModel, WorldSpec};

/// SHA-256 hex digest of a value's canonical JSON serialization.
///
/// Struct fields serialize in declaration order, so the digest is stable for
/// a given configuration content. Used to stamp resolved configurations and
/// nuisance settings into logs, model metadata, and experiment reports.
pub fn hash_json<T: Serialize>(value: &T) -> String {
    let text = serde_json::to_string(value).expect("configuration types serialize infallibly");
    let digest = Sha256::digest(text.as_bytes());
    let mut out = String::with_capacity(64);
    for byte in digest {
        use std::fmt::Write;
        write!(out, "{byte:02x}").expect("writing to a String cannot fail");
    }
    out
}

/// Input dataset location for the `fit`, `bounds`, and `evaluate`
/// subcommands.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Path of the dataset CSV.
    pub csv: Option<String>,
    /// Path of the column-schema JSON describing the CSV's roles.
    pub schema: Option<String>,
}

/// Identification-stage settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdentificationConfig {
    /// Denominator floor for the covariance-ratio weights.
    pub eps_denom: f64,
    /// Constant analyst lower bound `a` on the latent outcome.
    pub bound_a: f64,
    /// Constant analyst upper bound `b`.
    pub bound_b: f64,
}

impl Default for IdentificationConfig {
    fn default() -> Self {
        IdentificationConfig {
            eps_denom: 1e-3,
            bound_a: 0.0,
            bound_b: 1.0,
        }
    }
}

impl IdentificationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_denom > 0.0 && self.eps_denom.is_finite()) {
            return Err(Error::config(format!(
                "eps_denom must be positive and finite, got {}",
                self.eps_denom
            )));
        }
        if !(self.bound_a >= 0.0 && self.bound_b <= 1.0 && self.bound_a <= self.bound_b) {
            return Err(Error::config(format!(
                "bounds must satisfy 0 <= a <= b <= 1, got a={}, b={}",
                self.bound_a, self.bound_b
            )));
        }
        Ok(())
    }
}

/// Classifier-stage settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnerConfig {
    /// Surrogate loss name (see the learner registry).
    pub loss: String,
    pub feature_map: FeatureMap,
    /// L2 regularization strength on the score coefficients.
    pub reg_lambda: f64,
    /// Cross-fitting fold count `K`.
    pub folds: usize,
    pub optimizer: OptimizerConfig,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            loss: "logistic".into(),
            feature_map: FeatureMap::default(),
            reg_lambda: 1e-4,
            folds: 5,
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        build_loss(&self.loss)?;
        if !(self.reg_lambda >= 0.0 && self.reg_lambda.is_finite()) {
            return Err(Error::config(format!(
                "reg_lambda must be non-negative, got {}",
                self.reg_lambda
            )));
        }
        if self.folds < 2 {
            return Err(Error::config(format!(
                "cross-fitting needs at least 2 folds, got {}",
                self.folds
            )));
        }
        self.optimizer.validate()
    }
}

/// Replication-experiment settings: a grid of worlds crossed with learning
/// methods.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Decision-model variants to run.
    pub models: Vec<DecisionModel>,
    /// Confounding strengths.
    pub alphas: Vec<f64>,
    /// Labeling-rate multipliers.
    pub betas: Vec<f64>,
    /// Learning methods by registry name.
    pub methods: Vec<String>,
    pub replications: usize,
    /// Sample size per replication.
    pub n: usize,
    /// Judge count.
    pub m: u32,
    /// Fraction of each replication held out for testing.
    pub test_fraction: f64,
    pub base: BaseSpec,
    /// Regressor for the unobservable-construction residual.
    pub residual_regressor: RegressorConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            models: vec![DecisionModel::Link],
            alphas: vec![0.5, 0.7, 0.9],
            betas: vec![1.0],
            methods: vec![
                "point".into(),
                "partial".into(),
                "selected".into(),
                "full".into(),
            ],
            replications: 20,
            n: 10_459,
            m: 20,
            test_fraction: 0.3,
            base: BaseSpec::default(),
            residual_regressor: RegressorConfig {
                kind: "ridge-linear".into(),
                ..RegressorConfig::default()
            },
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() || self.alphas.is_empty() || self.betas.is_empty() {
            return Err(Error::config("experiment grid must be nonempty"));
        }
        if self.methods.is_empty() {
            return Err(Error::config("experiment needs at least one method"));
        }
        if self.replications == 0 {
            return Err(Error::config("replication count must be positive"));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::config(format!(
                "test_fraction must lie strictly in (0, 1), got {}",
                self.test_fraction
            )));
        }
        for &alpha in &self.alphas {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::config(format!(
                    "alpha values must lie strictly in (0, 1), got {alpha}"
                )));
            }
        }
        for &beta in &self.betas {
            if !(beta > 0.0 && beta <= 1.0) {
                return Err(Error::config(format!(
                    "beta values must lie in (0, 1], got {beta}"
                )));
            }
        }
        if self.m < 2 {
            return Err(Error::config(format!("need at least 2 judges, got {}", self.m)));
        }
        if self.n < 10 {
            return Err(Error::config(format!(
                "experiment sample size {} is too small to split and fold",
                self.n
            )));
        }
        self.residual_regressor.validate()
    }

    /// The world of one grid cell.
    pub fn world(&self, model: DecisionModel, alpha: f64, beta: f64) -> WorldSpec {
        WorldSpec {
            model,
            alpha,
            beta,
            m: self.m,
            n: self.n,
            base: self.base.clone(),
            residual_regressor: self.residual_regressor.clone(),
        }
    }
}

/// Output locations.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Directory for generated files (created if absent).
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: ".".into() }
    }
}

/// The whole tool configuration. Every section has defaults; unknown keys
/// anywhere are rejected at load time.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToolConfig {
    pub data: DataConfig,
    /// World description for the `generate` subcommand.
    pub generate: WorldSpec,
    /// Regressor for the cross-fitted nuisance estimates.
    pub nuisance: RegressorConfig,
    pub identification: IdentificationConfig,
    pub learner: LearnerConfig,
    pub experiment: ExperimentConfig,
    pub seed: u64,
    pub output: OutputConfig,
}

impl ToolConfig {
    pub fn from_path(path: impl AsRef<std::path::Path>) -> Result<ToolConfig> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| {
            Error::config(format!("cannot read config {}: {e}", path.as_ref().display()))
        })?;
        let cfg: ToolConfig = serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("bad config JSON: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.generate.validate()?;
        self.nuisance.validate()?;
        self.identification.validate()?;
        self.learner.validate()?;
        self.experiment.validate()
    }

    /// Content hash of the resolved configuration.
    pub fn content_hash(&self) -> String {
        hash_json(self)
    }
}
