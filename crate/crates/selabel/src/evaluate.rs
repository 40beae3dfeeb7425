//! Risk and accuracy evaluation, plug-in risk bounds, and the replication
//! experiment runner.
//!
//! The runner crosses a grid of worlds `(decision model, α, β)` with a set
//! of learning methods, replicating each cell with independent derived
//! seeds: generate → split into train/test → cross-fit nuisances on train
//! → fit every method → score test accuracy against oracle outcomes. Any
//! cell failure is recorded in the report and the run continues.
//!
//! Learning methods live behind a registry keyed by name, so the experiment
//! grid, the CLI, and the config file all select them the same way:
//! `point` (covariance-ratio weights), `partial` (interval-bound weights),
//! `selected` (labeled rows only), and `full` (oracle outcomes — synthetic
//! data only).

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{hash_json, ExperimentConfig, IdentificationConfig, LearnerConfig};
use crate::dataset::{make_folds, split_train_test, FoldPlan, SelectiveDataset};
use crate::error::{Error, Result};
use crate::identify::{
    partial_bounds_uniform, partial_weight, point_weight, IntervalBounds, WeightVector,
};
use crate::learner::{fit_baseline, fit_weighted_erm, Baseline, ScoreModel};
use crate::nuisance::{crossfit_nuisances, NuisanceSet};
use crate::regress::RegressorConfig;
use crate::seed::derive_seed;
use crate::synthetic::{simulate, DecisionModel};

// ── Risk and accuracy operations ────────────────────────────────────────────

/// Fraction of positions where prediction and truth agree.
pub fn zero_one_accuracy(pred: &[u8], truth: &[u8]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::contract(format!(
            "predictions cover {} rows, truth covers {}",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::contract("cannot score an empty prediction vector"));
    }
    let agree = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(agree as f64 / pred.len() as f64)
}

/// Population misclassification risk of classifier values `f` under known
/// per-row outcome probabilities: `mean(μ) + mean((1 − 2μ) · f)`.
pub fn oracle_risk_from_mu(mu: &[f64], f: &[u8]) -> Result<f64> {
    if mu.len() != f.len() {
        return Err(Error::contract(format!(
            "mu covers {} rows, classifier covers {}",
            mu.len(),
            f.len()
        )));
    }
    if mu.is_empty() {
        return Err(Error::contract("cannot evaluate risk on zero rows"));
    }
    for &m in mu {
        if !(0.0..=1.0).contains(&m) {
            return Err(Error::data(format!("mu value {m} is not a probability")));
        }
    }
    let n = mu.len() as f64;
    let mean_mu: f64 = mu.iter().sum::<f64>() / n;
    let adj: f64 = mu
        .iter()
        .zip(f)
        .map(|(&m, &fi)| (1.0 - 2.0 * m) * fi as f64)
        .sum::<f64>()
        / n;
    Ok(mean_mu + adj)
}

/// Bounds on the misclassification risk of `f` when only interval bounds on
/// `μ*` are known. Per row the risk contribution `μ + (1 − 2μ)f` is linear
/// in `μ`, so its extrema sit at the interval's endpoints: predicting 1
/// contributes `[1 − u, 1 − l]`, predicting 0 contributes `[l, u]`.
pub fn risk_bounds(bounds: &IntervalBounds, f: &[u8]) -> Result<(f64, f64)> {
    if bounds.n() != f.len() {
        return Err(Error::contract(format!(
            "bounds cover {} rows, classifier covers {}",
            bounds.n(),
            f.len()
        )));
    }
    if f.is_empty() {
        return Err(Error::contract("cannot bound risk on zero rows"));
    }
    let n = f.len() as f64;
    let mut lower = 0.0;
    let mut upper = 0.0;
    for ((&fi, &l), &u) in f.iter().zip(&bounds.lower).zip(&bounds.upper) {
        if fi == 1 {
            lower += 1.0 - u;
            upper += 1.0 - l;
        } else {
            lower += l;
            upper += u;
        }
    }
    Ok((lower / n, upper / n))
}

// ── Learning-method registry ────────────────────────────────────────────────

/// Everything a learning method may consume for one training set.
pub struct TrainContext<'a> {
    pub train: &'a SelectiveDataset,
    pub plan: &'a FoldPlan,
    /// Cross-fitted nuisances; present whenever a weighted method is in the
    /// method list.
    pub nuisances: Option<&'a NuisanceSet>,
    pub learner: &'a LearnerConfig,
    pub identification: &'a IdentificationConfig,
    /// Content hash of the nuisance regressor configuration.
    pub nuisance_hash: &'a str,
}

/// Per-fit diagnostics a method can surface into the report.
#[derive(Debug, Clone, Copy, Default)]
pub struct FitDiagnostics {
    /// Fraction of rows whose weight needed a numerical repair.
    pub weight_flag_rate: Option<f64>,
    /// Fraction of rows whose interval estimate crossed.
    pub crossed_rate: Option<f64>,
    pub converged: Option<bool>,
}

/// A named training strategy.
pub trait LearningMethod: Send + Sync + std::fmt::Debug {
    fn name(&self) -> &'static str;
    /// Whether the method consumes cross-fitted nuisances.
    fn needs_nuisances(&self) -> bool;
    fn fit(&self, ctx: &TrainContext<'_>) -> Result<(ScoreModel, FitDiagnostics)>;
}

fn require_nuisances<'a>(ctx: &'a TrainContext<'_>, name: &str) -> Result<&'a NuisanceSet> {
    ctx.nuisances.ok_or_else(|| {
        Error::contract(format!("method '{name}' needs cross-fitted nuisances"))
    })
}

fn weighted_fit(
    ctx: &TrainContext<'_>,
    weights: &WeightVector,
) -> Result<(ScoreModel, FitDiagnostics)> {
    let (model, report) = fit_weighted_erm(
        ctx.train,
        ctx.plan,
        weights,
        &ctx.learner.loss,
        ctx.learner.feature_map,
        ctx.learner.reg_lambda,
        &ctx.learner.optimizer,
        Some(ctx.nuisance_hash.to_owned()),
    )?;
    Ok((
        model,
        FitDiagnostics {
            weight_flag_rate: Some(weights.flag_rate()),
            crossed_rate: None,
            converged: Some(report.converged),
        },
    ))
}

#[derive(Debug)]
struct PointMethod;

impl LearningMethod for PointMethod {
    fn name(&self) -> &'static str {
        "point"
    }

    fn needs_nuisances(&self) -> bool {
        true
    }

    fn fit(&self, ctx: &TrainContext<'_>) -> Result<(ScoreModel, FitDiagnostics)> {
        let nuis = require_nuisances(ctx, self.name())?;
        let weights = point_weight(nuis, ctx.identification.eps_denom)?;
        weighted_fit(ctx, &weights)
    }
}

#[derive(Debug)]
struct PartialMethod;

impl LearningMethod for PartialMethod {
    fn name(&self) -> &'static str {
        "partial"
    }

    fn needs_nuisances(&self) -> bool {
        true
    }

    fn fit(&self, ctx: &TrainContext<'_>) -> Result<(ScoreModel, FitDiagnostics)> {
        let nuis = require_nuisances(ctx, self.name())?;
        let bounds = partial_bounds_uniform(
            nuis,
            ctx.identification.bound_a,
            ctx.identification.bound_b,
        )?;
        let weights = partial_weight(&bounds);
        let (model, mut diag) = weighted_fit(ctx, &weights)?;
        diag.crossed_rate = Some(bounds.crossed_rate());
        Ok((model, diag))
    }
}

#[derive(Debug)]
struct SelectedMethod;

impl LearningMethod for SelectedMethod {
    fn name(&self) -> &'static str {
        "selected"
    }

    fn needs_nuisances(&self) -> bool {
        false
    }

    fn fit(&self, ctx: &TrainContext<'_>) -> Result<(ScoreModel, FitDiagnostics)> {
        let (model, report) = fit_baseline(
            ctx.train,
            Baseline::SelectedSample,
            &ctx.learner.loss,
            ctx.learner.feature_map,
            ctx.learner.reg_lambda,
            &ctx.learner.optimizer,
        )?;
        Ok((
            model,
            FitDiagnostics {
                converged: Some(report.converged),
                ..FitDiagnostics::default()
            },
        ))
    }
}

#[derive(Debug)]
struct FullMethod;

impl LearningMethod for FullMethod {
    fn name(&self) -> &'static str {
        "full"
    }

    fn needs_nuisances(&self) -> bool {
        false
    }

    fn fit(&self, ctx: &TrainContext<'_>) -> Result<(ScoreModel, FitDiagnostics)> {
        let (model, report) = fit_baseline(
            ctx.train,
            Baseline::FullSample,
            &ctx.learner.loss,
            ctx.learner.feature_map,
            ctx.learner.reg_lambda,
            &ctx.learner.optimizer,
        )?;
        Ok((
            model,
            FitDiagnostics {
                converged: Some(report.converged),
                ..FitDiagnostics::default()
            },
        ))
    }
}

static METHODS: &[&dyn LearningMethod] = &[&PointMethod, &PartialMethod, &SelectedMethod, &FullMethod];

/// Names of the registered learning methods.
pub fn method_names() -> Vec<&'static str> {
    METHODS.iter().map(|m| m.name()).collect()
}

/// Looks a learning method up by name.
pub fn build_method(name: &str) -> Result<&'static dyn LearningMethod> {
    METHODS
        .iter()
        .find(|m| m.name() == name)
        .copied()
        .ok_or_else(|| {
            Error::config(format!(
                "unknown learning method '{name}' (registered: {})",
                method_names().join(", ")
            ))
        })
}

// ── Experiment runner ───────────────────────────────────────────────────────

/// One evaluated (cell × replication × method) outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: DecisionModel,
    pub alpha: f64,
    pub beta: f64,
    pub method: String,
    pub replication: usize,
    /// Derived seed of this replication.
    pub seed: u64,
    /// Test-set zero-one accuracy against oracle outcomes; absent on
    /// failure.
    pub accuracy: Option<f64>,
    /// Labeled fraction of the training split.
    pub labeled_fraction: Option<f64>,
    pub weight_flag_rate: Option<f64>,
    pub crossed_rate: Option<f64>,
    pub converged: Option<bool>,
    /// Error description when the stage failed.
    pub error: Option<String>,
}

/// Result of one experiment run. Serialized forms contain only
/// reproducible content — wall time is reported on the side because two
/// identical runs must produce identical files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    /// Content hash of the full resolved experiment configuration.
    pub config_hash: String,
    pub replications: usize,
    pub rows: Vec<ReportRow>,
    /// Elapsed seconds; never serialized.
    #[serde(skip)]
    pub wall_seconds: f64,
}

/// Seed-derivation tag for experiment replications.
const TAG_EXPERIMENT: u64 = 0xE793;
const TAG_SPLIT: u64 = 0x5917;
const TAG_FOLDS: u64 = 0xF0;

struct CellJob {
    model: DecisionModel,
    alpha: f64,
    beta: f64,
    replication: usize,
    seed: u64,
}

/// Runs the full grid × replication experiment. Deterministic given the
/// configuration and master seed: replications run in parallel but land in
/// pre-assigned report slots ordered by (model, alpha, beta, replication,
/// method). Failures are recorded per row; the run continues.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    nuisance: &RegressorConfig,
    identification: &IdentificationConfig,
    learner: &LearnerConfig,
    master_seed: u64,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    nuisance.validate()?;
    identification.validate()?;
    learner.validate()?;
    let methods: Vec<&'static dyn LearningMethod> = cfg
        .methods
        .iter()
        .map(|name| build_method(name))
        .collect::<Result<_>>()?;
    let needs_nuisances = methods.iter().any(|m| m.needs_nuisances());
    let nuisance_hash = nuisance.content_hash();

    let start = Instant::now();
    let mut jobs = Vec::new();
    let mut cell_index = 0u64;
    for &model in &cfg.models {
        for &alpha in &cfg.alphas {
            for &beta in &cfg.betas {
                for rep in 0..cfg.replications {
                    jobs.push(CellJob {
                        model,
                        alpha,
                        beta,
                        replication: rep,
                        seed: derive_seed(master_seed, &[TAG_EXPERIMENT, cell_index, rep as u64]),
                    });
                }
                cell_index += 1;
            }
        }
    }

    let row_groups: Vec<Vec<ReportRow>> = jobs
        .par_iter()
        .map(|job| {
            run_replication(
                job,
                cfg,
                nuisance,
                identification,
                learner,
                &methods,
                needs_nuisances,
                &nuisance_hash,
            )
        })
        .collect();

    let rows: Vec<ReportRow> = row_groups.into_iter().flatten().collect();
    let config_hash = hash_json(&(
        cfg,
        nuisance,
        identification,
        learner,
        master_seed,
    ));
    Ok(ExperimentReport {
        config_hash,
        replications: cfg.replications,
        rows,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Runs every method for one replication; each stage failure downgrades to
/// per-row error entries so the experiment keeps going.
#[allow(clippy::too_many_arguments)]
fn run_replication(
    job: &CellJob,
    cfg: &ExperimentConfig,
    nuisance: &RegressorConfig,
    identification: &IdentificationConfig,
    learner: &LearnerConfig,
    methods: &[&'static dyn LearningMethod],
    needs_nuisances: bool,
    nuisance_hash: &str,
) -> Vec<ReportRow> {
    let blank = |method: &str| ReportRow {
        model: job.model,
        alpha: job.alpha,
        beta: job.beta,
        method: method.to_owned(),
        replication: job.replication,
        seed: job.seed,
        accuracy: None,
        labeled_fraction: None,
        weight_flag_rate: None,
        crossed_rate: None,
        converged: None,
        error: None,
    };
    let all_failed = |msg: String| -> Vec<ReportRow> {
        methods
            .iter()
            .map(|m| {
                let mut row = blank(m.name());
                row.error = Some(msg.clone());
                row
            })
            .collect()
    };

    let world = cfg.world(job.model, job.alpha, job.beta);
    let sim = match simulate(&world, job.seed) {
        Ok(s) => s,
        Err(e) => return all_failed(format!("generation failed: {e}")),
    };
    let split_seed = derive_seed(job.seed, &[TAG_SPLIT]);
    let (train_idx, test_idx) = match split_train_test(cfg.n, cfg.test_fraction, split_seed) {
        Ok(v) => v,
        Err(e) => return all_failed(format!("split failed: {e}")),
    };
    let train = sim.dataset.subset(&train_idx);
    let test = sim.dataset.subset(&test_idx);
    let truth: Vec<u8> = match test.oracle_outcome.as_ref() {
        Some(y) => y.clone(),
        None => return all_failed("test set has no oracle outcomes to score against".into()),
    };
    let labeled_fraction = train.labeled_fraction();

    let folds_seed = derive_seed(job.seed, &[TAG_FOLDS]);
    let plan = match make_folds(train.n(), learner.folds, folds_seed) {
        Ok(p) => p,
        Err(e) => return all_failed(format!("fold assignment failed: {e}")),
    };
    let nuisances: Option<NuisanceSet> = if needs_nuisances {
        match crossfit_nuisances(&train, &plan, nuisance) {
            Ok(n) => Some(n),
            Err(e) => return all_failed(format!("nuisance estimation failed: {e}")),
        }
    } else {
        None
    };

    let ctx = TrainContext {
        train: &train,
        plan: &plan,
        nuisances: nuisances.as_ref(),
        learner,
        identification,
        nuisance_hash,
    };
    methods
        .iter()
        .map(|method| {
            let mut row = blank(method.name());
            row.labeled_fraction = Some(labeled_fraction);
            match method
                .fit(&ctx)
                .and_then(|(model, diag)| Ok((model.predict_class(&test)?, diag)))
                .and_then(|(pred, diag)| Ok((zero_one_accuracy(&pred, &truth)?, diag)))
            {
                Ok((acc, diag)) => {
                    row.accuracy = Some(acc);
                    row.weight_flag_rate = diag.weight_flag_rate;
                    row.crossed_rate = diag.crossed_rate;
                    row.converged = diag.converged;
                }
                Err(e) => row.error = Some(format!("{} failed: {e}", method.name())),
            }
            row
        })
        .collect()
}

// ── Report serialization and summaries ──────────────────────────────────────

/// Report file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ReportFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::config(format!(
                "unknown report format '{other}' (expected csv or json)"
            ))),
        }
    }
}

/// Writes the report. Both formats are deterministic functions of the
/// report's content: identical configurations and seeds produce
/// byte-identical files.
pub fn write_report(
    report: &ExperimentReport,
    path: impl AsRef<std::path::Path>,
    format: ReportFormat,
) -> Result<()> {
    let path = path.as_ref();
    match format {
        ReportFormat::Json => {
            let text = serde_json::to_string_pretty(report)
                .map_err(|e| Error::data(format!("cannot serialize report: {e}")))?;
            std::fs::write(path, text)
                .map_err(|e| Error::data(format!("cannot write {}: {e}", path.display())))
        }
        ReportFormat::Csv => {
            let mut writer = csv::Writer::from_path(path)
                .map_err(|e| Error::data(format!("cannot write {}: {e}", path.display())))?;
            writer
                .write_record([
                    "model",
                    "alpha",
                    "beta",
                    "method",
                    "replication",
                    "seed",
                    "accuracy",
                    "labeled_fraction",
                    "weight_flag_rate",
                    "crossed_rate",
                    "converged",
                    "error",
                    "config_hash",
                ])
                .map_err(|e| Error::data(format!("csv write failed: {e}")))?;
            let fmt_opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
            for row in &report.rows {
                let model = match row.model {
                    DecisionModel::Mixture => "mixture",
                    DecisionModel::Link => "link",
                };
                writer
                    .write_record([
                        model.to_owned(),
                        format!("{}", row.alpha),
                        format!("{}", row.beta),
                        row.method.clone(),
                        format!("{}", row.replication),
                        format!("{}", row.seed),
                        fmt_opt(row.accuracy),
                        fmt_opt(row.labeled_fraction),
                        fmt_opt(row.weight_flag_rate),
                        fmt_opt(row.crossed_rate),
                        row.converged.map(|b| b.to_string()).unwrap_or_default(),
                        row.error.clone().unwrap_or_default(),
                        report.config_hash.clone(),
                    ])
                    .map_err(|e| Error::data(format!("csv write failed: {e}")))?;
            }
            writer
                .flush()
                .map_err(|e| Error::data(format!("csv flush failed: {e}")))
        }
    }
}

/// Mean/spread summary of one grid cell × method.
#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub model: DecisionModel,
    pub alpha: f64,
    pub beta: f64,
    pub method: String,
    pub mean_accuracy: Option<f64>,
    pub sd_accuracy: Option<f64>,
    pub succeeded: usize,
    pub failed: usize,
}

/// Aggregates the report into per-cell × method means, in report order.
pub fn summarize(report: &ExperimentReport) -> Vec<SummaryRow> {
    let mut out: Vec<SummaryRow> = Vec::new();
    for row in &report.rows {
        let found = out.iter_mut().find(|s| {
            s.model == row.model
                && s.alpha == row.alpha
                && s.beta == row.beta
                && s.method == row.method
        });
        let entry = match found {
            Some(e) => e,
            None => {
                out.push(SummaryRow {
                    model: row.model,
                    alpha: row.alpha,
                    beta: row.beta,
                    method: row.method.clone(),
                    mean_accuracy: None,
                    sd_accuracy: None,
                    succeeded: 0,
                    failed: 0,
                });
                out.last_mut().expect("just pushed")
            }
        };
        match row.accuracy {
            Some(a) => {
                entry.succeeded += 1;
                // Accumulate the mean incrementally; variance comes later.
                entry.mean_accuracy = Some(entry.mean_accuracy.unwrap_or(0.0) + a);
            }
            None => entry.failed += 1,
        }
    }
    for entry in &mut out {
        if entry.succeeded > 0 {
            let mean = entry.mean_accuracy.expect("accumulated") / entry.succeeded as f64;
            entry.mean_accuracy = Some(mean);
            let var: f64 = report
                .rows
                .iter()
                .filter(|r| {
                    r.model == entry.model
                        && r.alpha == entry.alpha
                        && r.beta == entry.beta
                        && r.method == entry.method
                })
                .filter_map(|r| r.accuracy)
                .map(|a| (a - mean) * (a - mean))
                .sum::<f64>()
                / entry.succeeded as f64;
            entry.sd_accuracy = Some(var.sqrt());
        }
    }
    out
}

/// Convenience accessor: mean accuracy of one method at one grid cell, if
/// any replication of it succeeded.
pub fn mean_accuracy(
    report: &ExperimentReport,
    model: DecisionModel,
    alpha: f64,
    beta: f64,
    method: &str,
) -> Option<f64> {
    summarize(report)
        .into_iter()
        .find(|s| s.model == model && s.alpha == alpha && s.beta == beta && s.method == method)
        .and_then(|s| s.mean_accuracy)
}
