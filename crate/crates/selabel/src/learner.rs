//! Weighted surrogate-loss classification.
//!
//! The final classifier is `f(x) = (sign(h(x)) + 1) / 2` for a linear score
//! `h(x) = θ·φ(x)` over a configurable feature map, with `sign(0) = +1`
//! globally. Training minimizes a weighted empirical surrogate risk: each
//! row carries a signed weight `w_i` from the identification stage, and the
//! objective charges `|w_i| · Φ(sign(w_i) · h(x_i))` — a convex upper bound
//! on the weighted zero-one risk `|w_i| · 1{sign(h(x_i)) ≠ sign(w_i)}`.
//!
//! Three losses are registered by name (hinge, logistic, exponential), all
//! convex, so full-batch gradient descent with backtracking line search
//! finds the global minimum of the L2-regularized objective
//! deterministically.
//!
//! The cross-fitted entry point [`fit_weighted_erm`] averages per-fold
//! empirical risks with equal fold weight, using weights whose fold
//! provenance is verified: row `i`'s weight must come from the fold
//! assignment the plan dictates, i.e. from nuisances that never saw row
//! `i`'s fold. Baselines ([`fit_baseline`]) train on labeled rows only
//! (`selected`) or on oracle outcomes (`full`), both with the judge code
//! appended as a feature.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::{FoldPlan, SelectiveDataset, Standardizer};
use crate::error::{Error, Result};
use crate::identify::WeightVector;

/// Global tie-break: `sign(0) = +1`.
pub fn sign_plus(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

// ── Surrogate losses ────────────────────────────────────────────────────────

/// A convex, non-negative, decreasing margin loss `Φ(α)`.
pub trait SurrogateLoss: Send + Sync + std::fmt::Debug {
    fn value(&self, alpha: f64) -> f64;
    /// Derivative (for hinge, a subgradient: 0 at the kink).
    fn derivative(&self, alpha: f64) -> f64;
    fn name(&self) -> &'static str;
}

#[derive(Debug)]
struct Hinge;

impl SurrogateLoss for Hinge {
    fn value(&self, alpha: f64) -> f64 {
        (1.0 - alpha).max(0.0)
    }

    fn derivative(&self, alpha: f64) -> f64 {
        if alpha < 1.0 {
            -1.0
        } else {
            0.0
        }
    }

    fn name(&self) -> &'static str {
        "hinge"
    }
}

#[derive(Debug)]
struct Logistic;

impl SurrogateLoss for Logistic {
    fn value(&self, alpha: f64) -> f64 {
        // ln(1 + e^{-α}) without overflow in either tail.
        if alpha > 0.0 {
            (-alpha).exp().ln_1p()
        } else {
            -alpha + alpha.exp().ln_1p()
        }
    }

    fn derivative(&self, alpha: f64) -> f64 {
        // -expit(-α)
        -crate::synthetic::expit(-alpha)
    }

    fn name(&self) -> &'static str {
        "logistic"
    }
}

#[derive(Debug)]
struct Exponential;

impl SurrogateLoss for Exponential {
    fn value(&self, alpha: f64) -> f64 {
        (-alpha).exp()
    }

    fn derivative(&self, alpha: f64) -> f64 {
        -(-alpha).exp()
    }

    fn name(&self) -> &'static str {
        "exponential"
    }
}

static LOSSES: &[&dyn SurrogateLoss] = &[&Hinge, &Logistic, &Exponential];

/// Names of the registered surrogate losses.
pub fn losses() -> Vec<&'static str> {
    LOSSES.iter().map(|l| l.name()).collect()
}

/// Looks a loss up by name.
pub fn build_loss(name: &str) -> Result<&'static dyn SurrogateLoss> {
    LOSSES
        .iter()
        .find(|l| l.name() == name)
        .copied()
        .ok_or_else(|| {
            Error::config(format!(
                "unknown surrogate loss '{name}' (registered: {})",
                losses().join(", ")
            ))
        })
}

// ── Feature maps ────────────────────────────────────────────────────────────

/// Deterministic expansion `φ(x)` applied after standardization.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureMap {
    /// The standardized features as-is.
    Raw,
    /// Standardized features plus a leading constant-one column.
    #[default]
    RawIntercept,
    /// Intercept, linear terms, and all degree-2 monomials `x_i x_j`
    /// (`i ≤ j`).
    Poly2,
}

impl FeatureMap {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(FeatureMap::Raw),
            "raw-intercept" => Ok(FeatureMap::RawIntercept),
            "poly2" => Ok(FeatureMap::Poly2),
            other => Err(Error::config(format!(
                "unknown feature map '{other}' (expected raw, raw-intercept, or poly2)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FeatureMap::Raw => "raw",
            FeatureMap::RawIntercept => "raw-intercept",
            FeatureMap::Poly2 => "poly2",
        }
    }

    /// Output dimension for `d` input features.
    pub fn output_dim(&self, d: usize) -> usize {
        match self {
            FeatureMap::Raw => d,
            FeatureMap::RawIntercept => d + 1,
            FeatureMap::Poly2 => 1 + d + d * (d + 1) / 2,
        }
    }

    /// Applies the map row-wise.
    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        let (n, d) = x.dim();
        let out_d = self.output_dim(d);
        let mut out = Array2::zeros((n, out_d));
        for i in 0..n {
            match self {
                FeatureMap::Raw => {
                    for j in 0..d {
                        out[[i, j]] = x[[i, j]];
                    }
                }
                FeatureMap::RawIntercept => {
                    out[[i, 0]] = 1.0;
                    for j in 0..d {
                        out[[i, j + 1]] = x[[i, j]];
                    }
                }
                FeatureMap::Poly2 => {
                    out[[i, 0]] = 1.0;
                    for j in 0..d {
                        out[[i, j + 1]] = x[[i, j]];
                    }
                    let mut col = 1 + d;
                    for a in 0..d {
                        for b in a..d {
                            out[[i, col]] = x[[i, a]] * x[[i, b]];
                            col += 1;
                        }
                    }
                }
            }
        }
        out
    }
}

// ── Optimizer core ──────────────────────────────────────────────────────────

/// Settings of the full-batch gradient-descent solver.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    /// Stop when the gradient's Euclidean norm falls below this.
    pub tol: f64,
    pub max_iters: usize,
    /// Optional cap `B` on `max_i |h(x_i)|` over the training rows,
    /// enforced by radially scaling `θ` (preserves the sign pattern).
    pub projection_bound: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            tol: 1e-8,
            max_iters: 10_000,
            projection_bound: None,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::config(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::config("max_iters must be positive"));
        }
        if let Some(b) = self.projection_bound {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::config(format!(
                    "projection_bound must be positive, got {b}"
                )));
            }
        }
        Ok(())
    }
}

/// Outcome of one solver run.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    pub objective: f64,
    /// Objective value after each accepted step (monotone non-increasing).
    pub trace: Vec<f64>,
}

const ARMIJO_C1: f64 = 1e-4;

/// Minimizes
/// `F(θ) = Σ_i coeff_i · Φ(sign_i · θ·φ_i) + (λ/2)‖θ‖²`
/// over `θ`, starting from zero, by gradient descent with Armijo
/// backtracking (halving). `coeff` must be non-negative; `signs` must be
/// `±1`. Deterministic given inputs.
pub fn erm_minimize(
    phi: &Array2<f64>,
    signs: &[f64],
    coeff: &[f64],
    loss: &dyn SurrogateLoss,
    reg_lambda: f64,
    opt: &OptimizerConfig,
) -> Result<(Vec<f64>, FitReport)> {
    opt.validate()?;
    let (n, d) = phi.dim();
    if signs.len() != n || coeff.len() != n {
        return Err(Error::contract(format!(
            "signs ({}) and coefficients ({}) must cover all {n} rows",
            signs.len(),
            coeff.len()
        )));
    }
    if coeff.iter().any(|&c| c < 0.0 || !c.is_finite()) {
        return Err(Error::contract("coefficients must be non-negative and finite"));
    }
    if signs.iter().any(|&s| s != 1.0 && s != -1.0) {
        return Err(Error::contract("signs must be exactly +1 or -1"));
    }
    if !(reg_lambda >= 0.0 && reg_lambda.is_finite()) {
        return Err(Error::config(format!(
            "regularization strength must be non-negative, got {reg_lambda}"
        )));
    }

    let scores = |theta: &[f64]| -> Vec<f64> {
        let mut h = vec![0.0; n];
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..d {
                s += theta[j] * phi[[i, j]];
            }
            h[i] = s;
        }
        h
    };
    let objective = |theta: &[f64], h: &[f64]| -> f64 {
        let mut f = 0.0;
        for i in 0..n {
            if coeff[i] > 0.0 {
                f += coeff[i] * loss.value(signs[i] * h[i]);
            }
        }
        f + 0.5 * reg_lambda * theta.iter().map(|t| t * t).sum::<f64>()
    };
    let project = |theta: &mut Vec<f64>, h: &mut Vec<f64>| {
        if let Some(bound) = opt.projection_bound {
            let max_abs = h.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
            if max_abs > bound {
                let scale = bound / max_abs;
                for t in theta.iter_mut() {
                    *t *= scale;
                }
                for v in h.iter_mut() {
                    *v *= scale;
                }
            }
        }
    };

    let mut theta = vec![0.0f64; d];
    let mut h = scores(&theta);
    let mut f = objective(&theta, &h);
    if !f.is_finite() {
        return Err(Error::numeric(format!(
            "objective is not finite at the starting point (value {f})"
        )));
    }
    let mut trace = vec![f];
    let mut converged = false;
    let mut grad_norm = f64::NAN;
    let mut iterations = 0;
    // Warm-started step size: doubling after each accepted step lets the
    // search adapt to flat, weakly regularized landscapes where the right
    // step is orders of magnitude above 1.
    let mut step_init = 1.0f64;

    for iter in 0..opt.max_iters {
        iterations = iter + 1;
        // Gradient: Σ coeff_i · Φ'(sign_i h_i) · sign_i · φ_i + λθ.
        let mut grad = vec![0.0f64; d];
        for i in 0..n {
            if coeff[i] > 0.0 {
                let g = coeff[i] * loss.derivative(signs[i] * h[i]) * signs[i];
                for j in 0..d {
                    grad[j] += g * phi[[i, j]];
                }
            }
        }
        for j in 0..d {
            grad[j] += reg_lambda * theta[j];
        }
        grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if !grad_norm.is_finite() {
            return Err(Error::numeric(format!(
                "gradient became non-finite at iteration {iter}; objective trace tail: {:?}",
                &trace[trace.len().saturating_sub(5)..]
            )));
        }
        if grad_norm < opt.tol {
            converged = true;
            iterations = iter;
            break;
        }

        // Backtracking line search on the Armijo condition.
        let mut step = step_init;
        let mut accepted = false;
        for _ in 0..120 {
            let mut cand: Vec<f64> = theta
                .iter()
                .zip(&grad)
                .map(|(t, g)| t - step * g)
                .collect();
            let mut cand_h = scores(&cand);
            project(&mut cand, &mut cand_h);
            let cand_f = objective(&cand, &cand_h);
            if cand_f.is_finite() && cand_f <= f - ARMIJO_C1 * step * grad_norm * grad_norm {
                theta = cand;
                h = cand_h;
                f = cand_f;
                trace.push(f);
                accepted = true;
                step_init = (step * 2.0).min(1e15);
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // No admissible step: a subgradient kink or the floating-point
            // floor. The objective never increased, so stop here.
            break;
        }
    }

    Ok((
        theta,
        FitReport {
            converged,
            iterations,
            grad_norm,
            objective: f,
            trace,
        },
    ))
}

// ── Fitted models ───────────────────────────────────────────────────────────

/// Summary facts about a fit, persisted with the model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelMetadata {
    /// Which training route produced the model: point, partial, selected,
    /// or full.
    pub mode: String,
    pub reg_lambda: f64,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    pub objective: f64,
    /// Mean `|w_i|` of the training weights — near zero flags a degenerate
    /// instance where identification carries almost no signal. Baselines
    /// report 1 (unit weights).
    pub weight_mass: f64,
    /// Content hash of the nuisance regressor configuration the weights
    /// came from, when applicable.
    pub nuisance_hash: Option<String>,
}

/// A fitted linear score model: `h(x) = θ·φ(standardize(x))`, predicting
/// class `(sign(h) + 1) / 2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreModel {
    pub theta: Vec<f64>,
    pub feature_map: FeatureMap,
    pub loss: String,
    /// Standardization fitted on the training design (after any judge
    /// column is appended).
    pub standardizer: Standardizer,
    /// Whether the judge code is appended to the features (baselines do
    /// this; weighted fits never do).
    pub includes_judge: bool,
    pub metadata: ModelMetadata,
}

/// Builds the raw design matrix a model expects: the dataset's features,
/// plus the judge code as a final column when requested.
fn assemble_design(ds: &SelectiveDataset, includes_judge: bool) -> Array2<f64> {
    let (n, d) = (ds.n(), ds.dim());
    let extra = usize::from(includes_judge);
    let mut x = Array2::zeros((n, d + extra));
    for i in 0..n {
        for j in 0..d {
            x[[i, j]] = ds.features[[i, j]];
        }
        if includes_judge {
            x[[i, d]] = ds.judge_value(i);
        }
    }
    x
}

impl ScoreModel {
    /// Scores `h(x)` for every row.
    pub fn scores(&self, ds: &SelectiveDataset) -> Result<Vec<f64>> {
        let design = assemble_design(ds, self.includes_judge);
        let std = self.standardizer.transform(&design)?;
        let phi = self.feature_map.apply(&std);
        let (n, d) = phi.dim();
        if d != self.theta.len() {
            return Err(Error::contract(format!(
                "model has {} coefficients but the mapped design has {d} columns",
                self.theta.len()
            )));
        }
        let mut h = vec![0.0; n];
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..d {
                s += self.theta[j] * phi[[i, j]];
            }
            h[i] = s;
        }
        Ok(h)
    }

    /// Class predictions `f(x) = (sign(h(x)) + 1) / 2` with `sign(0) = +1`.
    pub fn predict_class(&self, ds: &SelectiveDataset) -> Result<Vec<u8>> {
        Ok(self
            .scores(ds)?
            .into_iter()
            .map(|h| u8::from(sign_plus(h) > 0.0))
            .collect())
    }

    /// Serializes the model as pretty JSON.
    pub fn save_json(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::data(format!("cannot serialize model: {e}")))?;
        std::fs::write(path.as_ref(), text).map_err(|e| {
            Error::data(format!("cannot write {}: {e}", path.as_ref().display()))
        })
    }

    pub fn load_json(path: impl AsRef<std::path::Path>) -> Result<ScoreModel> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| {
            Error::data(format!("cannot read {}: {e}", path.as_ref().display()))
        })?;
        serde_json::from_str(&text).map_err(|e| Error::data(format!("bad model JSON: {e}")))
    }
}

/// Empirical weighted surrogate risk: `mean_i |w_i| · Φ(sign(w_i) · h_i)`
/// with `sign(0) = +1`. Rows with zero weight contribute zero but still
/// count in the mean's denominator.
pub fn weighted_surrogate_risk(
    scores: &[f64],
    weights: &[f64],
    loss: &dyn SurrogateLoss,
) -> Result<f64> {
    if scores.len() != weights.len() {
        return Err(Error::contract(format!(
            "scores cover {} rows, weights cover {}",
            scores.len(),
            weights.len()
        )));
    }
    if scores.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = scores
        .iter()
        .zip(weights)
        .map(|(&h, &w)| {
            if w == 0.0 {
                0.0
            } else {
                w.abs() * loss.value(sign_plus(w) * h)
            }
        })
        .sum();
    Ok(total / scores.len() as f64)
}

// ── Cross-fitted weighted ERM and baselines ─────────────────────────────────

/// Fits the cross-fitted weighted surrogate objective: the average over
/// folds of each fold's mean weighted loss,
/// `(1/K) Σ_k (1/|I_k|) Σ_{i ∈ I_k} |ŵ_k(x_i)| Φ(sign(ŵ_k(x_i)) h(x_i))`,
/// plus `(λ/2)‖θ‖²`.
///
/// `weights.fold` must match `plan.assignment` exactly — this verifies the
/// provenance contract that row `i`'s weight was estimated out-of-fold.
#[allow(clippy::too_many_arguments)]
pub fn fit_weighted_erm(
    ds: &SelectiveDataset,
    plan: &FoldPlan,
    weights: &WeightVector,
    loss_name: &str,
    feature_map: FeatureMap,
    reg_lambda: f64,
    opt: &OptimizerConfig,
    nuisance_hash: Option<String>,
) -> Result<(ScoreModel, FitReport)> {
    let n = ds.n();
    if weights.n() != n || plan.assignment.len() != n {
        return Err(Error::contract(format!(
            "dataset has {n} rows; weights cover {}, fold plan covers {}",
            weights.n(),
            plan.assignment.len()
        )));
    }
    if weights.fold != plan.assignment {
        return Err(Error::contract(
            "weight fold provenance does not match the fold plan; weights must be \
             computed from the same cross-fitting plan they are trained with",
        ));
    }
    let loss = build_loss(loss_name)?;
    let sizes = plan.sizes();
    let k = plan.k as f64;
    let coeff: Vec<f64> = (0..n)
        .map(|i| weights.w[i].abs() / (k * sizes[plan.assignment[i]] as f64))
        .collect();
    let signs: Vec<f64> = weights.w.iter().map(|&w| sign_plus(w)).collect();

    let design = assemble_design(ds, false);
    let standardizer = Standardizer::fit(&design);
    let std = standardizer.transform(&design)?;
    let phi = feature_map.apply(&std);
    let (theta, report) = erm_minimize(&phi, &signs, &coeff, loss, reg_lambda, opt)?;
    let weight_mass = weights.mean_abs();
    let model = ScoreModel {
        theta,
        feature_map,
        loss: loss_name.to_owned(),
        standardizer,
        includes_judge: false,
        metadata: ModelMetadata {
            mode: weights.mode.to_string(),
            reg_lambda,
            converged: report.converged,
            iterations: report.iterations,
            grad_norm: report.grad_norm,
            objective: report.objective,
            weight_mass,
            nuisance_hash,
        },
    };
    Ok((model, report))
}

/// Which baseline to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    /// Train on the labeled rows only, with their observed outcomes.
    SelectedSample,
    /// Train on every row with the oracle outcome (synthetic data only).
    FullSample,
}

/// Fits an unweighted surrogate classifier on the designated rows. The
/// judge code is appended to the features for both baselines.
pub fn fit_baseline(
    ds: &SelectiveDataset,
    which: Baseline,
    loss_name: &str,
    feature_map: FeatureMap,
    reg_lambda: f64,
    opt: &OptimizerConfig,
) -> Result<(ScoreModel, FitReport)> {
    let loss = build_loss(loss_name)?;
    let (rows, labels): (Vec<usize>, Vec<u8>) = match which {
        Baseline::SelectedSample => {
            let rows: Vec<usize> = (0..ds.n()).filter(|&i| ds.decision[i] == 1).collect();
            if rows.is_empty() {
                return Err(Error::data(
                    "selected-sample baseline needs at least one labeled row",
                ));
            }
            let labels = rows
                .iter()
                .map(|&i| ds.outcome[i].expect("labeled rows carry outcomes"))
                .collect();
            (rows, labels)
        }
        Baseline::FullSample => {
            let oracle = ds.oracle_outcome.as_ref().ok_or_else(|| {
                Error::data("full-sample baseline requires oracle outcomes")
            })?;
            ((0..ds.n()).collect(), oracle.clone())
        }
    };

    let sub = ds.subset(&rows);
    let design = assemble_design(&sub, true);
    let standardizer = Standardizer::fit(&design);
    let std = standardizer.transform(&design)?;
    let phi = feature_map.apply(&std);
    let n_fit = rows.len() as f64;
    let coeff = vec![1.0 / n_fit; rows.len()];
    let signs: Vec<f64> = labels.iter().map(|&y| if y == 1 { 1.0 } else { -1.0 }).collect();
    let (theta, report) = erm_minimize(&phi, &signs, &coeff, loss, reg_lambda, opt)?;
    let mode = match which {
        Baseline::SelectedSample => "selected",
        Baseline::FullSample => "full",
    };
    let model = ScoreModel {
        theta,
        feature_map,
        loss: loss_name.to_owned(),
        standardizer,
        includes_judge: true,
        metadata: ModelMetadata {
            mode: mode.to_owned(),
            reg_lambda,
            converged: report.converged,
            iterations: report.iterations,
            grad_norm: report.grad_norm,
            objective: report.objective,
            weight_mass: 1.0,
            nuisance_hash: None,
        },
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::make_folds;
    use crate::identify::WeightMode;
    use ndarray::array;
    use rand::Rng;

    #[test]
    fn loss_registry_and_reference_values() {
        assert_eq!(losses(), vec!["hinge", "logistic", "exponential"]);
        let hinge = build_loss("hinge").unwrap();
        let logistic = build_loss("logistic").unwrap();
        let exponential = build_loss("exponential").unwrap();
        assert_eq!(hinge.value(1.0), 0.0);
        assert_eq!(hinge.value(-1.0), 2.0);
        assert_eq!(exponential.value(0.0), 1.0);
        assert!((logistic.value(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(build_loss("absolute").is_err());
    }

    #[test]
    fn loss_values_stay_finite_and_nonnegative_in_the_tails() {
        for name in losses() {
            let loss = build_loss(name).unwrap();
            for alpha in [-30.0, -1.0, 0.0, 1.0, 30.0, 700.0] {
                let v = loss.value(alpha);
                assert!(v >= 0.0 && v.is_finite(), "{name}({alpha}) = {v}");
            }
        }
        // The logistic tail must not underflow to exactly the linear term.
        let logistic = build_loss("logistic").unwrap();
        assert!((logistic.value(-700.0) - 700.0).abs() < 1e-9);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let eps = 1e-6;
        for name in losses() {
            let loss = build_loss(name).unwrap();
            for alpha in [-2.0f64, -0.5, 0.0, 0.7, 2.5] {
                if name == "hinge" && (alpha - 1.0).abs() < 1e-3 {
                    continue; // kink
                }
                let numeric = (loss.value(alpha + eps) - loss.value(alpha - eps)) / (2.0 * eps);
                let analytic = loss.derivative(alpha);
                assert!(
                    (numeric - analytic).abs() < 1e-6,
                    "{name}'({alpha}): {analytic} vs {numeric}"
                );
            }
        }
    }

    #[test]
    fn surrogate_risk_direct_evaluations() {
        let hinge = build_loss("hinge").unwrap();
        // Zero weights annihilate every score.
        assert_eq!(
            weighted_surrogate_risk(&[3.0, -8.0], &[0.0, 0.0], hinge).unwrap(),
            0.0
        );
        // Satisfied margins cost nothing.
        assert_eq!(
            weighted_surrogate_risk(&[1000.0, 1000.0], &[0.3, 0.3], hinge).unwrap(),
            0.0
        );
        // Single row, w = −0.2, h = +1: 0.2 · max(1 − (−1), 0) = 0.4.
        let r = weighted_surrogate_risk(&[1.0], &[-0.2], hinge).unwrap();
        assert!((r - 0.4).abs() < 1e-15);
        assert!(weighted_surrogate_risk(&[1.0], &[0.1, 0.2], hinge).is_err());
    }

    #[test]
    fn empirical_risk_is_convex_in_theta() {
        let mut rng = crate::seed::rng_from(31, &[7]);
        let n = 40;
        let phi = Array2::from_shape_fn((n, 3), |_| rng.random::<f64>() * 2.0 - 1.0);
        let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        let signs: Vec<f64> = w.iter().map(|&v| sign_plus(v)).collect();
        let coeff: Vec<f64> = w.iter().map(|v| v.abs() / n as f64).collect();
        for name in losses() {
            let loss = build_loss(name).unwrap();
            let risk = |theta: &[f64]| -> f64 {
                (0..n)
                    .map(|i| {
                        let h: f64 = (0..3).map(|j| theta[j] * phi[[i, j]]).sum();
                        coeff[i] * loss.value(signs[i] * h)
                    })
                    .sum()
            };
            for _ in 0..30 {
                let t1: Vec<f64> = (0..3).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
                let t2: Vec<f64> = (0..3).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
                let t: f64 = rng.random();
                let mix: Vec<f64> = t1
                    .iter()
                    .zip(&t2)
                    .map(|(a, b)| t * a + (1.0 - t) * b)
                    .collect();
                assert!(
                    risk(&mix) <= t * risk(&t1) + (1.0 - t) * risk(&t2) + 1e-9,
                    "{name} violates convexity"
                );
            }
        }
    }

    #[test]
    fn minimizer_separates_a_one_class_problem() {
        // All weights positive: every score should end up positive.
        let phi = array![[1.0, 0.2], [1.0, -0.4], [1.0, 1.5], [1.0, 0.9]];
        let signs = vec![1.0; 4];
        let coeff = vec![0.125; 4];
        let loss = build_loss("logistic").unwrap();
        let (theta, report) =
            erm_minimize(&phi, &signs, &coeff, loss, 1e-4, &OptimizerConfig::default()).unwrap();
        assert!(report.converged, "grad norm {}", report.grad_norm);
        for i in 0..4 {
            let h = theta[0] * phi[[i, 0]] + theta[1] * phi[[i, 1]];
            assert!(h > 0.0, "row {i} score {h}");
        }
    }

    #[test]
    fn objective_trace_is_monotone_non_increasing() {
        let mut rng = crate::seed::rng_from(5, &[99]);
        let n = 60;
        let phi = Array2::from_shape_fn((n, 4), |_| rng.random::<f64>() * 2.0 - 1.0);
        let signs: Vec<f64> = (0..n).map(|_| if rng.random::<f64>() < 0.5 { 1.0 } else { -1.0 }).collect();
        let coeff: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 0.5 / n as f64).collect();
        for name in losses() {
            let loss = build_loss(name).unwrap();
            let (_, report) =
                erm_minimize(&phi, &signs, &coeff, loss, 1e-3, &OptimizerConfig::default())
                    .unwrap();
            for pair in report.trace.windows(2) {
                assert!(pair[1] <= pair[0] + 1e-15, "{name}: {} -> {}", pair[0], pair[1]);
            }
        }
    }

    #[test]
    fn projection_bound_caps_training_scores() {
        let phi = array![[1.0], [2.0], [-3.0]];
        let signs = vec![1.0, 1.0, -1.0];
        let coeff = vec![1.0 / 3.0; 3];
        let loss = build_loss("exponential").unwrap();
        let opt = OptimizerConfig {
            projection_bound: Some(0.7),
            ..OptimizerConfig::default()
        };
        let (theta, _) = erm_minimize(&phi, &signs, &coeff, loss, 0.0, &opt).unwrap();
        for row in [1.0, 2.0, -3.0] {
            assert!((theta[0] * row).abs() <= 0.7 + 1e-12);
        }
    }

    #[test]
    fn erm_rejects_malformed_inputs() {
        let phi = array![[1.0], [1.0]];
        let loss = build_loss("hinge").unwrap();
        let opt = OptimizerConfig::default();
        assert_eq!(
            erm_minimize(&phi, &[1.0], &[0.5, 0.5], loss, 0.1, &opt)
                .unwrap_err()
                .category(),
            "contract"
        );
        assert_eq!(
            erm_minimize(&phi, &[1.0, 0.5], &[0.5, 0.5], loss, 0.1, &opt)
                .unwrap_err()
                .category(),
            "contract"
        );
        assert_eq!(
            erm_minimize(&phi, &[1.0, -1.0], &[0.5, -0.5], loss, 0.1, &opt)
                .unwrap_err()
                .category(),
            "contract"
        );
        assert_eq!(
            erm_minimize(&phi, &[1.0, -1.0], &[0.5, 0.5], loss, -1.0, &opt)
                .unwrap_err()
                .category(),
            "config"
        );
    }

    #[test]
    fn feature_maps_shape_and_content() {
        let x = array![[2.0, 3.0]];
        assert_eq!(FeatureMap::Raw.apply(&x), array![[2.0, 3.0]]);
        assert_eq!(FeatureMap::RawIntercept.apply(&x), array![[1.0, 2.0, 3.0]]);
        assert_eq!(
            FeatureMap::Poly2.apply(&x),
            array![[1.0, 2.0, 3.0, 4.0, 6.0, 9.0]]
        );
        assert_eq!(FeatureMap::Poly2.output_dim(2), 6);
        assert_eq!(FeatureMap::parse("raw-intercept").unwrap(), FeatureMap::RawIntercept);
        assert!(FeatureMap::parse("cubic").is_err());
    }

    /// Builds a simple dataset + fold plan + weight field for fit tests:
    /// scalar feature, weight +0.4 where x > 0 and −0.4 where x < 0.
    fn two_cluster(n: usize, seed: u64) -> (SelectiveDataset, FoldPlan, WeightVector) {
        let mut rng = crate::seed::rng_from(seed, &[1]);
        let mut x = Array2::zeros((n, 1));
        for i in 0..n {
            let v = rng.random::<f64>() * 2.0 - 1.0;
            x[[i, 0]] = if v.abs() < 1e-6 { 0.5 } else { v };
        }
        let ds = SelectiveDataset::new(
            x.clone(),
            vec!["x".into()],
            (0..n).map(|i| (i % 2) as u32 + 1).collect(),
            vec![1; n],
            vec![Some(0); n],
            None,
            Some(2),
        )
        .unwrap();
        let plan = make_folds(n, 5, seed).unwrap();
        let w: Vec<f64> = (0..n).map(|i| if x[[i, 0]] > 0.0 { 0.4 } else { -0.4 }).collect();
        let weights = WeightVector {
            w,
            mode: WeightMode::Point,
            fold: plan.assignment.clone(),
            flagged: vec![false; n],
        };
        (ds, plan, weights)
    }

    #[test]
    fn weighted_fit_learns_the_sign_boundary() {
        let (ds, plan, weights) = two_cluster(600, 8);
        let (model, report) = fit_weighted_erm(
            &ds,
            &plan,
            &weights,
            "logistic",
            FeatureMap::RawIntercept,
            1e-4,
            &OptimizerConfig::default(),
            Some("abc123".into()),
        )
        .unwrap();
        assert!(report.converged);
        assert_eq!(model.metadata.mode, "point");
        assert!((model.metadata.weight_mass - 0.4).abs() < 1e-12);
        assert_eq!(model.metadata.nuisance_hash.as_deref(), Some("abc123"));

        // Evaluate on a grid dataset away from the boundary.
        let grid: Vec<f64> = (-20..=20)
            .map(|i| i as f64 / 20.0)
            .filter(|v| v.abs() > 0.05)
            .collect();
        let gn = grid.len();
        let mut gx = Array2::zeros((gn, 1));
        for (i, &v) in grid.iter().enumerate() {
            gx[[i, 0]] = v;
        }
        let gds = SelectiveDataset::new(
            gx,
            vec!["x".into()],
            vec![1; gn],
            vec![0; gn],
            vec![None; gn],
            None,
            Some(1),
        )
        .unwrap();
        let pred = model.predict_class(&gds).unwrap();
        let correct = grid
            .iter()
            .zip(&pred)
            .filter(|&(&v, &p)| (v > 0.0) == (p == 1))
            .count();
        assert!(correct as f64 / gn as f64 >= 0.99, "{correct}/{gn}");
    }

    #[test]
    fn weight_provenance_violations_are_contract_errors() {
        let (ds, plan, mut weights) = two_cluster(100, 9);
        weights.fold[3] = (weights.fold[3] + 1) % 5;
        let err = fit_weighted_erm(
            &ds,
            &plan,
            &weights,
            "logistic",
            FeatureMap::RawIntercept,
            1e-4,
            &OptimizerConfig::default(),
            None,
        )
        .unwrap_err();
        assert_eq!(err.category(), "contract");
        assert!(err.to_string().contains("provenance"), "{err}");
    }

    #[test]
    fn scaling_all_weights_preserves_predictions() {
        let (ds, plan, weights) = two_cluster(300, 10);
        let mut scaled = weights.clone();
        for w in scaled.w.iter_mut() {
            *w *= 0.2; // stay within [-1/2, 1/2]
        }
        let fit = |w: &WeightVector| {
            fit_weighted_erm(
                &ds,
                &plan,
                w,
                "hinge",
                FeatureMap::RawIntercept,
                1e-5,
                &OptimizerConfig::default(),
                None,
            )
            .unwrap()
            .0
        };
        let a = fit(&weights).predict_class(&ds).unwrap();
        let b = fit(&scaled).predict_class(&ds).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn permuting_rows_within_a_fold_barely_moves_the_fit() {
        let (ds, plan, weights) = two_cluster(120, 11);
        // Swap two rows that share a fold.
        let f0 = plan.fold_indices(0);
        let (i, j) = (f0[0], f0[1]);
        let mut order: Vec<usize> = (0..ds.n()).collect();
        order.swap(i, j);
        let ds2 = ds.subset(&order);
        let plan2 = FoldPlan {
            assignment: order.iter().map(|&r| plan.assignment[r]).collect(),
            k: plan.k,
        };
        let weights2 = WeightVector {
            w: order.iter().map(|&r| weights.w[r]).collect(),
            mode: weights.mode,
            fold: plan2.assignment.clone(),
            flagged: order.iter().map(|&r| weights.flagged[r]).collect(),
        };
        let opt = OptimizerConfig::default();
        let (m1, _) = fit_weighted_erm(
            &ds, &plan, &weights, "logistic", FeatureMap::RawIntercept, 1e-4, &opt, None,
        )
        .unwrap();
        let (m2, _) = fit_weighted_erm(
            &ds2, &plan2, &weights2, "logistic", FeatureMap::RawIntercept, 1e-4, &opt, None,
        )
        .unwrap();
        for (a, b) in m1.theta.iter().zip(&m2.theta) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn predictions_are_sign_invariant_and_tie_breaks_positive() {
        let (ds, plan, weights) = two_cluster(200, 12);
        let (mut model, _) = fit_weighted_erm(
            &ds,
            &plan,
            &weights,
            "logistic",
            FeatureMap::RawIntercept,
            1e-4,
            &OptimizerConfig::default(),
            None,
        )
        .unwrap();
        let before = model.predict_class(&ds).unwrap();
        for t in model.theta.iter_mut() {
            *t *= 7.0;
        }
        assert_eq!(model.predict_class(&ds).unwrap(), before);
        // Zero scores predict class 1.
        model.theta = vec![0.0; model.theta.len()];
        assert!(model.predict_class(&ds).unwrap().iter().all(|&p| p == 1));
    }

    #[test]
    fn baseline_on_fully_labeled_data_matches_full_sample_fit() {
        let n = 200;
        let mut rng = crate::seed::rng_from(13, &[2]);
        let x = Array2::from_shape_fn((n, 2), |_| rng.random::<f64>() * 2.0 - 1.0);
        let y: Vec<u8> = (0..n).map(|i| u8::from(x[[i, 0]] > 0.0)).collect();
        let ds = SelectiveDataset::new(
            x,
            vec!["a".into(), "b".into()],
            (0..n).map(|i| (i % 3) as u32 + 1).collect(),
            vec![1; n],
            y.iter().map(|&v| Some(v)).collect(),
            Some(y.clone()),
            Some(3),
        )
        .unwrap();
        let opt = OptimizerConfig::default();
        let (sel, _) = fit_baseline(&ds, Baseline::SelectedSample, "logistic", FeatureMap::RawIntercept, 1e-4, &opt).unwrap();
        let (full, _) = fit_baseline(&ds, Baseline::FullSample, "logistic", FeatureMap::RawIntercept, 1e-4, &opt).unwrap();
        assert_eq!(sel.theta, full.theta);
        assert!(sel.includes_judge && full.includes_judge);
        assert_eq!(sel.metadata.mode, "selected");
        assert_eq!(full.metadata.mode, "full");
    }

    #[test]
    fn baseline_error_cases() {
        let n = 10;
        let ds = SelectiveDataset::new(
            Array2::zeros((n, 1)),
            vec!["x".into()],
            vec![1; n],
            vec![0; n],
            vec![None; n],
            None,
            Some(1),
        )
        .unwrap();
        let opt = OptimizerConfig::default();
        assert_eq!(
            fit_baseline(&ds, Baseline::SelectedSample, "logistic", FeatureMap::Raw, 1e-4, &opt)
                .unwrap_err()
                .category(),
            "data"
        );
        assert_eq!(
            fit_baseline(&ds, Baseline::FullSample, "logistic", FeatureMap::Raw, 1e-4, &opt)
                .unwrap_err()
                .category(),
            "data"
        );
    }

    #[test]
    fn score_model_json_round_trip() {
        let (ds, plan, weights) = two_cluster(150, 14);
        let (model, _) = fit_weighted_erm(
            &ds,
            &plan,
            &weights,
            "exponential",
            FeatureMap::Poly2,
            1e-3,
            &OptimizerConfig::default(),
            Some("deadbeef".into()),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save_json(&path).unwrap();
        let loaded = ScoreModel::load_json(&path).unwrap();
        assert_eq!(loaded.theta, model.theta);
        assert_eq!(loaded.feature_map, model.feature_map);
        assert_eq!(loaded.predict_class(&ds).unwrap(), model.predict_class(&ds).unwrap());
        assert_eq!(loaded.metadata.nuisance_hash.as_deref(), Some("deadbeef"));
    }
}
