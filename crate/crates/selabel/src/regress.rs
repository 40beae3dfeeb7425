//! Nuisance regressors behind a common strategy trait.
//!
//! Conditional-expectation estimates drive both identification strategies,
//! and different data shapes want different estimators. Every estimator
//! implements [`Regressor`] and is registered by name; [`build`] selects one
//! at runtime from a [`RegressorConfig`], so the rest of the pipeline never
//! names a concrete type. Registered kinds:
//!
//! * `ridge-linear` — linear least squares with an L2 penalty on all
//!   coefficients except the intercept, solved in closed form.
//! * `logistic`     — L2-regularized logistic regression fitted by damped
//!   Newton iterations; requires 0/1 targets.
//! * `gbm-stumps`   — least-squares gradient boosting over depth-limited
//!   regression trees with histogram split search (the default).
//!
//! All regressors are deterministic given their inputs. Predictions are
//! always finite; when the training targets are all 0/1, predictions are
//! clipped into `[1e-6, 1 - 1e-6]` so that downstream ratio and bound
//! formulas never see an exact 0 or 1 probability.

// The dense triangular kernels below (Gram assembly, Cholesky, Newton
// Hessians) access several arrays at related indices; explicit index loops
// are the clearest rendering of those recurrences.
#![allow(clippy::needless_range_loop)]

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower clip for probability predictions (binary training targets).
pub const PROB_CLIP: f64 = 1e-6;

// ── Strategy trait and registry ─────────────────────────────────────────────

/// A conditional-expectation estimator `x ↦ Ê[y|x]`.
pub trait Regressor: Send + std::fmt::Debug {
    /// Fits the regressor; `y.len()` must equal `x.nrows()`.
    fn fit(&mut self, x: &Array2<f64>, y: &[f64]) -> Result<()>;
    /// Predicts at the rows of `x`. Must be called after a successful `fit`.
    fn predict(&self, x: &Array2<f64>) -> Result<Vec<f64>>;
    /// Registered strategy name.
    fn kind(&self) -> &'static str;
}

/// Hyperparameters for every registered regressor kind, selected by `kind`.
///
/// Keeping one flat struct lets a single config section describe the
/// nuisance estimator; fields irrelevant to the chosen kind are ignored.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RegressorConfig {
    /// Registered kind name; see [`kinds`].
    pub kind: String,
    /// L2 penalty for `ridge-linear` (0 is allowed — plain least squares).
    pub ridge_lambda: f64,
    /// L2 penalty for `logistic`.
    pub logistic_l2: f64,
    /// Newton iteration cap for `logistic`.
    pub logistic_iters: usize,
    /// Boosting rounds for `gbm-stumps`.
    pub rounds: usize,
    /// Shrinkage per round for `gbm-stumps`.
    pub learning_rate: f64,
    /// Tree depth for `gbm-stumps` (1 = classic stumps).
    pub max_depth: usize,
    /// Minimum rows per leaf for `gbm-stumps`.
    pub min_leaf: usize,
    /// Histogram bins per feature for `gbm-stumps` split search.
    pub bins: usize,
}

impl Default for RegressorConfig {
    fn default() -> Self {
        RegressorConfig {
            kind: "gbm-stumps".into(),
            ridge_lambda: 1e-3,
            logistic_l2: 1e-6,
            logistic_iters: 100,
            rounds: 200,
            learning_rate: 0.1,
            max_depth: 2,
            min_leaf: 10,
            bins: 64,
        }
    }
}

impl RegressorConfig {
    /// Range-checks every field used by the configured kind.
    pub fn validate(&self) -> Result<()> {
        if !kinds().contains(&self.kind.as_str()) {
            return Err(Error::config(format!(
                "unknown regressor kind `{}`; registered kinds: {}",
                self.kind,
                kinds().join(", ")
            )));
        }
        if !(self.ridge_lambda >= 0.0 && self.ridge_lambda.is_finite()) {
            return Err(Error::config("ridge_lambda must be finite and >= 0"));
        }
        if !(self.logistic_l2 >= 0.0 && self.logistic_l2.is_finite()) {
            return Err(Error::config("logistic_l2 must be finite and >= 0"));
        }
        if self.logistic_iters == 0 {
            return Err(Error::config("logistic_iters must be >= 1"));
        }
        if self.rounds == 0 {
            return Err(Error::config("rounds must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::config("learning_rate must lie in (0, 1]"));
        }
        if self.max_depth == 0 || self.max_depth > 8 {
            return Err(Error::config("max_depth must lie in 1..=8"));
        }
        if self.min_leaf == 0 {
            return Err(Error::config("min_leaf must be >= 1"));
        }
        if self.bins < 2 {
            return Err(Error::config("bins must be >= 2"));
        }
        Ok(())
    }

    /// Stable content hash of the configuration, recorded in model metadata
    /// so a persisted model names the nuisance settings it was trained with.
    pub fn content_hash(&self) -> String {
        crate::config::hash_json(self)
    }
}

/// Names of all registered regressor kinds, in registration order.
pub fn kinds() -> Vec<&'static str> {
    REGISTRY.iter().map(|(name, _)| *name).collect()
}

type Ctor = fn(&RegressorConfig) -> Box<dyn Regressor>;

/// The strategy registry: kind name → constructor.
static REGISTRY: &[(&str, Ctor)] = &[
    ("gbm-stumps", |c| Box::new(GbmStumps::new(c))),
    ("ridge-linear", |c| Box::new(RidgeLinear::new(c))),
    ("logistic", |c| Box::new(LogisticNewton::new(c))),
];

/// Builds the configured regressor, or a `config` error naming the
/// registered kinds if `cfg.kind` is unknown.
pub fn build(cfg: &RegressorConfig) -> Result<Box<dyn Regressor>> {
    cfg.validate()?;
    let (_, ctor) = REGISTRY
        .iter()
        .find(|(name, _)| *name == cfg.kind)
        .expect("validate guarantees a registered kind");
    Ok(ctor(cfg))
}

/// Builds and fits the configured regressor in one step.
pub fn fit_regressor(
    cfg: &RegressorConfig,
    x: &Array2<f64>,
    y: &[f64],
) -> Result<Box<dyn Regressor>> {
    let mut reg = build(cfg)?;
    reg.fit(x, y)?;
    Ok(reg)
}

// ── Shared helpers ──────────────────────────────────────────────────────────

fn check_xy(x: &Array2<f64>, y: &[f64]) -> Result<()> {
    if x.nrows() == 0 {
        return Err(Error::data("regressor fit on an empty design"));
    }
    if x.nrows() != y.len() {
        return Err(Error::data(format!(
            "design has {} rows but target has {}",
            x.nrows(),
            y.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("design contains non-finite values"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("target contains non-finite values"));
    }
    Ok(())
}

fn is_binary(y: &[f64]) -> bool {
    y.iter().all(|&v| v == 0.0 || v == 1.0)
}

fn clip_probability(p: f64) -> f64 {
    p.clamp(PROB_CLIP, 1.0 - PROB_CLIP)
}

/// Solves the symmetric positive-definite system `a·x = b` by Cholesky
/// factorization in place. Fails with a `numeric` error when the matrix is
/// not (numerically) positive definite, e.g. a collinear unpenalized design.
fn solve_spd(a: &mut [Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let scale = a
        .iter()
        .flat_map(|row| row.iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(1.0);
    // Lower-triangular factor stored in place.
    for j in 0..n {
        for k in 0..j {
            let l = a[j][k];
            for i in j..n {
                a[i][j] -= a[i][k] * l;
            }
        }
        let d = a[j][j];
        if d <= scale * 1e-12 {
            return Err(Error::numeric(
                "degenerate design: normal equations are not positive definite",
            ));
        }
        let root = d.sqrt();
        for i in j..n {
            a[i][j] /= root;
        }
    }
    // Forward then backward substitution.
    let mut x = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            x[i] -= a[i][k] * x[k];
        }
        x[i] /= a[i][i];
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            x[i] -= a[k][i] * x[k];
        }
        x[i] /= a[i][i];
    }
    Ok(x)
}

fn logistic_sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

// ── Ridge regression ────────────────────────────────────────────────────────

/// Linear least squares with an L2 penalty on non-intercept coefficients.
#[derive(Debug, Clone)]
pub struct RidgeLinear {
    lambda: f64,
    /// `[intercept, slopes...]` once fitted.
    coef: Vec<f64>,
    clip: bool,
}

impl RidgeLinear {
    pub fn new(cfg: &RegressorConfig) -> Self {
        RidgeLinear {
            lambda: cfg.ridge_lambda,
            coef: Vec::new(),
            clip: false,
        }
    }
}

impl Regressor for RidgeLinear {
    fn fit(&mut self, x: &Array2<f64>, y: &[f64]) -> Result<()> {
        check_xy(x, y)?;
        self.clip = is_binary(y);
        let n = x.nrows();
        let d = x.ncols() + 1; // leading intercept column
        // Normal equations: (Xᵀ X + λ P) θ = Xᵀ y with P = diag(0, 1, ..., 1).
        let mut gram = vec![vec![0.0f64; d]; d];
        let mut rhs = vec![0.0f64; d];
        for i in 0..n {
            let row = x.row(i);
            for a in 0..d {
                let xa = if a == 0 { 1.0 } else { row[a - 1] };
                rhs[a] += xa * y[i];
                for b in 0..=a {
                    let xb = if b == 0 { 1.0 } else { row[b - 1] };
                    gram[a][b] += xa * xb;
                }
            }
        }
        for a in 0..d {
            for b in (a + 1)..d {
                gram[a][b] = gram[b][a];
            }
        }
        for a in 1..d {
            gram[a][a] += self.lambda;
        }
        self.coef = solve_spd(&mut gram, &rhs)?;
        Ok(())
    }

    fn predict(&self, x: &Array2<f64>) -> Result<Vec<f64>> {
        if self.coef.is_empty() {
            return Err(Error::contract("predict called before fit"));
        }
        if x.ncols() + 1 != self.coef.len() {
            return Err(Error::contract(format!(
                "fitted on {} features, asked to predict on {}",
                self.coef.len() - 1,
                x.ncols()
            )));
        }
        Ok(x
            .rows()
            .into_iter()
            .map(|row| {
                let mut v = self.coef[0];
                for (j, xv) in row.iter().enumerate() {
                    v += self.coef[j + 1] * xv;
                }
                if self.clip {
                    clip_probability(v)
                } else {
                    v
                }
            })
            .collect())
    }

    fn kind(&self) -> &'static str {
        "ridge-linear"
    }
}

// ── Logistic regression ─────────────────────────────────────────────────────

/// L2-regularized logistic regression fitted by damped Newton steps.
#[derive(Debug, Clone)]
pub struct LogisticNewton {
    l2: f64,
    max_iters: usize,
    coef: Vec<f64>,
}

impl LogisticNewton {
    pub fn new(cfg: &RegressorConfig) -> Self {
        LogisticNewton {
            l2: cfg.logistic_l2,
            max_iters: cfg.logistic_iters,
            coef: Vec::new(),
        }
    }

    fn objective(&self, x: &Array2<f64>, y: &[f64], coef: &[f64]) -> f64 {
        let n = x.nrows() as f64;
        let mut obj = 0.0;
        for (i, row) in x.rows().into_iter().enumerate() {
            let mut t = coef[0];
            for (j, xv) in row.iter().enumerate() {
                t += coef[j + 1] * xv;
            }
            // -log-likelihood of a Bernoulli with success probability σ(t):
            // softplus(t) - y·t, written stably for both signs of t.
            let softplus = if t > 0.0 {
                t + (1.0 + (-t).exp()).ln()
            } else {
                (1.0 + t.exp()).ln()
            };
            obj += softplus - y[i] * t;
        }
        let penalty: f64 = coef.iter().skip(1).map(|c| c * c).sum();
        obj / n + 0.5 * self.l2 * penalty
    }
}

impl Regressor for LogisticNewton {
    fn fit(&mut self, x: &Array2<f64>, y: &[f64]) -> Result<()> {
        check_xy(x, y)?;
        if !is_binary(y) {
            return Err(Error::data(
                "logistic regressor requires 0/1 training targets",
            ));
        }
        let n = x.nrows();
        let d = x.ncols() + 1;
        let nf = n as f64;
        let mut coef = vec![0.0f64; d];
        let mut obj = self.objective(x, y, &coef);
        for _ in 0..self.max_iters {
            // Gradient and Hessian of the penalized mean negative log-likelihood.
            let mut grad = vec![0.0f64; d];
            let mut hess = vec![vec![0.0f64; d]; d];
            for (i, row) in x.rows().into_iter().enumerate() {
                let mut t = coef[0];
                for (j, xv) in row.iter().enumerate() {
                    t += coef[j + 1] * xv;
                }
                let p = logistic_sigmoid(t);
                let r = p - y[i];
                let w = (p * (1.0 - p)).max(1e-12);
                for a in 0..d {
                    let xa = if a == 0 { 1.0 } else { row[a - 1] };
                    grad[a] += xa * r;
                    for b in 0..=a {
                        let xb = if b == 0 { 1.0 } else { row[b - 1] };
                        hess[a][b] += w * xa * xb;
                    }
                }
            }
            for a in 0..d {
                grad[a] /= nf;
                for b in 0..=a {
                    hess[a][b] /= nf;
                }
                for b in (a + 1)..d {
                    hess[a][b] = hess[b][a];
                }
            }
            for a in 1..d {
                grad[a] += self.l2 * coef[a];
                hess[a][a] += self.l2;
            }
            // Small ridge on the full Hessian keeps the solve well posed even
            // on separable data with a tiny penalty.
            for (a, row) in hess.iter_mut().enumerate() {
                row[a] += 1e-12;
            }
            let grad_norm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
            if grad_norm < 1e-10 {
                break;
            }
            let step = solve_spd(&mut hess, &grad)?;
            // Damped update: halve until the objective does not increase.
            let mut scale = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let trial: Vec<f64> = coef
                    .iter()
                    .zip(&step)
                    .map(|(c, s)| c - scale * s)
                    .collect();
                let trial_obj = self.objective(x, y, &trial);
                if trial_obj <= obj {
                    coef = trial;
                    obj = trial_obj;
                    accepted = true;
                    break;
                }
                scale *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        self.coef = coef;
        Ok(())
    }

    fn predict(&self, x: &Array2<f64>) -> Result<Vec<f64>> {
        if self.coef.is_empty() {
            return Err(Error::contract("predict called before fit"));
        }
        if x.ncols() + 1 != self.coef.len() {
            return Err(Error::contract(format!(
                "fitted on {} features, asked to predict on {}",
                self.coef.len() - 1,
                x.ncols()
            )));
        }
        Ok(x
            .rows()
            .into_iter()
            .map(|row| {
                let mut t = self.coef[0];
                for (j, xv) in row.iter().enumerate() {
                    t += self.coef[j + 1] * xv;
                }
                clip_probability(logistic_sigmoid(t))
            })
            .collect())
    }

    fn kind(&self) -> &'static str {
        "logistic"
    }
}

// ── Gradient-boosted stumps ─────────────────────────────────────────────────

#[derive(Debug, Clone)]
enum TreeNode {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf { value: f64 },
}

#[derive(Debug, Clone, Default)]
struct Tree {
    nodes: Vec<TreeNode>,
}

impl Tree {
    fn eval(&self, row: ndarray::ArrayView1<f64>) -> f64 {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

/// Least-squares gradient boosting over depth-limited regression trees.
///
/// Split candidates are histogram quantile midpoints computed once from the
/// training columns, so fitting is O(rounds · nodes · (n + bins) · d) and
/// fully deterministic: ties in split gain are broken toward the lowest
/// feature index, then the lowest threshold.
#[derive(Debug, Clone)]
pub struct GbmStumps {
    rounds: usize,
    learning_rate: f64,
    max_depth: usize,
    min_leaf: usize,
    bins: usize,
    init: f64,
    trees: Vec<Tree>,
    clip: bool,
    fitted: bool,
}

impl GbmStumps {
    pub fn new(cfg: &RegressorConfig) -> Self {
        GbmStumps {
            rounds: cfg.rounds,
            learning_rate: cfg.learning_rate,
            max_depth: cfg.max_depth,
            min_leaf: cfg.min_leaf,
            bins: cfg.bins,
            init: 0.0,
            trees: Vec::new(),
            clip: false,
            fitted: false,
        }
    }

    /// Histogram thresholds per feature: midpoints between distinct adjacent
    /// order statistics, thinned to at most `bins - 1` cut points.
    fn thresholds(&self, x: &Array2<f64>) -> Vec<Vec<f64>> {
        let n = x.nrows();
        let mut out = Vec::with_capacity(x.ncols());
        for col in x.columns() {
            let mut vals: Vec<f64> = col.to_vec();
            vals.sort_by(|a, b| a.partial_cmp(b).expect("finite by validation"));
            vals.dedup();
            let mut cuts: Vec<f64> = Vec::new();
            if vals.len() > 1 {
                if vals.len() <= self.bins {
                    for w in vals.windows(2) {
                        cuts.push(0.5 * (w[0] + w[1]));
                    }
                } else {
                    // Quantile positions over the full (non-deduped) column.
                    let mut sorted: Vec<f64> = col.to_vec();
                    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite by validation"));
                    for b in 1..self.bins {
                        let pos = (b * n) / self.bins;
                        if pos == 0 || pos >= n {
                            continue;
                        }
                        let cut = 0.5 * (sorted[pos - 1] + sorted[pos]);
                        if sorted[pos - 1] < sorted[pos] {
                            cuts.push(cut);
                        }
                    }
                    cuts.dedup();
                }
            }
            out.push(cuts);
        }
        out
    }
}

impl Regressor for GbmStumps {
    fn fit(&mut self, x: &Array2<f64>, y: &[f64]) -> Result<()> {
        check_xy(x, y)?;
        self.clip = is_binary(y);
        let n = x.nrows();
        let d = x.ncols();
        self.init = y.iter().sum::<f64>() / n as f64;
        let mut residual: Vec<f64> = y.iter().map(|v| v - self.init).collect();
        let thresholds = self.thresholds(x);
        // Precomputed bin index of each row under each feature's cut list:
        // bin b means the row falls between cuts b-1 and b.
        let mut bin_of: Vec<Vec<u32>> = Vec::with_capacity(d);
        for (j, cuts) in thresholds.iter().enumerate() {
            let col = x.column(j);
            bin_of.push(
                col.iter()
                    .map(|v| cuts.partition_point(|c| v > c) as u32)
                    .collect(),
            );
        }

        self.trees.clear();
        for _ in 0..self.rounds {
            let mut tree = Tree::default();
            // Frontier of (node index, rows) pairs grown breadth-first.
            tree.nodes.push(TreeNode::Leaf { value: 0.0 });
            let mut frontier: Vec<(usize, Vec<usize>)> = vec![(0, (0..n).collect())];
            for _depth in 0..self.max_depth {
                let mut next = Vec::new();
                for (node, rows) in frontier {
                    let total_sum: f64 = rows.iter().map(|&i| residual[i]).sum();
                    let total_n = rows.len();
                    if total_n < 2 * self.min_leaf {
                        tree.nodes[node] = TreeNode::Leaf {
                            value: total_sum / total_n.max(1) as f64,
                        };
                        continue;
                    }
                    // Best split across features via histogram accumulation.
                    let mut best: Option<(f64, usize, usize)> = None; // (gain, feature, cut)
                    for (feat, cuts) in thresholds.iter().enumerate() {
                        if cuts.is_empty() {
                            continue;
                        }
                        let nb = cuts.len() + 1;
                        let mut cnt = vec![0usize; nb];
                        let mut sum = vec![0.0f64; nb];
                        for &i in &rows {
                            let b = bin_of[feat][i] as usize;
                            cnt[b] += 1;
                            sum[b] += residual[i];
                        }
                        let mut left_n = 0usize;
                        let mut left_sum = 0.0f64;
                        for cut in 0..cuts.len() {
                            left_n += cnt[cut];
                            left_sum += sum[cut];
                            let right_n = total_n - left_n;
                            if left_n < self.min_leaf || right_n < self.min_leaf {
                                continue;
                            }
                            let right_sum = total_sum - left_sum;
                            let gain = left_sum * left_sum / left_n as f64
                                + right_sum * right_sum / right_n as f64
                                - total_sum * total_sum / total_n as f64;
                            if gain > 1e-12 && best.is_none_or(|(g, _, _)| gain > g) {
                                best = Some((gain, feat, cut));
                            }
                        }
                    }
                    match best {
                        None => {
                            tree.nodes[node] = TreeNode::Leaf {
                                value: total_sum / total_n as f64,
                            };
                        }
                        Some((_, feat, cut)) => {
                            let (mut lrows, mut rrows) = (Vec::new(), Vec::new());
                            for &i in &rows {
                                if (bin_of[feat][i] as usize) <= cut {
                                    lrows.push(i);
                                } else {
                                    rrows.push(i);
                                }
                            }
                            let left = tree.nodes.len();
                            tree.nodes.push(TreeNode::Leaf { value: 0.0 });
                            let right = tree.nodes.len();
                            tree.nodes.push(TreeNode::Leaf { value: 0.0 });
                            tree.nodes[node] = TreeNode::Split {
                                feature: feat,
                                threshold: thresholds[feat][cut],
                                left,
                                right,
                            };
                            next.push((left, lrows));
                            next.push((right, rrows));
                        }
                    }
                }
                frontier = next;
                if frontier.is_empty() {
                    break;
                }
            }
            // Remaining frontier nodes at the depth cap become leaves.
            for (node, rows) in frontier {
                let s: f64 = rows.iter().map(|&i| residual[i]).sum();
                tree.nodes[node] = TreeNode::Leaf {
                    value: s / rows.len().max(1) as f64,
                };
            }
            for (i, res) in residual.iter_mut().enumerate() {
                *res -= self.learning_rate * tree.eval(x.row(i));
            }
            self.trees.push(tree);
        }
        self.fitted = true;
        Ok(())
    }

    fn predict(&self, x: &Array2<f64>) -> Result<Vec<f64>> {
        if !self.fitted {
            return Err(Error::contract("predict called before fit"));
        }
        Ok(x
            .rows()
            .into_iter()
            .map(|row| {
                let mut v = self.init;
                for tree in &self.trees {
                    v += self.learning_rate * tree.eval(row);
                }
                if self.clip {
                    clip_probability(v)
                } else {
                    v
                }
            })
            .collect())
    }

    fn kind(&self) -> &'static str {
        "gbm-stumps"
    }
}
