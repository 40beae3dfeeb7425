//! Synthetic worlds for validating identification and learning.
//!
//! Two layers:
//!
//! * [`DiscreteWorld`] — a fully tabulated world over finite supports of
//!   `(X, U, Z, D, Y*)`. Its [`JointTable`] enumerates the exact joint
//!   distribution, so every conditional expectation, covariance ratio, and
//!   interval bound downstream code estimates can be computed here without
//!   sampling error. This is the test oracle.
//!
//! * [`simulate`] — the semi-synthetic protocol: draw a base population with
//!   known outcome probabilities, construct an unobservable `U` as the
//!   residual of a flexible regression of `Y*` on `X`, assign judges
//!   uniformly at random, and label selectively through one of two decision
//!   models that mix the unobservable with a judge-leniency score. The
//!   result is a [`crate::dataset::SelectiveDataset`] whose ground truth is
//!   retained for evaluation.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{standardize_column, SelectiveDataset};
use crate::error::{Error, Result};
use crate::identify::ObservableDistribution;
use crate::regress::{fit_regressor, RegressorConfig};
use crate::seed::rng_from;

/// Seed-derivation tags for the stages of a simulation, so each consumes an
/// independent stream of a single master seed.
const TAG_BASE: u64 = 0xBA5E;
const TAG_ASSIGN: u64 = 0xA551;
const TAG_DECIDE: u64 = 0xDEC1;
const TAG_SAMPLE: u64 = 0x5A3B;

/// Logistic sigmoid `1 / (1 + e^{-t})`, numerically stable in both tails.
pub fn expit(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

// ── Tabulated worlds and the enumeration oracle ─────────────────────────────

/// A finite world: supports and conditional probability tables for
/// `(X, U, Z, D, Y*)`. The judge `Z` depends only on `X` (never on `U` or
/// `Y*`), so instrument independence holds by construction; `D` and `Y*`
/// are conditionally independent given `(X, U, Z)`.
#[derive(Debug, Clone)]
pub struct DiscreteWorld {
    /// Feature vectors of the `X` support.
    pub x_support: Vec<Vec<f64>>,
    pub feature_names: Vec<String>,
    /// `P(X = x)` per support point.
    pub x_prob: Vec<f64>,
    /// Values of the unobservable's support.
    pub u_support: Vec<f64>,
    /// `P(U = u | X = x)`, indexed `[x][u]`.
    pub u_prob_given_x: Vec<Vec<f64>>,
    /// Number of judges; judge `j ∈ {1..m}` corresponds to arm index
    /// `z = j − 1`.
    pub m: u32,
    /// `P(judge arm = z | X = x)`, indexed `[x][z]`.
    pub z_prob_given_x: Vec<Vec<f64>>,
    /// `P(D = 1 | X = x, U = u, arm z)`, indexed `[x][u][z]`.
    pub d_prob: Vec<Vec<Vec<f64>>>,
    /// `P(Y* = 1 | X = x, U = u)`, indexed `[x][u]`.
    pub y_prob: Vec<Vec<f64>>,
}

const PROB_SUM_TOL: f64 = 1e-12;

fn check_distribution(name: &str, p: &[f64]) -> Result<()> {
    for &v in p {
        if !(0.0..=1.0).contains(&v) || !v.is_finite() {
            return Err(Error::data(format!("{name} entry {v} is not a probability")));
        }
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > PROB_SUM_TOL {
        return Err(Error::data(format!("{name} sums to {sum}, expected 1")));
    }
    Ok(())
}

impl DiscreteWorld {
    pub fn n_x(&self) -> usize {
        self.x_support.len()
    }

    pub fn n_u(&self) -> usize {
        self.u_support.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (nx, nu, m) = (self.n_x(), self.n_u(), self.m as usize);
        if nx == 0 || nu == 0 || m < 2 {
            return Err(Error::data(
                "world needs nonempty X and U supports and at least 2 judges",
            ));
        }
        let dim = self.feature_names.len();
        if self.x_support.iter().any(|x| x.len() != dim) {
            return Err(Error::data("feature vectors disagree with feature names"));
        }
        check_distribution("x_prob", &self.x_prob)?;
        if self.x_prob.len() != nx
            || self.u_prob_given_x.len() != nx
            || self.z_prob_given_x.len() != nx
            || self.d_prob.len() != nx
            || self.y_prob.len() != nx
        {
            return Err(Error::data("tables do not cover the X support"));
        }
        for xi in 0..nx {
            check_distribution(&format!("u_prob_given_x[{xi}]"), &self.u_prob_given_x[xi])?;
            check_distribution(&format!("z_prob_given_x[{xi}]"), &self.z_prob_given_x[xi])?;
            if self.u_prob_given_x[xi].len() != nu
                || self.z_prob_given_x[xi].len() != m
                || self.d_prob[xi].len() != nu
                || self.y_prob[xi].len() != nu
            {
                return Err(Error::data(format!("tables at x index {xi} have wrong shape")));
            }
            for ui in 0..nu {
                if self.d_prob[xi][ui].len() != m {
                    return Err(Error::data(format!(
                        "d_prob at x={xi}, u={ui} has wrong judge count"
                    )));
                }
                for &v in &self.d_prob[xi][ui] {
                    if !(0.0..=1.0).contains(&v) {
                        return Err(Error::data(format!("d_prob entry {v} out of range")));
                    }
                }
                let y = self.y_prob[xi][ui];
                if !(0.0..=1.0).contains(&y) {
                    return Err(Error::data(format!("y_prob entry {y} out of range")));
                }
            }
        }
        Ok(())
    }

    /// Enumerates the exact joint distribution. Errors if the cell count
    /// `|X|·|U|·m·4` exceeds 10^6 (checked before any table validation so
    /// oversized worlds fail fast).
    pub fn enumerate(&self) -> Result<JointTable<'_>> {
        let (nx, nu, m) = (self.n_x(), self.n_u(), self.m as usize);
        let cells = nx
            .checked_mul(nu)
            .and_then(|c| c.checked_mul(m))
            .and_then(|c| c.checked_mul(4))
            .ok_or_else(|| Error::config("world support overflows cell count"))?;
        if cells > 1_000_000 {
            return Err(Error::config(format!(
                "world has {cells} joint cells, enumeration cap is 1000000"
            )));
        }
        self.validate()?;
        let mut prob = vec![0.0f64; cells];
        for xi in 0..nx {
            for ui in 0..nu {
                for zi in 0..m {
                    let base = self.x_prob[xi]
                        * self.u_prob_given_x[xi][ui]
                        * self.z_prob_given_x[xi][zi];
                    let pd = self.d_prob[xi][ui][zi];
                    let py = self.y_prob[xi][ui];
                    for d in 0..2usize {
                        for y in 0..2usize {
                            let p = base
                                * if d == 1 { pd } else { 1.0 - pd }
                                * if y == 1 { py } else { 1.0 - py };
                            prob[JointTable::index(nu, m, xi, ui, zi, d, y)] = p;
                        }
                    }
                }
            }
        }
        Ok(JointTable { world: self, prob })
    }

    /// Draws `n` i.i.d. rows. Returns the selectively labeled dataset
    /// (judge = arm + 1) and the true `μ*(x)` value of each row.
    pub fn sample(&self, n: usize, seed: u64) -> Result<(SelectiveDataset, Vec<f64>)> {
        let table = self.enumerate()?;
        if n == 0 {
            return Err(Error::config("sample size must be positive"));
        }
        let (nu, m) = (self.n_u(), self.m as usize);
        let mut rng = rng_from(seed, &[TAG_SAMPLE]);
        let dim = self.feature_names.len();
        let mut features = Array2::zeros((n, dim));
        let mut judge = Vec::with_capacity(n);
        let mut decision = Vec::with_capacity(n);
        let mut outcome = Vec::with_capacity(n);
        let mut oracle = Vec::with_capacity(n);
        let mut mu_rows = Vec::with_capacity(n);
        let mu_by_x: Vec<f64> = (0..self.n_x()).map(|xi| table.mu_star(xi)).collect();
        for i in 0..n {
            let xi = draw_categorical(&mut rng, &self.x_prob);
            let ui = draw_categorical(&mut rng, &self.u_prob_given_x[xi]);
            let zi = draw_categorical(&mut rng, &self.z_prob_given_x[xi]);
            let d = u8::from(rng.random::<f64>() < self.d_prob[xi][ui][zi]);
            let y = u8::from(rng.random::<f64>() < self.y_prob[xi][ui]);
            for (j, &v) in self.x_support[xi].iter().enumerate() {
                features[[i, j]] = v;
            }
            judge.push(zi as u32 + 1);
            decision.push(d);
            outcome.push(if d == 1 { Some(y) } else { None });
            oracle.push(y);
            mu_rows.push(mu_by_x[xi]);
        }
        let _ = (nu, m);
        let ds = SelectiveDataset::new(
            features,
            self.feature_names.clone(),
            judge,
            decision,
            outcome,
            Some(oracle),
            Some(self.m),
        )?;
        Ok((ds, mu_rows))
    }
}

fn draw_categorical(rng: &mut impl Rng, prob: &[f64]) -> usize {
    let r: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in prob.iter().enumerate() {
        acc += p;
        if r < acc {
            return i;
        }
    }
    prob.len() - 1
}

/// Exact joint distribution of a [`DiscreteWorld`] over cells
/// `(x, u, z, d, y)`. All queries are exact arithmetic over the table.
///
/// Covariances involving the judge use the arm index `z ∈ {0..m−1}` as the
/// numeric value; the covariance ratio is invariant to affine recoding, so
/// this matches estimates computed from judge codes `1..m`.
#[derive(Debug)]
pub struct JointTable<'w> {
    world: &'w DiscreteWorld,
    prob: Vec<f64>,
}

impl<'w> JointTable<'w> {
    fn index(nu: usize, m: usize, x: usize, u: usize, z: usize, d: usize, y: usize) -> usize {
        (((x * nu + u) * m + z) * 2 + d) * 2 + y
    }

    /// Total probability mass (should be 1; exposed for normalization tests).
    pub fn total_mass(&self) -> f64 {
        self.prob.iter().sum()
    }

    /// `E[f(x, u, z, d, y)]` where `x`/`u`/`z` are support indices and
    /// `d`/`y` are 0/1.
    pub fn expectation(&self, f: impl Fn(usize, usize, usize, u8, u8) -> f64) -> f64 {
        let (nu, m) = (self.world.n_u(), self.world.m as usize);
        let mut total = 0.0;
        for x in 0..self.world.n_x() {
            for u in 0..nu {
                for z in 0..m {
                    for d in 0..2usize {
                        for y in 0..2usize {
                            let p = self.prob[Self::index(nu, m, x, u, z, d, y)];
                            if p > 0.0 {
                                total += p * f(x, u, z, d as u8, y as u8);
                            }
                        }
                    }
                }
            }
        }
        total
    }

    /// `E[f | X = x]`.
    pub fn expectation_given_x(
        &self,
        x: usize,
        f: impl Fn(usize, usize, u8, u8) -> f64,
    ) -> f64 {
        let (nu, m) = (self.world.n_u(), self.world.m as usize);
        let mut total = 0.0;
        for u in 0..nu {
            for z in 0..m {
                for d in 0..2usize {
                    for y in 0..2usize {
                        let p = self.prob[Self::index(nu, m, x, u, z, d, y)];
                        if p > 0.0 {
                            total += p * f(u, z, d as u8, y as u8);
                        }
                    }
                }
            }
        }
        total / self.world.x_prob[x]
    }

    /// `E[Y*]`.
    pub fn e_y_star(&self) -> f64 {
        self.expectation(|_, _, _, _, y| y as f64)
    }

    /// `E[D]` — the population labeling rate.
    pub fn e_d(&self) -> f64 {
        self.expectation(|_, _, _, d, _| d as f64)
    }

    /// `μ*(x) = E[Y* | X = x]`.
    pub fn mu_star(&self, x: usize) -> f64 {
        self.expectation_given_x(x, |_, _, _, y| y as f64)
    }

    /// Pooled `cov(D, Z)` over arm indices.
    pub fn cov_d_z(&self) -> f64 {
        let e_dz = self.expectation(|_, _, z, d, _| d as f64 * z as f64);
        let e_d = self.e_d();
        let e_z = self.expectation(|_, _, z, _, _| z as f64);
        e_dz - e_d * e_z
    }

    /// Pooled `cov(DY, Z)` over arm indices.
    pub fn cov_dy_z(&self) -> f64 {
        let e_dyz = self.expectation(|_, _, z, d, y| (d * y) as f64 * z as f64);
        let e_dy = self.expectation(|_, _, _, d, y| (d * y) as f64);
        let e_z = self.expectation(|_, _, z, _, _| z as f64);
        e_dyz - e_dy * e_z
    }

    /// Covariance ratio `r(x) = cov(DY, Z | X=x) / cov(D, Z | X=x)`.
    /// Errors when the instrument is irrelevant at `x` (zero denominator).
    pub fn covariance_ratio(&self, x: usize) -> Result<f64> {
        let e_z = self.expectation_given_x(x, |_, z, _, _| z as f64);
        let e_d = self.expectation_given_x(x, |_, _, d, _| d as f64);
        let e_dy = self.expectation_given_x(x, |_, _, d, y| (d * y) as f64);
        let e_dz = self.expectation_given_x(x, |_, z, d, _| d as f64 * z as f64);
        let e_dyz = self.expectation_given_x(x, |_, z, d, y| (d * y) as f64 * z as f64);
        let den = e_dz - e_d * e_z;
        if den.abs() < 1e-14 {
            return Err(Error::numeric(format!(
                "instrument is irrelevant at x index {x}: cov(D, Z | X) = {den}"
            )));
        }
        Ok((e_dyz - e_dy * e_z) / den)
    }

    /// Exact interval bounds on `μ*(x)` under constant analyst bounds
    /// `(a, b)`: best lower/upper envelope over judge arms.
    pub fn interval_bounds(&self, x: usize, a: f64, b: f64) -> (f64, f64) {
        let m = self.world.m as usize;
        let mut l = f64::NEG_INFINITY;
        let mut u = f64::INFINITY;
        for arm in 0..m {
            let pz = self.world.z_prob_given_x[x][arm];
            if pz == 0.0 {
                continue;
            }
            let e_d = self.expectation_given_x(x, |_, z, d, _| {
                if z == arm { d as f64 / pz } else { 0.0 }
            });
            let e_dy = self.expectation_given_x(x, |_, z, d, y| {
                if z == arm { (d * y) as f64 / pz } else { 0.0 }
            });
            l = l.max(e_dy + a * (1.0 - e_d));
            u = u.min(e_dy + b * (1.0 - e_d));
        }
        (l.clamp(a, b), u.clamp(a, b))
    }

    /// Observable distribution of a two-judge world, for the aggregate
    /// bound routines.
    pub fn observable(&self) -> Result<ObservableDistribution> {
        if self.world.m != 2 {
            return Err(Error::data(format!(
                "observable distribution requires 2 judges, world has {}",
                self.world.m
            )));
        }
        let arm = |z0: usize, f: &dyn Fn(u8, u8) -> f64| {
            let pz = self.expectation(|_, _, z, _, _| f64::from(z == z0));
            self.expectation(|_, _, z, d, y| if z == z0 { f(d, y) } else { 0.0 }) / pz
        };
        let p_na = [arm(0, &|d, _| f64::from(d == 0)), arm(1, &|d, _| f64::from(d == 0))];
        let p_y0 = [
            arm(0, &|d, y| f64::from(d == 1 && y == 0)),
            arm(1, &|d, y| f64::from(d == 1 && y == 0)),
        ];
        let p_y1 = [
            arm(0, &|d, y| f64::from(d == 1 && y == 1)),
            arm(1, &|d, y| f64::from(d == 1 && y == 1)),
        ];
        ObservableDistribution::new(p_na, p_y0, p_y1)
    }

    /// How far the world is from the exact point-identification condition:
    /// the largest spread, over `x`, of `cov(D, Z | X=x, U=u)` across `u`.
    /// Zero means the covariance condition holds exactly.
    pub fn point_condition_gap(&self) -> f64 {
        let m = self.world.m as usize;
        let mut worst: f64 = 0.0;
        for x in 0..self.world.n_x() {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for u in 0..self.world.n_u() {
                // cov(D, Z | X=x, U=u) with Z ⊥ U | X.
                let pz = &self.world.z_prob_given_x[x];
                let e_z: f64 = (0..m).map(|z| pz[z] * z as f64).sum();
                let e_d: f64 = (0..m).map(|z| pz[z] * self.world.d_prob[x][u][z]).sum();
                let e_dz: f64 = (0..m)
                    .map(|z| pz[z] * self.world.d_prob[x][u][z] * z as f64)
                    .sum();
                let cov = e_dz - e_d * e_z;
                lo = lo.min(cov);
                hi = hi.max(cov);
            }
            worst = worst.max(hi - lo);
        }
        worst
    }

    /// How far the decision table is from the additive leniency form (judge
    /// effect not interacting with `U`): the largest spread, over `u`, of
    /// `P(D|x,u,j) − P(D|x,u,k)` across judge pairs. Zero means additivity
    /// holds exactly, which is sufficient for point identification.
    pub fn additivity_gap(&self) -> f64 {
        let m = self.world.m as usize;
        let mut worst: f64 = 0.0;
        for x in 0..self.world.n_x() {
            for j in 0..m {
                for k in (j + 1)..m {
                    let mut lo = f64::INFINITY;
                    let mut hi = f64::NEG_INFINITY;
                    for u in 0..self.world.n_u() {
                        let diff = self.world.d_prob[x][u][j] - self.world.d_prob[x][u][k];
                        lo = lo.min(diff);
                        hi = hi.max(diff);
                    }
                    worst = worst.max(hi - lo);
                }
            }
        }
        worst
    }
}

// ── Reference fixtures ──────────────────────────────────────────────────────

/// Two-judge reference world with a constant feature.
///
/// `U ~ Bernoulli(1/2)`; arms uniform; `P(D=1 | arm z, U=u) = 0.2 + 0.5z +
/// 0.2u` (additive, so point identification holds exactly);
/// `P(Y*=1 | U=u) = 0.3 + 0.4u`.
///
/// Hand-derived facts frozen in tests: `E[Y*] = 0.5`, `cov(D,Z) = 0.125`,
/// `cov(DY,Z) = 0.0625`, covariance ratio `r = 0.5`, interval bounds
/// `(l, u) = (0.42, 0.62)`, partial weight `0.04`, observable distribution
/// `(0.7, 0.13, 0.17)` at arm 0 and `(0.2, 0.38, 0.42)` at arm 1.
pub fn two_judge_fixture() -> DiscreteWorld {
    let d_of = |u: usize, z: usize| 0.2 + 0.5 * z as f64 + 0.2 * u as f64;
    DiscreteWorld {
        x_support: vec![vec![0.0]],
        feature_names: vec!["x".into()],
        x_prob: vec![1.0],
        u_support: vec![0.0, 1.0],
        u_prob_given_x: vec![vec![0.5, 0.5]],
        m: 2,
        z_prob_given_x: vec![vec![0.5, 0.5]],
        d_prob: vec![vec![
            vec![d_of(0, 0), d_of(0, 1)],
            vec![d_of(1, 0), d_of(1, 1)],
        ]],
        y_prob: vec![vec![0.3, 0.7]],
    }
}

/// Three-judge world with a graded scalar feature, an unobservable whose
/// distribution shifts with `x`, and an additive decision table — so the
/// covariance ratio recovers `μ*(x)` exactly at every support point.
///
/// `P(U=1|x) = 0.3, 0.5, 0.7` for `x = −1, 0, 1`;
/// `P(D=1|arm z, u) = 0.15 + 0.2z + 0.15u`;
/// `P(Y*=1|x, u) = 0.25 + 0.15(x+1) + 0.2u`, so
/// `μ*(x) = 0.31, 0.5, 0.69`.
pub fn graded_risk_fixture() -> DiscreteWorld {
    let xs = [-1.0, 0.0, 1.0];
    let pu = [0.3, 0.5, 0.7];
    let d_of = |u: usize, z: usize| 0.15 + 0.2 * z as f64 + 0.15 * u as f64;
    let y_of = |x: f64, u: usize| 0.25 + 0.15 * (x + 1.0) + 0.2 * u as f64;
    DiscreteWorld {
        x_support: xs.iter().map(|&x| vec![x]).collect(),
        feature_names: vec!["x".into()],
        x_prob: vec![0.3, 0.4, 0.3],
        u_support: vec![0.0, 1.0],
        u_prob_given_x: pu.iter().map(|&p| vec![1.0 - p, p]).collect(),
        m: 3,
        z_prob_given_x: vec![vec![1.0 / 3.0; 3]; 3],
        d_prob: xs
            .iter()
            .map(|_| {
                (0..2)
                    .map(|u| (0..3).map(|z| d_of(u, z)).collect())
                    .collect()
            })
            .collect(),
        y_prob: xs.iter().map(|&x| vec![y_of(x, 0), y_of(x, 1)]).collect(),
    }
}

// ── Semi-synthetic generator ────────────────────────────────────────────────

/// How the unobservable enters the labeling probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecisionModel {
    /// Variant 1: a convex mixture of a `U`-driven term and a
    /// judge-leniency term,
    /// `p = β · (α · expit(U) + (1−α) · expit((1+z) · s))`.
    Mixture,
    /// Variant 2: both effects combined inside one link,
    /// `p = β · expit(α · U + (1−α) · (1+z) · s)`.
    Link,
}

impl DecisionModel {
    /// Parses either the descriptive name or the numeric variant (`1` for
    /// the mixture form, `2` for the in-link form).
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "1" | "mixture" => Ok(DecisionModel::Mixture),
            "2" | "link" => Ok(DecisionModel::Link),
            other => Err(Error::config(format!(
                "unknown decision model '{other}' (expected mixture/1 or link/2)"
            ))),
        }
    }
}

/// Labeling probability for one row: `u` the unobservable, `z_zero_based`
/// the judge's arm index `0..m−1`, `score` the standardized risk score.
pub fn labeling_probability(
    model: DecisionModel,
    alpha: f64,
    beta: f64,
    u: f64,
    z_zero_based: u32,
    score: f64,
) -> f64 {
    let leniency = (1.0 + z_zero_based as f64) * score;
    match model {
        DecisionModel::Mixture => beta * (alpha * expit(u) + (1.0 - alpha) * expit(leniency)),
        DecisionModel::Link => beta * expit(alpha * u + (1.0 - alpha) * leniency),
    }
}

/// Base population the generator labels selectively.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BaseSpec {
    /// Single risk-score feature on a four-point support with
    /// `μ*(x) = expit(x)`.
    DiscreteFixture,
    /// `X ~ N(0, I_dim)`; `μ*(x) = expit(intercept + coeff · x)`; the first
    /// feature is the designated risk score.
    ///
    /// When `score_two_point = Some(t)` (`t > 0`), the score is drawn from
    /// the standardized two-point distribution `{+1/t, −t}` with
    /// `P(score = −t) = 1/(1 + t²)` instead of a standard normal. Its
    /// positive support is capped at `1/t`, so even the most lenient judge's
    /// release probability stays away from one and per-row interval bounds
    /// keep estimable slack at every feature value.
    SyntheticContinuous {
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "default_outcome_coeff")]
        outcome_coeff: Vec<f64>,
        #[serde(default = "default_outcome_intercept")]
        outcome_intercept: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        score_two_point: Option<f64>,
    },
    /// Fully labeled real data from a CSV: every column but
    /// `oracle_column` is a feature; `score_column` names the designated
    /// risk score. Rows are resampled with replacement to size `n` unless
    /// `n` equals the file's row count.
    ExternalCsv {
        path: String,
        oracle_column: String,
        score_column: String,
    },
}

fn default_dim() -> usize {
    4
}

// The default continuous world is calibrated so the selected-sample bias is
// visible but not overwhelming: the risk score (first feature) is negatively
// coupled to the outcome, which makes both weight signs recoverable from the
// release pattern, and the negative intercept concentrates outcome mass just
// below the decision boundary where confounding does its damage.
fn default_outcome_coeff() -> Vec<f64> {
    vec![-0.4, 0.8, 0.4, 0.0]
}

fn default_outcome_intercept() -> f64 {
    -0.5
}

impl Default for BaseSpec {
    fn default() -> Self {
        BaseSpec::SyntheticContinuous {
            dim: default_dim(),
            outcome_coeff: default_outcome_coeff(),
            outcome_intercept: default_outcome_intercept(),
            score_two_point: None,
        }
    }
}

/// Full description of one semi-synthetic world.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldSpec {
    pub model: DecisionModel,
    /// Confounding strength, strictly between 0 and 1: weight of the
    /// unobservable in the labeling probability.
    pub alpha: f64,
    /// Overall labeling-rate multiplier in `(0, 1]`.
    pub beta: f64,
    /// Judge count, at least 2.
    pub m: u32,
    /// Sample size.
    pub n: usize,
    pub base: BaseSpec,
    /// Regressor used to construct the unobservable as the residual of
    /// `Y*` on `X` over the base population.
    pub residual_regressor: RegressorConfig,
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec {
            model: DecisionModel::Link,
            alpha: 0.5,
            beta: 1.0,
            m: 20,
            n: 10_459,
            base: BaseSpec::default(),
            // A linear residual keeps the unobservable faithful to the part
            // of the outcome the features genuinely explain; an aggressive
            // boosted fit memorizes the base sample and flattens it.
            residual_regressor: RegressorConfig {
                kind: "ridge-linear".into(),
                ..RegressorConfig::default()
            },
        }
    }
}

impl WorldSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config(format!(
                "alpha must lie strictly in (0, 1), got {}",
                self.alpha
            )));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::config(format!(
                "beta must lie in (0, 1], got {}",
                self.beta
            )));
        }
        if self.m < 2 {
            return Err(Error::config(format!("need at least 2 judges, got {}", self.m)));
        }
        if self.n == 0 {
            return Err(Error::config("sample size must be positive"));
        }
        if let BaseSpec::SyntheticContinuous {
            dim,
            outcome_coeff,
            score_two_point,
            ..
        } = &self.base
        {
            if *dim == 0 {
                return Err(Error::config("feature dimension must be positive"));
            }
            if outcome_coeff.len() != *dim {
                return Err(Error::config(format!(
                    "outcome_coeff has {} entries for {} features",
                    outcome_coeff.len(),
                    dim
                )));
            }
            if let Some(t) = score_two_point {
                if *t <= 0.0 || !t.is_finite() {
                    return Err(Error::config(format!(
                        "score_two_point must be positive and finite, got {t}"
                    )));
                }
            }
        }
        self.residual_regressor.validate()
    }
}

/// One generated replication: the selectively labeled dataset plus the
/// ground truth the evaluation stage needs.
#[derive(Debug)]
pub struct SimulatedData {
    pub dataset: SelectiveDataset,
    /// True `μ*(X_i)` where the base distribution defines it (bundled
    /// bases); absent for external data.
    pub mu_star: Option<Vec<f64>>,
    /// Realized labeling probability of each row.
    pub p_label: Vec<f64>,
    /// Constructed unobservable of each row.
    pub unobservable: Vec<f64>,
}

/// Constructs the unobservable: `U_i = Y*_i − ĝ(X_i)` where `ĝ` regresses
/// the oracle outcome on the features over the entire base population.
pub fn construct_unobservable(
    features: &Array2<f64>,
    oracle_outcome: &[f64],
    cfg: &RegressorConfig,
) -> Result<Vec<f64>> {
    let model = fit_regressor(cfg, features, oracle_outcome)?;
    let fitted = model.predict(features)?;
    Ok(oracle_outcome
        .iter()
        .zip(&fitted)
        .map(|(&y, &g)| y - g)
        .collect())
}

struct BasePopulation {
    features: Array2<f64>,
    feature_names: Vec<String>,
    score_col: usize,
    y_star: Vec<u8>,
    mu_star: Option<Vec<f64>>,
}

fn draw_base(spec: &WorldSpec, seed: u64) -> Result<BasePopulation> {
    let mut rng = rng_from(seed, &[TAG_BASE]);
    let n = spec.n;
    match &spec.base {
        BaseSpec::DiscreteFixture => {
            let support = [-1.5, -0.5, 0.5, 1.5];
            let mut features = Array2::zeros((n, 1));
            let mut y_star = Vec::with_capacity(n);
            let mut mu = Vec::with_capacity(n);
            for i in 0..n {
                let x = support[rng.random_range(0..support.len())];
                let p = expit(x);
                features[[i, 0]] = x;
                mu.push(p);
                y_star.push(u8::from(rng.random::<f64>() < p));
            }
            Ok(BasePopulation {
                features,
                feature_names: vec!["score".into()],
                score_col: 0,
                y_star,
                mu_star: Some(mu),
            })
        }
        BaseSpec::SyntheticContinuous {
            dim,
            outcome_coeff,
            outcome_intercept,
            score_two_point,
        } => {
            let mut features = Array2::zeros((n, *dim));
            let mut y_star = Vec::with_capacity(n);
            let mut mu = Vec::with_capacity(n);
            for i in 0..n {
                let mut lin = *outcome_intercept;
                for j in 0..*dim {
                    let v: f64 = match (j, score_two_point) {
                        // Two-point score, already mean 0 / variance 1:
                        // +1/t with probability t²/(1+t²), −t otherwise.
                        (0, Some(t)) => {
                            if rng.random::<f64>() < 1.0 / (1.0 + t * t) {
                                -t
                            } else {
                                1.0 / t
                            }
                        }
                        _ => StandardNormal.sample(&mut rng),
                    };
                    features[[i, j]] = v;
                    lin += outcome_coeff[j] * v;
                }
                let p = expit(lin);
                mu.push(p);
                y_star.push(u8::from(rng.random::<f64>() < p));
            }
            let feature_names = (1..=*dim).map(|j| format!("x{j}")).collect();
            Ok(BasePopulation {
                features,
                feature_names,
                score_col: 0,
                y_star,
                mu_star: Some(mu),
            })
        }
        BaseSpec::ExternalCsv {
            path,
            oracle_column,
            score_column,
        } => {
            let (names, rows) = read_numeric_csv(path)?;
            let oracle_idx = names
                .iter()
                .position(|c| c == oracle_column)
                .ok_or_else(|| {
                    Error::data(format!("oracle column '{oracle_column}' not found in {path}"))
                })?;
            let feature_names: Vec<String> = names
                .iter()
                .filter(|c| *c != oracle_column)
                .cloned()
                .collect();
            let score_col = feature_names
                .iter()
                .position(|c| c == score_column)
                .ok_or_else(|| {
                    Error::data(format!(
                        "score column '{score_column}' not found among features in {path}"
                    ))
                })?;
            let picks: Vec<usize> = if n == rows.len() {
                (0..n).collect()
            } else {
                (0..n).map(|_| rng.random_range(0..rows.len())).collect()
            };
            let mut features = Array2::zeros((n, feature_names.len()));
            let mut y_star = Vec::with_capacity(n);
            for (i, &row_idx) in picks.iter().enumerate() {
                let row = &rows[row_idx];
                let y = row[oracle_idx];
                if y != 0.0 && y != 1.0 {
                    return Err(Error::data(format!(
                        "oracle column '{oracle_column}' must be 0/1, row {} has {y}",
                        row_idx + 2
                    )));
                }
                y_star.push(y as u8);
                let mut jj = 0;
                for (j, v) in row.iter().enumerate() {
                    if j != oracle_idx {
                        features[[i, jj]] = *v;
                        jj += 1;
                    }
                }
            }
            Ok(BasePopulation {
                features,
                feature_names,
                score_col,
                y_star,
                mu_star: None,
            })
        }
    }
}

fn read_numeric_csv(path: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::data(format!("cannot open {path}: {e}")))?;
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| Error::data(format!("bad header in {path}: {e}")))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::data(format!("bad row in {path}: {e}")))?;
        let mut row = Vec::with_capacity(names.len());
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::data(format!(
                    "column '{}' row {} has non-numeric value '{field}'",
                    names[j],
                    i + 2
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::data(format!(
                    "column '{}' row {} is not finite",
                    names[j],
                    i + 2
                )));
            }
            row.push(v);
        }
        if row.len() != names.len() {
            return Err(Error::data(format!("row {} has wrong field count", i + 2)));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::data(format!("{path} has no data rows")));
    }
    Ok((names, rows))
}

/// Runs the full semi-synthetic protocol for one replication.
///
/// Stages, each on an independent stream of `seed`: draw the base
/// population; construct the unobservable as the full-population residual
/// of `Y*` on `X`; assign judges uniformly; draw decisions from the spec's
/// labeling model using the standardized risk-score column; mask outcomes
/// where `D = 0`.
pub fn simulate(spec: &WorldSpec, seed: u64) -> Result<SimulatedData> {
    spec.validate()?;
    let base = draw_base(spec, seed)?;
    let n = spec.n;
    let oracle_f: Vec<f64> = base.y_star.iter().map(|&y| y as f64).collect();
    let unobservable =
        construct_unobservable(&base.features, &oracle_f, &spec.residual_regressor)?;
    let score_raw: Vec<f64> = base.features.column(base.score_col).to_vec();
    let score = standardize_column(&score_raw);

    let mut assign_rng = rng_from(seed, &[TAG_ASSIGN]);
    let judge: Vec<u32> = (0..n).map(|_| assign_rng.random_range(1..=spec.m)).collect();

    let mut decide_rng = rng_from(seed, &[TAG_DECIDE]);
    let mut p_label = Vec::with_capacity(n);
    let mut decision = Vec::with_capacity(n);
    let mut outcome = Vec::with_capacity(n);
    for i in 0..n {
        let p = labeling_probability(
            spec.model,
            spec.alpha,
            spec.beta,
            unobservable[i],
            judge[i] - 1,
            score[i],
        );
        debug_assert!((0.0..=1.0).contains(&p));
        p_label.push(p);
        let d = u8::from(decide_rng.random::<f64>() < p);
        decision.push(d);
        outcome.push(if d == 1 { Some(base.y_star[i]) } else { None });
    }

    let dataset = SelectiveDataset::new(
        base.features,
        base.feature_names,
        judge,
        decision,
        outcome,
        Some(base.y_star),
        Some(spec.m),
    )?;
    Ok(SimulatedData {
        dataset,
        mu_star: base.mu_star,
        p_label,
        unobservable,
    })
}
