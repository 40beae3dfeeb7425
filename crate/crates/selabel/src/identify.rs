//! Identification of the latent outcome probability `μ*(X) = E[Y*|X]` from
//! selectively labeled data with a judge instrument.
//!
//! Two strategies are implemented, both consuming cross-fitted nuisances:
//!
//! * **Point identification.** Under quasi-random judge assignment and a
//!   leniency structure whose judge effect does not interact with the
//!   unobservable, the conditional covariance ratio
//!   `r(X) = cov(DY, Z | X) / cov(D, Z | X)` equals `μ*(X)`. Per-row
//!   estimates divide `Ê[DYZ|X] − Ê[DY|X]·Ê[Z|X]` by
//!   `Ê[DZ|X] − Ê[D|X]·Ê[Z|X]`, flooring tiny denominators at `eps_denom`
//!   (keeping their sign, with `sign(0) = +1`) and clipping the ratio into
//!   `[0, 1]`; both repairs are flagged per row.
//!
//! * **Partial identification.** Without the extra leniency structure,
//!   `μ*(X)` is still bracketed: with analyst bounds `a(X) ≤ Y* ≤ b(X)`
//!   (defaults 0 and 1) on the unlabeled,
//!   `l(X) = max_z { E[DY|X,Z=z] + a(X)·(1 − E[D|X,Z=z]) }` and
//!   `u(X) = min_z { E[DY|X,Z=z] + b(X)·(1 − E[D|X,Z=z]) }`.
//!   Estimated intervals are clipped into `[a(X), b(X)]`; an estimated
//!   crossing (`l̂ > û`, possible in finite samples) collapses both ends to
//!   the midpoint and is flagged.
//!
//! Each strategy yields a per-row classification weight
//! `w(X) = μ̂(X) − 1/2` (point) or
//! `w(X) = max(u(X) − 1/2, 0) + min(l(X) − 1/2, 0)` (partial), the signed
//! cost of predicting positive; `|w|` bounds the regret of guessing wrong,
//! so rows with `w` near 0 barely matter and rows with certain intervals
//! entirely above or below 1/2 matter most.
//!
//! For a **binary** instrument the aggregate (feature-free) bounds on
//! `E[Y*]` are also computed two independent ways: a closed form, and a
//! small dense linear program over the joint distribution of response types
//! — the two must agree, which the test suite exploits.

use crate::error::{Error, Result};
use crate::nuisance::NuisanceSet;
use crate::dataset::SelectiveDataset;

// ── Weight and bound containers ─────────────────────────────────────────────

/// Which identification strategy produced a weight vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    Point,
    Partial,
}

impl std::fmt::Display for WeightMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            WeightMode::Point => write!(f, "point"),
            WeightMode::Partial => write!(f, "partial"),
        }
    }
}

/// Per-row classification weights `w(X_i) ∈ [-1/2, 1/2]` with fold
/// provenance and numerical-repair flags.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub w: Vec<f64>,
    pub mode: WeightMode,
    /// Fold of each row, inherited from the nuisance set: `w[i]` was
    /// computed from regressors that never saw fold `fold[i]`.
    pub fold: Vec<usize>,
    /// True where a denominator floor, a ratio clip, or a crossed-interval
    /// collapse intervened.
    pub flagged: Vec<bool>,
}

impl WeightVector {
    pub fn n(&self) -> usize {
        self.w.len()
    }

    /// Mean absolute weight: a degenerate-instance diagnostic — near zero
    /// when identification provides almost no signed signal.
    pub fn mean_abs(&self) -> f64 {
        self.w.iter().map(|v| v.abs()).sum::<f64>() / self.w.len().max(1) as f64
    }

    /// Fraction of flagged rows.
    pub fn flag_rate(&self) -> f64 {
        self.flagged.iter().filter(|&&f| f).count() as f64 / self.flagged.len().max(1) as f64
    }
}

/// Per-row interval bounds `[lower_i, upper_i]` on `μ*(X_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// True where the raw estimates crossed and were collapsed to their
    /// midpoint.
    pub crossed: Vec<bool>,
    /// Fold of each row, inherited from the nuisance set.
    pub fold: Vec<usize>,
}

impl IntervalBounds {
    pub fn n(&self) -> usize {
        self.lower.len()
    }

    /// Fraction of rows whose raw interval crossed.
    pub fn crossed_rate(&self) -> f64 {
        self.crossed.iter().filter(|&&c| c).count() as f64 / self.crossed.len().max(1) as f64
    }
}

// ── Point identification ────────────────────────────────────────────────────

/// Covariance-ratio point weights from cross-fitted nuisances.
///
/// `eps_denom` must be positive; denominators with `|den| < eps_denom` are
/// floored to `±eps_denom` (sign preserved, `+` at exactly zero) and the row
/// is flagged, as is any row whose ratio needed clipping into `[0, 1]`.
pub fn point_weight(nuis: &NuisanceSet, eps_denom: f64) -> Result<WeightVector> {
    if !(eps_denom > 0.0 && eps_denom.is_finite()) {
        return Err(Error::config(format!(
            "eps_denom must be positive and finite, got {eps_denom}"
        )));
    }
    let n = nuis.n();
    let mut w = Vec::with_capacity(n);
    let mut flagged = Vec::with_capacity(n);
    for i in 0..n {
        let num = nuis.dyz[i] - nuis.dy[i] * nuis.z[i];
        let mut den = nuis.dz[i] - nuis.d[i] * nuis.z[i];
        let mut flag = false;
        if den.abs() < eps_denom {
            den = if den < 0.0 { -eps_denom } else { eps_denom };
            flag = true;
        }
        let mut ratio = num / den;
        if ratio < 0.0 {
            ratio = 0.0;
            flag = true;
        } else if ratio > 1.0 {
            ratio = 1.0;
            flag = true;
        }
        w.push(ratio - 0.5);
        flagged.push(flag);
    }
    Ok(WeightVector {
        w,
        mode: WeightMode::Point,
        fold: nuis.fold.clone(),
        flagged,
    })
}

// ── Partial identification ──────────────────────────────────────────────────

/// Per-row interval bounds from cross-fitted nuisances under analyst bound
/// functions `a`, `b` (one value per row; see [`partial_bounds_uniform`] for
/// constant bounds). Requires `0 ≤ a_i ≤ b_i ≤ 1` for every row.
pub fn partial_bounds(nuis: &NuisanceSet, a: &[f64], b: &[f64]) -> Result<IntervalBounds> {
    let n = nuis.n();
    if a.len() != n || b.len() != n {
        return Err(Error::contract(format!(
            "bound functions cover {}/{} rows, nuisances cover {n}",
            a.len(),
            b.len()
        )));
    }
    for i in 0..n {
        if !(a[i] >= 0.0 && b[i] <= 1.0 && a[i] <= b[i]) {
            return Err(Error::config(format!(
                "bound functions must satisfy 0 <= a <= b <= 1; row {i} has a={}, b={}",
                a[i], b[i]
            )));
        }
    }
    let m = nuis.m as usize;
    let mut lower = Vec::with_capacity(n);
    let mut upper = Vec::with_capacity(n);
    let mut crossed = Vec::with_capacity(n);
    for i in 0..n {
        let mut l = f64::NEG_INFINITY;
        let mut u = f64::INFINITY;
        for z in 0..m {
            let d = nuis.d_given_z[[i, z]];
            let dy = nuis.dy_given_z[[i, z]];
            l = l.max(dy + a[i] * (1.0 - d));
            u = u.min(dy + b[i] * (1.0 - d));
        }
        let mut l = l.clamp(a[i], b[i]);
        let mut u = u.clamp(a[i], b[i]);
        let cross = l > u;
        if cross {
            let mid = 0.5 * (l + u);
            l = mid;
            u = mid;
        }
        lower.push(l);
        upper.push(u);
        crossed.push(cross);
    }
    Ok(IntervalBounds {
        lower,
        upper,
        crossed,
        fold: nuis.fold.clone(),
    })
}

/// [`partial_bounds`] with constant analyst bounds; the defaults are
/// `(0, 1)` — no outcome information about the unlabeled beyond its range.
pub fn partial_bounds_uniform(nuis: &NuisanceSet, a: f64, b: f64) -> Result<IntervalBounds> {
    let n = nuis.n();
    partial_bounds(nuis, &vec![a; n], &vec![b; n])
}

/// Partial-identification classification weights
/// `w_i = max(upper_i − 1/2, 0) + min(lower_i − 1/2, 0)`.
///
/// The sign of `w_i` says which class is safer given the whole interval;
/// rows whose interval straddles 1/2 get weights shrunk toward zero.
pub fn partial_weight(bounds: &IntervalBounds) -> WeightVector {
    let w: Vec<f64> = bounds
        .lower
        .iter()
        .zip(&bounds.upper)
        .map(|(&l, &u)| (u - 0.5).max(0.0) + (l - 0.5).min(0.0))
        .collect();
    WeightVector {
        w,
        mode: WeightMode::Partial,
        fold: bounds.fold.clone(),
        flagged: bounds.crossed.clone(),
    }
}

// ── Aggregate bounds for a binary instrument ────────────────────────────────

/// Observable distribution for a binary instrument: for each arm
/// `z ∈ {0, 1}`, the probabilities of observing `D = 0`, `(Y=0, D=1)` and
/// `(Y=1, D=1)`. Each arm's triple must sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableDistribution {
    /// `P(D=0 | Z=z)` for `z = 0, 1`.
    pub p_na: [f64; 2],
    /// `P(Y=0, D=1 | Z=z)`.
    pub p_y0: [f64; 2],
    /// `P(Y=1, D=1 | Z=z)`.
    pub p_y1: [f64; 2],
}

impl ObservableDistribution {
    pub fn new(p_na: [f64; 2], p_y0: [f64; 2], p_y1: [f64; 2]) -> Result<Self> {
        for z in 0..2 {
            for (name, v) in [("p_na", p_na[z]), ("p_y0", p_y0[z]), ("p_y1", p_y1[z])] {
                if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                    return Err(Error::data(format!(
                        "{name}[{z}] = {v} is not a probability"
                    )));
                }
            }
            let sum = p_na[z] + p_y0[z] + p_y1[z];
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::data(format!(
                    "arm z={z} probabilities sum to {sum}, expected 1"
                )));
            }
        }
        Ok(ObservableDistribution { p_na, p_y0, p_y1 })
    }

    /// Empirical arm frequencies of a two-judge dataset; judge `j` maps to
    /// arm `z = j − 1`.
    pub fn from_dataset(ds: &SelectiveDataset) -> Result<Self> {
        if ds.m != 2 {
            return Err(Error::data(format!(
                "aggregate binary-instrument bounds require exactly 2 judges, dataset has {}",
                ds.m
            )));
        }
        let mut count = [[0usize; 3]; 2];
        let mut total = [0usize; 2];
        for i in 0..ds.n() {
            let z = (ds.judge[i] - 1) as usize;
            total[z] += 1;
            match (ds.decision[i], ds.outcome[i]) {
                (0, _) => count[z][0] += 1,
                (1, Some(0)) => count[z][1] += 1,
                (1, Some(1)) => count[z][2] += 1,
                _ => unreachable!("dataset validation excludes labeled rows without outcomes"),
            }
        }
        let frac = |z: usize, k: usize| count[z][k] as f64 / total[z] as f64;
        ObservableDistribution::new(
            [frac(0, 0), frac(1, 0)],
            [frac(0, 1), frac(1, 1)],
            [frac(0, 2), frac(1, 2)],
        )
    }

    /// The observable distribution induced by a latent response-type
    /// distribution `q`, indexed as `q[j*4 + k]` for outcome type `j` and
    /// decision response type `k` (see [`bounds_lp`]). Any such distribution
    /// is feasible for the linear program by construction.
    ///
    /// `q` must be a probability vector; it is renormalized exactly so each
    /// arm sums to one despite rounding.
    pub fn from_response_types(q: &[f64; 8]) -> Result<Self> {
        let total: f64 = q.iter().sum();
        if q.iter().any(|&v| v < 0.0 || !v.is_finite()) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::data(format!(
                "response-type masses must be a probability vector, got sum {total}"
            )));
        }
        let p: Vec<f64> = INCIDENCE
            .iter()
            .map(|row| row.iter().zip(q).map(|(a, b)| a * b).sum::<f64>() / total)
            .collect();
        let norm = |na: f64, y0: f64, y1: f64| {
            let s = na + y0 + y1;
            [na / s, y0 / s, y1 / s]
        };
        let arm0 = norm(p[0], p[1], p[2]);
        let arm1 = norm(p[3], p[4], p[5]);
        ObservableDistribution::new(
            [arm0[0], arm1[0]],
            [arm0[1], arm1[1]],
            [arm0[2], arm1[2]],
        )
    }
}

/// Closed-form aggregate bounds on `E[Y*]` for a binary instrument:
/// `L = max_z P(Y=1, D=1 | Z=z)` and
/// `U = min_z { P(Y=1, D=1 | Z=z) + P(D=0 | Z=z) }`.
///
/// Direct evaluation with no failure modes; on a distribution violating the
/// instrument assumptions the pair may come back crossed (`L > U`), which
/// the linear-programming route reports as infeasibility instead.
pub fn bounds_closed_form(p: &ObservableDistribution) -> (f64, f64) {
    let lower = p.p_y1[0].max(p.p_y1[1]);
    let upper = (p.p_y1[0] + p.p_na[0]).min(p.p_y1[1] + p.p_na[1]);
    (lower, upper)
}

/// The response-type incidence matrix for a binary instrument.
///
/// Variables are masses `q_kj = P(rD = k, Y* = j)` where `rD` is the
/// decision response type — 0: never labeled, 1: labeled iff `z = 1`,
/// 2: labeled iff `z = 0`, 3: always labeled — flattened as `q[j*4 + k]`
/// (the four `j = 0` types first). Rows give, in order, the observable
/// probabilities `p_na[0], p_y0[0], p_y1[0], p_na[1], p_y0[1], p_y1[1]`.
const INCIDENCE: [[f64; 8]; 6] = [
    [1., 1., 0., 0., 1., 1., 0., 0.],
    [0., 0., 1., 1., 0., 0., 0., 0.],
    [0., 0., 0., 0., 0., 0., 1., 1.],
    [1., 0., 1., 0., 1., 0., 1., 0.],
    [0., 1., 0., 1., 0., 0., 0., 0.],
    [0., 0., 0., 0., 0., 1., 0., 1.],
];

/// Aggregate bounds on `E[Y*]` via two linear programs over response-type
/// masses: extremize `Σ_k q_k1` subject to the incidence equations, mass
/// normalization, and non-negativity.
///
/// Returns a `numeric` error with the attained residual if no response-type
/// distribution reproduces `p` (the observable distribution contradicts the
/// instrument assumptions).
pub fn bounds_lp(p: &ObservableDistribution) -> Result<(f64, f64)> {
    let mut rows: Vec<Vec<f64>> = INCIDENCE.iter().map(|r| r.to_vec()).collect();
    rows.push(vec![1.0; 8]);
    let b = [
        p.p_na[0], p.p_y0[0], p.p_y1[0], p.p_na[1], p.p_y0[1], p.p_y1[1], 1.0,
    ];
    // E[Y*] = total mass of the j = 1 block.
    let objective = [0., 0., 0., 0., 1., 1., 1., 1.];
    let lower = simplex_min(&rows, &b, &objective)?;
    let neg: Vec<f64> = objective.iter().map(|c| -c).collect();
    let upper = -simplex_min(&rows, &b, &neg)?;
    Ok((lower, upper))
}

/// Minimizes `c·x` subject to `A x = b`, `x ≥ 0` by a two-phase dense
/// simplex with Bland's rule (deterministic, cycle-free). Redundant but
/// consistent rows are tolerated: after phase 1 any artificial variable
/// still basic at level zero is pivoted out on a structural column, and a
/// row with no structural entries left is dropped as redundant — phase 2
/// then runs on a basis of structural variables only, so `A x = b` cannot
/// silently degrade.
fn simplex_min(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Result<f64> {
    const EPS: f64 = 1e-10;
    const FEAS_TOL: f64 = 1e-9;
    let m = a.len();
    let n = c.len();
    debug_assert!(b.len() == m && a.iter().all(|row| row.len() == n));
    debug_assert!(b.iter().all(|&v| v >= 0.0), "rhs must be non-negative");

    // Tableau: n structural + m artificial columns + rhs.
    let width = n + m + 1;
    let mut t: Vec<Vec<f64>> = Vec::with_capacity(m);
    for (i, row) in a.iter().enumerate() {
        let mut r = vec![0.0; width];
        r[..n].copy_from_slice(row);
        r[n + i] = 1.0;
        r[width - 1] = b[i];
        t.push(r);
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    // Indexed loop: rows `i` and `pivot_row` are accessed simultaneously.
    #[allow(clippy::needless_range_loop)]
    fn pivot_step(t: &mut [Vec<f64>], basis: &mut [usize], pivot_row: usize, enter: usize) {
        let width = t[0].len();
        let pv = t[pivot_row][enter];
        for v in t[pivot_row].iter_mut() {
            *v /= pv;
        }
        for i in 0..t.len() {
            if i != pivot_row {
                let factor = t[i][enter];
                if factor != 0.0 {
                    for j in 0..width {
                        let delta = factor * t[pivot_row][j];
                        t[i][j] -= delta;
                    }
                }
            }
        }
        basis[pivot_row] = enter;
    }

    let run = |t: &mut Vec<Vec<f64>>,
               basis: &mut Vec<usize>,
               cost: &dyn Fn(usize) -> f64,
               allow: &dyn Fn(usize) -> bool|
     -> Result<()> {
        for _ in 0..10_000 {
            // Reduced costs r_j = c_j − Σ_i c_{basis_i}·t[i][j].
            let mut entering: Option<usize> = None;
            for j in 0..n + m {
                if !allow(j) || basis.contains(&j) {
                    continue;
                }
                let mut rc = cost(j);
                for (i, row) in t.iter().enumerate() {
                    rc -= cost(basis[i]) * row[j];
                }
                if rc < -EPS {
                    entering = Some(j); // Bland: first admissible index
                    break;
                }
            }
            let Some(enter) = entering else {
                return Ok(());
            };
            // Ratio test; ties resolved toward the smallest basic index.
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in t.iter().enumerate() {
                if row[enter] > EPS {
                    let ratio = row[width - 1] / row[enter];
                    let better = match leave {
                        None => true,
                        Some((li, lr)) => {
                            ratio < lr - EPS || (ratio < lr + EPS && basis[i] < basis[li])
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((pivot_row, _)) = leave else {
                return Err(Error::numeric("linear program is unbounded"));
            };
            pivot_step(t, basis, pivot_row, enter);
        }
        Err(Error::numeric("simplex iteration limit exceeded"))
    };

    // Phase 1: minimize the artificial mass.
    let phase1_cost = |j: usize| if j >= n { 1.0 } else { 0.0 };
    run(&mut t, &mut basis, &phase1_cost, &|_| true)?;
    let residual: f64 = basis
        .iter()
        .zip(t.iter())
        .filter(|(&bj, _)| bj >= n)
        .map(|(_, row)| row[width - 1])
        .sum();
    if residual > FEAS_TOL {
        return Err(Error::numeric(format!(
            "observable distribution is infeasible for the instrument model \
             (residual {residual:.3e})"
        )));
    }

    // Evict artificials left basic at level zero: a later pivot with a
    // negative entry in such a row would push the artificial positive and
    // break feasibility without the ratio test noticing. Pivoting each one
    // out on a structural column is a degenerate (value-preserving) step;
    // a row with no structural entry is redundant and is removed outright.
    let mut i = 0;
    while i < t.len() {
        if basis[i] >= n {
            if let Some(col) = (0..n).find(|&j| t[i][j].abs() > EPS) {
                pivot_step(&mut t, &mut basis, i, col);
            } else {
                t.remove(i);
                basis.remove(i);
                continue;
            }
        }
        i += 1;
    }

    // Phase 2: original objective, artificials barred from entering.
    let phase2_cost = |j: usize| if j < n { c[j] } else { 0.0 };
    run(&mut t, &mut basis, &phase2_cost, &|j| j < n)?;
    let value: f64 = basis
        .iter()
        .zip(t.iter())
        .filter(|(&bj, _)| bj < n)
        .map(|(&bj, row)| c[bj] * row[width - 1])
        .sum();
    Ok(value)
}
