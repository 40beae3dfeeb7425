//! Dataset container, schema-driven CSV input/output, fold plans, and
//! train/test splitting.
//!
//! The central type is [`SelectiveDataset`]: per-row features `X`, a judge
//! (decision-maker) identifier `Z` in `{1..m}`, a binary decision `D`, an
//! outcome `Y` observed only where `D = 1`, and an optional fully observed
//! oracle outcome `Y*` available in synthetic data. Invariants are enforced
//! at construction:
//!
//! * features are finite,
//! * judge values lie in `{1..m}` and every judge appears at least once,
//! * decisions are 0/1,
//! * the outcome is present if and only if the decision is 1.
//!
//! CSV files carry a header row; missing outcomes are written as `NA` (an
//! empty cell is accepted on input). Column roles are declared in a small
//! JSON schema ([`ColumnSchema`]) so files may put columns in any order.

use std::collections::HashMap;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from;

/// Stage tag for fold shuffling in seed derivation.
const TAG_FOLDS: u64 = 0xF01D;
/// Stage tag for train/test splitting in seed derivation.
const TAG_SPLIT: u64 = 0x5911;

/// Missing-value token written for unobserved outcomes.
const NA: &str = "NA";

// ── Column schema ───────────────────────────────────────────────────────────

/// Declares which CSV columns play which role. Serialized as JSON.
///
/// `judge_count` optionally pins the number of judges `m`; when absent, `m`
/// is inferred as the maximum judge value present. In both cases every value
/// in `{1..m}` must occur at least once.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct ColumnSchema {
    /// Feature column names, in the order features should be assembled.
    pub feature: Vec<String>,
    /// Judge (decision-maker) identifier column.
    pub judge: String,
    /// Binary decision column.
    pub decision: String,
    /// Outcome column; `NA`/empty where the decision is 0.
    pub outcome: String,
    /// Optional fully observed outcome column (synthetic data only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_outcome: Option<String>,
    /// Optional declared judge count `m`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge_count: Option<u32>,
}

impl ColumnSchema {
    /// Reads a schema from a JSON file, rejecting unknown keys.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::data(format!("cannot read schema {}: {e}", path.display())))?;
        let schema: ColumnSchema = serde_json::from_str(&text)
            .map_err(|e| Error::data(format!("invalid schema {}: {e}", path.display())))?;
        schema.validate()?;
        Ok(schema)
    }

    /// Writes the schema as pretty JSON.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::data(format!("cannot serialize schema: {e}")))?;
        std::fs::write(path, text)
            .map_err(|e| Error::data(format!("cannot write schema {}: {e}", path.display())))
    }

    fn validate(&self) -> Result<()> {
        if self.feature.is_empty() {
            return Err(Error::data("schema declares no feature columns"));
        }
        let mut seen: Vec<&str> = Vec::new();
        let mut roles: Vec<&str> = self.feature.iter().map(|s| s.as_str()).collect();
        roles.push(&self.judge);
        roles.push(&self.decision);
        roles.push(&self.outcome);
        if let Some(o) = &self.oracle_outcome {
            roles.push(o);
        }
        for name in roles {
            if seen.contains(&name) {
                return Err(Error::data(format!(
                    "schema assigns column `{name}` to more than one role"
                )));
            }
            seen.push(name);
        }
        if let Some(m) = self.judge_count {
            if m < 1 {
                return Err(Error::data("declared judge count must be at least 1"));
            }
        }
        Ok(())
    }
}

// ── Dataset ─────────────────────────────────────────────────────────────────

/// A selectively labeled dataset.
///
/// Row `i` carries features `features.row(i)`, judge `judge[i] ∈ {1..m}`,
/// decision `decision[i] ∈ {0,1}` and outcome `outcome[i]`, which is
/// `Some(y)` exactly when `decision[i] == 1`. `oracle_outcome` is the latent
/// outcome `Y*` for every row when the data are synthetic.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectiveDataset {
    pub features: Array2<f64>,
    pub feature_names: Vec<String>,
    pub judge: Vec<u32>,
    pub decision: Vec<u8>,
    pub outcome: Vec<Option<u8>>,
    pub oracle_outcome: Option<Vec<u8>>,
    /// Number of judges; judge values lie in `{1..m}`.
    pub m: u32,
}

impl SelectiveDataset {
    /// Builds a dataset and validates all invariants. When `declared_m` is
    /// `None` the judge count is inferred as the maximum judge value.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        features: Array2<f64>,
        feature_names: Vec<String>,
        judge: Vec<u32>,
        decision: Vec<u8>,
        outcome: Vec<Option<u8>>,
        oracle_outcome: Option<Vec<u8>>,
        declared_m: Option<u32>,
    ) -> Result<Self> {
        let m = match declared_m {
            Some(m) => m,
            None => *judge.iter().max().unwrap_or(&0),
        };
        let ds = SelectiveDataset {
            features,
            feature_names,
            judge,
            decision,
            outcome,
            oracle_outcome,
            m,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Number of rows.
    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    /// Number of feature columns.
    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Checks every dataset invariant, returning a `data` error on the first
    /// violation.
    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n == 0 {
            return Err(Error::data("dataset has no rows"));
        }
        if self.feature_names.len() != self.dim() {
            return Err(Error::data(format!(
                "{} feature names for {} feature columns",
                self.feature_names.len(),
                self.dim()
            )));
        }
        for (len, what) in [
            (self.judge.len(), "judge"),
            (self.decision.len(), "decision"),
            (self.outcome.len(), "outcome"),
        ] {
            if len != n {
                return Err(Error::data(format!(
                    "{what} column has {len} rows, features have {n}"
                )));
            }
        }
        if let Some(o) = &self.oracle_outcome {
            if o.len() != n {
                return Err(Error::data(format!(
                    "oracle outcome column has {} rows, features have {n}",
                    o.len()
                )));
            }
            if let Some(v) = o.iter().find(|v| **v > 1) {
                return Err(Error::data(format!("oracle outcome value {v} is not 0/1")));
            }
        }
        if let Some((i, v)) = self
            .features
            .indexed_iter()
            .find(|(_, v)| !v.is_finite())
        {
            return Err(Error::data(format!(
                "feature `{}` is not finite ({v}) at row {}",
                self.feature_names[i.1], i.0
            )));
        }
        if self.m < 1 {
            return Err(Error::data("judge count m must be at least 1"));
        }
        let mut seen = vec![false; self.m as usize];
        for (i, &z) in self.judge.iter().enumerate() {
            if z < 1 || z > self.m {
                return Err(Error::data(format!(
                    "judge value {z} at row {i} outside 1..={}",
                    self.m
                )));
            }
            seen[(z - 1) as usize] = true;
        }
        if let Some(j) = seen.iter().position(|s| !s) {
            return Err(Error::data(format!(
                "judge {} never appears although judge count is {}",
                j + 1,
                self.m
            )));
        }
        for (i, &d) in self.decision.iter().enumerate() {
            if d > 1 {
                return Err(Error::data(format!("decision value {d} at row {i} is not 0/1")));
            }
            match (d, self.outcome[i]) {
                (1, None) => {
                    return Err(Error::data(format!(
                        "row {i} has decision 1 but a missing outcome"
                    )))
                }
                (0, Some(_)) => {
                    return Err(Error::data(format!(
                        "row {i} has decision 0 but a recorded outcome"
                    )))
                }
                (_, Some(y)) if y > 1 => {
                    return Err(Error::data(format!("outcome value {y} at row {i} is not 0/1")))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Fraction of rows with `D = 1`.
    pub fn labeled_fraction(&self) -> f64 {
        self.decision.iter().map(|&d| d as usize).sum::<usize>() as f64 / self.n() as f64
    }

    /// Judge value of row `i` as a real number (the integer coding `1..m`).
    pub fn judge_value(&self, i: usize) -> f64 {
        f64::from(self.judge[i])
    }

    /// Per-row `D` as a real-valued regression target.
    pub fn d_target(&self) -> Vec<f64> {
        self.decision.iter().map(|&d| f64::from(d)).collect()
    }

    /// Per-row `D·Y` target. Unlabeled rows contribute 0, which is exact
    /// because `D·Y = 0` whenever `D = 0`.
    pub fn dy_target(&self) -> Vec<f64> {
        self.outcome
            .iter()
            .map(|o| o.map_or(0.0, f64::from))
            .collect()
    }

    /// Per-row judge value `Z` target.
    pub fn z_target(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.judge_value(i)).collect()
    }

    /// Per-row `D·Z` target.
    pub fn dz_target(&self) -> Vec<f64> {
        (0..self.n())
            .map(|i| f64::from(self.decision[i]) * self.judge_value(i))
            .collect()
    }

    /// Per-row `D·Y·Z` target (0 for unlabeled rows).
    pub fn dyz_target(&self) -> Vec<f64> {
        (0..self.n())
            .map(|i| self.outcome[i].map_or(0.0, f64::from) * self.judge_value(i))
            .collect()
    }

    /// Extracts the rows listed in `idx`, in order. The judge count `m` is
    /// carried over unchanged; a subset may transiently miss some judges, so
    /// no judge-presence validation is applied here.
    pub fn subset(&self, idx: &[usize]) -> SelectiveDataset {
        let features = self.features.select(Axis(0), idx);
        SelectiveDataset {
            features,
            feature_names: self.feature_names.clone(),
            judge: idx.iter().map(|&i| self.judge[i]).collect(),
            decision: idx.iter().map(|&i| self.decision[i]).collect(),
            outcome: idx.iter().map(|&i| self.outcome[i]).collect(),
            oracle_outcome: self
                .oracle_outcome
                .as_ref()
                .map(|o| idx.iter().map(|&i| o[i]).collect()),
            m: self.m,
        }
    }

    /// Indices of rows handled by `judge` (1-based judge value).
    pub fn rows_of_judge(&self, judge: u32) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.judge[i] == judge).collect()
    }

    /// Writes the dataset as CSV with header
    /// `feature_names..., judge, decision, outcome[, oracle_outcome]`.
    /// Missing outcomes are written as `NA`. Floats are written in shortest
    /// round-trip form, so save → load reproduces values bit-exactly.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::WriterBuilder::new()
            .from_path(path)
            .map_err(|e| Error::data(format!("cannot create {}: {e}", path.display())))?;
        let mut header: Vec<String> = self.feature_names.clone();
        header.push("judge".into());
        header.push("decision".into());
        header.push("outcome".into());
        if self.oracle_outcome.is_some() {
            header.push("oracle_outcome".into());
        }
        w.write_record(&header)
            .map_err(|e| Error::data(format!("csv write failed: {e}")))?;
        for i in 0..self.n() {
            let mut rec: Vec<String> = self
                .features
                .row(i)
                .iter()
                .map(|v| format!("{v}"))
                .collect();
            rec.push(self.judge[i].to_string());
            rec.push(self.decision[i].to_string());
            rec.push(match self.outcome[i] {
                Some(y) => y.to_string(),
                None => NA.to_string(),
            });
            if let Some(o) = &self.oracle_outcome {
                rec.push(o[i].to_string());
            }
            w.write_record(&rec)
                .map_err(|e| Error::data(format!("csv write failed: {e}")))?;
        }
        w.flush()
            .map_err(|e| Error::data(format!("csv flush failed: {e}")))?;
        Ok(())
    }

    /// The column schema matching what [`SelectiveDataset::save_csv`] writes.
    pub fn emitted_schema(&self) -> ColumnSchema {
        ColumnSchema {
            feature: self.feature_names.clone(),
            judge: "judge".into(),
            decision: "decision".into(),
            outcome: "outcome".into(),
            oracle_outcome: self.oracle_outcome.as_ref().map(|_| "oracle_outcome".into()),
            judge_count: Some(self.m),
        }
    }
}

/// Loads a dataset from CSV using `schema` to locate columns by name.
///
/// Cell rules: features must parse as finite reals; the judge column as an
/// integer ≥ 1; the decision column as 0/1; the outcome column as 0/1 or the
/// missing token `NA` (an empty cell also counts as missing). A row with
/// decision 0 must have a missing outcome — a recorded outcome there is a
/// validation error, and after loading such rows always carry `None`.
pub fn load_csv(path: impl AsRef<Path>, schema: &ColumnSchema) -> Result<SelectiveDataset> {
    let path = path.as_ref();
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::data(format!("cannot read header of {}: {e}", path.display())))?
        .clone();
    let col: HashMap<&str, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, name)| (name, i))
        .collect();
    let locate = |name: &str| -> Result<usize> {
        col.get(name)
            .copied()
            .ok_or_else(|| Error::data(format!("column `{name}` not found in {}", path.display())))
    };
    let feat_idx: Vec<usize> = schema
        .feature
        .iter()
        .map(|f| locate(f))
        .collect::<Result<_>>()?;
    let judge_idx = locate(&schema.judge)?;
    let dec_idx = locate(&schema.decision)?;
    let out_idx = locate(&schema.outcome)?;
    let oracle_idx = match &schema.oracle_outcome {
        Some(name) => Some(locate(name)?),
        None => None,
    };

    let mut flat: Vec<f64> = Vec::new();
    let mut judge: Vec<u32> = Vec::new();
    let mut decision: Vec<u8> = Vec::new();
    let mut outcome: Vec<Option<u8>> = Vec::new();
    let mut oracle: Vec<u8> = Vec::new();
    for (row_no, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::data(format!("row {}: {e}", row_no + 1)))?;
        let cell = |idx: usize| -> Result<&str> {
            rec.get(idx).ok_or_else(|| {
                Error::data(format!("row {}: missing column {}", row_no + 1, idx))
            })
        };
        for (&fi, name) in feat_idx.iter().zip(&schema.feature) {
            let raw = cell(fi)?;
            let v: f64 = raw.trim().parse().map_err(|_| {
                Error::data(format!(
                    "row {}: feature `{name}` value `{raw}` is not numeric",
                    row_no + 1
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::data(format!(
                    "row {}: feature `{name}` is not finite",
                    row_no + 1
                )));
            }
            flat.push(v);
        }
        let zraw = cell(judge_idx)?;
        let z: u32 = zraw.trim().parse().map_err(|_| {
            Error::data(format!(
                "row {}: judge value `{zraw}` is not a positive integer",
                row_no + 1
            ))
        })?;
        judge.push(z);
        let draw = cell(dec_idx)?;
        let d: u8 = draw.trim().parse().map_err(|_| {
            Error::data(format!("row {}: decision `{draw}` is not 0/1", row_no + 1))
        })?;
        decision.push(d);
        let yraw = cell(out_idx)?.trim();
        let y = if yraw.is_empty() || yraw.eq_ignore_ascii_case(NA) {
            None
        } else {
            let y: u8 = yraw.parse().map_err(|_| {
                Error::data(format!("row {}: outcome `{yraw}` is not 0/1 or NA", row_no + 1))
            })?;
            Some(y)
        };
        outcome.push(y);
        if let Some(oi) = oracle_idx {
            let oraw = cell(oi)?.trim();
            let o: u8 = oraw.parse().map_err(|_| {
                Error::data(format!(
                    "row {}: oracle outcome `{oraw}` is not 0/1",
                    row_no + 1
                ))
            })?;
            oracle.push(o);
        }
    }
    let n = judge.len();
    if n == 0 {
        return Err(Error::data(format!("{} contains no data rows", path.display())));
    }
    let features = Array2::from_shape_vec((n, feat_idx.len()), flat)
        .map_err(|e| Error::data(format!("feature matrix shape error: {e}")))?;
    SelectiveDataset::new(
        features,
        schema.feature.clone(),
        judge,
        decision,
        outcome,
        oracle_idx.map(|_| oracle),
        schema.judge_count,
    )
}

// ── Fold plans ──────────────────────────────────────────────────────────────

/// Assignment of each row to one of `k` cross-fitting folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    /// `assignment[i] ∈ 0..k` is the fold of row `i`.
    pub assignment: Vec<usize>,
    pub k: usize,
}

impl FoldPlan {
    /// Rows belonging to fold `fold`.
    pub fn fold_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == fold)
            .collect()
    }

    /// Rows outside fold `fold` (its training complement).
    pub fn complement_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] != fold)
            .collect()
    }

    /// Fold sizes, indexed by fold.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.k];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Randomly partitions `n` rows into `k` folds of near-equal size.
///
/// Rows are shuffled with a seed-derived RNG and dealt round-robin, so fold
/// sizes differ by at most one: `n mod k` folds receive `⌈n/k⌉` rows and the
/// rest `⌊n/k⌋`. The same `(n, k, seed)` always yields the same plan.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::config(format!("fold count {k} must be at least 2")));
    }
    if k > n {
        return Err(Error::config(format!(
            "fold count {k} exceeds the number of rows {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from(seed, &[TAG_FOLDS]));
    let mut assignment = vec![0usize; n];
    for (pos, &row) in order.iter().enumerate() {
        assignment[row] = pos % k;
    }
    Ok(FoldPlan { assignment, k })
}

/// Randomly splits `n` rows into disjoint train and test index sets.
///
/// The test set receives `⌊n·test_fraction⌋` rows; the remainder trains.
/// Both sides must end up non-empty. Deterministic in `(n, fraction, seed)`.
pub fn split_train_test(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::config(format!(
            "test fraction {test_fraction} must lie strictly between 0 and 1"
        )));
    }
    let n_test = (n as f64 * test_fraction).floor() as usize;
    if n_test == 0 {
        return Err(Error::config(format!(
            "test fraction {test_fraction} leaves an empty test set for n = {n}"
        )));
    }
    if n_test >= n {
        return Err(Error::config(format!(
            "test fraction {test_fraction} leaves an empty training set for n = {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from(seed, &[TAG_SPLIT]));
    let (test, train) = order.split_at(n_test);
    let mut train = train.to_vec();
    let mut test = test.to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

// ── Standardization ─────────────────────────────────────────────────────────

/// Per-column affine transform to zero mean and unit variance.
///
/// Statistics are estimated on the training split only and then applied to
/// any split. Columns with (near-)zero spread are centered but left at scale
/// one, so constant features become identically zero rather than NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Estimates means and scales (population standard deviations) from `x`.
    pub fn fit(x: &Array2<f64>) -> Standardizer {
        let n = x.nrows().max(1) as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut scale = Vec::with_capacity(x.ncols());
        for col in x.columns() {
            let mu = col.sum() / n;
            let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
            let sd = var.sqrt();
            mean.push(mu);
            scale.push(if sd > 1e-12 { sd } else { 1.0 });
        }
        Standardizer { mean, scale }
    }

    /// Applies the transform column-wise.
    pub fn transform(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(Error::contract(format!(
                "standardizer fitted on {} columns applied to {}",
                self.mean.len(),
                x.ncols()
            )));
        }
        let mut out = x.clone();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            col.mapv_inplace(|v| (v - self.mean[j]) / self.scale[j]);
        }
        Ok(out)
    }

    /// Returns a copy of `ds` with standardized features.
    pub fn transform_dataset(&self, ds: &SelectiveDataset) -> Result<SelectiveDataset> {
        let mut out = ds.clone();
        out.features = self.transform(&ds.features)?;
        Ok(out)
    }
}

/// Standardizes a single column vector to zero mean, unit variance (scale 1
/// if the column is constant). Used for designated risk-score columns.
pub fn standardize_column(v: &[f64]) -> Vec<f64> {
    let n = v.len().max(1) as f64;
    let mu = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n;
    let sd = var.sqrt();
    let scale = if sd > 1e-12 { sd } else { 1.0 };
    v.iter().map(|x| (x - mu) / scale).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn tiny_dataset() -> SelectiveDataset {
        SelectiveDataset::new(
            array![[0.5, -1.0], [1.5, 2.0], [-0.25, 0.125], [3.0, 4.0]],
            vec!["x1".into(), "x2".into()],
            vec![1, 2, 1, 2],
            vec![1, 0, 1, 0],
            vec![Some(1), None, Some(0), None],
            Some(vec![1, 0, 0, 1]),
            Some(2),
        )
        .unwrap()
    }

    #[test]
    fn construction_validates_roundtrip_fields() {
        let ds = tiny_dataset();
        assert_eq!(ds.n(), 4);
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.m, 2);
        assert!((ds.labeled_fraction() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn outcome_present_with_decision_zero_is_rejected() {
        let err = SelectiveDataset::new(
            array![[0.0], [1.0]],
            vec!["x".into()],
            vec![1, 2],
            vec![0, 1],
            vec![Some(1), Some(1)],
            None,
            None,
        )
        .unwrap_err();
        assert_eq!(err.category(), "data");
    }

    #[test]
    fn missing_outcome_with_decision_one_is_rejected() {
        let err = SelectiveDataset::new(
            array![[0.0], [1.0]],
            vec!["x".into()],
            vec![1, 2],
            vec![1, 1],
            vec![Some(1), None],
            None,
            None,
        )
        .unwrap_err();
        assert_eq!(err.category(), "data");
    }

    #[test]
    fn absent_judge_under_declared_count_is_rejected() {
        let err = SelectiveDataset::new(
            array![[0.0], [1.0]],
            vec!["x".into()],
            vec![1, 1],
            vec![0, 0],
            vec![None, None],
            None,
            Some(3),
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("judge 2"), "unexpected message: {msg}");
    }

    #[test]
    fn judge_above_declared_count_is_rejected() {
        let err = SelectiveDataset::new(
            array![[0.0], [1.0]],
            vec!["x".into()],
            vec![1, 3],
            vec![0, 0],
            vec![None, None],
            None,
            Some(2),
        )
        .unwrap_err();
        assert_eq!(err.category(), "data");
    }

    #[test]
    fn dy_target_is_zero_for_unlabeled_rows() {
        let ds = tiny_dataset();
        assert_eq!(ds.dy_target(), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(ds.dz_target(), vec![1.0, 0.0, 1.0, 0.0]);
        assert_eq!(ds.dyz_target(), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(ds.z_target(), vec![1.0, 2.0, 1.0, 2.0]);
    }

    #[test]
    fn csv_roundtrip_is_bit_exact() {
        let ds = tiny_dataset();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        ds.save_csv(&path).unwrap();
        let schema = ds.emitted_schema();
        let back = load_csv(&path, &schema).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn load_rejects_outcome_on_unlabeled_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "x,judge,decision,outcome\n0.1,1,1,1\n0.2,2,0,1\n").unwrap();
        let schema = ColumnSchema {
            feature: vec!["x".into()],
            judge: "judge".into(),
            decision: "decision".into(),
            outcome: "outcome".into(),
            oracle_outcome: None,
            judge_count: None,
        };
        let err = load_csv(&path, &schema).unwrap_err();
        assert_eq!(err.category(), "data");
        assert!(err.to_string().contains("row 1"), "{err}");
    }

    #[test]
    fn load_accepts_na_and_empty_as_missing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("na.csv");
        std::fs::write(
            &path,
            "x,judge,decision,outcome\n0.1,1,1,1\n0.2,2,0,NA\n0.3,1,0,\n",
        )
        .unwrap();
        let schema = ColumnSchema {
            feature: vec!["x".into()],
            judge: "judge".into(),
            decision: "decision".into(),
            outcome: "outcome".into(),
            oracle_outcome: None,
            judge_count: None,
        };
        let ds = load_csv(&path, &schema).unwrap();
        assert_eq!(ds.outcome, vec![Some(1), None, None]);
    }

    #[test]
    fn load_reports_missing_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cols.csv");
        std::fs::write(&path, "x,judge,decision\n0.1,1,0\n").unwrap();
        let schema = ColumnSchema {
            feature: vec!["x".into()],
            judge: "judge".into(),
            decision: "decision".into(),
            outcome: "outcome".into(),
            oracle_outcome: None,
            judge_count: None,
        };
        let err = load_csv(&path, &schema).unwrap_err();
        assert!(err.to_string().contains("`outcome`"), "{err}");
    }

    #[test]
    fn fold_sizes_differ_by_at_most_one() {
        let plan = make_folds(10, 3, 1).unwrap();
        let mut sizes = plan.sizes();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![3, 3, 4]);
    }

    #[test]
    fn folds_are_deterministic_in_seed() {
        assert_eq!(make_folds(100, 5, 9).unwrap(), make_folds(100, 5, 9).unwrap());
        assert_ne!(make_folds(100, 5, 9).unwrap(), make_folds(100, 5, 10).unwrap());
    }

    #[test]
    fn fold_count_bounds_are_enforced() {
        assert_eq!(make_folds(10, 1, 0).unwrap_err().category(), "config");
        assert_eq!(make_folds(3, 4, 0).unwrap_err().category(), "config");
    }

    #[test]
    fn split_sizes_follow_fraction() {
        let (train, test) = split_train_test(10_000, 0.3, 5).unwrap();
        assert_eq!(train.len(), 7_000);
        assert_eq!(test.len(), 3_000);
        let (train, test) = split_train_test(10, 0.999, 5).unwrap();
        assert_eq!(train.len(), 1);
        assert_eq!(test.len(), 9);
    }

    #[test]
    fn split_is_disjoint_and_exhaustive() {
        let (train, test) = split_train_test(101, 0.25, 3).unwrap();
        let mut all: Vec<usize> = train.iter().chain(test.iter()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..101).collect::<Vec<_>>());
    }

    #[test]
    fn split_rejects_degenerate_fractions() {
        assert_eq!(split_train_test(10, 0.0, 0).unwrap_err().category(), "config");
        assert_eq!(split_train_test(10, 1.0, 0).unwrap_err().category(), "config");
        // floor(10 * 0.01) = 0 rows of test data.
        assert_eq!(split_train_test(10, 0.01, 0).unwrap_err().category(), "config");
    }

    #[test]
    fn standardizer_centers_and_scales_train_stats_only() {
        let train = array![[1.0, 10.0], [3.0, 10.0]];
        let s = Standardizer::fit(&train);
        let t = s.transform(&train).unwrap();
        assert!(t.column(0).sum().abs() < 1e-12);
        // Constant column: centered, scale left at one.
        assert_eq!(s.scale[1], 1.0);
        assert!(t.column(1).iter().all(|v| v.abs() < 1e-12));
        // Applying to other data uses the training statistics.
        let other = s.transform(&array![[5.0, 12.0]]).unwrap();
        assert!((other[[0, 0]] - 3.0).abs() < 1e-12);
        assert!((other[[0, 1]] - 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn prop_folds_partition_rows(n in 2usize..400, k in 2usize..10, seed in 0u64..1000) {
            prop_assume!(k <= n);
            let plan = make_folds(n, k, seed).unwrap();
            prop_assert_eq!(plan.assignment.len(), n);
            let sizes = plan.sizes();
            prop_assert_eq!(sizes.iter().sum::<usize>(), n);
            let max = *sizes.iter().max().unwrap();
            let min = *sizes.iter().min().unwrap();
            prop_assert!(max - min <= 1);
            // Every fold together with its complement is a partition.
            for fold in 0..k {
                let inside = plan.fold_indices(fold);
                let outside = plan.complement_indices(fold);
                prop_assert_eq!(inside.len() + outside.len(), n);
            }
        }

        #[test]
        fn prop_split_is_partition(n in 4usize..500, f in 0.05f64..0.95, seed in 0u64..1000) {
            prop_assume!((n as f64 * f).floor() >= 1.0);
            prop_assume!((n as f64 * f).floor() < n as f64);
            let (train, test) = split_train_test(n, f, seed).unwrap();
            let mut all: Vec<usize> = train.iter().chain(test.iter()).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }
}
