//! Cross-fitted nuisance regressions.
//!
//! Identification needs conditional expectations of several observable
//! targets given the features `X`: per-judge quantities `E[D|X,Z=z]` and
//! `E[DY|X,Z=z]` for the interval bounds, and pooled quantities `E[DYZ|X]`,
//! `E[DY|X]`, `E[Z|X]`, `E[DZ|X]`, `E[D|X]` for the covariance-ratio point
//! estimate. The judge value enters these targets by its integer coding
//! `1..m`. `DY` is taken as 0 on unlabeled rows, which is exact because
//! `D·Y = 0` whenever `D = 0`.
//!
//! All estimates are cross-fitted: rows are split into `K` folds, and the
//! estimate at a row in fold `k` comes from regressors trained only on the
//! other folds. The per-judge regressions for judge `z` train on the rows of
//! the complement handled by judge `z`; each fold's complement must contain
//! every judge.
//!
//! After fitting, per-judge labeled mass is projected to respect the logical
//! ordering `0 ≤ Ê[DY|X,Z=z] ≤ Ê[D|X,Z=z]`, and probability targets carry
//! the regressor-level clip into `[1e-6, 1 - 1e-6]`.

use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;

use crate::dataset::{FoldPlan, SelectiveDataset};
use crate::error::{Error, Result};
use crate::regress::{fit_regressor, RegressorConfig};

/// Out-of-fold nuisance estimates for every row of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceSet {
    /// Judge count; per-judge arrays have `m` columns indexed by `z - 1`.
    pub m: u32,
    /// Fold that each row belongs to (the estimates at that row were fitted
    /// on the complement of this fold).
    pub fold: Vec<usize>,
    /// `Ê[D|X_i, Z=z]`, shape `n × m`.
    pub d_given_z: Array2<f64>,
    /// `Ê[DY|X_i, Z=z]`, shape `n × m`, projected into `[0, Ê[D|X_i,Z=z]]`.
    pub dy_given_z: Array2<f64>,
    /// Pooled `Ê[D·Y·Z|X_i]`.
    pub dyz: Vec<f64>,
    /// Pooled `Ê[D·Y|X_i]`.
    pub dy: Vec<f64>,
    /// Pooled `Ê[Z|X_i]`.
    pub z: Vec<f64>,
    /// Pooled `Ê[D·Z|X_i]`.
    pub dz: Vec<f64>,
    /// Pooled `Ê[D|X_i]`.
    pub d: Vec<f64>,
}

impl NuisanceSet {
    /// Number of rows covered.
    pub fn n(&self) -> usize {
        self.fold.len()
    }

    /// Writes the per-row estimates as a CSV audit table.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::WriterBuilder::new()
            .from_path(path)
            .map_err(|e| Error::data(format!("cannot create {}: {e}", path.display())))?;
        let mut header = vec!["row".to_string(), "fold".to_string()];
        for z in 1..=self.m {
            header.push(format!("d_given_z{z}"));
            header.push(format!("dy_given_z{z}"));
        }
        header.extend(
            ["dyz", "dy", "z", "dz", "d"]
                .iter()
                .map(|s| (*s).to_string()),
        );
        w.write_record(&header)
            .map_err(|e| Error::data(format!("csv write failed: {e}")))?;
        for i in 0..self.n() {
            let mut rec = vec![i.to_string(), self.fold[i].to_string()];
            for z in 0..self.m as usize {
                rec.push(format!("{}", self.d_given_z[[i, z]]));
                rec.push(format!("{}", self.dy_given_z[[i, z]]));
            }
            for v in [self.dyz[i], self.dy[i], self.z[i], self.dz[i], self.d[i]] {
                rec.push(format!("{v}"));
            }
            w.write_record(&rec)
                .map_err(|e| Error::data(format!("csv write failed: {e}")))?;
        }
        w.flush()
            .map_err(|e| Error::data(format!("csv flush failed: {e}")))?;
        Ok(())
    }
}

/// Result of fitting one fold's regressions: predictions at the fold's rows.
struct FoldFit {
    fold: usize,
    /// Per judge `z-1`: (d predictions, dy predictions) at the fold rows.
    per_judge: Vec<(Vec<f64>, Vec<f64>)>,
    /// Pooled predictions at the fold rows: dyz, dy, z, dz, d.
    pooled: [Vec<f64>; 5],
}

/// Cross-fits all nuisance regressions for `ds` under `folds`.
///
/// Errors: mismatched fold plan (`contract`); fewer than two judges or a
/// fold complement missing some judge (`data`); regressor failures propagate.
pub fn crossfit_nuisances(
    ds: &SelectiveDataset,
    folds: &FoldPlan,
    cfg: &RegressorConfig,
) -> Result<NuisanceSet> {
    cfg.validate()?;
    let n = ds.n();
    if folds.assignment.len() != n {
        return Err(Error::contract(format!(
            "fold plan covers {} rows, dataset has {n}",
            folds.assignment.len()
        )));
    }
    if ds.m < 2 {
        return Err(Error::data(
            "identification requires at least two judges (m >= 2)",
        ));
    }
    let m = ds.m as usize;

    // Validate judge coverage of every complement up front so the error
    // message names the first offending fold rather than a regressor detail.
    for k in 0..folds.k {
        let mut seen = vec![false; m];
        for i in 0..n {
            if folds.assignment[i] != k {
                seen[(ds.judge[i] - 1) as usize] = true;
            }
        }
        if let Some(z) = seen.iter().position(|s| !s) {
            return Err(Error::data(format!(
                "complement of fold {k} contains no rows of judge {}; \
                 use fewer folds or more data",
                z + 1
            )));
        }
    }

    let d_target = ds.d_target();
    let dy_target = ds.dy_target();
    let z_target = ds.z_target();
    let dz_target = ds.dz_target();
    let dyz_target = ds.dyz_target();

    let fits: Vec<Result<FoldFit>> = (0..folds.k)
        .into_par_iter()
        .map(|k| -> Result<FoldFit> {
            let fold_rows = folds.fold_indices(k);
            let comp_rows = folds.complement_indices(k);
            let x_fold = ds.features.select(ndarray::Axis(0), &fold_rows);
            let gather = |rows: &[usize], t: &[f64]| -> Vec<f64> {
                rows.iter().map(|&i| t[i]).collect()
            };

            let per_judge: Vec<(Vec<f64>, Vec<f64>)> = (1..=m as u32)
                .into_par_iter()
                .map(|z| -> Result<(Vec<f64>, Vec<f64>)> {
                    let rows: Vec<usize> = comp_rows
                        .iter()
                        .copied()
                        .filter(|&i| ds.judge[i] == z)
                        .collect();
                    let x_sub = ds.features.select(ndarray::Axis(0), &rows);
                    let d_fit = fit_regressor(cfg, &x_sub, &gather(&rows, &d_target))?;
                    let dy_fit = fit_regressor(cfg, &x_sub, &gather(&rows, &dy_target))?;
                    Ok((d_fit.predict(&x_fold)?, dy_fit.predict(&x_fold)?))
                })
                .collect::<Result<_>>()?;

            let x_comp = ds.features.select(ndarray::Axis(0), &comp_rows);
            let pooled_targets = [
                &dyz_target,
                &dy_target,
                &z_target,
                &dz_target,
                &d_target,
            ];
            let pooled_vec: Vec<Vec<f64>> = pooled_targets
                .into_par_iter()
                .map(|t| -> Result<Vec<f64>> {
                    let fit = fit_regressor(cfg, &x_comp, &gather(&comp_rows, t))?;
                    fit.predict(&x_fold)
                })
                .collect::<Result<_>>()?;
            let pooled: [Vec<f64>; 5] = pooled_vec
                .try_into()
                .expect("five pooled targets yield five prediction vectors");

            Ok(FoldFit {
                fold: k,
                per_judge,
                pooled,
            })
        })
        .collect();

    let mut out = NuisanceSet {
        m: ds.m,
        fold: folds.assignment.clone(),
        d_given_z: Array2::zeros((n, m)),
        dy_given_z: Array2::zeros((n, m)),
        dyz: vec![0.0; n],
        dy: vec![0.0; n],
        z: vec![0.0; n],
        dz: vec![0.0; n],
        d: vec![0.0; n],
    };
    for fit in fits {
        let fit = fit?;
        let rows = folds.fold_indices(fit.fold);
        for (z, (d_pred, dy_pred)) in fit.per_judge.iter().enumerate() {
            for (local, &row) in rows.iter().enumerate() {
                out.d_given_z[[row, z]] = d_pred[local];
                out.dy_given_z[[row, z]] = dy_pred[local];
            }
        }
        let [dyz, dy, z, dz, d] = &fit.pooled;
        for (local, &row) in rows.iter().enumerate() {
            out.dyz[row] = dyz[local];
            out.dy[row] = dy[local];
            out.z[row] = z[local];
            out.dz[row] = dz[local];
            out.d[row] = d[local];
        }
    }

    // Monotone projection: labeled-positive mass cannot exceed labeled mass.
    for i in 0..n {
        for z in 0..m {
            let cap = out.d_given_z[[i, z]];
            let v = out.dy_given_z[[i, z]];
            out.dy_given_z[[i, z]] = v.clamp(0.0, cap);
        }
    }
    Ok(out)
}
