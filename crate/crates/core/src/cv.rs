//! K-fold cross-validation of voxel-wise encoders.
//!
//! Each fold fits the whole lambda path on the training TRs (with
//! training-only standardization), scores every lambda on the held-out TRs,
//! and each voxel then keeps the lambda whose pooled out-of-fold predictions
//! correlate best with the measured signal. That pooled correlation is the
//! reported score. Fold-wise correlations at the chosen lambda are kept too.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix_io::{read_matrix, write_matrix, DenseMatrix};
use crate::ridge::{lasso_column, Factorization, Penalty, RidgeConfig, Standardizer};
use crate::stats::pearson;

const BLOCK_COLS: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FoldScheme {
    /// The TR axis cut into `n_folds` contiguous segments.
    Contiguous,
    /// Whole runs (given by their lengths, in TR order) dealt round-robin
    /// to folds in a seeded shuffled order.
    ByRun(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldPlan {
    pub n_folds: usize,
    pub assignment: Vec<usize>,
    pub scheme: FoldScheme,
}

impl FoldPlan {
    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.assignment[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.assignment[i] != fold).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_folds];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }

    /// The plan with its assignment reordered by `perm` (new row i is old row `perm[i]`).
    pub fn permuted(&self, perm: &[usize]) -> FoldPlan {
        FoldPlan {
            n_folds: self.n_folds,
            assignment: perm.iter().map(|&i| self.assignment[i]).collect(),
            scheme: self.scheme.clone(),
        }
    }
}

pub fn make_folds(n_trs: usize, n_folds: usize, scheme: FoldScheme, seed: u64) -> Result<FoldPlan> {
    if n_folds == 0 {
        return Err(Error::Argument("n_folds must be >= 1".into()));
    }
    if n_folds > n_trs {
        return Err(Error::Argument(format!(
            "n_folds ({n_folds}) exceeds number of TRs ({n_trs})"
        )));
    }
    let assignment = match &scheme {
        FoldScheme::Contiguous => {
            let base = n_trs / n_folds;
            let extra = n_trs % n_folds;
            let mut a = Vec::with_capacity(n_trs);
            for f in 0..n_folds {
                let size = base + usize::from(f < extra);
                a.extend(std::iter::repeat_n(f, size));
            }
            a
        }
        FoldScheme::ByRun(lengths) => {
            if lengths.iter().sum::<usize>() != n_trs {
                return Err(Error::Argument(format!(
                    "run lengths sum to {}, expected {n_trs}",
                    lengths.iter().sum::<usize>()
                )));
            }
            if lengths.len() < n_folds {
                return Err(Error::Argument(format!(
                    "{} runs cannot fill {n_folds} folds",
                    lengths.len()
                )));
            }
            if lengths.contains(&0) {
                return Err(Error::Argument("run lengths must be >= 1".into()));
            }
            let mut order: Vec<usize> = (0..lengths.len()).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let mut run_fold = vec![0; lengths.len()];
            for (i, &run) in order.iter().enumerate() {
                run_fold[run] = i % n_folds;
            }
            lengths
                .iter()
                .zip(&run_fold)
                .flat_map(|(&len, &f)| std::iter::repeat_n(f, len))
                .collect()
        }
    };
    Ok(FoldPlan {
        n_folds,
        assignment,
        scheme,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub r: Vec<f64>,
    /// For excluded voxels this holds the first lambda of the grid.
    pub chosen_lambda: Vec<f64>,
    /// `n_folds x N_V`, fold-wise r at each voxel's chosen lambda.
    pub per_fold_r: DenseMatrix,
    pub excluded_mask: Vec<bool>,
}

impl CvReport {
    pub fn n_voxels(&self) -> usize {
        self.r.len()
    }

    pub fn mean_r(&self) -> f64 {
        self.r.iter().sum::<f64>() / self.r.len().max(1) as f64
    }

    /// Writes `r.vem`, `chosen_lambda.vem`, `per_fold_r.vem` and `excluded.vem`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_matrix(&DenseMatrix::row_vector(self.r.clone()), dir.join("r.vem"))?;
        write_matrix(
            &DenseMatrix::row_vector(self.chosen_lambda.clone()),
            dir.join("chosen_lambda.vem"),
        )?;
        write_matrix(&self.per_fold_r, dir.join("per_fold_r.vem"))?;
        write_matrix(
            &DenseMatrix::row_vector(
                self.excluded_mask
                    .iter()
                    .map(|&e| if e { 1.0 } else { 0.0 })
                    .collect(),
            ),
            dir.join("excluded.vem"),
        )
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let r = read_matrix(dir.join("r.vem"))?.into_data();
        let chosen_lambda = read_matrix(dir.join("chosen_lambda.vem"))?.into_data();
        let per_fold_r = read_matrix(dir.join("per_fold_r.vem"))?;
        let excluded_mask = read_excluded(dir, r.len())?;
        Ok(CvReport {
            r,
            chosen_lambda,
            per_fold_r,
            excluded_mask,
        })
    }
}

/// Reads `excluded.vem` from `dir` if it exists, else all-false.
pub fn read_excluded(dir: &Path, n: usize) -> Result<Vec<bool>> {
    let p = dir.join("excluded.vem");
    if !p.exists() {
        return Ok(vec![false; n]);
    }
    let m = read_matrix(&p)?;
    if m.data().len() != n {
        return Err(Error::Shape(format!(
            "{} has {} entries, expected {n}",
            p.display(),
            m.data().len()
        )));
    }
    Ok(m.data().iter().map(|&v| v != 0.0).collect())
}

enum FoldModel {
    Svd {
        fact: Factorization,
        /// Standardized test design times V, row-major `n_test x k`.
        test_proj: DenseMatrix,
        /// `U^T x` per voxel.
        utx: Vec<Vec<f64>>,
    },
    Lasso {
        test_design: DenseMatrix,
        /// `[voxel][lambda]` standardized-scale weights.
        weights: Vec<Vec<Vec<f64>>>,
    },
}

/// One fold's fitted path and held-out scores.
pub struct FoldFit {
    pub fold: usize,
    pub test_idx: Vec<usize>,
    /// Statistics of the training TRs only.
    pub standardizer: Standardizer,
    /// `[lambda][voxel]` Pearson r on the held-out TRs (0 when undefined).
    pub fold_r: Vec<Vec<f64>>,
    model: FoldModel,
}

fn matvec(m: &DenseMatrix, v: &[f64]) -> Vec<f64> {
    (0..m.rows())
        .map(|r| m.row(r).iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

impl FoldFit {
    /// Standardized-scale prediction of voxel `v` on the test TRs.
    fn predict_std(&self, v: usize, lambda_idx: usize, lambdas: &[f64]) -> Vec<f64> {
        if self.standardizer.excluded[v] {
            return vec![0.0; self.test_idx.len()];
        }
        match &self.model {
            FoldModel::Svd { fact, test_proj, utx } => {
                let l = lambdas[lambda_idx];
                let coef: Vec<f64> = utx[v]
                    .iter()
                    .zip(&fact.s)
                    .map(|(u, &s)| u * Factorization::shrink(s, l))
                    .collect();
                matvec(test_proj, &coef)
            }
            FoldModel::Lasso {
                test_design,
                weights,
            } => matvec(test_design, &weights[v][lambda_idx]),
        }
    }

    /// Raw-scale prediction of voxel `v` on the test TRs.
    pub fn predict(&self, v: usize, lambda_idx: usize, lambdas: &[f64]) -> Vec<f64> {
        let (sx, mx) = (self.standardizer.x_scale[v], self.standardizer.x_mean[v]);
        self.predict_std(v, lambda_idx, lambdas)
            .into_iter()
            .map(|p| p * sx + mx)
            .collect()
    }
}

fn check_inputs(z: &DenseMatrix, x: &DenseMatrix, plan: &FoldPlan, cfg: &RidgeConfig) -> Result<()> {
    cfg.validate()?;
    if z.rows() != x.rows() || z.rows() != plan.len() {
        return Err(Error::Shape(format!(
            "design has {} rows, BOLD {} rows, fold plan {} entries",
            z.rows(),
            x.rows(),
            plan.len()
        )));
    }
    for (f, &size) in plan.fold_sizes().iter().enumerate() {
        if size < 3 {
            return Err(Error::Argument(format!(
                "fold {f} has {size} TRs; at least 3 are needed for a correlation"
            )));
        }
    }
    Ok(())
}

/// Fits the lambda path for one fold and scores it on the held-out TRs.
pub fn fit_fold(
    z: &DenseMatrix,
    x: &DenseMatrix,
    plan: &FoldPlan,
    fold: usize,
    cfg: &RidgeConfig,
) -> Result<FoldFit> {
    if fold >= plan.n_folds {
        return Err(Error::Index(format!("fold {fold} out of range")));
    }
    check_inputs(z, x, plan, cfg)?;
    let train_idx = plan.train_indices(fold);
    let test_idx = plan.test_indices(fold);
    let (z_train, x_train) = (z.select_rows(&train_idx), x.select_rows(&train_idx));
    let z_test = z.select_rows(&test_idx);
    let x_test = x.select_rows(&test_idx);

    let stdz = Standardizer::fit(&z_train, &x_train, cfg.standardize, cfg.fit_intercept);
    let zs_train = stdz.apply_z(&z_train);
    let zs_test = stdz.apply_z(&z_test);
    let xs = stdz.apply_x_columns(&x_train);
    let nv = x.cols();
    let d = z.cols();

    let model = match cfg.penalty {
        Penalty::L2 => {
            let fact = Factorization::new(&zs_train)?;
            fact.check_lambdas(&cfg.lambdas, train_idx.len(), d)?;
            let test_proj = zs_test.matmul(&fact.v)?;
            let utx: Vec<Vec<f64>> = xs
                .par_chunks(BLOCK_COLS)
                .flat_map_iter(|block| block.iter().map(|c| fact.project(c)))
                .collect();
            FoldModel::Svd {
                fact,
                test_proj,
                utx,
            }
        }
        Penalty::L1 => {
            let z_cols: Vec<Vec<f64>> = (0..d).map(|c| zs_train.column(c)).collect();
            let norms: Vec<f64> = z_cols.iter().map(|c| c.iter().map(|v| v * v).sum()).collect();
            let weights = xs
                .par_iter()
                .enumerate()
                .map(|(v, col)| {
                    if stdz.excluded[v] {
                        return Ok(vec![vec![0.0; d]; cfg.lambdas.len()]);
                    }
                    cfg.lambdas
                        .iter()
                        .map(|&l| lasso_column(&z_cols, &norms, col, l))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            FoldModel::Lasso {
                test_design: zs_test,
                weights,
            }
        }
    };

    let mut fit = FoldFit {
        fold,
        test_idx,
        standardizer: stdz,
        fold_r: Vec::new(),
        model,
    };
    let x_test_cols: Vec<Vec<f64>> = (0..nv).map(|c| x_test.column(c)).collect();
    let per_voxel: Vec<Vec<f64>> = (0..nv)
        .into_par_iter()
        .with_min_len(BLOCK_COLS)
        .map(|v| {
            (0..cfg.lambdas.len())
                .map(|li| {
                    let pred = fit.predict_std(v, li, &cfg.lambdas);
                    pearson(&pred, &x_test_cols[v]).unwrap_or(0.0)
                })
                .collect()
        })
        .collect();
    fit.fold_r = (0..cfg.lambdas.len())
        .map(|li| per_voxel.iter().map(|r| r[li]).collect())
        .collect();
    Ok(fit)
}

pub fn cross_validate(
    z: &DenseMatrix,
    x: &DenseMatrix,
    plan: &FoldPlan,
    cfg: &RidgeConfig,
) -> Result<CvReport> {
    check_inputs(z, x, plan, cfg)?;
    let nv = x.cols();
    let n_lambda = cfg.lambdas.len();
    let folds: Vec<FoldFit> = (0..plan.n_folds)
        .into_par_iter()
        .map(|f| fit_fold(z, x, plan, f, cfg))
        .collect::<Result<_>>()?;

    let excluded: Vec<bool> = (0..nv)
        .map(|v| {
            let first = x.get(0, v);
            (1..x.rows()).all(|r| x.get(r, v) == first)
        })
        .collect();

    // pooled out-of-fold r at every lambda; the best one is chosen, first wins ties
    let x_cols: Vec<Vec<f64>> = (0..nv).map(|c| x.column(c)).collect();
    let scored: Vec<(usize, f64)> = (0..nv)
        .into_par_iter()
        .with_min_len(BLOCK_COLS)
        .map(|v| {
            if excluded[v] {
                return (0, 0.0);
            }
            let mut best = (0, f64::NEG_INFINITY);
            let mut pooled = vec![0.0; x.rows()];
            for li in 0..n_lambda {
                for f in &folds {
                    let pred = f.predict(v, li, &cfg.lambdas);
                    for (&i, p) in f.test_idx.iter().zip(pred) {
                        pooled[i] = p;
                    }
                }
                let r = pearson(&pooled, &x_cols[v]).unwrap_or(0.0);
                if r > best.1 {
                    best = (li, r);
                }
            }
            best
        })
        .collect();
    let chosen: Vec<usize> = scored.iter().map(|s| s.0).collect();
    let r: Vec<f64> = scored.iter().map(|s| s.1).collect();

    let mut per_fold_r = DenseMatrix::zeros(plan.n_folds, nv);
    for (fi, f) in folds.iter().enumerate() {
        for v in 0..nv {
            let val = if excluded[v] { 0.0 } else { f.fold_r[chosen[v]][v] };
            per_fold_r.set(fi, v, val);
        }
    }
    let chosen_lambda = (0..nv)
        .map(|v| {
            if excluded[v] {
                cfg.lambdas[0]
            } else {
                cfg.lambdas[chosen[v]]
            }
        })
        .collect();
    Ok(CvReport {
        r,
        chosen_lambda,
        per_fold_r,
        excluded_mask: excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ridge::{fit_path, predict};
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    #[test]
    fn contiguous_even_split() {
        let p = make_folds(10, 5, FoldScheme::Contiguous, 0).unwrap();
        assert_eq!(p.assignment, vec![0, 0, 1, 1, 2, 2, 3, 3, 4, 4]);
    }

    #[test]
    fn contiguous_remainder() {
        let p = make_folds(11, 5, FoldScheme::Contiguous, 0).unwrap();
        let mut sizes = p.fold_sizes();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 2, 2, 2, 3]);
        assert!(p.assignment.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn too_many_folds() {
        assert!(make_folds(3, 5, FoldScheme::Contiguous, 0).is_err());
    }

    #[test]
    fn by_run_is_balanced_and_seeded() {
        let runs = vec![10, 12, 9, 11, 10, 8];
        let a = make_folds(60, 3, FoldScheme::ByRun(runs.clone()), 42).unwrap();
        let b = make_folds(60, 3, FoldScheme::ByRun(runs.clone()), 42).unwrap();
        assert_eq!(a, b);
        // each run lands whole in one fold; 2 runs per fold
        let mut start = 0;
        let mut runs_per_fold = [0; 3];
        for &len in &runs {
            let f = a.assignment[start];
            assert!(a.assignment[start..start + len].iter().all(|&x| x == f));
            runs_per_fold[f] += 1;
            start += len;
        }
        assert_eq!(runs_per_fold, [2, 2, 2]);

        // Same thing computed independently: shuffle run ids, deal round-robin.
        let mut order: Vec<usize> = (0..6).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(42));
        for (i, &run) in order.iter().enumerate() {
            let start: usize = runs[..run].iter().sum();
            assert_eq!(a.assignment[start], i % 3);
        }
    }

    fn normal(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
        DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn fold_scores_match_explicit_fit_and_predict() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let z = normal(40, 5, &mut rng);
        let x = normal(40, 4, &mut rng);
        let plan = make_folds(40, 4, FoldScheme::Contiguous, 0).unwrap();
        let cfg = RidgeConfig::with_lambdas(vec![0.1, 1.0, 10.0]);
        let fit = fit_fold(&z, &x, &plan, 2, &cfg).unwrap();
        let train = plan.train_indices(2);
        let path = fit_path(&z.select_rows(&train), &x.select_rows(&train), &cfg).unwrap();
        let z_test = z.select_rows(&fit.test_idx);
        for (li, w) in path.iter().enumerate() {
            let pred = predict(w, &z_test).unwrap();
            for v in 0..4 {
                let fast = fit.predict(v, li, &cfg.lambdas);
                let slow = pred.column(v);
                for (a, b) in fast.iter().zip(&slow) {
                    assert!((a - b).abs() < 1e-10);
                }
                let r = pearson(&slow, &x.select_rows(&fit.test_idx).column(v)).unwrap();
                assert!((fit.fold_r[li][v] - r).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn small_fold_rejected() {
        let z = DenseMatrix::zeros(10, 2);
        let x = DenseMatrix::zeros(10, 2);
        let plan = make_folds(10, 5, FoldScheme::Contiguous, 0).unwrap();
        let err = cross_validate(&z, &x, &plan, &RidgeConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Argument(_)));
    }

    #[test]
    fn excluded_voxel_scores_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let z = normal(30, 3, &mut rng);
        let mut x = normal(30, 2, &mut rng);
        for r in 0..30 {
            x.set(r, 1, 2.5);
        }
        let plan = make_folds(30, 3, FoldScheme::Contiguous, 0).unwrap();
        let cfg = RidgeConfig::default();
        let rep = cross_validate(&z, &x, &plan, &cfg).unwrap();
        assert_eq!(rep.excluded_mask, vec![false, true]);
        assert_eq!(rep.r[1], 0.0);
        assert!(cfg.lambdas.contains(&rep.chosen_lambda[0]));
    }

    #[test]
    fn report_save_load() {
        let dir = tempfile::tempdir().unwrap();
        let rep = CvReport {
            r: vec![0.1, 0.2],
            chosen_lambda: vec![1.0, 10.0],
            per_fold_r: DenseMatrix::new(2, 2, vec![0.0, 0.1, 0.2, 0.3]).unwrap(),
            excluded_mask: vec![false, true],
        };
        rep.save(dir.path()).unwrap();
        assert_eq!(CvReport::load(dir.path()).unwrap(), rep);
    }
}
