//! Multi-target regularized regression for all voxels at once.
//!
//! The L2 path is solved from a single thin SVD of the (preprocessed) design
//! matrix, `Z = U S V^T`, so every lambda and every voxel share one
//! factorization:
//!
//! ```text
//! W(lambda) = V diag(s / (s^2 + lambda)) U^T X
//! ```
//!
//! Weights are always returned on the raw data scale, with any centering or
//! standardization folded into the coefficients and intercepts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix_io::DenseMatrix;

/// Voxel columns per parallel work item.
const BLOCK_COLS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Penalty {
    #[default]
    L2,
    L1,
}

impl std::str::FromStr for Penalty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" | "ridge" => Ok(Penalty::L2),
            "l1" | "lasso" => Ok(Penalty::L1),
            other => Err(Error::Argument(format!("unknown penalty `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RidgeConfig {
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default)]
    pub penalty: Penalty,
    #[serde(default = "yes")]
    pub standardize: bool,
    #[serde(default = "yes")]
    pub fit_intercept: bool,
}

fn yes() -> bool {
    true
}

/// 10 log-spaced values from 1e-2 to 1e6.
pub fn default_lambdas() -> Vec<f64> {
    (0..10)
        .map(|i| 10f64.powf(-2.0 + 8.0 * i as f64 / 9.0))
        .collect()
}

impl Default for RidgeConfig {
    fn default() -> Self {
        RidgeConfig {
            lambdas: default_lambdas(),
            penalty: Penalty::L2,
            standardize: true,
            fit_intercept: true,
        }
    }
}

impl RidgeConfig {
    pub fn with_lambdas(lambdas: Vec<f64>) -> Self {
        RidgeConfig {
            lambdas,
            ..Default::default()
        }
    }

    pub fn plain(lambdas: Vec<f64>) -> Self {
        RidgeConfig {
            lambdas,
            penalty: Penalty::L2,
            standardize: false,
            fit_intercept: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambdas.is_empty() {
            return Err(Error::Validation("lambdas must be non-empty".into()));
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return Err(Error::Validation(format!(
                "lambdas must be finite and >= 0 (found {l})"
            )));
        }
        if self.lambdas.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Validation("lambdas must be sorted ascending".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderWeights {
    /// `N_D x N_V` coefficients on the raw feature scale.
    pub weights: DenseMatrix,
    pub intercepts: Vec<f64>,
    pub chosen_lambda: Vec<f64>,
    /// Zero-variance voxels that were not fitted.
    pub excluded: Vec<bool>,
}

/// Training-set centering/scaling for the design and the targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub z_mean: Vec<f64>,
    pub z_scale: Vec<f64>,
    pub x_mean: Vec<f64>,
    pub x_scale: Vec<f64>,
    pub excluded: Vec<bool>,
}

fn column_stats(m: &DenseMatrix, c: usize, center: bool, scale: bool) -> (f64, f64) {
    let n = m.rows() as f64;
    let mean = (0..m.rows()).map(|r| m.get(r, c)).sum::<f64>() / n;
    let mu = if center { mean } else { 0.0 };
    let sd = if scale {
        ((0..m.rows()).map(|r| (m.get(r, c) - mu).powi(2)).sum::<f64>() / n).sqrt()
    } else {
        1.0
    };
    (mu, if sd > 0.0 { sd } else { 1.0 })
}

fn is_constant(m: &DenseMatrix, c: usize) -> bool {
    let first = m.get(0, c);
    (1..m.rows()).all(|r| m.get(r, c) == first)
}

impl Standardizer {
    pub fn fit(z: &DenseMatrix, x: &DenseMatrix, standardize: bool, fit_intercept: bool) -> Self {
        let (z_mean, z_scale) = (0..z.cols())
            .map(|c| column_stats(z, c, fit_intercept, standardize))
            .unzip();
        let excluded: Vec<bool> = (0..x.cols()).map(|c| is_constant(x, c)).collect();
        let (x_mean, x_scale) = (0..x.cols())
            .map(|c| {
                let (mu, sd) = column_stats(x, c, fit_intercept, standardize);
                if excluded[c] {
                    (mu, 1.0)
                } else {
                    (mu, sd)
                }
            })
            .unzip();
        Standardizer {
            z_mean,
            z_scale,
            x_mean,
            x_scale,
            excluded,
        }
    }

    pub fn apply_z(&self, z: &DenseMatrix) -> DenseMatrix {
        DenseMatrix::from_fn(z.rows(), z.cols(), |r, c| {
            (z.get(r, c) - self.z_mean[c]) / self.z_scale[c]
        })
    }

    /// Standardized target columns, one `Vec` per voxel.
    pub fn apply_x_columns(&self, x: &DenseMatrix) -> Vec<Vec<f64>> {
        (0..x.cols())
            .map(|c| {
                (0..x.rows())
                    .map(|r| (x.get(r, c) - self.x_mean[c]) / self.x_scale[c])
                    .collect()
            })
            .collect()
    }

    /// Maps a standardized-scale weight column for voxel `v` to raw-scale
    /// coefficients and intercept.
    pub fn to_raw(&self, v: usize, w_std: &[f64]) -> (Vec<f64>, f64) {
        let sx = self.x_scale[v];
        let w: Vec<f64> = w_std
            .iter()
            .zip(&self.z_scale)
            .map(|(w, sz)| w * sx / sz)
            .collect();
        let b = self.x_mean[v] - w.iter().zip(&self.z_mean).map(|(w, m)| w * m).sum::<f64>();
        (w, b)
    }
}

/// Thin SVD of the preprocessed design.
pub(crate) struct Factorization {
    /// `n x k`, column-major: `u[j]` is the j-th left singular vector.
    pub u_cols: Vec<Vec<f64>>,
    pub s: Vec<f64>,
    /// `d x k`, row-major.
    pub v: DenseMatrix,
}

impl Factorization {
    pub fn new(zs: &DenseMatrix) -> Result<Self> {
        let (n, d) = zs.shape();
        if n == 0 || d == 0 {
            return Ok(Factorization {
                u_cols: vec![],
                s: vec![],
                v: DenseMatrix::zeros(d, 0),
            });
        }
        let svd = nalgebra::linalg::SVD::new(zs.to_nalgebra(), true, true);
        let u = svd.u.ok_or_else(|| Error::Domain("SVD did not produce U".into()))?;
        let vt = svd
            .v_t
            .ok_or_else(|| Error::Domain("SVD did not produce V".into()))?;
        let k = svd.singular_values.len();
        let u_cols = (0..k).map(|j| u.column(j).iter().copied().collect()).collect();
        let v = DenseMatrix::from_nalgebra(&vt.transpose());
        Ok(Factorization {
            u_cols,
            s: svd.singular_values.iter().copied().collect(),
            v,
        })
    }

    /// Number of directions that are numerically null (including `d - k`
    /// when there are fewer samples than features).
    pub fn null_dim(&self, n: usize, d: usize) -> usize {
        let smax = self.s.iter().copied().fold(0.0, f64::max);
        let tol = smax * n.max(d) as f64 * f64::EPSILON;
        let tiny = self.s.iter().filter(|&&s| s <= tol).count();
        tiny + d.saturating_sub(self.s.len())
    }

    pub fn check_lambdas(&self, lambdas: &[f64], n: usize, d: usize) -> Result<()> {
        if lambdas.iter().any(|&l| l == 0.0) {
            let null_dim = self.null_dim(n, d);
            if null_dim > 0 {
                return Err(Error::Degenerate { null_dim });
            }
        }
        Ok(())
    }

    pub fn project(&self, x_col: &[f64]) -> Vec<f64> {
        self.u_cols
            .iter()
            .map(|u| u.iter().zip(x_col).map(|(a, b)| a * b).sum())
            .collect()
    }

    #[inline]
    pub fn shrink(s: f64, lambda: f64) -> f64 {
        let den = s * s + lambda;
        if den == 0.0 {
            0.0
        } else {
            s / den
        }
    }

    /// `V diag(s/(s^2+lambda)) utx`, a standardized-scale weight column.
    pub fn weights(&self, utx: &[f64], lambda: f64) -> Vec<f64> {
        let scaled: Vec<f64> = utx
            .iter()
            .zip(&self.s)
            .map(|(u, &s)| u * Self::shrink(s, lambda))
            .collect();
        (0..self.v.rows())
            .map(|j| self.v.row(j).iter().zip(&scaled).map(|(a, b)| a * b).sum())
            .collect()
    }
}

fn check_shapes(z: &DenseMatrix, x: &DenseMatrix) -> Result<()> {
    if z.rows() != x.rows() {
        return Err(Error::Shape(format!(
            "design is {}x{} but targets are {}x{}",
            z.rows(),
            z.cols(),
            x.rows(),
            x.cols()
        )));
    }
    if z.rows() < 2 {
        return Err(Error::Argument(format!(
            "need at least 2 samples, got {}",
            z.rows()
        )));
    }
    Ok(())
}

/// Assembles per-voxel raw weight columns into one `EncoderWeights` per lambda.
fn assemble(
    d: usize,
    lambdas: &[f64],
    excluded: &[bool],
    columns: Vec<Vec<(Vec<f64>, f64)>>,
) -> Vec<EncoderWeights> {
    let nv = columns.len();
    lambdas
        .iter()
        .enumerate()
        .map(|(li, &lambda)| {
            let mut weights = DenseMatrix::zeros(d, nv);
            let mut intercepts = vec![0.0; nv];
            for (v, col) in columns.iter().enumerate() {
                let (w, b) = &col[li];
                for (j, &wj) in w.iter().enumerate() {
                    weights.set(j, v, wj);
                }
                intercepts[v] = *b;
            }
            EncoderWeights {
                weights,
                intercepts,
                chosen_lambda: vec![lambda; nv],
                excluded: excluded.to_vec(),
            }
        })
        .collect()
}

/// Ridge (or lasso, per `cfg.penalty`) solutions for every lambda in `cfg`.
pub fn fit_path(z: &DenseMatrix, x: &DenseMatrix, cfg: &RidgeConfig) -> Result<Vec<EncoderWeights>> {
    match cfg.penalty {
        Penalty::L2 => fit_ridge_path(z, x, cfg),
        Penalty::L1 => cfg
            .lambdas
            .iter()
            .map(|&l| fit_lasso_with(z, x, l, cfg.standardize, cfg.fit_intercept))
            .collect(),
    }
}

/// L2 solutions for every lambda from one shared factorization.
pub fn fit_ridge_path(
    z: &DenseMatrix,
    x: &DenseMatrix,
    cfg: &RidgeConfig,
) -> Result<Vec<EncoderWeights>> {
    cfg.validate()?;
    check_shapes(z, x)?;
    let (n, d) = z.shape();
    let stdz = Standardizer::fit(z, x, cfg.standardize, cfg.fit_intercept);
    let zs = stdz.apply_z(z);
    let fact = Factorization::new(&zs)?;
    fact.check_lambdas(&cfg.lambdas, n, d)?;
    let xs = stdz.apply_x_columns(x);

    let columns: Vec<Vec<(Vec<f64>, f64)>> = xs
        .par_chunks(BLOCK_COLS)
        .enumerate()
        .flat_map_iter(|(b, block)| {
            let (fact, stdz) = (&fact, &stdz);
            block.iter().enumerate().map(move |(i, col)| {
                let v = b * BLOCK_COLS + i;
                if stdz.excluded[v] {
                    let b0 = stdz.x_mean[v];
                    return cfg.lambdas.iter().map(|_| (vec![0.0; d], b0)).collect();
                }
                let utx = fact.project(col);
                cfg.lambdas
                    .iter()
                    .map(|&l| stdz.to_raw(v, &fact.weights(&utx, l)))
                    .collect()
            })
        })
        .collect();
    Ok(assemble(d, &cfg.lambdas, &stdz.excluded, columns))
}

/// `Z W + intercept`.
pub fn predict(w: &EncoderWeights, z: &DenseMatrix) -> Result<DenseMatrix> {
    if z.cols() != w.weights.rows() {
        return Err(Error::Shape(format!(
            "design is {}x{} but weights are {}x{}",
            z.rows(),
            z.cols(),
            w.weights.rows(),
            w.weights.cols()
        )));
    }
    let mut out = z.matmul(&w.weights)?;
    let nv = out.cols();
    for row in out.data_mut().chunks_mut(nv.max(1)) {
        for (o, b) in row.iter_mut().zip(&w.intercepts) {
            *o += b;
        }
    }
    Ok(out)
}

pub const LASSO_TOL: f64 = 1e-8;
pub const LASSO_MAX_SWEEPS: usize = 10_000;

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Coordinate descent for `0.5 ||Z w - x||^2 + lambda ||w||_1` on one column.
/// `z_cols` are the design columns, `norms` their squared norms.
pub(crate) fn lasso_column(
    z_cols: &[Vec<f64>],
    norms: &[f64],
    x: &[f64],
    lambda: f64,
) -> Result<Vec<f64>> {
    let d = z_cols.len();
    let mut w = vec![0.0; d];
    let mut resid = x.to_vec();
    let mut delta_max = f64::INFINITY;
    for _ in 0..LASSO_MAX_SWEEPS {
        delta_max = 0.0f64;
        for j in 0..d {
            if norms[j] == 0.0 {
                continue;
            }
            let zj = &z_cols[j];
            let rho = zj.iter().zip(&resid).map(|(a, b)| a * b).sum::<f64>() + norms[j] * w[j];
            let new = soft_threshold(rho, lambda) / norms[j];
            let delta = new - w[j];
            if delta != 0.0 {
                for (r, a) in resid.iter_mut().zip(zj) {
                    *r -= delta * a;
                }
                w[j] = new;
                delta_max = delta_max.max(delta.abs());
            }
        }
        if delta_max < LASSO_TOL {
            return Ok(w);
        }
    }
    Err(Error::NotConverged { delta: delta_max })
}

/// Lasso on raw data (no centering or scaling).
pub fn fit_lasso(z: &DenseMatrix, x: &DenseMatrix, lambda: f64) -> Result<EncoderWeights> {
    fit_lasso_with(z, x, lambda, false, false)
}

pub fn fit_lasso_with(
    z: &DenseMatrix,
    x: &DenseMatrix,
    lambda: f64,
    standardize: bool,
    fit_intercept: bool,
) -> Result<EncoderWeights> {
    check_shapes(z, x)?;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Argument(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let d = z.cols();
    let stdz = Standardizer::fit(z, x, standardize, fit_intercept);
    let zs = stdz.apply_z(z);
    let z_cols: Vec<Vec<f64>> = (0..d).map(|c| zs.column(c)).collect();
    let norms: Vec<f64> = z_cols.iter().map(|c| c.iter().map(|v| v * v).sum()).collect();
    let xs = stdz.apply_x_columns(x);
    let columns: Vec<Vec<(Vec<f64>, f64)>> = xs
        .par_iter()
        .enumerate()
        .map(|(v, col)| {
            if stdz.excluded[v] {
                return Ok(vec![(vec![0.0; d], stdz.x_mean[v])]);
            }
            let w = lasso_column(&z_cols, &norms, col, lambda)?;
            Ok(vec![stdz.to_raw(v, &w)])
        })
        .collect::<Result<_>>()?;
    Ok(assemble(d, &[lambda], &stdz.excluded, columns).remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
        DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    /// (Z^T Z + lambda I)^{-1} Z^T X via an LU solve.
    fn normal_equations(z: &DenseMatrix, x: &DenseMatrix, lambda: f64) -> DenseMatrix {
        let zn = z.to_nalgebra();
        let xn = x.to_nalgebra();
        let d = z.cols();
        let a = zn.transpose() * &zn + nalgebra::DMatrix::identity(d, d) * lambda;
        let rhs = zn.transpose() * xn;
        DenseMatrix::from_nalgebra(&a.lu().solve(&rhs).unwrap())
    }

    #[test]
    fn identity_design() {
        let z = DenseMatrix::identity(2);
        let x = DenseMatrix::new(2, 1, vec![1.0, 2.0]).unwrap();
        let w = fit_ridge_path(&z, &x, &RidgeConfig::plain(vec![1.0])).unwrap();
        assert!((w[0].weights.get(0, 0) - 0.5).abs() < 1e-15);
        assert!((w[0].weights.get(1, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lambda_zero_is_ols() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = random(15, 4, &mut rng);
        let x = random(15, 2, &mut rng);
        let w = fit_ridge_path(&z, &x, &RidgeConfig::plain(vec![0.0])).unwrap();
        let ols = normal_equations(&z, &x, 0.0);
        assert!(w[0].weights.max_abs_diff(&ols) < 1e-10);
    }

    #[test]
    fn matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let z = random(12, 4, &mut rng);
        let x = random(12, 3, &mut rng);
        let w = fit_ridge_path(&z, &x, &RidgeConfig::plain(vec![0.5])).unwrap();
        assert!(w[0].weights.max_abs_diff(&normal_equations(&z, &x, 0.5)) < 1e-10);
    }

    #[test]
    fn rank_deficient_lambda_zero_errors() {
        let z = DenseMatrix::new(3, 2, vec![1.0, 2.0, 2.0, 4.0, 3.0, 6.0]).unwrap();
        let x = DenseMatrix::new(3, 1, vec![1.0, 0.0, 1.0]).unwrap();
        let err = fit_ridge_path(&z, &x, &RidgeConfig::plain(vec![0.0, 1.0])).unwrap_err();
        assert!(matches!(err, Error::Degenerate { null_dim: 1 }));
        // Positive lambda is fine.
        assert!(fit_ridge_path(&z, &x, &RidgeConfig::plain(vec![1.0])).is_ok());
    }

    #[test]
    fn intercept_and_standardization_fold_into_raw_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = DenseMatrix::from_fn(40, 3, |_, c| rng.random_range(-1.0..1.0) * (c + 1) as f64 + 5.0);
        let w_true = DenseMatrix::new(3, 2, vec![1.0, -2.0, 0.5, 0.0, -1.5, 3.0]).unwrap();
        let mut x = z.matmul(&w_true).unwrap();
        for r in 0..40 {
            x.set(r, 0, x.get(r, 0) + 10.0);
            x.set(r, 1, x.get(r, 1) - 4.0);
        }
        let cfg = RidgeConfig::with_lambdas(vec![0.0]);
        let w = fit_ridge_path(&z, &x, &cfg).unwrap();
        assert!(w[0].weights.max_abs_diff(&w_true) < 1e-9);
        assert!((w[0].intercepts[0] - 10.0).abs() < 1e-8);
        let pred = predict(&w[0], &z).unwrap();
        assert!(pred.max_abs_diff(&x) < 1e-8);
    }

    #[test]
    fn constant_voxel_excluded() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z = random(10, 2, &mut rng);
        let mut x = random(10, 2, &mut rng);
        for r in 0..10 {
            x.set(r, 1, 3.0);
        }
        let w = fit_ridge_path(&z, &x, &RidgeConfig::with_lambdas(vec![1.0])).unwrap();
        assert_eq!(w[0].excluded, vec![false, true]);
        assert_eq!(w[0].weights.get(0, 1), 0.0);
        assert_eq!(w[0].intercepts[1], 3.0);
    }

    #[test]
    fn predict_edge_cases() {
        let z = DenseMatrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let zero = EncoderWeights {
            weights: DenseMatrix::zeros(2, 2),
            intercepts: vec![0.5, -1.0],
            chosen_lambda: vec![1.0; 2],
            excluded: vec![false; 2],
        };
        assert_eq!(predict(&zero, &z).unwrap().data(), &[0.5, -1.0, 0.5, -1.0]);
        let ident = EncoderWeights {
            weights: DenseMatrix::identity(2),
            intercepts: vec![0.0; 2],
            ..zero.clone()
        };
        assert_eq!(predict(&ident, &z).unwrap(), z);
        let err = predict(&zero, &DenseMatrix::zeros(2, 3)).unwrap_err();
        assert!(err.to_string().contains("2x3") && err.to_string().contains("2x2"));
    }

    #[test]
    fn lasso_kills_everything_above_max_correlation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z = random(8, 3, &mut rng);
        let x = random(8, 1, &mut rng);
        let zt_x = z.transpose().matmul(&x).unwrap();
        let lmax = zt_x.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let w = fit_lasso(&z, &x, lmax * 1.0001).unwrap();
        assert!(w.weights.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lasso_lambda_zero_is_ols() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let z = random(8, 3, &mut rng);
        let x = random(8, 2, &mut rng);
        let w = fit_lasso(&z, &x, 0.0).unwrap();
        assert!(w.weights.max_abs_diff(&normal_equations(&z, &x, 0.0)) < 1e-6);
    }

    #[test]
    fn config_validation() {
        assert!(RidgeConfig::plain(vec![]).validate().is_err());
        assert!(RidgeConfig::plain(vec![1.0, 0.5]).validate().is_err());
        assert!(RidgeConfig::plain(vec![-1.0]).validate().is_err());
        assert!(RidgeConfig::plain(vec![f64::NAN]).validate().is_err());
        assert!(RidgeConfig::default().validate().is_ok());
        let l = default_lambdas();
        assert_eq!(l.len(), 10);
        assert!((l[0] - 1e-2).abs() < 1e-15 && (l[9] - 1e6).abs() < 1e-6);
    }
}
