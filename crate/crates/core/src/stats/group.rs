use serde::{Deserialize, Serialize};

use super::fdr::fdr_bh;
use super::special::student_t_cdf;
use super::ttest::paired_ttest;
use crate::cv::CvReport;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alternative {
    #[default]
    TwoSided,
    AGreater,
    BGreater,
}

/// Sign of the group effect at one voxel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    AGreater,
    BGreater,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareOptions {
    pub alpha: f64,
    pub alternative: Alternative,
    /// Apply `atanh` to correlations before testing.
    pub fisher_z: bool,
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions {
            alpha: 0.05,
            alternative: Alternative::TwoSided,
            fisher_z: false,
        }
    }
}

/// Voxel-wise group comparison. `t > 0` means B > A.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupStatMap {
    pub t: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub reject: Vec<bool>,
    pub df: usize,
    pub alternative: Alternative,
    pub direction: Vec<Direction>,
    pub alpha: f64,
}

impl GroupStatMap {
    pub fn rejected(&self) -> Vec<usize> {
        (0..self.reject.len()).filter(|&v| self.reject[v]).collect()
    }
}

fn fisher(r: f64) -> f64 {
    r.clamp(-1.0 + 1e-15, 1.0 - 1e-15).atanh()
}

/// Paired t-test across subjects at every voxel, then BH-FDR over voxels.
pub fn compare_models(
    reports_a: &[CvReport],
    reports_b: &[CvReport],
    opts: CompareOptions,
) -> Result<GroupStatMap> {
    let a: Vec<&[f64]> = reports_a.iter().map(|r| r.r.as_slice()).collect();
    let b: Vec<&[f64]> = reports_b.iter().map(|r| r.r.as_slice()).collect();
    compare_maps(&a, &b, opts)
}

/// [`compare_models`] on bare per-subject r maps.
pub fn compare_maps(maps_a: &[&[f64]], maps_b: &[&[f64]], opts: CompareOptions) -> Result<GroupStatMap> {
    if maps_a.len() != maps_b.len() {
        return Err(Error::Argument(format!(
            "{} subjects in A but {} in B",
            maps_a.len(),
            maps_b.len()
        )));
    }
    let s = maps_a.len();
    if s < 2 {
        return Err(Error::Argument(format!(
            "group comparison needs at least 2 subjects, got {s}"
        )));
    }
    let nv = maps_a[0].len();
    if maps_a.iter().chain(maps_b).any(|m| m.len() != nv) {
        return Err(Error::Shape("subject maps differ in voxel count".into()));
    }
    let df = s - 1;
    let tr = |r: f64| if opts.fisher_z { fisher(r) } else { r };

    let mut t = Vec::with_capacity(nv);
    let mut p = Vec::with_capacity(nv);
    for v in 0..nv {
        let av: Vec<f64> = maps_a.iter().map(|m| tr(m[v])).collect();
        let bv: Vec<f64> = maps_b.iter().map(|m| tr(m[v])).collect();
        let (tv, p2) = match paired_ttest(&bv, &av) {
            Ok(res) => (res.t, res.p),
            // every subject shows the same nonzero difference
            Err(Error::DegenerateTest { mean }) => (mean.signum() * f64::INFINITY, 0.0),
            Err(e) => return Err(e),
        };
        let pv = match opts.alternative {
            Alternative::TwoSided => p2,
            Alternative::BGreater => 1.0 - student_t_cdf(tv, df as f64),
            Alternative::AGreater => student_t_cdf(tv, df as f64),
        };
        t.push(tv);
        p.push(pv.clamp(0.0, 1.0));
    }
    let fdr = fdr_bh(&p, opts.alpha)?;
    let direction = t
        .iter()
        .map(|&tv| {
            if tv > 0.0 {
                Direction::BGreater
            } else if tv < 0.0 {
                Direction::AGreater
            } else {
                Direction::None
            }
        })
        .collect();
    Ok(GroupStatMap {
        t,
        p,
        q: fdr.q,
        reject: fdr.reject,
        df,
        alternative: opts.alternative,
        direction,
        alpha: opts.alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn maps(seed: u64, s: usize, nv: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..s)
            .map(|_| (0..nv).map(|_| rng.random_range(0.0..0.5)).collect())
            .collect()
    }

    fn refs(m: &[Vec<f64>]) -> Vec<&[f64]> {
        m.iter().map(|v| v.as_slice()).collect()
    }

    #[test]
    fn identical_models_reject_nothing() {
        let a = maps(1, 12, 50);
        let g = compare_maps(&refs(&a), &refs(&a), CompareOptions::default()).unwrap();
        assert!(g.rejected().is_empty());
        assert!(g.t.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn planted_shift_recovered() {
        let a = maps(2, 12, 60);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b: Vec<Vec<f64>> = a
            .iter()
            .map(|m| {
                m.iter()
                    .enumerate()
                    .map(|(v, &r)| r + if v < 10 { 0.1 } else { 0.0 } + rng.random_range(-1e-3..1e-3))
                    .collect()
            })
            .collect();
        let g = compare_maps(&refs(&a), &refs(&b), CompareOptions::default()).unwrap();
        assert_eq!(g.rejected(), (0..10).collect::<Vec<_>>());
        assert!(g.rejected().iter().all(|&v| g.direction[v] == Direction::BGreater));
        assert_eq!(g.df, 11);
    }

    #[test]
    fn single_subject_or_mismatch_errors() {
        let a = maps(4, 1, 5);
        assert!(compare_maps(&refs(&a), &refs(&a), CompareOptions::default()).is_err());
        let b = maps(4, 3, 5);
        let c = maps(5, 2, 5);
        assert!(compare_maps(&refs(&b), &refs(&c), CompareOptions::default()).is_err());
    }

    #[test]
    fn constant_offset_invariance() {
        let a = maps(6, 8, 30);
        let b = maps(7, 8, 30);
        let shift = |m: &[Vec<f64>]| -> Vec<Vec<f64>> {
            m.iter().map(|v| v.iter().map(|x| x + 0.3).collect()).collect()
        };
        let g1 = compare_maps(&refs(&a), &refs(&b), CompareOptions::default()).unwrap();
        let (a2, b2) = (shift(&a), shift(&b));
        let g2 = compare_maps(&refs(&a2), &refs(&b2), CompareOptions::default()).unwrap();
        for (x, y) in g1.t.iter().zip(&g2.t) {
            assert!((x - y).abs() < 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn one_sided_alternatives() {
        let a = maps(8, 10, 20);
        let b: Vec<Vec<f64>> = a.iter().enumerate().map(|(s, m)| m.iter().map(|x| x + 0.05 + 0.01 * s as f64).collect()).collect();
        let bg = compare_maps(&refs(&a), &refs(&b), CompareOptions { alternative: Alternative::BGreater, ..Default::default() }).unwrap();
        let ag = compare_maps(&refs(&a), &refs(&b), CompareOptions { alternative: Alternative::AGreater, ..Default::default() }).unwrap();
        assert!(bg.p.iter().all(|&p| p < 1e-3));
        assert!(ag.p.iter().all(|&p| p > 0.999));
    }
}
