use super::special::student_t_two_sided;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    /// Two-sided p-value.
    pub p: f64,
    pub df: usize,
}

/// Paired t-test on `d = a - b`.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "paired samples of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let s = a.len();
    if s < 2 {
        return Err(Error::Argument(format!(
            "paired t-test needs at least 2 pairs, got {s}"
        )));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = s as f64;
    let mean = d.iter().sum::<f64>() / n;
    let df = s - 1;
    if d.iter().all(|&v| v == d[0]) {
        if d[0] == 0.0 {
            return Ok(TTest { t: 0.0, p: 1.0, df });
        }
        return Err(Error::DegenerateTest { mean: d[0] });
    }
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let t = mean / (var.sqrt() / n.sqrt());
    Ok(TTest {
        t,
        p: student_t_two_sided(t, df as f64),
        df,
    })
}
