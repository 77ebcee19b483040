use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FdrResult {
    pub reject: Vec<bool>,
    /// BH-adjusted p-values in the input order.
    pub q: Vec<f64>,
}

/// Benjamini-Hochberg step-up procedure.
pub fn fdr_bh(p: &[f64], alpha: f64) -> Result<FdrResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Argument(format!("alpha must be in (0, 1), got {alpha}")));
    }
    if let Some((i, v)) = p.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Argument(format!("p[{i}] = {v} is not in [0, 1]")));
    }
    let m = p.len();
    if m == 0 {
        return Ok(FdrResult {
            reject: vec![],
            q: vec![],
        });
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));

    let mf = m as f64;
    let cutoff = (0..m)
        .rev()
        .find(|&i| p[order[i]] <= (i + 1) as f64 * alpha / mf)
        .map(|i| p[order[i]]);

    let mut q = vec![0.0; m];
    let mut running = 1.0f64;
    for i in (0..m).rev() {
        let idx = order[i];
        running = running.min(mf * p[idx] / (i + 1) as f64);
        q[idx] = running.min(1.0);
    }
    let reject = match cutoff {
        Some(c) => p.iter().map(|&v| v <= c).collect(),
        None => vec![false; m],
    };
    Ok(FdrResult { reject, q })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_zero() {
        let r = fdr_bh(&[0.0; 4], 0.05).unwrap();
        assert!(r.reject.iter().all(|&x| x));
        assert!(r.q.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn worked_example() {
        let r = fdr_bh(&[0.01, 0.04, 0.03, 0.20], 0.05).unwrap();
        assert_eq!(r.reject, vec![true, false, false, false]);
        // q: sorted 0.01,0.03,0.04,0.20 -> 0.04, 0.0533.., 0.0533.., 0.20
        let expect = [0.04, 0.16 / 3.0, 0.16 / 3.0, 0.2];
        for (a, b) in r.q.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_test_at_threshold() {
        assert_eq!(fdr_bh(&[0.049], 0.05).unwrap().reject, vec![true]);
        assert_eq!(fdr_bh(&[0.051], 0.05).unwrap().reject, vec![false]);
    }

    #[test]
    fn empty_and_invalid() {
        assert!(fdr_bh(&[], 0.05).unwrap().reject.is_empty());
        assert!(fdr_bh(&[1.2], 0.05).is_err());
        assert!(fdr_bh(&[0.5], 0.0).is_err());
    }
}
