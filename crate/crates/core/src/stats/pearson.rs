use crate::error::{Error, Result};

/// Sample Pearson correlation, clamped to `[-1, 1]`.
///
/// Returns [`Error::UndefinedCorrelation`] when either input has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "pearson on vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 3 {
        return Err(Error::Argument(format!(
            "pearson needs at least 3 samples, got {}",
            a.len()
        )));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if !(sab.is_finite() && saa.is_finite() && sbb.is_finite()) {
        return Err(Error::Domain("pearson on non-finite input".into()));
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn self_and_negation() {
        let v = [0.3, -1.2, 4.0, 2.2, 0.0];
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        assert!((pearson(&v, &v).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&v, &neg).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn worked_example() {
        let r = pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 2.0]).unwrap();
        assert!((r - 3f64.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn constant_is_undefined() {
        assert!(matches!(
            pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::UndefinedCorrelation)
        ));
        assert!(pearson(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn symmetric_and_affine_invariant(
            a in prop::collection::vec(-10.0f64..10.0, 5..40),
            seed in prop::collection::vec(-10.0f64..10.0, 40),
            alpha in 0.1f64..10.0,
            beta in -5.0f64..5.0,
        ) {
            let b: Vec<f64> = a.iter().zip(&seed).map(|(x, s)| 0.5 * x + s).collect();
            let Ok(r) = pearson(&a, &b) else { return Ok(()) };
            prop_assert!((r - pearson(&b, &a).unwrap()).abs() < 1e-12);
            let b2: Vec<f64> = b.iter().map(|v| alpha * v + beta).collect();
            prop_assert!((r - pearson(&a, &b2).unwrap()).abs() < 1e-12);
        }
    }
}
