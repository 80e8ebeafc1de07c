use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Mean absolute error and its (sub)gradient with respect to `pred`.
/// Ties contribute a zero subgradient.
pub fn mae_loss<T: Scalar>(pred: &[T], target: &[T]) -> Result<(T, Vec<T>)> {
    if pred.len() != target.len() {
        return Err(Error::ShapeMismatch(format!(
            "mae: {} predictions vs {} targets",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Ok((T::zero(), Vec::new()));
    }
    let n = T::lit(pred.len() as f64);
    let mut loss = T::zero();
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = *p - *t;
            loss += d.abs();
            if d > T::zero() {
                T::one() / n
            } else if d < T::zero() {
                -T::one() / n
            } else {
                T::zero()
            }
        })
        .collect();
    Ok((loss / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_prediction_is_zero() {
        let (l, g) = mae_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn hand_example() {
        let (l, g) = mae_loss(&[1.0, 3.0], &[2.0, 1.0]).unwrap();
        assert_eq!(l, 1.5);
        assert_eq!(g, vec![-0.5, 0.5]);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let pred = [0.3f64, -1.2, 2.5, 0.9];
        let target = [0.1, -1.0, 3.0, 0.2];
        let (_, g) = mae_loss(&pred, &target).unwrap();
        let eps = 1e-5;
        for k in 0..pred.len() {
            let mut p = pred;
            p[k] += eps;
            let up = mae_loss(&p, &target).unwrap().0;
            p[k] -= 2.0 * eps;
            let down = mae_loss(&p, &target).unwrap().0;
            let numeric = (up - down) / (2.0 * eps);
            assert!(((g[k] - numeric) / numeric).abs() < 1e-6);
        }
    }

    #[test]
    fn shape_mismatch() {
        assert!(mae_loss(&[1.0], &[1.0, 2.0]).is_err());
    }
}
