//! Locally weighted linear regression on equally spaced points, following
//! the neighbourhood and tricube weighting rules of the classic STL smoother.

use crate::scalar::Scalar;

/// Loess estimate at position `x` for samples `y` located at `0, 1, .., n-1`.
///
/// `span` is the number of nearest neighbours in the window; spans wider than
/// the series widen the bandwidth by `(span - n) / 2`. Returns `None` when
/// every weight vanishes.
pub fn loess_at<T: Scalar>(y: &[T], x: f64, span: usize, degree: usize) -> Option<T> {
    let n = y.len();
    if n == 0 || span == 0 {
        return None;
    }
    let q = span.min(n);
    let mut dist: Vec<f64> = (0..n).map(|i| (i as f64 - x).abs()).collect();
    let mut sorted = dist.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let mut h = sorted[q - 1];
    if span > n {
        h += ((span - n) / 2) as f64;
    }
    let upper = 0.999 * h;
    let lower = 0.001 * h;
    let mut total = 0.0;
    for d in dist.iter_mut() {
        let w = if *d <= lower {
            1.0
        } else if *d <= upper {
            let r = *d / h;
            (1.0 - r * r * r).powi(3)
        } else {
            0.0
        };
        *d = w;
        total += w;
    }
    if total <= 0.0 {
        return None;
    }
    let weights = &mut dist;
    weights.iter_mut().for_each(|w| *w /= total);
    if degree >= 1 && h > 0.0 {
        let centre: f64 = weights.iter().enumerate().map(|(i, w)| w * i as f64).sum();
        let spread: f64 = weights
            .iter()
            .enumerate()
            .map(|(i, w)| w * (i as f64 - centre).powi(2))
            .sum();
        let range = (n - 1) as f64;
        if spread.sqrt() > 0.001 * range {
            let slope = (x - centre) / spread;
            for (i, w) in weights.iter_mut().enumerate() {
                *w *= slope * (i as f64 - centre) + 1.0;
            }
        }
    }
    Some(
        weights
            .iter()
            .zip(y)
            .map(|(w, v)| T::lit(*w) * *v)
            .sum(),
    )
}

/// Loess fit evaluated at every sample position.
pub fn loess_smooth<T: Scalar>(y: &[T], span: usize, degree: usize) -> Vec<T> {
    (0..y.len())
        .map(|i| loess_at(y, i as f64, span, degree).unwrap_or(y[i]))
        .collect()
}
