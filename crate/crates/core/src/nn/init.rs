use crate::rng::Rng;
use crate::scalar::Scalar;

use super::Tensor;

/// Glorot/Xavier uniform: U(-limit, limit), limit = sqrt(6 / (fan_in + fan_out)).
pub fn glorot_uniform<T: Scalar>(rng: &mut Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = T::lit(rng.uniform(-limit, limit));
    }
    t
}
