use crate::scalar::Scalar;

pub fn relu<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

pub fn relu_in_place<T: Scalar>(xs: &mut [T]) {
    xs.iter_mut().for_each(|v| *v = relu(*v));
}

/// Gradient through ReLU given its output (or input; same sign pattern).
pub fn relu_backward<T: Scalar>(activated: &[T], dy: &mut [T]) {
    for (a, g) in activated.iter().zip(dy.iter_mut()) {
        if *a <= T::zero() {
            *g = T::zero();
        }
    }
}
