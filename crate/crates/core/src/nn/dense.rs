use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

use super::{glorot_uniform, ParamId, ParameterSet, Tensor};

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

#[inline]
pub(crate) fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * *xi);
}

/// Fully connected layer `y = W x + b` with `W` of shape `[output, input]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dense {
    weight: ParamId,
    bias: ParamId,
    input: usize,
    output: usize,
}

impl Dense {
    pub fn new<T: Scalar>(
        params: &mut ParameterSet<T>,
        name: &str,
        input: usize,
        output: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let weight = params.add(
            format!("{name}.weight"),
            glorot_uniform(rng, &[output, input], input, output),
        )?;
        let bias = params.add(format!("{name}.bias"), Tensor::zeros(&[output]))?;
        Ok(Self {
            weight,
            bias,
            input,
            output,
        })
    }

    pub fn input_size(&self) -> usize {
        self.input
    }

    pub fn output_size(&self) -> usize {
        self.output
    }

    pub fn weight(&self) -> ParamId {
        self.weight
    }

    pub fn bias(&self) -> ParamId {
        self.bias
    }

    pub fn forward<T: Scalar>(&self, params: &ParameterSet<T>, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.input {
            return Err(Error::ShapeMismatch(format!(
                "dense input length {} != {}",
                x.len(),
                self.input
            )));
        }
        let w = params.value(self.weight);
        let b = params.value(self.bias).data();
        Ok((0..self.output).map(|o| b[o] + dot(w.row(o), x)).collect())
    }

    /// Accumulates parameter gradients for upstream gradient `dy` and returns
    /// the gradient with respect to `x`.
    pub fn backward<T: Scalar>(&self, params: &mut ParameterSet<T>, x: &[T], dy: &[T]) -> Vec<T> {
        let mut dx = vec![T::zero(); self.input];
        {
            let (w, gw) = params.value_and_grad(self.weight);
            for (o, &g) in dy.iter().enumerate() {
                axpy(g, x, gw.row_mut(o));
                axpy(g, w.row(o), &mut dx);
            }
        }
        let gb = params.grad_mut(self.bias).data_mut();
        gb.iter_mut().zip(dy).for_each(|(b, g)| *b += *g);
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testutil::check_layer_gradients;

    #[test]
    fn forward_arithmetic() {
        let mut p = ParameterSet::<f64>::new();
        let d = Dense::new(&mut p, "d", 2, 1, &mut Rng::new(1)).unwrap();
        p.value_mut(d.weight).data_mut().copy_from_slice(&[2.0, -1.0]);
        p.value_mut(d.bias).data_mut()[0] = 0.5;
        assert_eq!(d.forward(&p, &[3.0, 4.0]).unwrap(), vec![2.5]);
        assert!(d.forward(&p, &[3.0]).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..5 {
            let mut rng = Rng::new(seed);
            let mut p = ParameterSet::<f64>::new();
            let d = Dense::new(&mut p, "d", 3, 4, &mut rng).unwrap();
            let x: Vec<f64> = (0..3).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let worst = check_layer_gradients(
                &mut p,
                &x,
                &mut rng,
                |p, x| d.forward(p, x).unwrap(),
                |p, x, dy| d.backward(p, x, dy),
            );
            assert!(worst < 1e-6, "seed {seed}: {worst}");
        }
    }
}
