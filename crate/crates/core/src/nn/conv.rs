//! Causal dilated 1-D convolution over `[channels, time]` inputs.
//!
//! Tap `k` of a width-`w` kernel reads `x[t - (w - 1 - k) * dilation]`, so
//! the last tap is the current step. Positions before the start read zeros,
//! keeping the output length equal to the input length.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

use super::{glorot_uniform, ParamId, ParameterSet, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CausalConv1d {
    weight: ParamId,
    bias: ParamId,
    in_channels: usize,
    out_channels: usize,
    width: usize,
    dilation: usize,
}

impl CausalConv1d {
    pub fn new<T: Scalar>(
        params: &mut ParameterSet<T>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        width: usize,
        dilation: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if dilation == 0 || width == 0 {
            return Err(Error::Config(format!(
                "conv {name}: width {width} and dilation {dilation} must be >= 1"
            )));
        }
        let weight = params.add(
            format!("{name}.weight"),
            glorot_uniform(
                rng,
                &[out_channels, in_channels, width],
                in_channels * width,
                out_channels * width,
            ),
        )?;
        let bias = params.add(format!("{name}.bias"), Tensor::zeros(&[out_channels]))?;
        Ok(Self {
            weight,
            bias,
            in_channels,
            out_channels,
            width,
            dilation,
        })
    }

    pub fn weight(&self) -> ParamId {
        self.weight
    }

    pub fn bias(&self) -> ParamId {
        self.bias
    }

    pub fn dilation(&self) -> usize {
        self.dilation
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    /// Number of past steps (including the current one) an output sees.
    pub fn receptive_field(&self) -> usize {
        (self.width - 1) * self.dilation + 1
    }

    #[inline]
    fn lag(&self, tap: usize) -> usize {
        (self.width - 1 - tap) * self.dilation
    }

    fn check_input<T: Scalar>(&self, x: &Tensor<T>) -> Result<usize> {
        match x.shape() {
            [c, t] if *c == self.in_channels => Ok(*t),
            other => Err(Error::ShapeMismatch(format!(
                "conv input {other:?}, expected [{}, time]",
                self.in_channels
            ))),
        }
    }

    pub fn forward<T: Scalar>(&self, params: &ParameterSet<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let steps = self.check_input(x)?;
        let w = params.value(self.weight).data();
        let b = params.value(self.bias).data();
        let mut y = Tensor::zeros(&[self.out_channels, steps]);
        let (cin, width) = (self.in_channels, self.width);
        for o in 0..self.out_channels {
            let out = y.row_mut(o);
            out.iter_mut().for_each(|v| *v = b[o]);
            for c in 0..cin {
                let xin = x.row(c);
                for k in 0..width {
                    let wk = w[(o * cin + c) * width + k];
                    let lag = self.lag(k);
                    if lag >= steps {
                        continue;
                    }
                    for (yt, xv) in out[lag..].iter_mut().zip(&xin[..steps - lag]) {
                        *yt += wk * *xv;
                    }
                }
            }
        }
        Ok(y)
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward<T: Scalar>(
        &self,
        params: &mut ParameterSet<T>,
        x: &Tensor<T>,
        dy: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        let steps = self.check_input(x)?;
        dy.ensure_shape(&[self.out_channels, steps], "conv output gradient")?;
        let (cin, width) = (self.in_channels, self.width);
        let mut dx = Tensor::zeros(&[cin, steps]);
        {
            let (w, gw) = params.value_and_grad(self.weight);
            let (w, gw) = (w.data(), gw.data_mut());
            for o in 0..self.out_channels {
                let g = dy.row(o);
                for c in 0..cin {
                    let xin = x.row(c);
                    for k in 0..width {
                        let lag = self.lag(k);
                        if lag >= steps {
                            continue;
                        }
                        let idx = (o * cin + c) * width + k;
                        let mut acc = T::zero();
                        for (gt, xv) in g[lag..].iter().zip(&xin[..steps - lag]) {
                            acc += *gt * *xv;
                        }
                        gw[idx] += acc;
                        let wk = w[idx];
                        for (dxv, gt) in dx.row_mut(c)[..steps - lag].iter_mut().zip(&g[lag..]) {
                            *dxv += wk * *gt;
                        }
                    }
                }
            }
        }
        let gb = params.grad_mut(self.bias).data_mut();
        for o in 0..self.out_channels {
            gb[o] += dy.row(o).iter().copied().sum::<T>();
        }
        Ok(dx)
    }
}

/// Forward pass of a single dilated layer.
pub fn dilated_conv1d_forward<T: Scalar>(
    params: &ParameterSet<T>,
    layer: &CausalConv1d,
    x: &Tensor<T>,
) -> Result<Tensor<T>> {
    layer.forward(params, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testutil::check_layer_gradients;

    fn layer(cin: usize, cout: usize, dilation: usize, seed: u64) -> (ParameterSet<f64>, CausalConv1d) {
        let mut p = ParameterSet::new();
        let l = CausalConv1d::new(&mut p, "conv", cin, cout, 2, dilation, &mut Rng::new(seed)).unwrap();
        (p, l)
    }

    #[test]
    fn identity_kernel() {
        let (mut p, l) = layer(1, 1, 3, 0);
        p.value_mut(l.weight).data_mut().copy_from_slice(&[0.0, 1.0]);
        let x = Tensor::from_vec(&[1, 6], vec![1.0, -2.0, 3.0, 0.5, 4.0, 7.0]).unwrap();
        assert_eq!(l.forward(&p, &x).unwrap(), x);
    }

    #[test]
    fn impulse_is_delayed_by_dilation() {
        let (mut p, l) = layer(1, 1, 4, 0);
        p.value_mut(l.weight).data_mut().copy_from_slice(&[1.0, 0.0]);
        let mut x = Tensor::zeros(&[1, 8]);
        x.data_mut()[0] = 1.0;
        let y = l.forward(&p, &x).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn wrong_channel_count() {
        let (p, l) = layer(2, 3, 1, 0);
        assert!(l.forward(&p, &Tensor::<f64>::zeros(&[3, 5])).is_err());
    }

    #[test]
    fn dilation_longer_than_series() {
        let (p, l) = layer(1, 2, 16, 0);
        let x = Tensor::from_vec(&[1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = l.forward(&p, &x).unwrap();
        assert_eq!(y.shape(), &[2, 4]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..5 {
            let (mut p, l) = layer(2, 3, 1 + seed as usize, seed);
            let mut rng = Rng::new(seed + 50);
            let steps = 7;
            let x: Vec<f64> = (0..2 * steps).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let worst = check_layer_gradients(
                &mut p,
                &x,
                &mut rng,
                |p, v| {
                    let t = Tensor::from_vec(&[2, steps], v.to_vec()).unwrap();
                    l.forward(p, &t).unwrap().into_vec()
                },
                |p, v, dy| {
                    let t = Tensor::from_vec(&[2, steps], v.to_vec()).unwrap();
                    let g = Tensor::from_vec(&[3, steps], dy.to_vec()).unwrap();
                    l.backward(p, &t, &g).unwrap().into_vec()
                },
            );
            assert!(worst < 1e-6, "seed {seed}: {worst}");
        }
    }
}
