//! LSTM cell with gates stacked `[input, forget, candidate, output]`.
//!
//! ```text
//! z = W_ih x + W_hh h + b
//! i = sigmoid(z_i)  f = sigmoid(z_f)  g = tanh(z_g)  o = sigmoid(z_o)
//! c' = f * c + i * g
//! h' = o * tanh(c')
//! ```

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

use super::dense::{axpy, dot};
use super::{glorot_uniform, ParamId, ParameterSet, Tensor};

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmCell {
    w_ih: ParamId,
    w_hh: ParamId,
    bias: ParamId,
    input: usize,
    hidden: usize,
}

/// Values saved by [`LstmCell::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct LstmCache<T> {
    pub x: Vec<T>,
    pub h_prev: Vec<T>,
    pub c_prev: Vec<T>,
    /// Activated gates, `[i, f, g, o]` each of length `hidden`.
    pub gates: Vec<T>,
    pub c: Vec<T>,
    pub tanh_c: Vec<T>,
}

impl LstmCell {
    pub fn new<T: Scalar>(
        params: &mut ParameterSet<T>,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let w_ih = params.add(
            format!("{name}.w_ih"),
            glorot_uniform(rng, &[4 * hidden, input], input, 4 * hidden),
        )?;
        let w_hh = params.add(
            format!("{name}.w_hh"),
            glorot_uniform(rng, &[4 * hidden, hidden], hidden, 4 * hidden),
        )?;
        let bias = params.add(format!("{name}.bias"), Tensor::zeros(&[4 * hidden]))?;
        Ok(Self {
            w_ih,
            w_hh,
            bias,
            input,
            hidden,
        })
    }

    pub fn input_size(&self) -> usize {
        self.input
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    pub fn w_ih(&self) -> ParamId {
        self.w_ih
    }

    pub fn w_hh(&self) -> ParamId {
        self.w_hh
    }

    pub fn bias(&self) -> ParamId {
        self.bias
    }

    pub fn zero_state<T: Scalar>(&self) -> (Vec<T>, Vec<T>) {
        (vec![T::zero(); self.hidden], vec![T::zero(); self.hidden])
    }

    /// One step; returns the new hidden state, the new cell state and the cache.
    pub fn forward<T: Scalar>(
        &self,
        params: &ParameterSet<T>,
        x: &[T],
        h_prev: &[T],
        c_prev: &[T],
    ) -> Result<(Vec<T>, Vec<T>, LstmCache<T>)> {
        let h = self.hidden;
        if x.len() != self.input || h_prev.len() != h || c_prev.len() != h {
            return Err(Error::ShapeMismatch(format!(
                "lstm step: x {} (want {}), h {} / c {} (want {h})",
                x.len(),
                self.input,
                h_prev.len(),
                c_prev.len()
            )));
        }
        let w_ih = params.value(self.w_ih);
        let w_hh = params.value(self.w_hh);
        let b = params.value(self.bias).data();
        let mut gates: Vec<T> = (0..4 * h)
            .map(|r| b[r] + dot(w_ih.row(r), x) + dot(w_hh.row(r), h_prev))
            .collect();
        for (r, z) in gates.iter_mut().enumerate() {
            *z = if (2 * h..3 * h).contains(&r) {
                z.tanh()
            } else {
                sigmoid(*z)
            };
        }
        let mut c = vec![T::zero(); h];
        let mut tanh_c = vec![T::zero(); h];
        let mut h_new = vec![T::zero(); h];
        for k in 0..h {
            let (i, f, g, o) = (gates[k], gates[h + k], gates[2 * h + k], gates[3 * h + k]);
            c[k] = f * c_prev[k] + i * g;
            tanh_c[k] = c[k].tanh();
            h_new[k] = o * tanh_c[k];
        }
        let cache = LstmCache {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            c_prev: c_prev.to_vec(),
            gates,
            c: c.clone(),
            tanh_c,
        };
        Ok((h_new, c, cache))
    }

    /// Backpropagates gradients of the new `(h, c)` through one step,
    /// accumulating parameter gradients. Returns `(dx, dh_prev, dc_prev)`.
    pub fn backward<T: Scalar>(
        &self,
        params: &mut ParameterSet<T>,
        cache: &LstmCache<T>,
        dh: &[T],
        dc: &[T],
    ) -> (Vec<T>, Vec<T>, Vec<T>) {
        let h = self.hidden;
        let one = T::one();
        let g = &cache.gates;
        let mut dz = vec![T::zero(); 4 * h];
        let mut dc_prev = vec![T::zero(); h];
        for k in 0..h {
            let (i, f, gg, o) = (g[k], g[h + k], g[2 * h + k], g[3 * h + k]);
            let tc = cache.tanh_c[k];
            let dct = dc[k] + dh[k] * o * (one - tc * tc);
            dz[k] = dct * gg * i * (one - i);
            dz[h + k] = dct * cache.c_prev[k] * f * (one - f);
            dz[2 * h + k] = dct * i * (one - gg * gg);
            dz[3 * h + k] = dh[k] * tc * o * (one - o);
            dc_prev[k] = dct * f;
        }
        let mut dx = vec![T::zero(); self.input];
        let mut dh_prev = vec![T::zero(); h];
        {
            let (w, gw) = params.value_and_grad(self.w_ih);
            for (r, &d) in dz.iter().enumerate() {
                axpy(d, &cache.x, gw.row_mut(r));
                axpy(d, w.row(r), &mut dx);
            }
        }
        {
            let (w, gw) = params.value_and_grad(self.w_hh);
            for (r, &d) in dz.iter().enumerate() {
                axpy(d, &cache.h_prev, gw.row_mut(r));
                axpy(d, w.row(r), &mut dh_prev);
            }
        }
        let gb = params.grad_mut(self.bias).data_mut();
        gb.iter_mut().zip(&dz).for_each(|(b, d)| *b += *d);
        (dx, dh_prev, dc_prev)
    }
}

/// Standalone cell evaluation on raw matrices, used by tests and examples.
pub fn lstm_cell_forward<T: Scalar>(
    params: &ParameterSet<T>,
    cell: &LstmCell,
    x: &[T],
    h_prev: &[T],
    c_prev: &[T],
) -> Result<(Vec<T>, Vec<T>)> {
    cell.forward(params, x, h_prev, c_prev).map(|(h, c, _)| (h, c))
}
