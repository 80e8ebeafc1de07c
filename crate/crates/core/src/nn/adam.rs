use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{ParameterSet, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates for every parameter of a set.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub first_moment: Vec<Tensor<T>>,
    pub second_moment: Vec<Tensor<T>>,
    pub config: AdamConfig,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ParameterSet<T>, config: AdamConfig) -> Self {
        let zeros = || params.values().iter().map(|v| Tensor::zeros(v.shape())).collect();
        Self {
            step: 0,
            first_moment: zeros(),
            second_moment: zeros(),
            config,
        }
    }
}

/// One bias-corrected Adam update using the gradients stored in `params`.
pub fn adam_step<T: Scalar>(params: &mut ParameterSet<T>, state: &mut AdamState<T>) -> Result<()> {
    if state.first_moment.len() != params.len() {
        return Err(Error::ShapeMismatch(format!(
            "adam state tracks {} tensors, parameter set has {}",
            state.first_moment.len(),
            params.len()
        )));
    }
    for ((name, v), m) in params.names().iter().zip(params.values()).zip(&state.first_moment) {
        m.ensure_shape(v.shape(), name)?;
    }
    params.ensure_finite_grads()?;

    state.step += 1;
    let c = state.config;
    let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
    let (one, lr, eps) = (T::one(), T::lit(c.learning_rate), T::lit(c.epsilon));
    let t = state.step as i32;
    let bias1 = one - b1.powi(t);
    let bias2 = one - b2.powi(t);

    let grads: Vec<Tensor<T>> = params.grads().to_vec();
    for (i, value) in params.values_mut().iter_mut().enumerate() {
        let g = grads[i].data();
        let m = state.first_moment[i].data_mut();
        let v = state.second_moment[i].data_mut();
        for (j, p) in value.data_mut().iter_mut().enumerate() {
            m[j] = b1 * m[j] + (one - b1) * g[j];
            v[j] = b2 * v[j] + (one - b2) * g[j] * g[j];
            let m_hat = m[j] / bias1;
            let v_hat = v[j] / bias2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(value: f64) -> ParameterSet<f64> {
        let mut p = ParameterSet::new();
        p.add("w", Tensor::from_vec(&[1], vec![value]).unwrap()).unwrap();
        p
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = scalar_param(0.7);
        let mut s = AdamState::new(&p, AdamConfig::default());
        adam_step(&mut p, &mut s).unwrap();
        assert_eq!(p.values()[0].data(), &[0.7]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn closed_form_first_step() {
        let mut p = scalar_param(0.0);
        p.grads_mut()[0].data_mut()[0] = 1.0;
        let mut s = AdamState::new(&p, AdamConfig::default());
        adam_step(&mut p, &mut s).unwrap();
        // m_hat = g, v_hat = g^2: step = -lr * g / (|g| + eps)
        let expected = -1e-3 * 1.0 / (1.0 + 1e-8);
        assert!((p.values()[0].data()[0] - expected).abs() < 1e-18);
    }

    #[test]
    fn non_finite_gradient_is_a_training_error() {
        let mut p = scalar_param(0.0);
        p.grads_mut()[0].data_mut()[0] = f64::INFINITY;
        let mut s = AdamState::new(&p, AdamConfig::default());
        assert!(matches!(adam_step(&mut p, &mut s), Err(Error::Training(_))));
        assert_eq!(s.step, 0);
    }

    #[test]
    fn identical_runs_identical_trajectories() {
        let run = || {
            let mut p = scalar_param(1.0);
            let mut s = AdamState::new(&p, AdamConfig::default());
            let mut traj = Vec::new();
            for k in 0..50 {
                let w = p.values()[0].data()[0];
                p.grads_mut()[0].data_mut()[0] = 2.0 * w + (k as f64).sin();
                adam_step(&mut p, &mut s).unwrap();
                traj.push(p.values()[0].data()[0].to_bits());
            }
            traj
        };
        assert_eq!(run(), run());
    }
}
