use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::Tensor;

/// Handle to a parameter inside a [`ParameterSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

/// Named trainable tensors with gradient buffers of identical shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet<T> {
    names: Vec<String>,
    values: Vec<Tensor<T>>,
    grads: Vec<Tensor<T>>,
}

impl<T: Scalar> Default for ParameterSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParameterSet<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<ParamId> {
        let name = name.into();
        if self.id(&name).is_some() {
            return Err(Error::Config(format!("duplicate parameter name {name:?}")));
        }
        self.grads.push(Tensor::zeros(value.shape()));
        self.values.push(value);
        self.names.push(name);
        Ok(ParamId(self.values.len() - 1))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Tensor<T> {
        &self.grads[id.0]
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.grads[id.0]
    }

    /// Parameter value and its gradient buffer, borrowed together.
    pub fn value_and_grad(&mut self, id: ParamId) -> (&Tensor<T>, &mut Tensor<T>) {
        (&self.values[id.0], &mut self.grads[id.0])
    }

    pub fn values(&self) -> &[Tensor<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.values
    }

    pub fn grads(&self) -> &[Tensor<T>] {
        &self.grads
    }

    pub fn grads_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.grads
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| g.fill(T::zero()));
    }

    pub fn scale_grads(&mut self, factor: T) {
        for g in &mut self.grads {
            g.data_mut().iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn grad_norm(&self) -> T {
        self.grads.iter().map(Tensor::sum_squares).sum::<T>().sqrt()
    }

    /// Rescales gradients so their global L2 norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_grad_norm(&mut self, max_norm: T) -> T {
        let norm = self.grad_norm();
        if norm.is_finite() && norm > max_norm && norm > T::zero() {
            self.scale_grads(max_norm / norm);
        }
        norm
    }

    pub fn ensure_finite_grads(&self) -> Result<()> {
        for (name, g) in self.names.iter().zip(&self.grads) {
            if let Some(v) = g.data().iter().find(|v| !v.is_finite()) {
                return Err(Error::Training(format!("non-finite gradient {v} in {name}")));
            }
        }
        Ok(())
    }

    /// Copies values from a set with the same names and shapes.
    pub fn copy_values_from(&mut self, other: &ParameterSet<T>) -> Result<()> {
        if self.names != other.names {
            return Err(Error::ShapeMismatch("parameter sets have different names".into()));
        }
        for ((name, dst), src) in self.names.iter().zip(&mut self.values).zip(&other.values) {
            src.ensure_shape(dst.shape(), name)?;
            dst.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }
}
