//! Minimal differentiable numeric core: tensors, layers with hand-derived
//! backward passes, MAE loss, Adam and checkpoints.

mod activation;
mod adam;
mod checkpoint;
mod conv;
mod dense;
mod init;
mod loss;
mod lstm;
mod params;
mod tensor;

#[cfg(test)]
pub(crate) mod testutil;

pub use activation::{relu, relu_backward, relu_in_place};
pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, ModelState, TensorRecord, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use conv::{dilated_conv1d_forward, CausalConv1d};
pub use dense::Dense;
pub use init::glorot_uniform;
pub use loss::mae_loss;
pub use lstm::{lstm_cell_forward, sigmoid, LstmCache, LstmCell};
pub use params::{ParamId, ParameterSet};
pub use tensor::Tensor;
