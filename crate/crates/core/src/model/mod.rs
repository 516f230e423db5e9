//! Llama-style decoder: token embedding, pre-norm blocks of rotary
//! multi-head attention and SwiGLU, final RMSNorm and an untied output head.
//! No biases, no dropout.

mod config;
mod params;
mod transformer;

pub use config::ModelConfig;
pub(crate) use params::random_layer;
pub use params::{init_params, Gates, Gradients, LayerParams, ParameterSet, TensorKind, TensorRef};
pub use transformer::{accumulate_gradients, backward, forward, forward_batch, lm_loss, rms_norm, ROPE_BASE};
