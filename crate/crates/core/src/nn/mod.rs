//! Minimal dense neural-network layers with hand-written backward passes.

pub mod dense;
pub mod gradcheck;
pub mod gru;
pub mod loss;
pub mod ops;
pub mod params;
pub mod readout;

pub use dense::{glorot, Activation, Dense, Mlp, MlpSpec};
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use gru::{Gru, GruSpec};
pub use ops::{canonical_order, cosine, cosine_with_grad, sigmoid, softmax};
pub use params::{adam_step, AdamConfig, Gradients, NamedTensor, ParamId, ParamStore};
pub use readout::GatedReadout;
