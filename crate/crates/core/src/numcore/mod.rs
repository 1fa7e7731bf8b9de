//! Deterministic double-precision numeric stack: dense layers, exact
//! gradients, Adam, and a finite-difference reference.

mod adam;
mod gradcheck;
mod layer;
mod network;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{finite_diff_grad, max_relative_error};
pub use layer::{dense_forward, sigmoid, softmax_in_place, Activation, DenseLayer, LayerGrad};
pub use network::{ForwardCache, GradientBundle, Network};
pub(crate) use layer::dot;
