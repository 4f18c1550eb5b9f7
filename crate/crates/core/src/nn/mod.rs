//! Real-valued kernels with hand-derived backward passes.

pub mod adam;
pub mod linear;
pub mod loss;
pub mod norm;
pub mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use linear::{linear_backward, linear_forward, Linear, LinearCache, LinearGrads};
pub use loss::{entropy, js_loss, kd_kl_loss, label_smooth, log_softmax, softmax, softmax_ce};
pub use norm::{BatchStats, BnCache, BnLayer, LayerNorm, LayerNormCache, Mode, NormGrads, RmsNorm, RmsNormCache};
pub use tensor::DenseTensor;
