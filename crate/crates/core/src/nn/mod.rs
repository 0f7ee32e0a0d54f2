//! Parametric building blocks: GRU cells, MLP heads and attention.

mod attention;
mod gru;
mod mlp;
mod params;

pub use attention::{AttentionMode, AttentionNet, AttentionOutput, Keys};
pub use gru::GruCell;
pub use mlp::{Activation, MlpHead};
pub use params::{param_grad_check, Binding, ParamId, ParamStore};
