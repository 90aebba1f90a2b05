//! Minimal reverse-mode autodiff and the layers the model is built from.

mod checkpoint;
mod gradcheck;
mod layers;
mod params;
mod tape;
mod tensor;


pub use checkpoint::{Checkpoint, Manifest, ManifestEntry, CHECKPOINT_HEADER};
pub use gradcheck::{grad_check, relative_error, GradCheckOptions, GradCheckReport, ParamCheck};
pub use layers::{mlp, Activation, EdgeIndex, GraphAttention, LayerNorm, Linear, Mlp};
pub use params::{Gradients, Param, ParamId, ParamKind, ParamStore};
pub use tape::{Tape, Var, LAYER_NORM_EPS, LEAKY_SLOPE, PROB_FLOOR};
pub use tensor::Tensor;
