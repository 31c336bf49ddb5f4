//! Vision-transformer regression model with a single sigmoid output.
//!
//! Topology: patchify → linear patch projection → prepend class token → add
//! learned positional embeddings → `depth` pre-LN encoder blocks → final
//! layer norm on the class token → linear head → sigmoid.

mod checkpoint;
mod config;
mod gradcheck;
mod model;
mod params;

pub use checkpoint::{
    default_resize, load_pretrained, Checkpoint, Normalization, RawCheckpoint, TensorEntry, TrainingMeta,
    FORMAT_VERSION, HEADER_FILE, PAYLOAD_FILE,
};
pub use config::{count_params, ModelConfig, CHANNELS};
pub use gradcheck::model_grad_check;
pub use model::{
    backward, class_embedding, forward, forward_one, loss_and_grad, patchify, ForwardCache, GradScope, LossAndGrad,
};
pub use params::{Block, Parameters, HEAD_TENSORS, INIT_STD};
