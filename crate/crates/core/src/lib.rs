//! Image memorability modeling with a vision transformer.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`diffmath`]: dense tensors and the forward/backward kernels the model needs.
//! - [`vit`]: the regression transformer, its parameters and the checkpoint format.
//! - [`augment`]: image buffers, resize/crop and the seeded augmentation pipeline.
//! - [`datakit`]: manifests, embedding-based deduplication, merging and splits.
//! - [`trainer`]: ADAM, the training loop, prediction and evaluation.
//! - [`metrics`]: Spearman, MSE and R² with explicit undefined-correlation handling.
//! - [`semantics`]: caption noun extraction and noun-level memorability analysis.
//!
//! Data-parallel stages go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and plain iterators otherwise. Reductions are
//! always performed in a fixed order, so results do not depend on thread count.

pub mod augment;
pub mod datakit;
pub mod diffmath;
pub mod error;
pub mod metrics;
pub mod par;
pub(crate) mod seedfmt;
pub mod semantics;
pub mod trainer;
pub mod vit;

pub use diffmath::{Scalar, Tensor};
pub use error::{Error, Result};
