//! Image buffers, the resize/crop protocol and the seeded augmentation pipeline.

mod clahe;
mod color;
mod filters;
mod geometry;
mod image;
mod pipeline;
mod transforms;

pub use self::image::{center_crop, resize, resize_and_crop, ImageBuffer};
pub use clahe::clahe;
pub use color::{lab_to_rgb, rgb_to_lab};
pub use pipeline::{apply_pipeline, apply_pipeline_traced, sample_rng, AugmentSpec, GateMode};
pub use transforms::{apply_transform, Transform, TransformConfig, TransformSpec, DEFAULT_P};
