use std::path::PathBuf;

use super::data::{preprocess, Dataset};
use crate::augment::ImageBuffer;
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::par;
use crate::vit::{forward_one, Checkpoint, Parameters, TrainingMeta};

fn score_with(params: &Parameters<f32>, meta: &TrainingMeta, img: &ImageBuffer) -> Result<f64> {
    let cfg = &params.config;
    let x = preprocess(img, meta.resize_for(cfg), cfg.image_size, None, meta.normalization)?;
    Ok(f64::from(forward_one(params, &x)?.score))
}

fn score(ckpt: &Checkpoint, img: &ImageBuffer) -> Result<f64> {
    score_with(&ckpt.params, &ckpt.meta, img)
}

pub(crate) fn predict_dataset_with(
    params: &Parameters<f32>,
    meta: &TrainingMeta,
    ds: &dyn Dataset,
) -> Result<Vec<f64>> {
    par::map_range(ds.len(), |i| ds.image(i).and_then(|img| score_with(params, meta, &img)))
        .into_iter()
        .collect()
}

/// Scores decoded images on the deterministic inference path.
pub fn predict_images(ckpt: &Checkpoint, images: &[ImageBuffer]) -> Result<Vec<f64>> {
    par::map_slice(images, |img| score(ckpt, img)).into_iter().collect()
}

/// Scores image files. A file that cannot be read or scored yields an error
/// in its own slot; the rest of the batch is unaffected.
pub fn predict(ckpt: &Checkpoint, items: &[(String, PathBuf)]) -> Vec<(String, Result<f64>)> {
    let scores = par::map_slice(items, |(_, path)| {
        ImageBuffer::load(path).and_then(|img| score(ckpt, &img))
    });
    items.iter().map(|(id, _)| id.clone()).zip(scores).collect()
}

/// Scores every dataset entry; any failure is fatal.
pub fn predict_dataset(ckpt: &Checkpoint, ds: &dyn Dataset) -> Result<Vec<f64>> {
    predict_dataset_with(&ckpt.params, &ckpt.meta, ds)
}

/// Predicts the dataset and compares against its scores.
pub fn evaluate(ckpt: &Checkpoint, ds: &dyn Dataset) -> Result<MetricsReport> {
    if ds.len() < 2 {
        return Err(Error::UndefinedCorrelation(format!(
            "evaluation needs at least 2 images, got {}",
            ds.len()
        )));
    }
    let pred = predict_dataset(ckpt, ds)?;
    let target: Vec<f64> = (0..ds.len()).map(|i| ds.score(i)).collect();
    MetricsReport::compute(&pred, &target)
}
