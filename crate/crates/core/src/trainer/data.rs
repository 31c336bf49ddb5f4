use crate::augment::{apply_pipeline, center_crop, resize, AugmentSpec, ImageBuffer};
use crate::datakit::Manifest;
use crate::diffmath::Tensor;
use crate::error::{Error, Result};
use crate::vit::Normalization;

/// Indexed collection of scored images.
pub trait Dataset: Sync {
    fn len(&self) -> usize;
    fn id(&self, index: usize) -> &str;
    fn score(&self, index: usize) -> f64;
    fn image(&self, index: usize) -> Result<ImageBuffer>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Images decoded from disk on every access.
impl Dataset for Manifest {
    fn len(&self) -> usize {
        Manifest::len(self)
    }

    fn id(&self, index: usize) -> &str {
        &self.records()[index].id
    }

    fn score(&self, index: usize) -> f64 {
        self.records()[index].score
    }

    fn image(&self, index: usize) -> Result<ImageBuffer> {
        ImageBuffer::load(&self.resolve(&self.records()[index]))
    }
}

/// Decoded images held in memory.
#[derive(Debug, Clone, Default)]
pub struct InMemoryDataset {
    items: Vec<(String, ImageBuffer, f64)>,
}

impl InMemoryDataset {
    pub fn new(items: Vec<(String, ImageBuffer, f64)>) -> Result<Self> {
        if let Some((id, _, s)) = items.iter().find(|(_, _, s)| !(0.0..=1.0).contains(s)) {
            return Err(Error::InvalidArgument(format!("score {s} for `{id}` outside [0, 1]")));
        }
        Ok(Self { items })
    }

    /// Decodes every image of a manifest once.
    pub fn from_dataset(ds: &dyn Dataset) -> Result<Self> {
        let items = (0..ds.len())
            .map(|i| Ok((ds.id(i).to_string(), ds.image(i)?, ds.score(i))))
            .collect::<Result<_>>()?;
        Ok(Self { items })
    }
}

impl Dataset for InMemoryDataset {
    fn len(&self) -> usize {
        self.items.len()
    }

    fn id(&self, index: usize) -> &str {
        &self.items[index].0
    }

    fn score(&self, index: usize) -> f64 {
        self.items[index].2
    }

    fn image(&self, index: usize) -> Result<ImageBuffer> {
        Ok(self.items[index].1.clone())
    }
}

/// Square resize → optional augmentation → central crop → standardised tensor.
///
/// `augment` carries the pipeline with the sample index and epoch that seed it.
pub fn preprocess(
    img: &ImageBuffer,
    resize_to: usize,
    crop_to: usize,
    augment: Option<(&AugmentSpec, u64, u64)>,
    norm: Normalization,
) -> Result<Tensor<f32>> {
    let mut x = resize(img, resize_to, resize_to)?;
    if let Some((spec, index, epoch)) = augment {
        x = apply_pipeline(&x, spec, index, epoch)?;
    }
    Ok(center_crop(&x, crop_to, crop_to)?.to_tensor(norm.mean, norm.std))
}
