use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::image::ImageBuffer;
use super::transforms::{Transform, TransformConfig, TransformSpec, DEFAULT_P};
use crate::error::{Error, Result};

/// How application probabilities are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GateMode {
    /// Each transform is applied independently with its own `p`.
    #[default]
    PerTransform,
    /// One draw with probability `p` decides whether the whole list is applied;
    /// per-transform probabilities are ignored.
    WholePipeline { p: f64 },
}

/// Ordered augmentation pipeline, serialisable as TOML:
///
/// ```toml
/// seed = "7"
/// [gate]
/// mode = "per_transform"
/// [[transforms]]
/// kind = "horizontal_flip"
/// p = 0.7
/// [[transforms]]
/// kind = "blur"
/// blur_limit = [3, 7]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentSpec {
    #[serde(with = "crate::seedfmt", default)]
    pub seed: u64,
    #[serde(default)]
    pub gate: GateMode,
    #[serde(default)]
    pub transforms: Vec<TransformSpec>,
}

impl Default for AugmentSpec {
    /// All eleven transforms with default ranges, each gated at 0.7.
    fn default() -> Self {
        Self::with_probability(0, DEFAULT_P)
    }
}

impl AugmentSpec {
    pub fn with_probability(seed: u64, p: f64) -> Self {
        Self {
            seed,
            gate: GateMode::PerTransform,
            transforms: TransformConfig::all()
                .into_iter()
                .map(|c| TransformSpec::new(c, p))
                .collect(),
        }
    }

    /// A pipeline that never changes its input.
    pub fn identity() -> Self {
        Self {
            seed: 0,
            gate: GateMode::PerTransform,
            transforms: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let GateMode::WholePipeline { p } = self.gate {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("pipeline probability {p} outside [0, 1]")));
            }
        }
        self.transforms.iter().try_for_each(TransformSpec::validate)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Toml(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Toml(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Toml(msg) | Error::Config(msg) => Error::Toml(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?).map_err(|e| Error::io(path, e))
    }

    /// Gate decisions and sampled parameters for one sample, without touching
    /// pixels. `None` marks a transform that was skipped.
    pub fn plan(&self, sample_index: u64, epoch: u64) -> Vec<Option<Transform>> {
        let mut rng = sample_rng(self.seed, sample_index, epoch);
        let whole = match self.gate {
            GateMode::PerTransform => None,
            GateMode::WholePipeline { p } => Some(rng.random::<f64>() < p),
        };
        self.transforms
            .iter()
            .map(|t| {
                let on = match whole {
                    Some(on) => on,
                    None => rng.random::<f64>() < t.p,
                };
                on.then(|| t.config.sample(&mut rng))
            })
            .collect()
    }
}

/// Independent RNG stream for one `(seed, sample, epoch)` triple.
pub fn sample_rng(seed: u64, sample_index: u64, epoch: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&sample_index.to_le_bytes());
    key[16..24].copy_from_slice(&epoch.to_le_bytes());
    key[24..].copy_from_slice(b"augment\0");
    ChaCha8Rng::from_seed(key)
}

/// Applies the pipeline to one sample; the result depends only on
/// `(spec, img, sample_index, epoch)`.
pub fn apply_pipeline(img: &ImageBuffer, spec: &AugmentSpec, sample_index: u64, epoch: u64) -> Result<ImageBuffer> {
    apply_pipeline_traced(img, spec, sample_index, epoch).map(|(out, _)| out)
}

/// Like [`apply_pipeline`], also returning which transforms fired.
pub fn apply_pipeline_traced(
    img: &ImageBuffer,
    spec: &AugmentSpec,
    sample_index: u64,
    epoch: u64,
) -> Result<(ImageBuffer, Vec<bool>)> {
    spec.validate()?;
    let plan = spec.plan(sample_index, epoch);
    let applied = plan.iter().map(Option::is_some).collect();
    let mut out = img.clone();
    for t in plan.iter().flatten() {
        out = t.apply(&out)?;
    }
    Ok((out, applied))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img() -> ImageBuffer {
        ImageBuffer::from_fn(12, 10, |x, y| {
            [x as f32 / 11.0, y as f32 / 9.0, ((x * y) % 7) as f32 / 6.0]
        })
    }

    #[test]
    fn zero_probability_is_identity() {
        let spec = AugmentSpec::with_probability(3, 0.0);
        for i in 0..20 {
            assert_eq!(apply_pipeline(&img(), &spec, i, 0).unwrap(), img());
        }
    }

    #[test]
    fn certain_flip_flips() {
        let spec = AugmentSpec {
            seed: 1,
            gate: GateMode::PerTransform,
            transforms: vec![TransformSpec::new(TransformConfig::HorizontalFlip, 1.0)],
        };
        let out = apply_pipeline(&img(), &spec, 0, 0).unwrap();
        assert_eq!(out, Transform::HorizontalFlip.apply(&img()).unwrap());
    }

    #[test]
    fn deterministic_per_sample_and_varies_across_samples() {
        let spec = AugmentSpec::with_probability(99, 0.7);
        let a = apply_pipeline(&img(), &spec, 5, 2).unwrap();
        assert_eq!(a, apply_pipeline(&img(), &spec, 5, 2).unwrap());
        let plans: Vec<_> = (0..8).map(|i| spec.plan(i, 0)).collect();
        assert!(plans.windows(2).any(|w| w[0] != w[1]));
        assert_ne!(spec.plan(5, 2), spec.plan(5, 3));
    }

    #[test]
    fn application_rate_near_p() {
        let spec = AugmentSpec::with_probability(11, 0.7);
        let n = 4000;
        let mut counts = vec![0usize; spec.transforms.len()];
        for i in 0..n {
            for (c, t) in counts.iter_mut().zip(spec.plan(i, 0)) {
                *c += usize::from(t.is_some());
            }
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.7).abs() < 0.03);
        }
    }

    #[test]
    fn whole_pipeline_gate_is_all_or_nothing() {
        let mut spec = AugmentSpec::with_probability(4, 0.1);
        spec.gate = GateMode::WholePipeline { p: 0.5 };
        let mut fired = 0;
        for i in 0..200 {
            let plan = spec.plan(i, 0);
            let on = plan.iter().filter(|t| t.is_some()).count();
            assert!(on == 0 || on == plan.len());
            fired += usize::from(on > 0);
        }
        assert!((60..140).contains(&fired));
    }

    #[test]
    fn toml_round_trip() {
        let mut spec = AugmentSpec::with_probability(u64::MAX, 0.7);
        spec.gate = GateMode::WholePipeline { p: 0.7 };
        let text = spec.to_toml_string().unwrap();
        assert_eq!(AugmentSpec::from_toml_str(&text).unwrap(), spec);
        let minimal = AugmentSpec::from_toml_str(
            "seed = 3\n[[transforms]]\nkind = \"clahe\"\nclip_limit = [1.0, 2.0]\ntile_grid_size = [4, 4]\n",
        )
        .unwrap();
        assert_eq!(minimal.gate, GateMode::PerTransform);
        assert_eq!(minimal.transforms[0].p, DEFAULT_P);
    }

    #[test]
    fn invalid_probability_rejected() {
        assert!(AugmentSpec::from_toml_str("[[transforms]]\nkind = \"horizontal_flip\"\np = 1.2\n").is_err());
        assert!(AugmentSpec::from_toml_str("[gate]\nmode = \"whole_pipeline\"\np = -0.1\n").is_err());
        assert!(AugmentSpec::from_toml_str("[[transforms]]\nkind = \"horizontal_flip\"\nbogus = 1\n").is_err());
    }
}
