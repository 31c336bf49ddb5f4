//! On-disk checkpoint: a directory holding a TOML header and a raw payload.
//!
//! `header.toml` carries the format version, the model config, the input
//! normalisation, training metadata and a tensor manifest (name, dtype, shape,
//! byte offset). `tensors.bin` is the concatenation of every tensor as
//! little-endian IEEE-754 `f32`, row-major, in manifest order.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::params::{Parameters, HEAD_TENSORS};
use crate::diffmath::Tensor;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_FILE: &str = "header.toml";
pub const PAYLOAD_FILE: &str = "tensors.bin";

/// Per-channel pixel standardisation applied after scaling to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: f32,
    pub std: f32,
}

impl Default for Normalization {
    fn default() -> Self {
        Self { mean: 0.5, std: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrainingMeta {
    pub step: u64,
    pub seed: u64,
    pub normalization: Normalization,
    /// Square size images are resized to before the central crop; `None`
    /// means [`default_resize`] for the model's input size.
    pub resize_to: Option<usize>,
}

impl TrainingMeta {
    pub fn resize_for(&self, config: &ModelConfig) -> usize {
        self.resize_to.unwrap_or_else(|| default_resize(config.image_size))
    }
}

/// Resize side with the 256 → 224 ratio: `⌈8·crop/7⌉`.
pub fn default_resize(crop: usize) -> usize {
    (8 * crop).div_ceil(7)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub dtype: String,
    pub shape: Vec<usize>,
    pub offset: u64,
}

#[derive(Serialize, Deserialize)]
struct TrainingSection {
    step: u64,
    // decimal string: TOML integers are signed 64-bit
    seed: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    resize_to: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    model: ModelConfig,
    normalization: Normalization,
    training: TrainingSection,
    #[serde(default)]
    tensor: Vec<TensorEntry>,
}

/// A checkpoint as stored: named tensors that have not been matched to a model yet.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCheckpoint {
    pub config: ModelConfig,
    pub meta: TrainingMeta,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

impl RawCheckpoint {
    pub fn read(dir: &Path) -> Result<Self> {
        let header_path = dir.join(HEADER_FILE);
        let text = fs::read_to_string(&header_path).map_err(|e| Error::io(&header_path, e))?;
        let header: Header =
            toml::from_str(&text).map_err(|e| Error::Toml(format!("{}: {e}", header_path.display())))?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::Version {
                found: header.format_version,
                expected: FORMAT_VERSION,
            });
        }
        let seed = header.training.seed.parse().map_err(|_| {
            Error::Toml(format!(
                "{}: bad seed `{}`",
                header_path.display(),
                header.training.seed
            ))
        })?;
        let payload_path = dir.join(PAYLOAD_FILE);
        let payload = fs::read(&payload_path).map_err(|e| Error::io(&payload_path, e))?;
        let mut tensors = Vec::with_capacity(header.tensor.len());
        for entry in header.tensor {
            if entry.dtype != "f32" {
                return Err(Error::Tensor {
                    name: entry.name,
                    reason: format!("unsupported dtype `{}`", entry.dtype),
                });
            }
            let count: usize = entry.shape.iter().product();
            let start = entry.offset as usize;
            let end = start + count * 4;
            if end > payload.len() {
                return Err(Error::Tensor {
                    reason: format!(
                        "truncated: needs bytes {start}..{end} but payload has {}",
                        payload.len()
                    ),
                    name: entry.name,
                });
            }
            let data = payload[start..end]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            tensors.push((entry.name, Tensor::from_vec(entry.shape, data)?));
        }
        Ok(Self {
            config: header.model,
            meta: TrainingMeta {
                step: header.training.step,
                seed,
                normalization: header.normalization,
                resize_to: header.training.resize_to,
            },
            tensors,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut payload = Vec::new();
        let mut manifest = Vec::with_capacity(self.tensors.len());
        for (name, t) in &self.tensors {
            manifest.push(TensorEntry {
                name: name.clone(),
                dtype: "f32".into(),
                shape: t.shape().to_vec(),
                offset: payload.len() as u64,
            });
            for v in t.data() {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
        let header = Header {
            format_version: FORMAT_VERSION,
            model: self.config,
            normalization: self.meta.normalization,
            training: TrainingSection {
                step: self.meta.step,
                seed: self.meta.seed.to_string(),
                resize_to: self.meta.resize_to,
            },
            tensor: manifest,
        };
        let text = toml::to_string(&header).map_err(|e| Error::Toml(e.to_string()))?;
        let header_path = dir.join(HEADER_FILE);
        fs::write(&header_path, text).map_err(|e| Error::io(&header_path, e))?;
        let payload_path = dir.join(PAYLOAD_FILE);
        fs::write(&payload_path, payload).map_err(|e| Error::io(&payload_path, e))
    }

    fn into_map(self) -> HashMap<String, Tensor<f32>> {
        self.tensors.into_iter().collect()
    }
}

/// A complete model: parameters plus the metadata needed to reproduce inference.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: Parameters<f32>,
    pub meta: TrainingMeta,
}

impl Checkpoint {
    pub fn new(params: Parameters<f32>, meta: TrainingMeta) -> Self {
        Self { params, meta }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.params.config
    }

    pub fn to_raw(&self) -> RawCheckpoint {
        RawCheckpoint {
            config: self.params.config,
            meta: self.meta,
            tensors: self.params.tensors().into_iter().map(|(n, t)| (n, t.clone())).collect(),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.to_raw().write(dir)
    }

    /// Loads and validates every tensor, head included.
    pub fn load(dir: &Path) -> Result<Self> {
        let raw = RawCheckpoint::read(dir)?;
        let meta = raw.meta;
        let config = raw.config;
        let params = Parameters::from_named(&config, raw.into_map(), false)?;
        Ok(Self { params, meta })
    }
}

/// Loads trunk weights for `config` from `raw`.
///
/// With `reinit_head` the stored head (if any, of any shape) is discarded and
/// a fresh single-output head is drawn from N(0, 0.02²); otherwise the stored
/// head must match too.
pub fn load_pretrained(
    raw: &RawCheckpoint,
    config: &ModelConfig,
    reinit_head: bool,
    seed: u64,
) -> Result<Parameters<f32>> {
    if raw.config != *config {
        return Err(Error::Config(format!(
            "checkpoint model {:?} does not match requested {:?}",
            raw.config, config
        )));
    }
    let mut named: HashMap<_, _> = raw.clone().into_map();
    if reinit_head {
        for h in HEAD_TENSORS {
            named.remove(h);
        }
    }
    let mut params = Parameters::from_named(config, named, reinit_head)?;
    if reinit_head {
        params.reinit_head(seed);
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_ckpt() -> Checkpoint {
        let params = Parameters::<f32>::init(&ModelConfig::tiny(), 3).unwrap();
        Checkpoint::new(
            params,
            TrainingMeta {
                step: 17,
                seed: u64::MAX,
                normalization: Normalization::default(),
                resize_to: Some(9),
            },
        )
    }

    #[test]
    fn default_resize_ratio() {
        assert_eq!(default_resize(224), 256);
        assert_eq!(default_resize(8), 10);
        let meta = TrainingMeta::default();
        assert_eq!(meta.resize_for(&ModelConfig::base()), 256);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let ckpt = tiny_ckpt();
        ckpt.save(dir.path()).unwrap();
        let back = Checkpoint::load(dir.path()).unwrap();
        assert_eq!(back.meta, ckpt.meta);
        for ((n1, a), (n2, b)) in ckpt.params.tensors().iter().zip(back.params.tensors()) {
            assert_eq!(n1, &n2);
            let bits_a: Vec<u32> = a.data().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u32> = b.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b, "{n1}");
        }
    }

    #[test]
    fn truncated_payload_names_the_tensor() {
        let dir = tempfile::tempdir().unwrap();
        tiny_ckpt().save(dir.path()).unwrap();
        let p = dir.path().join(PAYLOAD_FILE);
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 2]).unwrap();
        let err = Checkpoint::load(dir.path()).unwrap_err().to_string();
        assert!(err.contains("head.bias") && err.contains("truncated"), "{err}");
    }

    #[test]
    fn version_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        tiny_ckpt().save(dir.path()).unwrap();
        let h = dir.path().join(HEADER_FILE);
        let text = fs::read_to_string(&h)
            .unwrap()
            .replace("format_version = 1", "format_version = 9");
        fs::write(&h, text).unwrap();
        assert!(matches!(
            Checkpoint::load(dir.path()),
            Err(Error::Version { found: 9, .. })
        ));
    }

    #[test]
    fn pretrained_head_reinit() {
        let ckpt = tiny_ckpt();
        let raw = ckpt.to_raw();
        let same = load_pretrained(&raw, &ModelConfig::tiny(), false, 0).unwrap();
        assert_eq!(same, ckpt.params);
        let fresh = load_pretrained(&raw, &ModelConfig::tiny(), true, 0).unwrap();
        assert_ne!(fresh.head_w, ckpt.params.head_w);
        for ((name, a), (_, b)) in fresh.tensors().iter().zip(ckpt.params.tensors()) {
            if !HEAD_TENSORS.contains(&name.as_str()) {
                assert_eq!(*a, b, "{name}");
            }
        }
    }

    #[test]
    fn trunk_only_export_with_foreign_head() {
        let ckpt = tiny_ckpt();
        let mut raw = ckpt.to_raw();
        raw.tensors.retain(|(n, _)| !n.starts_with("head."));
        raw.tensors.push(("head.weight".into(), Tensor::zeros([16, 1000])));
        assert!(load_pretrained(&raw, &ModelConfig::tiny(), false, 0).is_err());
        assert!(load_pretrained(&raw, &ModelConfig::tiny(), true, 0).is_ok());
    }
}
