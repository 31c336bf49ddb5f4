use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::diffmath::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Standard deviation of the normal initialiser for weights and embeddings.
pub const INIT_STD: f64 = 0.02;

/// Names of the regression head tensors; everything else is trunk.
pub const HEAD_TENSORS: [&str; 2] = ["head.weight", "head.bias"];

/// One pre-LN encoder block. Weight matrices are stored `[in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Block<T> {
    pub norm1_g: Tensor<T>,
    pub norm1_b: Tensor<T>,
    pub wq: Tensor<T>,
    pub bq: Tensor<T>,
    pub wk: Tensor<T>,
    pub bk: Tensor<T>,
    pub wv: Tensor<T>,
    pub bv: Tensor<T>,
    pub wo: Tensor<T>,
    pub bo: Tensor<T>,
    pub norm2_g: Tensor<T>,
    pub norm2_b: Tensor<T>,
    pub w1: Tensor<T>,
    pub b1: Tensor<T>,
    pub w2: Tensor<T>,
    pub b2: Tensor<T>,
}

impl<T: Scalar> Block<T> {
    fn tensors(&self) -> [&Tensor<T>; 16] {
        [
            &self.norm1_g,
            &self.norm1_b,
            &self.wq,
            &self.bq,
            &self.wk,
            &self.bk,
            &self.wv,
            &self.bv,
            &self.wo,
            &self.bo,
            &self.norm2_g,
            &self.norm2_b,
            &self.w1,
            &self.b1,
            &self.w2,
            &self.b2,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor<T>; 16] {
        [
            &mut self.norm1_g,
            &mut self.norm1_b,
            &mut self.wq,
            &mut self.bq,
            &mut self.wk,
            &mut self.bk,
            &mut self.wv,
            &mut self.bv,
            &mut self.wo,
            &mut self.bo,
            &mut self.norm2_g,
            &mut self.norm2_b,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
        ]
    }
}

/// All model weights. Also used to hold gradients, which share the layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters<T = f32> {
    pub config: ModelConfig,
    pub patch_w: Tensor<T>,
    pub patch_b: Tensor<T>,
    pub cls_token: Tensor<T>,
    pub pos_embed: Tensor<T>,
    pub blocks: Vec<Block<T>>,
    pub norm_g: Tensor<T>,
    pub norm_b: Tensor<T>,
    pub head_w: Tensor<T>,
    pub head_b: Tensor<T>,
}

impl<T: Scalar> Parameters<T> {
    /// Random initialisation: weights and embeddings ~ N(0, 0.02²), biases 0, norm gains 1.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Self::zeros(config);
        for (name, t) in params.tensors_mut() {
            if name.ends_with("norm1.weight") || name.ends_with("norm2.weight") || name == "norm.weight" {
                t.fill(T::one());
            } else if name.ends_with(".weight") || name == "cls_token" || name == "pos_embed" {
                *t = Tensor::randn(t.shape(), INIT_STD, &mut rng);
            }
        }
        Ok(params)
    }

    /// Every tensor zero-filled; the shape of a gradient accumulator.
    pub fn zeros(config: &ModelConfig) -> Self {
        let (d, m) = (config.dim, config.mlp_dim);
        let block = || Block {
            norm1_g: Tensor::zeros([d]),
            norm1_b: Tensor::zeros([d]),
            wq: Tensor::zeros([d, d]),
            bq: Tensor::zeros([d]),
            wk: Tensor::zeros([d, d]),
            bk: Tensor::zeros([d]),
            wv: Tensor::zeros([d, d]),
            bv: Tensor::zeros([d]),
            wo: Tensor::zeros([d, d]),
            bo: Tensor::zeros([d]),
            norm2_g: Tensor::zeros([d]),
            norm2_b: Tensor::zeros([d]),
            w1: Tensor::zeros([d, m]),
            b1: Tensor::zeros([m]),
            w2: Tensor::zeros([m, d]),
            b2: Tensor::zeros([d]),
        };
        Self {
            config: *config,
            patch_w: Tensor::zeros([config.patch_dim(), d]),
            patch_b: Tensor::zeros([d]),
            cls_token: Tensor::zeros([d]),
            pos_embed: Tensor::zeros([config.seq_len(), d]),
            blocks: (0..config.depth).map(|_| block()).collect(),
            norm_g: Tensor::zeros([d]),
            norm_b: Tensor::zeros([d]),
            head_w: Tensor::zeros([d]),
            head_b: Tensor::zeros([1]),
        }
    }

    fn refs(&self) -> Vec<&Tensor<T>> {
        let mut v = vec![&self.patch_w, &self.patch_b, &self.cls_token, &self.pos_embed];
        for b in &self.blocks {
            v.extend(b.tensors());
        }
        v.extend([&self.norm_g, &self.norm_b, &self.head_w, &self.head_b]);
        v
    }

    fn refs_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v = vec![
            &mut self.patch_w,
            &mut self.patch_b,
            &mut self.cls_token,
            &mut self.pos_embed,
        ];
        for b in &mut self.blocks {
            v.extend(b.tensors_mut());
        }
        v.extend([&mut self.norm_g, &mut self.norm_b, &mut self.head_w, &mut self.head_b]);
        v
    }

    /// `(name, tensor)` pairs in checkpoint order.
    pub fn tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let names = self.config.tensor_shapes();
        names.into_iter().map(|(n, _)| n).zip(self.refs()).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let names = self.config.tensor_shapes();
        names.into_iter().map(|(n, _)| n).zip(self.refs_mut()).collect()
    }

    pub fn num_scalars(&self) -> usize {
        self.refs().iter().map(|t| t.len()).sum()
    }

    /// Builds parameters from named tensors, checking every name and shape.
    ///
    /// With `skip_head`, head tensors are left zero and not required.
    pub fn from_named(config: &ModelConfig, mut named: HashMap<String, Tensor<T>>, skip_head: bool) -> Result<Self> {
        config.validate()?;
        let mut params = Self::zeros(config);
        for (name, slot) in params.tensors_mut() {
            if skip_head && HEAD_TENSORS.contains(&name.as_str()) {
                continue;
            }
            let t = named.remove(&name).ok_or_else(|| Error::Tensor {
                name: name.clone(),
                reason: "missing".into(),
            })?;
            if t.shape() != slot.shape() {
                return Err(Error::Tensor {
                    reason: format!("shape {:?}, expected {:?}", t.shape(), slot.shape()),
                    name,
                });
            }
            *slot = t;
        }
        Ok(params)
    }

    pub fn cast<U: Scalar>(&self) -> Parameters<U> {
        let mut out = Parameters::<U>::zeros(&self.config);
        for (dst, src) in out.refs_mut().into_iter().zip(self.refs()) {
            *dst = src.cast();
        }
        out
    }

    /// Adds `other` into `self` tensor by tensor.
    pub fn accumulate(&mut self, other: &Self) -> Result<()> {
        for (dst, src) in self.refs_mut().into_iter().zip(other.refs()) {
            dst.add_assign(src)?;
        }
        Ok(())
    }

    pub fn scale_in_place(&mut self, s: T) {
        for t in self.refs_mut() {
            t.data_mut().iter_mut().for_each(|x| *x = *x * s);
        }
    }

    /// Flattened copy of every tensor, in checkpoint order.
    pub fn to_flat(&self) -> Vec<Tensor<T>> {
        self.refs().into_iter().cloned().collect()
    }

    /// Inverse of [`Parameters::to_flat`].
    pub fn from_flat(config: &ModelConfig, flat: &[Tensor<T>]) -> Result<Self> {
        let mut out = Self::zeros(config);
        let slots = out.refs_mut();
        if slots.len() != flat.len() {
            return Err(Error::InvalidArgument(format!(
                "{} tensors for a model with {}",
                flat.len(),
                slots.len()
            )));
        }
        for (slot, t) in slots.into_iter().zip(flat) {
            if slot.shape() != t.shape() {
                return Err(Error::shape("from_flat", t.shape(), slot.shape()));
            }
            *slot = t.clone();
        }
        Ok(out)
    }

    /// Re-draws the head weight from N(0, 0.02²) and zeroes its bias.
    pub fn reinit_head(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6865_6164);
        self.head_w = Tensor::randn([self.config.dim], INIT_STD, &mut rng);
        self.head_b = Tensor::zeros([1]);
    }
}
