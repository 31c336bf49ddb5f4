use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Input images are RGB.
pub const CHANNELS: usize = 3;

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::base()
    }
}

impl ModelConfig {
    /// ViT-Base/16 at 224 px.
    pub const fn base() -> Self {
        Self {
            image_size: 224,
            patch_size: 16,
            dim: 768,
            depth: 12,
            heads: 12,
            mlp_dim: 3072,
        }
    }

    /// Toy configuration used by the gradient and overfit tests.
    pub const fn tiny() -> Self {
        Self {
            image_size: 8,
            patch_size: 4,
            dim: 16,
            depth: 2,
            heads: 2,
            mlp_dim: 32,
        }
    }

    /// `depth` may be zero; every other field must be positive.
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("image_size", self.image_size),
            ("patch_size", self.patch_size),
            ("dim", self.dim),
            ("heads", self.heads),
            ("mlp_dim", self.mlp_dim),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if !self.image_size.is_multiple_of(self.patch_size) {
            return Err(Error::Config(format!(
                "image_size {} is not divisible by patch_size {}",
                self.image_size, self.patch_size
            )));
        }
        if !self.dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "dim {} is not divisible by heads {}",
                self.dim, self.heads
            )));
        }
        Ok(())
    }

    pub fn num_patches(&self) -> usize {
        let side = self.image_size / self.patch_size;
        side * side
    }

    /// Tokens per image including the class token.
    pub fn seq_len(&self) -> usize {
        self.num_patches() + 1
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * CHANNELS
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    /// Every parameter tensor's name and shape, in checkpoint order.
    pub fn tensor_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let (d, m) = (self.dim, self.mlp_dim);
        let mut out = vec![
            ("patch_embed.weight".to_string(), vec![self.patch_dim(), d]),
            ("patch_embed.bias".to_string(), vec![d]),
            ("cls_token".to_string(), vec![d]),
            ("pos_embed".to_string(), vec![self.seq_len(), d]),
        ];
        for b in 0..self.depth {
            let p = |s: &str| format!("blocks.{b}.{s}");
            out.extend([
                (p("norm1.weight"), vec![d]),
                (p("norm1.bias"), vec![d]),
                (p("attn.q.weight"), vec![d, d]),
                (p("attn.q.bias"), vec![d]),
                (p("attn.k.weight"), vec![d, d]),
                (p("attn.k.bias"), vec![d]),
                (p("attn.v.weight"), vec![d, d]),
                (p("attn.v.bias"), vec![d]),
                (p("attn.proj.weight"), vec![d, d]),
                (p("attn.proj.bias"), vec![d]),
                (p("norm2.weight"), vec![d]),
                (p("norm2.bias"), vec![d]),
                (p("mlp.fc1.weight"), vec![d, m]),
                (p("mlp.fc1.bias"), vec![m]),
                (p("mlp.fc2.weight"), vec![m, d]),
                (p("mlp.fc2.bias"), vec![d]),
            ]);
        }
        out.extend([
            ("norm.weight".to_string(), vec![d]),
            ("norm.bias".to_string(), vec![d]),
            ("head.weight".to_string(), vec![d]),
            ("head.bias".to_string(), vec![1]),
        ]);
        out
    }
}

/// Exact number of scalar parameters for `config`.
pub fn count_params(config: &ModelConfig) -> usize {
    let (d, m) = (config.dim, config.mlp_dim);
    let embed = config.patch_dim() * d + d + d + config.seq_len() * d;
    let attn = 4 * (d * d + d);
    let mlp = d * m + m + m * d + d;
    let norms = 4 * d;
    let head = 2 * d + d + 1;
    embed + config.depth * (attn + mlp + norms) + head
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(ModelConfig::base().validate().is_ok());
        assert!(ModelConfig::tiny().validate().is_ok());
        let bad = ModelConfig {
            image_size: 10,
            ..ModelConfig::tiny()
        };
        assert!(bad.validate().is_err());
        let bad = ModelConfig {
            heads: 3,
            ..ModelConfig::tiny()
        };
        assert!(bad.validate().is_err());
        let bad = ModelConfig {
            patch_size: 0,
            ..ModelConfig::tiny()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn geometry() {
        let b = ModelConfig::base();
        assert_eq!(b.num_patches(), 196);
        assert_eq!(b.patch_dim(), 768);
        let t = ModelConfig::tiny();
        assert_eq!(t.num_patches(), 4);
        assert_eq!(t.patch_dim(), 48);
    }

    #[test]
    fn count_matches_shape_table() {
        for cfg in [ModelConfig::tiny(), ModelConfig::base()] {
            let enumerated: usize = cfg
                .tensor_shapes()
                .iter()
                .map(|(_, s)| s.iter().product::<usize>())
                .sum();
            assert_eq!(count_params(&cfg), enumerated);
        }
    }

    #[test]
    fn degenerate_count() {
        let cfg = ModelConfig {
            image_size: 4,
            patch_size: 2,
            dim: 1,
            depth: 0,
            heads: 1,
            mlp_dim: 1,
        };
        // head w+b, patch proj 12x1 + bias, pos 5x1, cls 1, final norm 2
        assert_eq!(count_params(&cfg), 2 + 12 + 1 + 5 + 1 + 2);
    }

    #[test]
    fn base_count_near_published() {
        // ViT-B/16 trunk without classifier: 85,798,656 parameters
        let n = count_params(&ModelConfig::base()) as f64;
        assert_eq!(n as usize, 85_798_656 + 769);
        assert!((n - 85_798_656.0).abs() / 85_798_656.0 < 0.01);
        // with the 1000-way ImageNet head: 86,567,656
        assert!((n - 86_567_656.0).abs() / 86_567_656.0 < 0.01);
    }
}
