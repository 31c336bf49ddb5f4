use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::clahe::clahe;
use super::color::{hsv_to_rgb, rgb_to_hsv};
use super::filters::{convolve_real, convolve_weighted, line_kernel};
use super::geometry;
use super::image::ImageBuffer;
use crate::error::{Error, Result};

/// Default application probability of every transform.
pub const DEFAULT_P: f64 = 0.7;

/// Parameter ranges of one transform kind. Defaults follow the common
/// augmentation-library conventions; colour shifts are on the 8-bit scale
/// (hue in OpenCV half-degrees).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TransformConfig {
    HorizontalFlip,
    Sharpen {
        alpha: (f64, f64),
        lightness: (f64, f64),
    },
    Blur {
        blur_limit: (usize, usize),
    },
    MotionBlur {
        blur_limit: (usize, usize),
    },
    RandomContrast {
        limit: (f64, f64),
    },
    HueSaturationValue {
        hue_shift_limit: f64,
        sat_shift_limit: f64,
        val_shift_limit: f64,
    },
    Clahe {
        clip_limit: (f64, f64),
        tile_grid_size: (usize, usize),
    },
    ShiftScaleRotate {
        shift_limit: f64,
        scale_limit: f64,
        rotate_limit: f64,
    },
    Perspective {
        scale: (f64, f64),
    },
    OpticalDistortion {
        distort_limit: f64,
        shift_limit: f64,
    },
    GridDistortion {
        num_steps: usize,
        distort_limit: f64,
    },
}

pub(crate) const KINDS: [&str; 11] = [
    "horizontal_flip",
    "sharpen",
    "blur",
    "motion_blur",
    "random_contrast",
    "hue_saturation_value",
    "clahe",
    "shift_scale_rotate",
    "perspective",
    "optical_distortion",
    "grid_distortion",
];

fn check_range(kind: &str, name: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if lo.is_finite() && hi.is_finite() && lo <= hi {
        Ok(())
    } else {
        Err(Error::Config(format!("{kind}.{name}: empty range ({lo}, {hi})")))
    }
}

fn check_limit(kind: &str, name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{kind}.{name}: limit must be finite and ≥ 0, got {v}"
        )))
    }
}

fn check_odd(kind: &str, (lo, hi): (usize, usize)) -> Result<()> {
    if lo >= 3 && lo <= hi && (lo % 2 == 1 || lo < hi) {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{kind}.blur_limit: need 3 ≤ lo ≤ hi with an odd size inside, got ({lo}, {hi})"
        )))
    }
}

impl TransformConfig {
    /// Default ranges for a named kind.
    pub fn from_kind(kind: &str) -> Result<Self> {
        Ok(match kind {
            "horizontal_flip" => Self::HorizontalFlip,
            "sharpen" => Self::Sharpen {
                alpha: (0.2, 0.5),
                lightness: (0.5, 1.0),
            },
            "blur" => Self::Blur { blur_limit: (3, 7) },
            "motion_blur" => Self::MotionBlur { blur_limit: (3, 7) },
            "random_contrast" => Self::RandomContrast { limit: (-0.2, 0.2) },
            "hue_saturation_value" => Self::HueSaturationValue {
                hue_shift_limit: 20.0,
                sat_shift_limit: 30.0,
                val_shift_limit: 20.0,
            },
            "clahe" => Self::Clahe {
                clip_limit: (1.0, 4.0),
                tile_grid_size: (8, 8),
            },
            "shift_scale_rotate" => Self::ShiftScaleRotate {
                shift_limit: 0.0625,
                scale_limit: 0.1,
                rotate_limit: 45.0,
            },
            "perspective" => Self::Perspective { scale: (0.05, 0.1) },
            "optical_distortion" => Self::OpticalDistortion {
                distort_limit: 0.05,
                shift_limit: 0.05,
            },
            "grid_distortion" => Self::GridDistortion {
                num_steps: 5,
                distort_limit: 0.3,
            },
            other => return Err(Error::UnknownTransform(other.to_string())),
        })
    }

    /// All eleven kinds with default ranges, in canonical order.
    pub fn all() -> Vec<Self> {
        KINDS
            .iter()
            .map(|k| Self::from_kind(k).expect("canonical kind"))
            .collect()
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::HorizontalFlip => KINDS[0],
            Self::Sharpen { .. } => KINDS[1],
            Self::Blur { .. } => KINDS[2],
            Self::MotionBlur { .. } => KINDS[3],
            Self::RandomContrast { .. } => KINDS[4],
            Self::HueSaturationValue { .. } => KINDS[5],
            Self::Clahe { .. } => KINDS[6],
            Self::ShiftScaleRotate { .. } => KINDS[7],
            Self::Perspective { .. } => KINDS[8],
            Self::OpticalDistortion { .. } => KINDS[9],
            Self::GridDistortion { .. } => KINDS[10],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.kind();
        match *self {
            Self::HorizontalFlip => Ok(()),
            Self::Sharpen { alpha, lightness } => {
                check_range(k, "alpha", alpha)?;
                check_range(k, "lightness", lightness)?;
                if alpha.0 < 0.0 || alpha.1 > 1.0 {
                    return Err(Error::Config(format!("{k}.alpha must lie in [0, 1]")));
                }
                Ok(())
            }
            Self::Blur { blur_limit } | Self::MotionBlur { blur_limit } => check_odd(k, blur_limit),
            Self::RandomContrast { limit } => {
                check_range(k, "limit", limit)?;
                if limit.0 < -1.0 {
                    return Err(Error::Config(format!("{k}.limit must be ≥ -1")));
                }
                Ok(())
            }
            Self::HueSaturationValue {
                hue_shift_limit,
                sat_shift_limit,
                val_shift_limit,
            } => {
                check_limit(k, "hue_shift_limit", hue_shift_limit)?;
                check_limit(k, "sat_shift_limit", sat_shift_limit)?;
                check_limit(k, "val_shift_limit", val_shift_limit)
            }
            Self::Clahe {
                clip_limit,
                tile_grid_size,
            } => {
                check_range(k, "clip_limit", clip_limit)?;
                if clip_limit.0 <= 0.0 || tile_grid_size.0 == 0 || tile_grid_size.1 == 0 {
                    return Err(Error::Config(format!(
                        "{k}: clip_limit must be > 0 and tile_grid_size ≥ 1"
                    )));
                }
                Ok(())
            }
            Self::ShiftScaleRotate {
                shift_limit,
                scale_limit,
                rotate_limit,
            } => {
                check_limit(k, "shift_limit", shift_limit)?;
                check_limit(k, "scale_limit", scale_limit)?;
                check_limit(k, "rotate_limit", rotate_limit)?;
                if scale_limit >= 1.0 {
                    return Err(Error::Config(format!("{k}.scale_limit must be < 1")));
                }
                Ok(())
            }
            Self::Perspective { scale } => {
                check_range(k, "scale", scale)?;
                if scale.0 < 0.0 {
                    return Err(Error::Config(format!("{k}.scale must be ≥ 0")));
                }
                Ok(())
            }
            Self::OpticalDistortion {
                distort_limit,
                shift_limit,
            } => {
                check_limit(k, "distort_limit", distort_limit)?;
                check_limit(k, "shift_limit", shift_limit)
            }
            Self::GridDistortion {
                num_steps,
                distort_limit,
            } => {
                check_limit(k, "distort_limit", distort_limit)?;
                if num_steps == 0 || distort_limit >= 1.0 {
                    return Err(Error::Config(format!(
                        "{k}: num_steps must be ≥ 1 and distort_limit < 1"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Draws concrete parameters from the configured ranges.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Transform {
        fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
            if lo == hi {
                lo
            } else {
                rng.random_range(lo..=hi)
            }
        }
        fn odd<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (usize, usize)) -> usize {
            let sizes: Vec<usize> = (lo..=hi).filter(|s| s % 2 == 1).collect();
            sizes[rng.random_range(0..sizes.len())]
        }
        match *self {
            Self::HorizontalFlip => Transform::HorizontalFlip,
            Self::Sharpen { alpha, lightness } => Transform::Sharpen {
                alpha: uniform(rng, alpha),
                lightness: uniform(rng, lightness),
            },
            Self::Blur { blur_limit } => Transform::Blur {
                size: odd(rng, blur_limit),
            },
            Self::MotionBlur { blur_limit } => Transform::MotionBlur {
                size: odd(rng, blur_limit),
                angle: rng.random_range(0.0..180.0),
            },
            Self::RandomContrast { limit } => Transform::RandomContrast {
                factor: 1.0 + uniform(rng, limit),
            },
            Self::HueSaturationValue {
                hue_shift_limit,
                sat_shift_limit,
                val_shift_limit,
            } => Transform::HueSaturationValue {
                hue_deg: 2.0 * uniform(rng, (-hue_shift_limit, hue_shift_limit)),
                sat: uniform(rng, (-sat_shift_limit, sat_shift_limit)) / 255.0,
                val: uniform(rng, (-val_shift_limit, val_shift_limit)) / 255.0,
            },
            Self::Clahe {
                clip_limit,
                tile_grid_size,
            } => Transform::Clahe {
                clip_limit: uniform(rng, clip_limit),
                tiles: tile_grid_size,
            },
            Self::ShiftScaleRotate {
                shift_limit,
                scale_limit,
                rotate_limit,
            } => Transform::ShiftScaleRotate {
                dx: uniform(rng, (-shift_limit, shift_limit)),
                dy: uniform(rng, (-shift_limit, shift_limit)),
                scale: 1.0 + uniform(rng, (-scale_limit, scale_limit)),
                angle: uniform(rng, (-rotate_limit, rotate_limit)),
            },
            Self::Perspective { scale } => {
                let sigma = uniform(rng, scale);
                let normal = Normal::new(0.0, sigma).expect("non-negative sigma");
                let mut jitter = || normal.sample(rng).abs().min(0.45);
                let quad = [
                    (jitter(), jitter()),
                    (1.0 - jitter(), jitter()),
                    (1.0 - jitter(), 1.0 - jitter()),
                    (jitter(), 1.0 - jitter()),
                ];
                Transform::Perspective { quad }
            }
            Self::OpticalDistortion {
                distort_limit,
                shift_limit,
            } => Transform::OpticalDistortion {
                k: uniform(rng, (-distort_limit, distort_limit)),
                dx: uniform(rng, (-shift_limit, shift_limit)),
                dy: uniform(rng, (-shift_limit, shift_limit)),
            },
            Self::GridDistortion {
                num_steps,
                distort_limit,
            } => {
                let range = (1.0 - distort_limit, 1.0 + distort_limit);
                let xsteps = (0..num_steps).map(|_| uniform(rng, range)).collect();
                let ysteps = (0..num_steps).map(|_| uniform(rng, range)).collect();
                Transform::GridDistortion { xsteps, ysteps }
            }
        }
    }
}

/// A configured transform with its application probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "toml::Table")]
pub struct TransformSpec {
    pub p: f64,
    #[serde(flatten)]
    pub config: TransformConfig,
}

// Hand-split so unknown keys are still rejected, which `flatten` cannot do.
impl TryFrom<toml::Table> for TransformSpec {
    type Error = String;

    fn try_from(mut table: toml::Table) -> Result<Self, String> {
        let p = match table.remove("p") {
            None => DEFAULT_P,
            Some(toml::Value::Float(p)) => p,
            Some(toml::Value::Integer(p)) => p as f64,
            Some(other) => return Err(format!("p must be a number, got {other}")),
        };
        // omitted fields take the kind's default range
        if let Some(toml::Value::String(kind)) = table.get("kind") {
            let defaults = TransformConfig::from_kind(kind).map_err(|e| e.to_string())?;
            for (k, v) in toml::Table::try_from(&defaults).map_err(|e| e.to_string())? {
                table.entry(k).or_insert(v);
            }
        }
        let config = TransformConfig::deserialize(table.clone()).map_err(|e| e.to_string())?;
        // unit variants swallow extra keys, so compare against the canonical form
        let known = toml::Table::try_from(&config).map_err(|e| e.to_string())?;
        if let Some(key) = table.keys().find(|k| !known.contains_key(*k)) {
            return Err(format!("unknown field `{key}` for {}", config.kind()));
        }
        Ok(Self { p, config })
    }
}

impl TransformSpec {
    pub fn new(config: TransformConfig, p: f64) -> Self {
        Self { p, config }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::Config(format!(
                "{}: probability {} outside [0, 1]",
                self.config.kind(),
                self.p
            )));
        }
        self.config.validate()
    }
}

/// A transform with concrete, already-sampled parameters. Shifts and
/// quadrilateral corners are fractions of the image size.
#[derive(Debug, Clone, PartialEq)]
pub enum Transform {
    HorizontalFlip,
    Sharpen { alpha: f64, lightness: f64 },
    Blur { size: usize },
    MotionBlur { size: usize, angle: f64 },
    RandomContrast { factor: f64 },
    HueSaturationValue { hue_deg: f64, sat: f64, val: f64 },
    Clahe { clip_limit: f64, tiles: (usize, usize) },
    ShiftScaleRotate { dx: f64, dy: f64, scale: f64, angle: f64 },
    Perspective { quad: [(f64, f64); 4] },
    OpticalDistortion { k: f64, dx: f64, dy: f64 },
    GridDistortion { xsteps: Vec<f64>, ysteps: Vec<f64> },
}

impl Transform {
    pub fn apply(&self, img: &ImageBuffer) -> Result<ImageBuffer> {
        Ok(match self {
            Self::HorizontalFlip => flip(img),
            Self::Sharpen { alpha, lightness } => {
                let mut k = vec![-alpha; 9];
                k[4] = (1.0 - alpha) + alpha * (8.0 + lightness);
                convolve_real(img, 3, &k)
            }
            Self::Blur { size } => convolve_weighted(img, *size, &vec![1; size * size]),
            Self::MotionBlur { size, angle } => convolve_weighted(img, *size, &line_kernel(*size, *angle)),
            Self::RandomContrast { factor } => contrast(img, *factor as f32),
            Self::HueSaturationValue { hue_deg, sat, val } => {
                let (h, s, v) = (*hue_deg as f32, *sat as f32, *val as f32);
                let data = img
                    .data()
                    .chunks_exact(3)
                    .flat_map(|p| {
                        let [ph, ps, pv] = rgb_to_hsv([p[0], p[1], p[2]]);
                        hsv_to_rgb([ph + h, (ps + s).clamp(0.0, 1.0), (pv + v).clamp(0.0, 1.0)])
                    })
                    .collect();
                ImageBuffer::from_raw_clamped(img.width(), img.height(), data)
            }
            Self::Clahe { clip_limit, tiles } => clahe(img, *clip_limit, *tiles)?,
            Self::ShiftScaleRotate { dx, dy, scale, angle } => {
                geometry::shift_scale_rotate(img, *dx, *dy, *scale, *angle)
            }
            Self::Perspective { quad } => geometry::perspective(img, *quad)?,
            Self::OpticalDistortion { k, dx, dy } => {
                geometry::optical_distortion(img, *k, dx * img.width() as f64, dy * img.height() as f64)
            }
            Self::GridDistortion { xsteps, ysteps } => geometry::grid_distortion(img, xsteps, ysteps),
        })
    }
}

fn flip(img: &ImageBuffer) -> ImageBuffer {
    let w = img.width();
    let data = img
        .data()
        .chunks_exact(w * 3)
        .flat_map(|row| row.chunks_exact(3).rev().flatten().copied())
        .collect();
    ImageBuffer::from_raw_clamped(w, img.height(), data)
}

/// `x·f + μ·(1 − f)` with μ the mean grey level.
fn contrast(img: &ImageBuffer, factor: f32) -> ImageBuffer {
    if factor == 1.0 {
        return img.clone();
    }
    let n = (img.width() * img.height()) as f64;
    let mean = img
        .data()
        .chunks_exact(3)
        .map(|p| 0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2]))
        .sum::<f64>()
        / n;
    let offset = mean as f32 * (1.0 - factor);
    let data = img.data().iter().map(|v| v * factor + offset).collect();
    ImageBuffer::from_raw_clamped(img.width(), img.height(), data)
}

/// Samples parameters for `config` and applies them.
pub fn apply_transform<R: Rng + ?Sized>(
    config: &TransformConfig,
    img: &ImageBuffer,
    rng: &mut R,
) -> Result<ImageBuffer> {
    config.validate()?;
    config.sample(rng).apply(img)
}
