use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{adam_step, AdamState};
use super::config::TrainConfig;
use super::data::{preprocess, Dataset};
use super::infer::predict_dataset_with;
use crate::error::{Error, Result};
use crate::metrics::{self, fmt_opt};
use crate::par;
use crate::vit::{
    load_pretrained, loss_and_grad, Checkpoint, GradScope, Normalization, Parameters, RawCheckpoint, TrainingMeta,
};

pub const HISTORY_HEADER: &str = "epoch,train_mse,val_mse,val_spearman";

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    /// Optimiser steps taken so far.
    pub step: u64,
    /// Mean squared error of the pre-update predictions over the epoch.
    pub train_mse: f64,
    pub val_mse: f64,
    /// `None` when the correlation is undefined.
    pub val_spearman: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters after the epoch with the lowest validation MSE.
    pub best: Checkpoint,
    /// Parameters after the final step.
    pub last: Checkpoint,
    pub history: Vec<EpochStats>,
}

impl TrainConfig {
    /// Random initialisation, or the `init` checkpoint when one is configured.
    pub fn initial_parameters(&self) -> Result<Parameters<f32>> {
        match &self.init {
            None => Parameters::init(&self.model, self.seed),
            Some(dir) => load_pretrained(&RawCheckpoint::read(dir)?, &self.model, self.reinit_head, self.seed),
        }
    }
}

/// Trains from `init`; see [`train_with`].
pub fn train(
    cfg: &TrainConfig,
    train_ds: &dyn Dataset,
    val_ds: &dyn Dataset,
    init: Parameters<f32>,
) -> Result<TrainOutcome> {
    train_with(cfg, train_ds, val_ds, init, |_| {})
}

/// Mini-batch ADAM on the MSE loss. Each batch is loaded, resized,
/// augmented, cropped and standardised in parallel; parameter updates are
/// sequential. Validation uses the inference path without augmentation.
/// `on_epoch` sees each epoch's statistics as they are produced.
pub fn train_with(
    cfg: &TrainConfig,
    train_ds: &dyn Dataset,
    val_ds: &dyn Dataset,
    init: Parameters<f32>,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if init.config != cfg.model {
        return Err(Error::Config(format!(
            "initial parameters are for {:?}, config asks for {:?}",
            init.config, cfg.model
        )));
    }
    if train_ds.is_empty() || val_ds.is_empty() {
        return Err(Error::EmptyInput { op: "train" });
    }
    let scope = if cfg.freeze_trunk {
        GradScope::HeadOnly
    } else {
        GradScope::All
    };
    let adam = cfg.adam();
    let norm = Normalization::default();
    let meta_at = |step| TrainingMeta {
        step,
        seed: cfg.seed,
        normalization: norm,
        resize_to: Some(cfg.resize_to),
    };

    let mut params = init;
    let mut state = AdamState::new(&params);
    let mut best: Option<(f64, Parameters<f32>, u64)> = None;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut step = 0u64;
    let budget = cfg.max_steps.unwrap_or(u64::MAX);

    'epochs: for epoch in 0..cfg.epochs {
        if step >= budget {
            break;
        }
        let mut order: Vec<usize> = (0..train_ds.len()).collect();
        if cfg.shuffle {
            order.shuffle(&mut epoch_rng(cfg.seed, epoch as u64));
        }
        let (mut sq_sum, mut seen) = (0.0f64, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let images = par::map_slice(batch, |&i| {
                let img = train_ds.image(i)?;
                preprocess(
                    &img,
                    cfg.resize_to,
                    cfg.crop_to,
                    Some((&cfg.augment, i as u64, epoch as u64)),
                    norm,
                )
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
            let targets: Vec<f32> = batch.iter().map(|&i| train_ds.score(i) as f32).collect();
            let lg = loss_and_grad(&params, &images, &targets, scope)?;
            if !lg.loss.is_finite() {
                return Err(Error::Diverged {
                    step,
                    loss: f64::from(lg.loss),
                });
            }
            adam_step(&mut params, &lg.grads, &mut state, &adam, scope)?;
            step += 1;
            sq_sum += f64::from(lg.loss) * batch.len() as f64;
            seen += batch.len();
            if step >= budget {
                let stats = validate(&params, &meta_at(step), val_ds, epoch, step, sq_sum / seen as f64)?;
                record(&mut best, &mut history, &mut on_epoch, stats, &params, step);
                break 'epochs;
            }
        }
        let stats = validate(&params, &meta_at(step), val_ds, epoch, step, sq_sum / seen as f64)?;
        record(&mut best, &mut history, &mut on_epoch, stats, &params, step);
    }

    let last = Checkpoint::new(params, meta_at(step));
    let best = match best {
        Some((_, p, s)) => Checkpoint::new(p, meta_at(s)),
        None => last.clone(),
    };
    Ok(TrainOutcome { best, last, history })
}

fn epoch_rng(seed: u64, epoch: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&epoch.to_le_bytes());
    key[24..].copy_from_slice(b"shuffle\0");
    ChaCha8Rng::from_seed(key)
}

fn validate(
    params: &Parameters<f32>,
    meta: &TrainingMeta,
    val_ds: &dyn Dataset,
    epoch: usize,
    step: u64,
    train_mse: f64,
) -> Result<EpochStats> {
    let pred = predict_dataset_with(params, meta, val_ds)?;
    let target: Vec<f64> = (0..val_ds.len()).map(|i| val_ds.score(i)).collect();
    Ok(EpochStats {
        epoch: epoch + 1,
        step,
        train_mse,
        val_mse: metrics::mse(&pred, &target)?,
        val_spearman: metrics::spearman(&pred, &target).ok(),
    })
}

fn record(
    best: &mut Option<(f64, Parameters<f32>, u64)>,
    history: &mut Vec<EpochStats>,
    on_epoch: &mut impl FnMut(&EpochStats),
    stats: EpochStats,
    params: &Parameters<f32>,
    step: u64,
) {
    on_epoch(&stats);
    if best.as_ref().is_none_or(|(mse, _, _)| stats.val_mse < *mse) {
        *best = Some((stats.val_mse, params.clone(), step));
    }
    history.push(stats);
}

/// Writes `epoch,train_mse,val_mse,val_spearman` rows, `NA` for undefined values.
pub fn write_history(path: &Path, history: &[EpochStats]) -> Result<()> {
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for h in history {
        out.push_str(&format!(
            "{},{},{},{}\n",
            h.epoch,
            h.train_mse,
            h.val_mse,
            fmt_opt(h.val_spearman)
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::{AugmentSpec, ImageBuffer};
    use crate::trainer::InMemoryDataset;
    use crate::vit::ModelConfig;

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            batch_size: 4,
            resize_to: 8,
            crop_to: 8,
            learning_rate: 1e-3,
            epochs: 2,
            model: ModelConfig::tiny(),
            augment: AugmentSpec::with_probability(1, 0.5),
            ..TrainConfig::default()
        }
    }

    fn data(n: usize) -> InMemoryDataset {
        let items = (0..n)
            .map(|i| {
                let img = ImageBuffer::from_fn(8, 8, |x, y| {
                    let v = ((x * 3 + y * 5 + i * 7) % 11) as f32 / 10.0;
                    [v, 1.0 - v, 0.5]
                });
                (format!("s{i}"), img, (i % 5) as f64 / 4.0)
            })
            .collect();
        InMemoryDataset::new(items).unwrap()
    }

    #[test]
    fn deterministic_history() {
        let cfg = tiny_cfg();
        let ds = data(6);
        let run = || train(&cfg, &ds, &ds, cfg.initial_parameters().unwrap()).unwrap();
        let (a, b) = (run(), run());
        assert_eq!(a.history, b.history);
        assert_eq!(a.last.params, b.last.params);
        assert_eq!(a.history.len(), 2);
        assert_eq!(a.history[1].step, 4);
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..tiny_cfg()
        };
        let init = cfg.initial_parameters().unwrap();
        let out = train(&cfg, &data(5), &data(5), init.clone()).unwrap();
        assert_eq!(out.last.params, init);
    }

    #[test]
    fn frozen_trunk_changes_only_head() {
        let cfg = TrainConfig {
            freeze_trunk: true,
            ..tiny_cfg()
        };
        let init = cfg.initial_parameters().unwrap();
        let out = train(&cfg, &data(5), &data(5), init.clone()).unwrap();
        for ((name, a), (_, b)) in out.last.params.tensors().iter().zip(init.tensors()) {
            if name.starts_with("head.") {
                assert_ne!(*a, b, "{name}");
            } else {
                assert_eq!(*a, b, "{name}");
            }
        }
    }

    #[test]
    fn max_steps_stops_mid_epoch() {
        let cfg = TrainConfig {
            max_steps: Some(3),
            epochs: 5,
            ..tiny_cfg()
        };
        let out = train(&cfg, &data(8), &data(3), cfg.initial_parameters().unwrap()).unwrap();
        assert_eq!(out.last.meta.step, 3);
        assert_eq!(out.history.len(), 2);
        assert!(out.history.iter().any(|h| h.step == out.best.meta.step));
    }

    #[test]
    fn rejects_empty_and_mismatched() {
        let cfg = tiny_cfg();
        let empty = InMemoryDataset::default();
        assert!(train(&cfg, &empty, &data(2), cfg.initial_parameters().unwrap()).is_err());
        let other = Parameters::init(
            &ModelConfig {
                dim: 8,
                heads: 2,
                ..ModelConfig::tiny()
            },
            0,
        )
        .unwrap();
        assert!(train(&cfg, &data(2), &data(2), other).is_err());
    }

    #[test]
    fn history_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.csv");
        let h = vec![EpochStats {
            epoch: 1,
            step: 2,
            train_mse: 0.25,
            val_mse: 0.5,
            val_spearman: None,
        }];
        write_history(&p, &h).unwrap();
        assert_eq!(
            std::fs::read_to_string(p).unwrap(),
            "epoch,train_mse,val_mse,val_spearman\n1,0.25,0.5,NA\n"
        );
    }
}
