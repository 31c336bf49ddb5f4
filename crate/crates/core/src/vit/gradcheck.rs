use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::model::{forward, loss_and_grad, GradScope};
use super::params::Parameters;
use crate::diffmath::{check_scalar_fn, GradCheckReport, Tensor};
use crate::error::Result;

/// Finite-difference check of the full batch-MSE gradient with respect to
/// every parameter, in `f64`.
///
/// Parameters are the standard initialisation plus N(0, 0.3²) noise so every
/// path (including the zero-initialised biases) carries signal.
pub fn model_grad_check(config: &ModelConfig, batch: usize, seed: u64, h: f64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Parameters::<f64>::init(config, seed)?;
    for (_, t) in params.tensors_mut() {
        t.add_assign(&Tensor::randn(t.shape(), 0.3, &mut rng))?;
    }
    let s = config.image_size;
    let images: Vec<Tensor<f64>> = (0..batch)
        .map(|_| Tensor::uniform([s, s, 3], -1.0, 1.0, &mut rng))
        .collect();
    let targets: Vec<f64> = (0..batch).map(|i| (i as f64 + 0.5) / batch as f64).collect();
    let analytic = loss_and_grad(&params, &images, &targets, GradScope::All)?
        .grads
        .to_flat();
    let n = batch as f64;
    check_scalar_fn("vit_mse", &params.to_flat(), &analytic, h, |xs| {
        let q = Parameters::from_flat(config, xs)?;
        let scores = forward(&q, &images)?;
        Ok(scores
            .data()
            .iter()
            .zip(&targets)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n)
    })
}
