use crate::diffmath::{Scalar, Tensor};
use crate::error::{Error, Result};
use crate::vit::{GradScope, Parameters, HEAD_TENSORS};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate.is_finite()
            && self.learning_rate >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps.is_finite()
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid ADAM settings {self:?}")))
        }
    }
}

/// First and second moment estimates, one tensor per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &Parameters<T>) -> Self {
        let zeros: Vec<Tensor<T>> = params.tensors().iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// One bias-corrected ADAM update, in place.
///
/// With [`GradScope::HeadOnly`] only the head tensors and their moments move.
/// Gradients are checked before anything is modified, so an error leaves
/// `params` and `state` untouched.
pub fn adam_step<T: Scalar>(
    params: &mut Parameters<T>,
    grads: &Parameters<T>,
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
    scope: GradScope,
) -> Result<()> {
    let grad_tensors = grads.tensors();
    let in_scope = |name: &str| scope == GradScope::All || HEAD_TENSORS.contains(&name);
    if grad_tensors.len() != state.m.len() || params.config != grads.config {
        return Err(Error::InvalidArgument("ADAM state does not match the model".into()));
    }
    for ((name, g), m) in grad_tensors.iter().zip(&state.m) {
        if g.shape() != m.shape() {
            return Err(Error::shape("adam_step", g.shape(), m.shape()));
        }
        if in_scope(name) {
            if let Some(index) = g.first_non_finite() {
                return Err(Error::NonFinite {
                    context: format!("gradient of {name}"),
                    index,
                });
            }
        }
    }

    state.t += 1;
    let t = state.t as f64;
    let lit = T::from_f64_lossy;
    let (b1, b2) = (lit(cfg.beta1), lit(cfg.beta2));
    let (c1, c2) = (lit(1.0 - cfg.beta1.powf(t)), lit(1.0 - cfg.beta2.powf(t)));
    let (lr, eps) = (lit(cfg.learning_rate), lit(cfg.eps));
    let one = T::one();
    let slots = params.tensors_mut().into_iter().zip(grad_tensors);
    for (((name, theta), (_, g)), (m, v)) in slots.zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        if !in_scope(&name) {
            continue;
        }
        let (theta, m, v) = (theta.data_mut(), m.data_mut(), v.data_mut());
        for (i, &gi) in g.data().iter().enumerate() {
            m[i] = b1 * m[i] + (one - b1) * gi;
            v[i] = b2 * v[i] + (one - b2) * gi * gi;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            theta[i] = theta[i] - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
