use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ops::*;
use super::Tensor;
use crate::error::{Error, Result};

/// Central-difference step used when the caller has no reason to pick another.
pub const DEFAULT_STEP: f64 = 1e-3;

/// A forward/backward pair that can be verified by [`grad_check`].
pub trait DifferentiableOp {
    fn name(&self) -> &'static str;
    fn forward(&self, inputs: &[Tensor<f64>]) -> Result<Tensor<f64>>;
    /// Gradients with respect to every input, in input order.
    fn backward(&self, inputs: &[Tensor<f64>], grad_out: &Tensor<f64>) -> Result<Vec<Tensor<f64>>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub op: String,
    /// max over entries of |analytic − numeric| / max(1, |analytic|)
    pub max_rel_error: f64,
    pub worst_input: usize,
    pub worst_index: usize,
    pub entries: usize,
}

/// Checks `op.backward` against central finite differences.
///
/// The op output is reduced to a scalar with a fixed pseudo-random weighting,
/// so every output entry contributes to the checked gradient.
pub fn grad_check<O: DifferentiableOp + ?Sized>(op: &O, inputs: &[Tensor<f64>], h: f64) -> Result<GradCheckReport> {
    let out = op.forward(inputs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x6772_6164);
    let weights = Tensor::<f64>::uniform(out.shape(), -1.0, 1.0, &mut rng);
    let analytic = op.backward(inputs, &weights)?;
    check_scalar_fn(op.name(), inputs, &analytic, h, |xs| {
        let y = op.forward(xs)?;
        Ok(y.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum())
    })
}

/// Compares `analytic` gradients of the scalar function `f` with central differences.
pub fn check_scalar_fn<F>(
    name: &str,
    inputs: &[Tensor<f64>],
    analytic: &[Tensor<f64>],
    h: f64,
    mut f: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&[Tensor<f64>]) -> Result<f64>,
{
    if !(1e-5..=1e-2).contains(&h) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step {h} outside [1e-5, 1e-2]"
        )));
    }
    if analytic.len() != inputs.len() {
        return Err(Error::InvalidArgument(format!(
            "{name}: {} gradients for {} inputs",
            analytic.len(),
            inputs.len()
        )));
    }
    let mut report = GradCheckReport {
        op: name.to_string(),
        max_rel_error: 0.0,
        worst_input: 0,
        worst_index: 0,
        entries: 0,
    };
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (i, grad) in analytic.iter().enumerate() {
        if grad.shape() != inputs[i].shape() {
            return Err(Error::shape("grad_check", grad.shape(), inputs[i].shape()));
        }
        if let Some(j) = grad.first_non_finite() {
            return Err(Error::NonFinite {
                context: format!("{name}: analytic gradient of input {i}"),
                index: j,
            });
        }
        for j in 0..inputs[i].len() {
            let orig = inputs[i].data()[j];
            work[i].data_mut()[j] = orig + h;
            let plus = f(&work)?;
            work[i].data_mut()[j] = orig - h;
            let minus = f(&work)?;
            work[i].data_mut()[j] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("{name}: perturbed loss for input {i}"),
                    index: j,
                });
            }
            let numeric = (plus - minus) / (2.0 * h);
            let a = grad.data()[j];
            let rel = (a - numeric).abs() / a.abs().max(1.0);
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_input = i;
                report.worst_index = j;
            }
            report.entries += 1;
        }
    }
    Ok(report)
}

pub struct MatmulOp;

impl DifferentiableOp for MatmulOp {
    fn name(&self) -> &'static str {
        "matmul"
    }
    fn forward(&self, x: &[Tensor<f64>]) -> Result<Tensor<f64>> {
        matmul(&x[0], &x[1])
    }
    fn backward(&self, x: &[Tensor<f64>], g: &Tensor<f64>) -> Result<Vec<Tensor<f64>>> {
        let (da, db) = matmul_backward(&x[0], &x[1], g)?;
        Ok(vec![da, db])
    }
}

/// Inputs: `x [n, d]`, `bias [d]`.
pub struct AddBiasOp;

impl DifferentiableOp for AddBiasOp {
    fn name(&self) -> &'static str {
        "add_bias"
    }
    fn forward(&self, x: &[Tensor<f64>]) -> Result<Tensor<f64>> {
        add_bias(&x[0], &x[1])
    }
    fn backward(&self, _x: &[Tensor<f64>], g: &Tensor<f64>) -> Result<Vec<Tensor<f64>>> {
        Ok(vec![g.clone(), add_bias_backward(g)])
    }
}

/// Inputs: `x`, `gamma`, `beta`.
pub struct LayerNormOp {
    pub eps: f64,
}

impl Default for LayerNormOp {
    fn default() -> Self {
        Self { eps: LAYER_NORM_EPS }
    }
}

impl DifferentiableOp for LayerNormOp {
    fn name(&self) -> &'static str {
        "layer_norm"
    }
    fn forward(&self, x: &[Tensor<f64>]) -> Result<Tensor<f64>> {
        layer_norm(&x[0], &x[1], &x[2], self.eps)
    }
    fn backward(&self, x: &[Tensor<f64>], g: &Tensor<f64>) -> Result<Vec<Tensor<f64>>> {
        let (dx, dg, db) = layer_norm_backward(&x[0], &x[1], self.eps, g)?;
        Ok(vec![dx, dg, db])
    }
}

pub struct SoftmaxOp;

impl DifferentiableOp for SoftmaxOp {
    fn name(&self) -> &'static str {
        "softmax"
    }
    fn forward(&self, x: &[Tensor<f64>]) -> Result<Tensor<f64>> {
        softmax(&x[0])
    }
    fn backward(&self, x: &[Tensor<f64>], g: &Tensor<f64>) -> Result<Vec<Tensor<f64>>> {
        Ok(vec![softmax_backward(&softmax(&x[0])?, g)?])
    }
}

pub struct GeluOp;

impl DifferentiableOp for GeluOp {
    fn name(&self) -> &'static str {
        "gelu"
    }
    fn forward(&self, x: &[Tensor<f64>]) -> Result<Tensor<f64>> {
        Ok(gelu(&x[0]))
    }
    fn backward(&self, x: &[Tensor<f64>], g: &Tensor<f64>) -> Result<Vec<Tensor<f64>>> {
        Ok(vec![gelu_backward(&x[0], g)?])
    }
}

pub struct SigmoidOp;

impl DifferentiableOp for SigmoidOp {
    fn name(&self) -> &'static str {
        "sigmoid"
    }
    fn forward(&self, x: &[Tensor<f64>]) -> Result<Tensor<f64>> {
        Ok(sigmoid(&x[0]))
    }
    fn backward(&self, x: &[Tensor<f64>], g: &Tensor<f64>) -> Result<Vec<Tensor<f64>>> {
        Ok(vec![sigmoid_backward(&sigmoid(&x[0]), g)?])
    }
}

/// Inputs: `pred`, `target`. Output is a one-element tensor.
pub struct MseLossOp;

impl DifferentiableOp for MseLossOp {
    fn name(&self) -> &'static str {
        "mse_loss"
    }
    fn forward(&self, x: &[Tensor<f64>]) -> Result<Tensor<f64>> {
        Tensor::from_vec([1], vec![mse_loss(&x[0], &x[1])?])
    }
    fn backward(&self, x: &[Tensor<f64>], g: &Tensor<f64>) -> Result<Vec<Tensor<f64>>> {
        let dp = mse_loss_backward(&x[0], &x[1])?.scale(g.data()[0]);
        let dt = dp.scale(-1.0);
        Ok(vec![dp, dt])
    }
}

type Case = (Box<dyn DifferentiableOp>, Vec<Tensor<f64>>);

/// Checks every differentiable kernel on random inputs drawn from `seed`.
pub fn op_suite(seed: u64, h: f64) -> Result<Vec<GradCheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = |shape: &[usize]| Tensor::<f64>::uniform(shape.to_vec(), -1.5, 1.5, &mut rng);
    let cases: Vec<Case> = vec![
        (Box::new(MatmulOp), vec![u(&[5, 4]), u(&[4, 3])]),
        (Box::new(AddBiasOp), vec![u(&[4, 3]), u(&[3])]),
        (Box::new(LayerNormOp::default()), vec![u(&[4, 6]), u(&[6]), u(&[6])]),
        (Box::new(SoftmaxOp), vec![u(&[3, 5])]),
        (Box::new(GeluOp), vec![u(&[4, 4])]),
        (Box::new(SigmoidOp), vec![u(&[4, 4])]),
        (Box::new(MseLossOp), vec![u(&[7]), u(&[7])]),
    ];
    cases.iter().map(|(op, x)| grad_check(op.as_ref(), x, h)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(21)
    }

    #[test]
    fn matmul_gradient() {
        let mut r = rng();
        let a = Tensor::randn([3, 4], 1.0, &mut r);
        let b = Tensor::randn([4, 2], 1.0, &mut r);
        let rep = grad_check(&MatmulOp, &[a, b], DEFAULT_STEP).unwrap();
        assert!(rep.max_rel_error < 1e-6, "{rep:?}");
        assert_eq!(rep.entries, 20);
    }

    #[test]
    fn sigmoid_gradient() {
        let x = Tensor::randn([16], 2.0, &mut rng());
        // truncation error is h²/6·|σ'''| ≤ 2.1e-8 at h = 1e-3, so 1e-8 needs a finer step
        let rep = grad_check(&SigmoidOp, std::slice::from_ref(&x), 1e-4).unwrap();
        assert!(rep.max_rel_error < 1e-8, "{rep:?}");
        let rep = grad_check(&SigmoidOp, &[x], DEFAULT_STEP).unwrap();
        assert!(rep.max_rel_error < 2.1e-8, "{rep:?}");
    }

    #[test]
    fn step_outside_range_is_rejected() {
        let x = Tensor::randn([4], 1.0, &mut rng());
        assert!(grad_check(&GeluOp, std::slice::from_ref(&x), 0.1).is_err());
        assert!(grad_check(&GeluOp, &[x], 1e-6).is_err());
    }

    struct Exploding;

    impl DifferentiableOp for Exploding {
        fn name(&self) -> &'static str {
            "exploding"
        }
        fn forward(&self, x: &[Tensor<f64>]) -> Result<Tensor<f64>> {
            Ok(x[0].map(|v| if v > 0.5 { f64::INFINITY } else { v }))
        }
        fn backward(&self, x: &[Tensor<f64>], g: &Tensor<f64>) -> Result<Vec<Tensor<f64>>> {
            let _ = x;
            Ok(vec![g.clone()])
        }
    }

    #[test]
    fn non_finite_is_reported_with_index() {
        let x = Tensor::from_vec([3], vec![0.0, 0.0, 0.4995]).unwrap();
        match grad_check(&Exploding, &[x], 1e-3) {
            Err(Error::NonFinite { context, index }) => {
                assert!(context.contains("exploding"));
                assert_eq!(index, 2);
            }
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }
}
