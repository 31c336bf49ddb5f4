//! Minimal dense row-major tensors with explicit forward and backward kernels.
//!
//! There is no computation graph: every differentiable op comes as a pair of
//! pure functions, `op` and `op_backward`, and callers chain them by hand.
//! Everything is generic over [`Scalar`] so gradient checks can run in `f64`
//! while training runs in `f32`.

mod gradcheck;
pub(crate) mod ops;
mod scalar;
mod tensor;

pub use gradcheck::{
    check_scalar_fn, grad_check, op_suite, AddBiasOp, DifferentiableOp, GeluOp, GradCheckReport, LayerNormOp, MatmulOp,
    MseLossOp, SigmoidOp, SoftmaxOp, DEFAULT_STEP,
};
pub use ops::{
    add_bias, add_bias_backward, gelu, gelu_backward, layer_norm, layer_norm_backward, matmul, matmul_backward,
    matmul_nt, matmul_tn, mse_loss, mse_loss_backward, sigmoid, sigmoid_backward, softmax, softmax_backward,
    LAYER_NORM_EPS,
};
pub use scalar::Scalar;
pub use tensor::Tensor;
