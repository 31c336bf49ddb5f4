use super::{Scalar, Tensor};
use crate::error::{Error, Result};
use crate::par;

/// Epsilon added to the variance in [`layer_norm`].
pub const LAYER_NORM_EPS: f64 = 1e-6;

// Below this many multiply-adds a matmul stays on the calling thread.
const PAR_MATMUL_WORK: usize = 1 << 16;

/// `C = A·B` for `A: [m×k]`, `B: [k×n]`.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let [m, k] = a.dims2("matmul")?;
    let [k2, n] = b.dims2("matmul")?;
    if k != k2 {
        return Err(Error::shape("matmul", a.shape(), b.shape()));
    }
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![T::zero(); m * n];
    let kernel = |i: usize, row: &mut [T]| {
        let arow = &ad[i * k..(i + 1) * k];
        for (p, &aip) in arow.iter().enumerate() {
            if aip == T::zero() {
                continue;
            }
            let brow = &bd[p * n..(p + 1) * n];
            for (c, &bpj) in row.iter_mut().zip(brow) {
                *c = *c + aip * bpj;
            }
        }
    };
    if m * n * k >= PAR_MATMUL_WORK {
        par::for_each_row(&mut out, n, kernel);
    } else {
        out.chunks_mut(n.max(1)).enumerate().for_each(|(i, r)| kernel(i, r));
    }
    Tensor::from_vec([m, n], out)
}

/// `C = A·Bᵀ` for `A: [m×k]`, `B: [n×k]`.
pub fn matmul_nt<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let [m, k] = a.dims2("matmul_nt")?;
    let [n, k2] = b.dims2("matmul_nt")?;
    if k != k2 {
        return Err(Error::shape("matmul_nt", a.shape(), b.shape()));
    }
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![T::zero(); m * n];
    let kernel = |i: usize, row: &mut [T]| {
        let arow = &ad[i * k..(i + 1) * k];
        for (j, c) in row.iter_mut().enumerate() {
            let brow = &bd[j * k..(j + 1) * k];
            *c = arow.iter().zip(brow).map(|(&x, &y)| x * y).sum();
        }
    };
    if m * n * k >= PAR_MATMUL_WORK {
        par::for_each_row(&mut out, n, kernel);
    } else {
        out.chunks_mut(n.max(1)).enumerate().for_each(|(i, r)| kernel(i, r));
    }
    Tensor::from_vec([m, n], out)
}

/// `C = Aᵀ·B` for `A: [k×m]`, `B: [k×n]`.
pub fn matmul_tn<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let [k, m] = a.dims2("matmul_tn")?;
    let [k2, n] = b.dims2("matmul_tn")?;
    if k != k2 {
        return Err(Error::shape("matmul_tn", a.shape(), b.shape()));
    }
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![T::zero(); m * n];
    let kernel = |i: usize, row: &mut [T]| {
        for p in 0..k {
            let api = ad[p * m + i];
            if api == T::zero() {
                continue;
            }
            let brow = &bd[p * n..(p + 1) * n];
            for (c, &bpj) in row.iter_mut().zip(brow) {
                *c = *c + api * bpj;
            }
        }
    };
    if m * n * k >= PAR_MATMUL_WORK {
        par::for_each_row(&mut out, n, kernel);
    } else {
        out.chunks_mut(n.max(1)).enumerate().for_each(|(i, r)| kernel(i, r));
    }
    Tensor::from_vec([m, n], out)
}

/// Gradients of [`matmul`]: `dA = dC·Bᵀ`, `dB = Aᵀ·dC`.
pub fn matmul_backward<T: Scalar>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    Ok((matmul_nt(grad_out, b)?, matmul_tn(a, grad_out)?))
}

/// Adds `bias: [d]` to every row of `x: [.., d]`.
pub fn add_bias<T: Scalar>(x: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let d = x.last_dim();
    if bias.len() != d {
        return Err(Error::shape("add_bias", x.shape(), bias.shape()));
    }
    let mut out = x.clone();
    for i in 0..out.rows() {
        out.row_mut(i)
            .iter_mut()
            .zip(bias.data())
            .for_each(|(v, &b)| *v = *v + b);
    }
    Ok(out)
}

/// Bias gradient: column sums of `grad_out`.
pub fn add_bias_backward<T: Scalar>(grad_out: &Tensor<T>) -> Tensor<T> {
    let d = grad_out.last_dim();
    let mut db = Tensor::zeros([d]);
    for i in 0..grad_out.rows() {
        db.data_mut()
            .iter_mut()
            .zip(grad_out.row(i))
            .for_each(|(acc, &g)| *acc = *acc + g);
    }
    db
}

struct RowStats<T> {
    mean: T,
    inv_std: T,
}

fn row_stats<T: Scalar>(row: &[T], eps: T) -> RowStats<T> {
    let n = T::from_usize(row.len()).unwrap();
    let mean = row.iter().copied().sum::<T>() / n;
    let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    RowStats {
        mean,
        inv_std: T::one() / (var + eps).sqrt(),
    }
}

/// Layer normalisation over the last axis: `gamma * (x - mean) / sqrt(var + eps) + beta`.
pub fn layer_norm<T: Scalar>(x: &Tensor<T>, gamma: &Tensor<T>, beta: &Tensor<T>, eps: T) -> Result<Tensor<T>> {
    let d = x.last_dim();
    if d == 0 || x.shape().is_empty() {
        return Err(Error::EmptyAxis { op: "layer_norm" });
    }
    if gamma.len() != d || beta.len() != d {
        return Err(Error::shape("layer_norm", x.shape(), gamma.shape()));
    }
    let mut out = x.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let s = row_stats(row, eps);
        for ((v, &g), &b) in row.iter_mut().zip(gamma.data()).zip(beta.data()) {
            *v = (*v - s.mean) * s.inv_std * g + b;
        }
    }
    Ok(out)
}

/// Gradients of [`layer_norm`] with respect to `x`, `gamma` and `beta`.
pub fn layer_norm_backward<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    eps: T,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let d = x.last_dim();
    if d == 0 || x.shape().is_empty() {
        return Err(Error::EmptyAxis { op: "layer_norm" });
    }
    if grad_out.shape() != x.shape() || gamma.len() != d {
        return Err(Error::shape("layer_norm_backward", x.shape(), grad_out.shape()));
    }
    let dn = T::from_usize(d).unwrap();
    let mut dx = Tensor::zeros(x.shape());
    let mut dgamma = Tensor::zeros([d]);
    let mut dbeta = Tensor::zeros([d]);
    let mut xhat = vec![T::zero(); d];
    let mut dxhat = vec![T::zero(); d];
    for i in 0..x.rows() {
        let xr = x.row(i);
        let gr = grad_out.row(i);
        let s = row_stats(xr, eps);
        for j in 0..d {
            xhat[j] = (xr[j] - s.mean) * s.inv_std;
            dxhat[j] = gr[j] * gamma.data()[j];
            dgamma.data_mut()[j] = dgamma.data()[j] + gr[j] * xhat[j];
            dbeta.data_mut()[j] = dbeta.data()[j] + gr[j];
        }
        let mean_dxhat = dxhat.iter().copied().sum::<T>() / dn;
        let mean_dxhat_xhat = dxhat.iter().zip(&xhat).map(|(&a, &b)| a * b).sum::<T>() / dn;
        for (j, out) in dx.row_mut(i).iter_mut().enumerate() {
            *out = s.inv_std * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
        }
    }
    Ok((dx, dgamma, dbeta))
}

/// Softmax over the last axis, with max subtraction.
pub fn softmax<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    if x.last_dim() == 0 || x.shape().is_empty() {
        return Err(Error::EmptyAxis { op: "softmax" });
    }
    let mut out = x.clone();
    for i in 0..out.rows() {
        softmax_in_place(out.row_mut(i));
    }
    Ok(out)
}

pub(crate) fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum = sum + *v;
    }
    let inv = T::one() / sum;
    row.iter_mut().for_each(|v| *v = *v * inv);
}

/// Softmax gradient given the forward output `y`: `y ⊙ (dy − Σ dy⊙y)` per row.
pub fn softmax_backward<T: Scalar>(y: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if y.shape() != grad_out.shape() {
        return Err(Error::shape("softmax_backward", y.shape(), grad_out.shape()));
    }
    let mut dx = grad_out.clone();
    for i in 0..y.rows() {
        let yr = y.row(i);
        let dot: T = yr.iter().zip(grad_out.row(i)).map(|(&a, &b)| a * b).sum();
        dx.row_mut(i)
            .iter_mut()
            .zip(yr)
            .for_each(|(g, &yv)| *g = yv * (*g - dot));
    }
    Ok(dx)
}

fn std_normal_cdf<T: Scalar>(x: T) -> T {
    T::lit(0.5) * (T::one() + (x / T::lit(std::f64::consts::SQRT_2)).erf())
}

/// Exact GELU, `x·Φ(x)`.
pub fn gelu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v * std_normal_cdf(v))
}

/// GELU gradient: `dy · (Φ(x) + x·φ(x))`.
pub fn gelu_backward<T: Scalar>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let inv_sqrt_2pi = T::lit(1.0 / (2.0 * std::f64::consts::PI).sqrt());
    x.zip_map(grad_out, "gelu_backward", |v, g| {
        let pdf = inv_sqrt_2pi * (-(v * v) * T::lit(0.5)).exp();
        g * (std_normal_cdf(v) + v * pdf)
    })
}

/// Logistic sigmoid. Outputs are clamped into the open interval `(0, 1)`.
pub fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid_scalar)
}

pub(crate) fn sigmoid_scalar<T: Scalar>(v: T) -> T {
    let s = if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    };
    let hi = T::one() - T::epsilon() / T::lit(2.0);
    s.max(T::min_positive_value()).min(hi)
}

/// Sigmoid gradient given the forward output `y`: `dy · y(1−y)`.
pub fn sigmoid_backward<T: Scalar>(y: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    y.zip_map(grad_out, "sigmoid_backward", |s, g| g * s * (T::one() - s))
}

/// Mean squared error.
pub fn mse_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<T> {
    if pred.len() != target.len() {
        return Err(Error::shape("mse_loss", pred.shape(), target.shape()));
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput { op: "mse_loss" });
    }
    let n = T::from_usize(pred.len()).unwrap();
    let sum: T = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| (p - t) * (p - t))
        .sum();
    Ok(sum / n)
}

/// Gradient of [`mse_loss`] with respect to `pred`: `2(pred − target)/n`.
pub fn mse_loss_backward<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
    if pred.len() != target.len() {
        return Err(Error::shape("mse_loss_backward", pred.shape(), target.shape()));
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput { op: "mse_loss" });
    }
    let scale = T::lit(2.0) / T::from_usize(pred.len()).unwrap();
    let data = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| scale * (p - t))
        .collect();
    Tensor::from_vec(pred.shape(), data)
}
