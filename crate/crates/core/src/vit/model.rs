use super::config::{ModelConfig, CHANNELS};
use super::params::{Block, Parameters};
use crate::diffmath::ops::{sigmoid_scalar, softmax_in_place};
use crate::diffmath::{
    add_bias, add_bias_backward, gelu, gelu_backward, layer_norm, layer_norm_backward, matmul, matmul_nt, matmul_tn,
    softmax_backward, Scalar, Tensor, LAYER_NORM_EPS,
};
use crate::error::{Error, Result};
use crate::par;

// Samples per gradient partial sum. Fixed so the reduction order (and hence
// the bits of the summed gradient) never depends on the number of threads.
const GRAD_CHUNK: usize = 4;

/// Splits an `[S, S, 3]` image into `(S/p)²` flattened patches, row-major in
/// patch order, each flattened `(row, col, channel)`.
pub fn patchify<T: Scalar>(image: &Tensor<T>, patch_size: usize) -> Result<Tensor<T>> {
    let (h, w) = match image.shape() {
        &[h, w, c] if c == CHANNELS => (h, w),
        s => return Err(Error::shape("patchify", s, &[0, 0, CHANNELS])),
    };
    if patch_size == 0 || h % patch_size != 0 || w % patch_size != 0 {
        return Err(Error::InvalidArgument(format!(
            "image {h}x{w} is not divisible into {patch_size}px patches"
        )));
    }
    let (ph, pw) = (h / patch_size, w / patch_size);
    let pdim = patch_size * patch_size * CHANNELS;
    let src = image.data();
    let mut out = Vec::with_capacity(ph * pw * pdim);
    for py in 0..ph {
        for px in 0..pw {
            for r in 0..patch_size {
                let y = py * patch_size + r;
                let start = (y * w + px * patch_size) * CHANNELS;
                out.extend_from_slice(&src[start..start + patch_size * CHANNELS]);
            }
        }
    }
    Tensor::from_vec([ph * pw, pdim], out)
}

fn eps<T: Scalar>() -> T {
    T::lit(LAYER_NORM_EPS)
}

fn cols<T: Scalar>(x: &Tensor<T>, start: usize, len: usize) -> Tensor<T> {
    let rows = x.rows();
    let mut out = Vec::with_capacity(rows * len);
    for i in 0..rows {
        out.extend_from_slice(&x.row(i)[start..start + len]);
    }
    Tensor::from_vec([rows, len], out).expect("column slice shape")
}

fn put_cols<T: Scalar>(dst: &mut Tensor<T>, src: &Tensor<T>, start: usize) {
    let len = src.last_dim();
    for i in 0..src.rows() {
        dst.row_mut(i)[start..start + len].copy_from_slice(src.row(i));
    }
}

fn linear<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    add_bias(&matmul(x, w)?, b)
}

fn check_finite<T: Scalar>(t: &Tensor<T>, context: impl FnOnce() -> String) -> Result<()> {
    match t.first_non_finite() {
        Some(index) => Err(Error::NonFinite {
            context: context(),
            index,
        }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone)]
struct BlockCache<T> {
    input: Tensor<T>,
    h1: Tensor<T>,
    q: Tensor<T>,
    k: Tensor<T>,
    v: Tensor<T>,
    attn: Vec<Tensor<T>>,
    ctx: Tensor<T>,
    mid: Tensor<T>,
    h2: Tensor<T>,
    pre_gelu: Tensor<T>,
    act: Tensor<T>,
}

/// Activations kept from a forward pass for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    patches: Tensor<T>,
    blocks: Vec<BlockCache<T>>,
    cls_out: Tensor<T>,
    embedding: Tensor<T>,
    pub score: T,
}

impl<T: Scalar> ForwardCache<T> {
    /// Final layer-normed class-token representation.
    pub fn embedding(&self) -> &[T] {
        self.embedding.data()
    }
}

fn block_forward<T: Scalar>(cfg: &ModelConfig, blk: &Block<T>, x: Tensor<T>) -> Result<(Tensor<T>, BlockCache<T>)> {
    let dh = cfg.head_dim();
    let scale = T::one() / T::from_usize(dh).unwrap().sqrt();
    let h1 = layer_norm(&x, &blk.norm1_g, &blk.norm1_b, eps())?;
    let q = linear(&h1, &blk.wq, &blk.bq)?;
    let k = linear(&h1, &blk.wk, &blk.bk)?;
    let v = linear(&h1, &blk.wv, &blk.bv)?;
    let mut ctx = Tensor::zeros(x.shape());
    let mut attn = Vec::with_capacity(cfg.heads);
    for head in 0..cfg.heads {
        let (qh, kh, vh) = (
            cols(&q, head * dh, dh),
            cols(&k, head * dh, dh),
            cols(&v, head * dh, dh),
        );
        let mut scores = matmul_nt(&qh, &kh)?.scale(scale);
        for i in 0..scores.rows() {
            softmax_in_place(scores.row_mut(i));
        }
        put_cols(&mut ctx, &matmul(&scores, &vh)?, head * dh);
        attn.push(scores);
    }
    let mid = x.add(&linear(&ctx, &blk.wo, &blk.bo)?)?;
    let h2 = layer_norm(&mid, &blk.norm2_g, &blk.norm2_b, eps())?;
    let pre_gelu = linear(&h2, &blk.w1, &blk.b1)?;
    let act = gelu(&pre_gelu);
    let out = mid.add(&linear(&act, &blk.w2, &blk.b2)?)?;
    let cache = BlockCache {
        input: x,
        h1,
        q,
        k,
        v,
        attn,
        ctx,
        mid,
        h2,
        pre_gelu,
        act,
    };
    Ok((out, cache))
}

/// Forward pass for one normalised `[S, S, 3]` image.
pub fn forward_one<T: Scalar>(params: &Parameters<T>, image: &Tensor<T>) -> Result<ForwardCache<T>> {
    let cfg = &params.config;
    let s = cfg.image_size;
    if image.shape() != [s, s, CHANNELS] {
        return Err(Error::shape("forward", image.shape(), &[s, s, CHANNELS]));
    }
    let patches = patchify(image, cfg.patch_size)?;
    let proj = linear(&patches, &params.patch_w, &params.patch_b)?;
    let d = cfg.dim;
    let mut tokens = Vec::with_capacity(cfg.seq_len() * d);
    tokens.extend_from_slice(params.cls_token.data());
    tokens.extend_from_slice(proj.data());
    let mut x = Tensor::from_vec([cfg.seq_len(), d], tokens)?.add(&params.pos_embed)?;
    let mut blocks = Vec::with_capacity(cfg.depth);
    for (b, blk) in params.blocks.iter().enumerate() {
        let (out, cache) = block_forward(cfg, blk, x)?;
        check_finite(&out, || format!("block {b} output"))?;
        blocks.push(cache);
        x = out;
    }
    let cls_out = Tensor::from_vec([1, d], x.row(0).to_vec())?;
    let embedding = layer_norm(&cls_out, &params.norm_g, &params.norm_b, eps())?;
    let logit = embedding
        .data()
        .iter()
        .zip(params.head_w.data())
        .map(|(&a, &b)| a * b)
        .sum::<T>()
        + params.head_b.data()[0];
    if !logit.is_finite() {
        return Err(Error::NonFinite {
            context: "head logit".into(),
            index: 0,
        });
    }
    Ok(ForwardCache {
        patches,
        blocks,
        cls_out,
        embedding,
        score: sigmoid_scalar(logit),
    })
}

/// Scores for a batch of normalised images; each in `(0, 1)`.
pub fn forward<T: Scalar>(params: &Parameters<T>, images: &[Tensor<T>]) -> Result<Tensor<T>> {
    if images.is_empty() {
        return Err(Error::EmptyInput { op: "forward" });
    }
    let scores = par::map_slice(images, |img| forward_one(params, img).map(|c| c.score))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Tensor::from_vec([images.len()], scores)
}

/// Class-token representation after the final norm, used as an image embedding.
pub fn class_embedding<T: Scalar>(params: &Parameters<T>, image: &Tensor<T>) -> Result<Vec<T>> {
    Ok(forward_one(params, image)?.embedding.into_data())
}

/// Which parameters receive gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradScope {
    All,
    /// Only `head.weight` / `head.bias`; the trunk gradient stays zero.
    HeadOnly,
}

fn block_backward<T: Scalar>(
    cfg: &ModelConfig,
    blk: &Block<T>,
    c: &BlockCache<T>,
    dout: Tensor<T>,
    g: &mut Block<T>,
) -> Result<Tensor<T>> {
    let dh = cfg.head_dim();
    let scale = T::one() / T::from_usize(dh).unwrap().sqrt();

    // MLP branch: out = mid + fc2(gelu(fc1(ln2(mid))))
    g.w2.add_assign(&matmul_tn(&c.act, &dout)?)?;
    g.b2.add_assign(&add_bias_backward(&dout))?;
    let dact = matmul_nt(&dout, &blk.w2)?;
    let dpre = gelu_backward(&c.pre_gelu, &dact)?;
    g.w1.add_assign(&matmul_tn(&c.h2, &dpre)?)?;
    g.b1.add_assign(&add_bias_backward(&dpre))?;
    let dh2 = matmul_nt(&dpre, &blk.w1)?;
    let (dmid_ln, dg2, db2) = layer_norm_backward(&c.mid, &blk.norm2_g, eps(), &dh2)?;
    g.norm2_g.add_assign(&dg2)?;
    g.norm2_b.add_assign(&db2)?;
    let dmid = dout.add(&dmid_ln)?;

    // attention branch: mid = x + proj(attn(ln1(x)))
    g.wo.add_assign(&matmul_tn(&c.ctx, &dmid)?)?;
    g.bo.add_assign(&add_bias_backward(&dmid))?;
    let dctx = matmul_nt(&dmid, &blk.wo)?;
    let mut dq = Tensor::zeros(c.q.shape());
    let mut dk = Tensor::zeros(c.k.shape());
    let mut dv = Tensor::zeros(c.v.shape());
    for head in 0..cfg.heads {
        let off = head * dh;
        let (qh, kh, vh) = (cols(&c.q, off, dh), cols(&c.k, off, dh), cols(&c.v, off, dh));
        let a = &c.attn[head];
        let dctx_h = cols(&dctx, off, dh);
        let da = matmul_nt(&dctx_h, &vh)?;
        put_cols(&mut dv, &matmul_tn(a, &dctx_h)?, off);
        let ds = softmax_backward(a, &da)?.scale(scale);
        put_cols(&mut dq, &matmul(&ds, &kh)?, off);
        put_cols(&mut dk, &matmul_tn(&ds, &qh)?, off);
    }
    g.wq.add_assign(&matmul_tn(&c.h1, &dq)?)?;
    g.bq.add_assign(&add_bias_backward(&dq))?;
    g.wk.add_assign(&matmul_tn(&c.h1, &dk)?)?;
    g.bk.add_assign(&add_bias_backward(&dk))?;
    g.wv.add_assign(&matmul_tn(&c.h1, &dv)?)?;
    g.bv.add_assign(&add_bias_backward(&dv))?;
    let mut dh1 = matmul_nt(&dq, &blk.wq)?;
    dh1.add_assign(&matmul_nt(&dk, &blk.wk)?)?;
    dh1.add_assign(&matmul_nt(&dv, &blk.wv)?)?;
    let (dx_ln, dg1, db1) = layer_norm_backward(&c.input, &blk.norm1_g, eps(), &dh1)?;
    g.norm1_g.add_assign(&dg1)?;
    g.norm1_b.add_assign(&db1)?;
    dmid.add(&dx_ln)
}

/// Accumulates `d(score)/d(params) · dscore` into `grads`.
pub fn backward<T: Scalar>(
    params: &Parameters<T>,
    cache: &ForwardCache<T>,
    dscore: T,
    scope: GradScope,
    grads: &mut Parameters<T>,
) -> Result<()> {
    let cfg = &params.config;
    let s = cache.score;
    let dlogit = dscore * s * (T::one() - s);
    grads
        .head_w
        .add_assign(&cache.embedding.scale(dlogit).reshape([cfg.dim])?)?;
    grads.head_b.data_mut()[0] = grads.head_b.data()[0] + dlogit;
    if scope == GradScope::HeadOnly {
        return Ok(());
    }

    let demb = Tensor::from_vec([1, cfg.dim], params.head_w.scale(dlogit).into_data())?;
    let (dcls, dg, db) = layer_norm_backward(&cache.cls_out, &params.norm_g, eps(), &demb)?;
    grads.norm_g.add_assign(&dg)?;
    grads.norm_b.add_assign(&db)?;
    let mut dx = Tensor::zeros([cfg.seq_len(), cfg.dim]);
    dx.row_mut(0).copy_from_slice(dcls.data());
    for (b, (blk, c)) in params.blocks.iter().zip(&cache.blocks).enumerate().rev() {
        dx = block_backward(cfg, blk, c, dx, &mut grads.blocks[b])?;
    }
    grads.pos_embed.add_assign(&dx)?;
    grads
        .cls_token
        .add_assign(&Tensor::from_vec([cfg.dim], dx.row(0).to_vec())?)?;
    let dproj = Tensor::from_vec([cfg.num_patches(), cfg.dim], dx.data()[cfg.dim..].to_vec())?;
    grads.patch_w.add_assign(&matmul_tn(&cache.patches, &dproj)?)?;
    grads.patch_b.add_assign(&add_bias_backward(&dproj))?;
    Ok(())
}

/// Batch MSE loss, its parameter gradient, and the scores.
#[derive(Debug, Clone)]
pub struct LossAndGrad<T> {
    pub loss: T,
    pub grads: Parameters<T>,
    pub scores: Vec<T>,
}

/// `mean((score − target)²)` over the batch and its gradient.
///
/// Samples are processed in parallel; partial gradients are summed in a fixed
/// order so the result is identical for any thread count.
pub fn loss_and_grad<T: Scalar>(
    params: &Parameters<T>,
    images: &[Tensor<T>],
    targets: &[T],
    scope: GradScope,
) -> Result<LossAndGrad<T>> {
    if images.len() != targets.len() {
        return Err(Error::shape("loss_and_grad", &[images.len()], &[targets.len()]));
    }
    if images.is_empty() {
        return Err(Error::EmptyInput { op: "loss_and_grad" });
    }
    let n = T::from_usize(images.len()).unwrap();
    let chunks = images.len().div_ceil(GRAD_CHUNK);
    let partials = par::map_range(chunks, |c| -> Result<(Parameters<T>, Vec<T>)> {
        let mut grads = Parameters::zeros(&params.config);
        let mut scores = Vec::with_capacity(GRAD_CHUNK);
        let lo = c * GRAD_CHUNK;
        let hi = (lo + GRAD_CHUNK).min(images.len());
        for i in lo..hi {
            let cache = forward_one(params, &images[i])?;
            let dscore = T::lit(2.0) * (cache.score - targets[i]) / n;
            backward(params, &cache, dscore, scope, &mut grads)?;
            scores.push(cache.score);
        }
        Ok((grads, scores))
    });
    let mut grads = Parameters::zeros(&params.config);
    let mut scores = Vec::with_capacity(images.len());
    for partial in partials {
        let (g, s) = partial?;
        grads.accumulate(&g)?;
        scores.extend(s);
    }
    let loss = scores.iter().zip(targets).map(|(&s, &t)| (s - t) * (s - t)).sum::<T>() / n;
    Ok(LossAndGrad { loss, grads, scores })
}
