//! Layer math: forward passes and exact analytic backward passes.
//!
//! Each operation is a pure function over [`Tensor`]s; state (parameters,
//! optimizer moments, batchnorm running statistics) lives in the network,
//! not here. Backward passes take whatever the forward pass cached and
//! return gradients shaped exactly like their inputs, so every one of them
//! can be checked against central finite differences.
//!
//! Convolution and dense layers keep their innermost loops over contiguous
//! rows so the compiler can vectorize them; this is what makes a pure-Rust
//! f64 engine fast enough for desk-scale training.

use rand::Rng;
use thiserror::Error;

use super::tensor::Tensor;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("2x2 max pooling needs even spatial dims, got {h}x{w}")]
    OddSpatialDim { h: usize, w: usize },
    #[error("batchnorm needs a batch of at least 2 in training mode, got {0}")]
    BatchTooSmall(usize),
    #[error("invalid network config: {0}")]
    BadConfig(String),
}

/// Spatial padding for convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero-pad so the output keeps the input's height and width.
    /// Requires odd kernel sides.
    Same,
    /// No padding; the output shrinks by kernel−1 per axis.
    Valid,
}

fn dims4(t: &Tensor, what: &str) -> Result<[usize; 4], NnError> {
    match *t.shape() {
        [a, b, c, d] => Ok([a, b, c, d]),
        _ => Err(NnError::ShapeMismatch(format!(
            "{what} must be rank 4 (N,C,H,W), got {:?}",
            t.shape()
        ))),
    }
}

fn dims2(t: &Tensor, what: &str) -> Result<[usize; 2], NnError> {
    match *t.shape() {
        [a, b] => Ok([a, b]),
        _ => Err(NnError::ShapeMismatch(format!(
            "{what} must be rank 2, got {:?}",
            t.shape()
        ))),
    }
}

struct ConvGeometry {
    n: usize,
    c_in: usize,
    h: usize,
    w: usize,
    f: usize,
    kh: usize,
    kw: usize,
    pad_y: usize,
    pad_x: usize,
    out_h: usize,
    out_w: usize,
}

fn conv_geometry(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    padding: Padding,
) -> Result<ConvGeometry, NnError> {
    let [n, c_in, h, w] = dims4(input, "conv input")?;
    let [f, wc, kh, kw] = dims4(weights, "conv weights")?;
    if wc != c_in {
        return Err(NnError::ShapeMismatch(format!(
            "conv weights expect {wc} input channels, input has {c_in}"
        )));
    }
    if bias.shape() != [f] {
        return Err(NnError::ShapeMismatch(format!(
            "conv bias must have shape [{f}], got {:?}",
            bias.shape()
        )));
    }
    let (pad_y, pad_x) = match padding {
        Padding::Same => {
            if kh % 2 == 0 || kw % 2 == 0 {
                return Err(NnError::ShapeMismatch(format!(
                    "same padding needs odd kernel sides, got {kh}x{kw}"
                )));
            }
            ((kh - 1) / 2, (kw - 1) / 2)
        }
        Padding::Valid => (0, 0),
    };
    let out_h = (h + 2 * pad_y).checked_sub(kh - 1).filter(|&v| v > 0);
    let out_w = (w + 2 * pad_x).checked_sub(kw - 1).filter(|&v| v > 0);
    let (Some(out_h), Some(out_w)) = (out_h, out_w) else {
        return Err(NnError::ShapeMismatch(format!(
            "kernel {kh}x{kw} does not fit a {h}x{w} input"
        )));
    };
    Ok(ConvGeometry { n, c_in, h, w, f, kh, kw, pad_y, pad_x, out_h, out_w })
}

/// The input/output row overlap for one kernel offset: output rows
/// y ∈ [y0, y1) and columns x ∈ [x0, x1) read input position
/// (y + dy, x + dx).
#[inline]
fn kernel_span(k: usize, pad: usize, in_len: usize, out_len: usize) -> (isize, usize, usize) {
    let d = k as isize - pad as isize;
    let lo = (-d).max(0) as usize;
    let hi = ((in_len as isize - d).min(out_len as isize)).max(0) as usize;
    (d, lo, hi)
}

/// 2-D convolution, stride 1. out(n,f,y,x) = bias(f) +
/// Σ_{c,ky,kx} in(n, c, y+ky−pad, x+kx−pad) · w(f, c, ky, kx),
/// positions outside the input reading as zero under `Same` padding.
pub fn conv2d(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    padding: Padding,
) -> Result<Tensor, NnError> {
    let g = conv_geometry(input, weights, bias, padding)?;
    let mut out = Tensor::zeros(&[g.n, g.f, g.out_h, g.out_w]);
    let in_data = input.data();
    let w_data = weights.data();
    let b_data = bias.data();
    let out_data = out.data_mut();
    let in_plane = g.h * g.w;
    let out_plane = g.out_h * g.out_w;

    for ni in 0..g.n {
        for fi in 0..g.f {
            let out_plane_data = &mut out_data[(ni * g.f + fi) * out_plane..][..out_plane];
            out_plane_data.fill(b_data[fi]);
            for ci in 0..g.c_in {
                let in_plane_data = &in_data[(ni * g.c_in + ci) * in_plane..][..in_plane];
                for ky in 0..g.kh {
                    let (dy, y0, y1) = kernel_span(ky, g.pad_y, g.h, g.out_h);
                    for kx in 0..g.kw {
                        let (dx, x0, x1) = kernel_span(kx, g.pad_x, g.w, g.out_w);
                        if x0 >= x1 {
                            continue;
                        }
                        let wv = w_data[((fi * g.c_in + ci) * g.kh + ky) * g.kw + kx];
                        for y in y0..y1 {
                            let src_off = (y as isize + dy) as usize * g.w
                                + (x0 as isize + dx) as usize;
                            let src = &in_plane_data[src_off..][..x1 - x0];
                            let dst = &mut out_plane_data[y * g.out_w + x0..][..x1 - x0];
                            for i in 0..dst.len() {
                                dst[i] += wv * src[i];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of [`conv2d`] with respect to its input, weights, and bias.
pub fn conv2d_backward(
    input: &Tensor,
    weights: &Tensor,
    d_out: &Tensor,
    padding: Padding,
) -> Result<(Tensor, Tensor, Tensor), NnError> {
    let bias_probe = Tensor::zeros(&[weights.dim(0)]);
    let g = conv_geometry(input, weights, &bias_probe, padding)?;
    if d_out.shape() != [g.n, g.f, g.out_h, g.out_w] {
        return Err(NnError::ShapeMismatch(format!(
            "upstream gradient must be [{}, {}, {}, {}], got {:?}",
            g.n,
            g.f,
            g.out_h,
            g.out_w,
            d_out.shape()
        )));
    }

    let mut d_input = Tensor::zeros(input.shape());
    let mut d_weights = Tensor::zeros(weights.shape());
    let mut d_bias = Tensor::zeros(&[g.f]);
    let in_data = input.data();
    let w_data = weights.data();
    let dout_data = d_out.data();
    let in_plane = g.h * g.w;
    let out_plane = g.out_h * g.out_w;

    {
        let db = d_bias.data_mut();
        for ni in 0..g.n {
            for fi in 0..g.f {
                let plane = &dout_data[(ni * g.f + fi) * out_plane..][..out_plane];
                db[fi] += plane.iter().sum::<f64>();
            }
        }
    }

    let din = d_input.data_mut();
    let dw = d_weights.data_mut();
    for ni in 0..g.n {
        for fi in 0..g.f {
            let dout_plane = &dout_data[(ni * g.f + fi) * out_plane..][..out_plane];
            for ci in 0..g.c_in {
                let in_plane_data = &in_data[(ni * g.c_in + ci) * in_plane..][..in_plane];
                let din_plane = &mut din[(ni * g.c_in + ci) * in_plane..][..in_plane];
                for ky in 0..g.kh {
                    let (dy, y0, y1) = kernel_span(ky, g.pad_y, g.h, g.out_h);
                    for kx in 0..g.kw {
                        let (dx, x0, x1) = kernel_span(kx, g.pad_x, g.w, g.out_w);
                        if x0 >= x1 {
                            continue;
                        }
                        let widx = ((fi * g.c_in + ci) * g.kh + ky) * g.kw + kx;
                        let wv = w_data[widx];
                        let mut wsum = 0.0;
                        for y in y0..y1 {
                            let src_off = (y as isize + dy) as usize * g.w
                                + (x0 as isize + dx) as usize;
                            let dout_row = &dout_plane[y * g.out_w + x0..][..x1 - x0];
                            let in_row = &in_plane_data[src_off..][..x1 - x0];
                            let din_row = &mut din_plane[src_off..][..x1 - x0];
                            for i in 0..dout_row.len() {
                                wsum += dout_row[i] * in_row[i];
                                din_row[i] += wv * dout_row[i];
                            }
                        }
                        dw[widx] += wsum;
                    }
                }
            }
        }
    }
    Ok((d_input, d_weights, d_bias))
}

/// 2×2 max pooling with stride 2. Returns the pooled tensor and, for each
/// output element, the flat index of its source (ties go to the first
/// position in row-major block order, which makes backward deterministic).
pub fn maxpool2(input: &Tensor) -> Result<(Tensor, Vec<usize>), NnError> {
    let [n, c, h, w] = dims4(input, "pool input")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(NnError::OddSpatialDim { h, w });
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[n, c, oh, ow]);
    let mut argmax = vec![0usize; out.len()];
    let data = input.data();
    let out_data = out.data_mut();
    for plane in 0..n * c {
        let base = plane * h * w;
        let out_base = plane * oh * ow;
        for y in 0..oh {
            for x in 0..ow {
                let i00 = base + (2 * y) * w + 2 * x;
                let candidates = [i00, i00 + 1, i00 + w, i00 + w + 1];
                let mut best = candidates[0];
                for &idx in &candidates[1..] {
                    if data[idx] > data[best] {
                        best = idx;
                    }
                }
                out_data[out_base + y * ow + x] = data[best];
                argmax[out_base + y * ow + x] = best;
            }
        }
    }
    Ok((out, argmax))
}

/// Routes each upstream gradient to the position that won its 2×2 block.
pub fn maxpool2_backward(
    input_shape: &[usize],
    argmax: &[usize],
    d_out: &Tensor,
) -> Result<Tensor, NnError> {
    if argmax.len() != d_out.len() {
        return Err(NnError::ShapeMismatch(format!(
            "argmax has {} entries for {} upstream gradients",
            argmax.len(),
            d_out.len()
        )));
    }
    let mut d_input = Tensor::zeros(input_shape);
    let din = d_input.data_mut();
    for (&idx, &g) in argmax.iter().zip(d_out.data()) {
        din[idx] += g;
    }
    Ok(d_input)
}

/// What batchnorm's backward pass needs from its forward pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    /// Normalized input, before scale and shift.
    pub x_hat: Tensor,
    /// 1/√(var+ε) per channel.
    pub inv_std: Vec<f64>,
    pub batch_mean: Vec<f64>,
    /// Population variance (divide by count, not count−1).
    pub batch_var: Vec<f64>,
}

/// Training-mode batch normalization over NCHW input: per channel,
/// normalize by the batch mean and population variance, then scale by
/// gamma and shift by beta. Running statistics are the caller's to update
/// from the returned cache, so this stays a pure function.
pub fn batchnorm2d_train(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    epsilon: f64,
) -> Result<(Tensor, BnCache), NnError> {
    let [n, c, h, w] = dims4(input, "batchnorm input")?;
    if n < 2 {
        return Err(NnError::BatchTooSmall(n));
    }
    check_bn_params(c, gamma, beta)?;
    let m = (n * h * w) as f64;
    let plane = h * w;
    let data = input.data();

    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for ci in 0..c {
        let mut sum = 0.0;
        for ni in 0..n {
            sum += data[(ni * c + ci) * plane..][..plane].iter().sum::<f64>();
        }
        mean[ci] = sum / m;
        let mut sq = 0.0;
        for ni in 0..n {
            sq += data[(ni * c + ci) * plane..][..plane]
                .iter()
                .map(|&v| (v - mean[ci]) * (v - mean[ci]))
                .sum::<f64>();
        }
        var[ci] = sq / m;
    }

    let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + epsilon).sqrt()).collect();
    let mut x_hat = Tensor::zeros(input.shape());
    let mut out = Tensor::zeros(input.shape());
    {
        let xh = x_hat.data_mut();
        let od = out.data_mut();
        for ni in 0..n {
            for ci in 0..c {
                let off = (ni * c + ci) * plane;
                let (mu, is, ga, be) =
                    (mean[ci], inv_std[ci], gamma.data()[ci], beta.data()[ci]);
                for i in off..off + plane {
                    let xn = (data[i] - mu) * is;
                    xh[i] = xn;
                    od[i] = ga * xn + be;
                }
            }
        }
    }
    Ok((out, BnCache { x_hat, inv_std, batch_mean: mean, batch_var: var }))
}

/// Inference-mode batch normalization using running statistics.
pub fn batchnorm2d_infer(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    epsilon: f64,
    running_mean: &[f64],
    running_var: &[f64],
) -> Result<Tensor, NnError> {
    let [n, c, h, w] = dims4(input, "batchnorm input")?;
    check_bn_params(c, gamma, beta)?;
    if running_mean.len() != c || running_var.len() != c {
        return Err(NnError::ShapeMismatch(format!(
            "running stats must have {c} channels, got {}/{}",
            running_mean.len(),
            running_var.len()
        )));
    }
    let plane = h * w;
    let mut out = Tensor::zeros(input.shape());
    let data = input.data();
    let od = out.data_mut();
    for ni in 0..n {
        for ci in 0..c {
            let off = (ni * c + ci) * plane;
            let is = 1.0 / (running_var[ci] + epsilon).sqrt();
            let (mu, ga, be) = (running_mean[ci], gamma.data()[ci], beta.data()[ci]);
            for i in off..off + plane {
                od[i] = ga * (data[i] - mu) * is + be;
            }
        }
    }
    Ok(out)
}

fn check_bn_params(c: usize, gamma: &Tensor, beta: &Tensor) -> Result<(), NnError> {
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(NnError::ShapeMismatch(format!(
            "gamma/beta must have shape [{c}], got {:?}/{:?}",
            gamma.shape(),
            beta.shape()
        )));
    }
    Ok(())
}

/// Fold a fresh batch statistic into the running estimate:
/// running ← (1−momentum)·running + momentum·batch.
pub fn update_running_stats(
    running_mean: &mut [f64],
    running_var: &mut [f64],
    cache: &BnCache,
    momentum: f64,
) {
    for (r, &b) in running_mean.iter_mut().zip(&cache.batch_mean) {
        *r = (1.0 - momentum) * *r + momentum * b;
    }
    for (r, &b) in running_var.iter_mut().zip(&cache.batch_var) {
        *r = (1.0 - momentum) * *r + momentum * b;
    }
}

/// Full chain rule through the batch statistics:
/// d_x = γ·inv_std/m · (m·d_out − Σd_out − x̂·Σ(d_out·x̂)),
/// d_gamma = Σ d_out·x̂, d_beta = Σ d_out (sums per channel).
pub fn batchnorm2d_backward(
    d_out: &Tensor,
    cache: &BnCache,
    gamma: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let shape = cache.x_hat.shape();
    let (n, c, plane) = (shape[0], shape[1], shape[2] * shape[3]);
    assert_eq!(d_out.shape(), shape, "upstream gradient shape mismatch");
    let m = (n * plane) as f64;

    let mut d_beta = vec![0.0; c];
    let mut d_gamma = vec![0.0; c];
    let dout = d_out.data();
    let xh = cache.x_hat.data();
    for ni in 0..n {
        for ci in 0..c {
            let off = (ni * c + ci) * plane;
            let mut s1 = 0.0;
            let mut s2 = 0.0;
            for i in off..off + plane {
                s1 += dout[i];
                s2 += dout[i] * xh[i];
            }
            d_beta[ci] += s1;
            d_gamma[ci] += s2;
        }
    }

    let mut d_input = Tensor::zeros(shape);
    let din = d_input.data_mut();
    for ni in 0..n {
        for ci in 0..c {
            let off = (ni * c + ci) * plane;
            let k = gamma.data()[ci] * cache.inv_std[ci] / m;
            let (s1, s2) = (d_beta[ci], d_gamma[ci]);
            for i in off..off + plane {
                din[i] = k * (m * dout[i] - s1 - xh[i] * s2);
            }
        }
    }
    (
        d_input,
        Tensor::from_vec(&[c], d_gamma),
        Tensor::from_vec(&[c], d_beta),
    )
}

/// max(x, 0) elementwise.
pub fn relu(input: &Tensor) -> Tensor {
    input.map(|v| v.max(0.0))
}

/// Passes the gradient where the forward input was strictly positive;
/// the subgradient at exactly 0 is 0.
pub fn relu_backward(input: &Tensor, d_out: &Tensor) -> Tensor {
    assert_eq!(input.shape(), d_out.shape(), "relu gradient shape mismatch");
    let mut out = d_out.clone();
    for (g, &x) in out.data_mut().iter_mut().zip(input.data()) {
        if x <= 0.0 {
            *g = 0.0;
        }
    }
    out
}

/// Fully connected layer: out = input·W + b for input [N, D], W [D, M].
pub fn dense(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor, NnError> {
    let [n, d] = dims2(input, "dense input")?;
    let [wd, m] = dims2(weights, "dense weights")?;
    if wd != d {
        return Err(NnError::ShapeMismatch(format!(
            "dense weights expect {wd} inputs, got {d}"
        )));
    }
    if bias.shape() != [m] {
        return Err(NnError::ShapeMismatch(format!(
            "dense bias must have shape [{m}], got {:?}",
            bias.shape()
        )));
    }
    let mut out = Tensor::zeros(&[n, m]);
    let (x, w, b, o) = (input.data(), weights.data(), bias.data(), out.data_mut());
    for ni in 0..n {
        let row = &mut o[ni * m..][..m];
        row.copy_from_slice(b);
        for di in 0..d {
            let xv = x[ni * d + di];
            let wrow = &w[di * m..][..m];
            for i in 0..m {
                row[i] += xv * wrow[i];
            }
        }
    }
    Ok(out)
}

/// Gradients of [`dense`]: d_input = d_out·Wᵀ, d_weights = inputᵀ·d_out,
/// d_bias = column sums of d_out.
pub fn dense_backward(
    input: &Tensor,
    weights: &Tensor,
    d_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor), NnError> {
    let [n, d] = dims2(input, "dense input")?;
    let [wd, m] = dims2(weights, "dense weights")?;
    if wd != d || d_out.shape() != [n, m] {
        return Err(NnError::ShapeMismatch(format!(
            "dense backward shapes disagree: input [{n}, {d}], weights {:?}, upstream {:?}",
            weights.shape(),
            d_out.shape()
        )));
    }
    let mut d_input = Tensor::zeros(&[n, d]);
    let mut d_weights = Tensor::zeros(&[d, m]);
    let mut d_bias = Tensor::zeros(&[m]);
    let (x, w, g) = (input.data(), weights.data(), d_out.data());

    {
        let db = d_bias.data_mut();
        for ni in 0..n {
            let grow = &g[ni * m..][..m];
            for i in 0..m {
                db[i] += grow[i];
            }
        }
    }
    {
        let di = d_input.data_mut();
        for ni in 0..n {
            let grow = &g[ni * m..][..m];
            for dd in 0..d {
                let wrow = &w[dd * m..][..m];
                let mut acc = 0.0;
                for i in 0..m {
                    acc += grow[i] * wrow[i];
                }
                di[ni * d + dd] = acc;
            }
        }
    }
    {
        let dw = d_weights.data_mut();
        for ni in 0..n {
            let grow = &g[ni * m..][..m];
            for dd in 0..d {
                let xv = x[ni * d + dd];
                let dwrow = &mut dw[dd * m..][..m];
                for i in 0..m {
                    dwrow[i] += xv * grow[i];
                }
            }
        }
    }
    Ok((d_input, d_weights, d_bias))
}

/// Inverted dropout: each element is zeroed with probability `rate`, and
/// survivors are scaled by 1/(1−rate) so the expected value equals the
/// input. Returns the output and the keep mask. At rate 0 the stream is
/// left untouched and the mask is all-true.
pub fn dropout<R: Rng + ?Sized>(input: &Tensor, rate: f64, rng: &mut R) -> (Tensor, Vec<bool>) {
    assert!((0.0..1.0).contains(&rate), "dropout rate must lie in [0, 1), got {rate}");
    if rate == 0.0 {
        return (input.clone(), vec![true; input.len()]);
    }
    let scale = 1.0 / (1.0 - rate);
    let mut out = input.clone();
    let mut mask = vec![false; input.len()];
    for (v, kept) in out.data_mut().iter_mut().zip(mask.iter_mut()) {
        if rng.random::<f64>() < rate {
            *v = 0.0;
        } else {
            *v *= scale;
            *kept = true;
        }
    }
    (out, mask)
}

/// Backward of inverted dropout: scale the gradient where the element was
/// kept, zero it where it was dropped.
pub fn dropout_backward(d_out: &Tensor, mask: &[bool], rate: f64) -> Tensor {
    assert_eq!(d_out.len(), mask.len(), "dropout mask length mismatch");
    let scale = 1.0 / (1.0 - rate);
    let mut out = d_out.clone();
    for (g, &kept) in out.data_mut().iter_mut().zip(mask) {
        *g = if kept { *g * scale } else { 0.0 };
    }
    out
}

/// Row-wise stable softmax.
pub fn softmax(logits: &Tensor) -> Result<Tensor, NnError> {
    let [n, k] = dims2(logits, "logits")?;
    let mut out = logits.clone();
    let data = out.data_mut();
    for ni in 0..n {
        let row = &mut data[ni * k..][..k];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Ok(out)
}

/// Softmax + categorical cross-entropy in one step.
///
/// Returns the mean loss over the batch, the probabilities, and the exact
/// loss gradient with respect to the logits, (probs − labels)/batch. The
/// per-row loss is computed as logsumexp(z) − z·y, which cannot overflow
/// and is exact even for extreme logits.
pub fn softmax_xent(logits: &Tensor, labels: &Tensor) -> Result<(f64, Tensor, Tensor), NnError> {
    let [n, k] = dims2(logits, "logits")?;
    if labels.shape() != [n, k] {
        return Err(NnError::ShapeMismatch(format!(
            "labels must match logits shape [{n}, {k}], got {:?}",
            labels.shape()
        )));
    }
    let probs = softmax(logits)?;
    let mut d_logits = probs.clone();
    let mut loss = 0.0;
    let (z, y) = (logits.data(), labels.data());
    for ni in 0..n {
        let zrow = &z[ni * k..][..k];
        let yrow = &y[ni * k..][..k];
        debug_assert!(
            yrow.iter().filter(|&&v| v == 1.0).count() == 1
                && yrow.iter().all(|&v| v == 0.0 || v == 1.0),
            "labels must be one-hot rows"
        );
        let max = zrow.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + zrow.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        let z_true: f64 = zrow.iter().zip(yrow).map(|(&zv, &yv)| zv * yv).sum();
        loss += lse - z_true;
    }
    loss /= n as f64;
    {
        let dl = d_logits.data_mut();
        for i in 0..dl.len() {
            dl[i] = (dl[i] - y[i]) / n as f64;
        }
    }
    Ok((loss, probs, d_logits))
}
