use super::{gemm, Tensor};
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;

fn expect_rank(layer: &str, t: &Tensor, rank: usize) -> Result<()> {
    if t.dims.len() != rank {
        return Err(Error::shape(
            layer,
            format!("expected rank {rank}, got dims {:?}", t.dims),
        ));
    }
    Ok(())
}

/// Saved state for the backward pass of a convolution.
#[derive(Clone, Debug)]
pub struct ConvCache {
    pub input_dims: Vec<usize>,
    /// Per-sample im2col buffers, `[N][C·9 × H·W]`.
    pub cols: Vec<f64>,
}

fn im2col(input: &[f64], c: usize, h: usize, w: usize, cols: &mut [f64]) {
    let hw = h * w;
    for ch in 0..c {
        let plane = &input[ch * hw..(ch + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[((ch * 9) + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    let out = &mut row[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        out.fill(0.0);
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            out[0] = 0.0;
                            out[1..].copy_from_slice(&src[..w - 1]);
                        }
                        1 => out.copy_from_slice(src),
                        _ => {
                            out[..w - 1].copy_from_slice(&src[1..]);
                            out[w - 1] = 0.0;
                        }
                    }
                }
            }
        }
    }
}

fn col2im_add(cols: &[f64], c: usize, h: usize, w: usize, out: &mut [f64]) {
    let hw = h * w;
    for ch in 0..c {
        let plane = &mut out[ch * hw..(ch + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[((ch * 9) + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[y * w..(y + 1) * w];
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            for x in 1..w {
                                dst[x - 1] += src[x];
                            }
                        }
                        1 => {
                            for x in 0..w {
                                dst[x] += src[x];
                            }
                        }
                        _ => {
                            for x in 0..w - 1 {
                                dst[x + 1] += src[x];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// 3×3 convolution, stride 1, zero padding 1. `input` is `[N, C, H, W]`,
/// `weight` is `[F, C, 3, 3]`, `bias` is `[F]`. The im2col buffers are kept
/// only when `keep_cache` is set.
pub fn conv3x3_forward(
    layer: &str,
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    keep_cache: bool,
) -> Result<(Tensor, Option<ConvCache>)> {
    expect_rank(layer, input, 4)?;
    let (n, c, h, w) = (input.dims[0], input.dims[1], input.dims[2], input.dims[3]);
    let f = weight.dims[0];
    if weight.dims != [f, c, 3, 3] {
        return Err(Error::shape(
            layer,
            format!("weight dims {:?} do not match {c} input channels", weight.dims),
        ));
    }
    if bias.dims != [f] {
        return Err(Error::shape(layer, format!("bias dims {:?}", bias.dims)));
    }
    if h == 0 || w == 0 {
        return Err(Error::shape(layer, "empty spatial extent"));
    }
    let hw = h * w;
    let k = c * 9;
    let mut out = Tensor::zeros(&[n, f, h, w]);
    let mut cols = vec![0.0; if keep_cache { n * k * hw } else { k * hw }];
    for s in 0..n {
        let col = if keep_cache {
            &mut cols[s * k * hw..(s + 1) * k * hw]
        } else {
            &mut cols[..]
        };
        im2col(&input.data[s * c * hw..(s + 1) * c * hw], c, h, w, col);
        let y = &mut out.data[s * f * hw..(s + 1) * f * hw];
        for (fi, plane) in y.chunks_mut(hw).enumerate() {
            plane.fill(bias.data[fi]);
        }
        gemm(f, k, hw, &weight.data, false, col, false, 1.0, y);
    }
    let cache = keep_cache.then(|| ConvCache {
        input_dims: input.dims.clone(),
        cols,
    });
    Ok((out, cache))
}

/// Returns `(d_input, d_weight, d_bias)`; `d_input` is skipped when not
/// requested.
pub fn conv3x3_backward(
    cache: &ConvCache,
    weight: &Tensor,
    d_out: &Tensor,
    need_input_grad: bool,
) -> (Option<Tensor>, Tensor, Tensor) {
    let (n, c, h, w) = (
        cache.input_dims[0],
        cache.input_dims[1],
        cache.input_dims[2],
        cache.input_dims[3],
    );
    let f = weight.dims[0];
    let hw = h * w;
    let k = c * 9;
    let mut d_weight = Tensor::zeros(&weight.dims);
    let mut d_bias = Tensor::zeros(&[f]);
    let mut d_input = need_input_grad.then(|| Tensor::zeros(&cache.input_dims));
    let mut d_cols = vec![0.0; if need_input_grad { k * hw } else { 0 }];
    for s in 0..n {
        let dy = &d_out.data[s * f * hw..(s + 1) * f * hw];
        let col = &cache.cols[s * k * hw..(s + 1) * k * hw];
        for (fi, plane) in dy.chunks(hw).enumerate() {
            d_bias.data[fi] += plane.iter().sum::<f64>();
        }
        gemm(f, hw, k, dy, false, col, true, 1.0, &mut d_weight.data);
        if let Some(dx) = d_input.as_mut() {
            gemm(k, f, hw, &weight.data, true, dy, false, 0.0, &mut d_cols);
            col2im_add(&d_cols, c, h, w, &mut dx.data[s * c * hw..(s + 1) * c * hw]);
        }
    }
    (d_input, d_weight, d_bias)
}

pub fn relu_forward(x: &Tensor) -> Tensor {
    Tensor {
        dims: x.dims.clone(),
        data: x.data.iter().map(|&v| v.max(0.0)).collect(),
    }
}

/// Gradient through ReLU given the layer's output.
pub fn relu_backward(out: &Tensor, d_out: &Tensor) -> Tensor {
    Tensor {
        dims: out.dims.clone(),
        data: out
            .data
            .iter()
            .zip(&d_out.data)
            .map(|(&y, &g)| if y > 0.0 { g } else { 0.0 })
            .collect(),
    }
}

/// 2×2 max pooling with stride 2. Also returns, for each output element, the
/// flat input index it was taken from (first maximum in scan order).
pub fn maxpool2_forward(layer: &str, x: &Tensor) -> Result<(Tensor, Vec<u32>)> {
    expect_rank(layer, x, 4)?;
    let (n, c, h, w) = (x.dims[0], x.dims[1], x.dims[2], x.dims[3]);
    if h % 2 != 0 || w % 2 != 0 || h == 0 || w == 0 {
        return Err(Error::shape(
            layer,
            format!("spatial size {h}×{w} is not divisible by 2"),
        ));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[n, c, oh, ow]);
    let mut argmax = vec![0u32; out.len()];
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + 2 * oy * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                    if x.data[idx] > x.data[best] {
                        best = idx;
                    }
                }
                let o = plane * oh * ow + oy * ow + ox;
                out.data[o] = x.data[best];
                argmax[o] = best as u32;
            }
        }
    }
    Ok((out, argmax))
}

pub fn maxpool2_backward(input_dims: &[usize], argmax: &[u32], d_out: &Tensor) -> Tensor {
    let mut dx = Tensor::zeros(input_dims);
    for (&src, &g) in argmax.iter().zip(&d_out.data) {
        dx.data[src as usize] += g;
    }
    dx
}

#[derive(Clone, Debug)]
pub struct BnCache {
    pub x_hat: Tensor,
    pub inv_std: Vec<f64>,
    pub batch_mean: Vec<f64>,
    /// Biased batch variance.
    pub batch_var: Vec<f64>,
    /// Elements per channel, `N·H·W`.
    pub count: usize,
}

fn channel_view(x: &Tensor) -> (usize, usize, usize) {
    let n = x.dims[0];
    let c = x.dims[1];
    let hw = x.dims[2..].iter().product();
    (n, c, hw)
}

fn check_bn(layer: &str, x: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<()> {
    expect_rank(layer, x, 4)?;
    let c = x.dims[1];
    if gamma.dims != [c] || beta.dims != [c] {
        return Err(Error::shape(
            layer,
            format!("scale/shift sized {:?} for {c} channels", gamma.dims),
        ));
    }
    Ok(())
}

/// Batch normalization over `N·H·W` per channel using batch statistics.
pub fn batchnorm_forward_train(
    layer: &str,
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
) -> Result<(Tensor, BnCache)> {
    check_bn(layer, x, gamma, beta)?;
    let (n, c, hw) = channel_view(x);
    let count = n * hw;
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for s in 0..n {
        for ch in 0..c {
            mean[ch] += x.data[(s * c + ch) * hw..][..hw].iter().sum::<f64>();
        }
    }
    mean.iter_mut().for_each(|m| *m /= count as f64);
    for s in 0..n {
        for ch in 0..c {
            let m = mean[ch];
            var[ch] += x.data[(s * c + ch) * hw..][..hw]
                .iter()
                .map(|v| (v - m) * (v - m))
                .sum::<f64>();
        }
    }
    var.iter_mut().for_each(|v| *v /= count as f64);
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();

    let mut x_hat = Tensor::zeros(&x.dims);
    let mut y = Tensor::zeros(&x.dims);
    for s in 0..n {
        for ch in 0..c {
            let off = (s * c + ch) * hw;
            for i in off..off + hw {
                let xh = (x.data[i] - mean[ch]) * inv_std[ch];
                x_hat.data[i] = xh;
                y.data[i] = gamma.data[ch] * xh + beta.data[ch];
            }
        }
    }
    Ok((
        y,
        BnCache {
            x_hat,
            inv_std,
            batch_mean: mean,
            batch_var: var,
            count,
        },
    ))
}

pub fn batchnorm_forward_eval(
    layer: &str,
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    running_mean: &Tensor,
    running_var: &Tensor,
) -> Result<Tensor> {
    check_bn(layer, x, gamma, beta)?;
    let (n, c, hw) = channel_view(x);
    let mut y = Tensor::zeros(&x.dims);
    for ch in 0..c {
        let scale = gamma.data[ch] / (running_var.data[ch] + BN_EPS).sqrt();
        let shift = beta.data[ch] - running_mean.data[ch] * scale;
        for s in 0..n {
            let off = (s * c + ch) * hw;
            for i in off..off + hw {
                y.data[i] = x.data[i] * scale + shift;
            }
        }
    }
    Ok(y)
}

/// Returns `(d_x, d_gamma, d_beta)` for the train-mode forward.
pub fn batchnorm_backward(cache: &BnCache, gamma: &Tensor, d_out: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (n, c, hw) = channel_view(d_out);
    let m = cache.count as f64;
    let mut d_gamma = Tensor::zeros(&[c]);
    let mut d_beta = Tensor::zeros(&[c]);
    for s in 0..n {
        for ch in 0..c {
            let off = (s * c + ch) * hw;
            for i in off..off + hw {
                d_beta.data[ch] += d_out.data[i];
                d_gamma.data[ch] += d_out.data[i] * cache.x_hat.data[i];
            }
        }
    }
    let mut dx = Tensor::zeros(&d_out.dims);
    for ch in 0..c {
        // dx = γ·σ⁻¹·(dy − mean(dy) − x̂·mean(dy·x̂))
        let k = gamma.data[ch] * cache.inv_std[ch];
        let mean_dy = d_beta.data[ch] / m;
        let mean_dyx = d_gamma.data[ch] / m;
        for s in 0..n {
            let off = (s * c + ch) * hw;
            for i in off..off + hw {
                dx.data[i] = k * (d_out.data[i] - mean_dy - cache.x_hat.data[i] * mean_dyx);
            }
        }
    }
    (dx, d_gamma, d_beta)
}

/// `x [N, F] · weight [F, K] + bias [K]`.
pub fn dense_forward(layer: &str, x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    expect_rank(layer, x, 2)?;
    let (n, f) = (x.dims[0], x.dims[1]);
    if weight.dims.len() != 2 || weight.dims[0] != f {
        return Err(Error::shape(
            layer,
            format!("weight dims {:?} for {f} input features", weight.dims),
        ));
    }
    let k = weight.dims[1];
    if bias.dims != [k] {
        return Err(Error::shape(layer, format!("bias dims {:?}", bias.dims)));
    }
    let mut out = Tensor::zeros(&[n, k]);
    for row in out.data.chunks_mut(k) {
        row.copy_from_slice(&bias.data);
    }
    gemm(n, f, k, &x.data, false, &weight.data, false, 1.0, &mut out.data);
    Ok(out)
}

/// Returns `(d_x, d_weight, d_bias)`.
pub fn dense_backward(x: &Tensor, weight: &Tensor, d_out: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (n, f) = (x.dims[0], x.dims[1]);
    let k = weight.dims[1];
    let mut d_x = Tensor::zeros(&x.dims);
    let mut d_w = Tensor::zeros(&weight.dims);
    let mut d_b = Tensor::zeros(&[k]);
    gemm(n, k, f, &d_out.data, false, &weight.data, true, 0.0, &mut d_x.data);
    gemm(f, n, k, &x.data, true, &d_out.data, false, 0.0, &mut d_w.data);
    for row in d_out.data.chunks(k) {
        for (b, g) in d_b.data.iter_mut().zip(row) {
            *b += g;
        }
    }
    (d_x, d_w, d_b)
}

/// Row-wise softmax of `[N, K]` logits.
pub fn softmax(logits: &Tensor) -> Tensor {
    let k = logits.dims[1];
    let mut out = logits.clone();
    for row in out.data.chunks_mut(k) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

/// Mean negative log-likelihood and its gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor, Tensor)> {
    let (n, k) = (logits.dims[0], logits.dims[1]);
    if labels.len() != n {
        return Err(Error::invalid(format!("{} labels for batch of {n}", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::invalid(format!("label {bad} outside 0..{k}")));
    }
    let probs = softmax(logits);
    let mut loss = 0.0;
    let mut d_logits = probs.clone();
    for (i, (&label, row)) in labels.iter().zip(logits.data.chunks(k)).enumerate() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[label];
        d_logits.data[i * k + label] -= 1.0;
    }
    d_logits.data.iter_mut().for_each(|g| *g /= n as f64);
    Ok((loss / n as f64, probs, d_logits))
}
