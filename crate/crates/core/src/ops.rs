//! Layer operations: 2-D/1-D cross-correlation, dense, relu, max-pool,
//! dropout. Forward functions validate shapes; every forward has a matching
//! backward returning exact analytic gradients.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand::Rng;

/// Zero-padding mode. `Same` keeps the spatial extent (used inside the
/// recurrent cells), `Valid` shrinks it (used in the convolutional head).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Same,
    Valid,
}

struct ConvDims {
    c_in: usize,
    h_in: usize,
    w_in: usize,
    c_out: usize,
    k_h: usize,
    k_w: usize,
    h_out: usize,
    w_out: usize,
    pad_y: usize,
    pad_x: usize,
}

fn conv_dims(input: &Tensor, kernel_shape: &[usize], padding: Padding) -> Result<ConvDims> {
    if input.shape().len() != 3 {
        return Err(Error::dimension(
            "conv2d",
            format!("input must be [C,H,W], got {:?}", input.shape()),
        ));
    }
    if kernel_shape.len() != 4 {
        return Err(Error::dimension(
            "conv2d",
            format!("kernel must be [C_out,C_in,kH,kW], got {kernel_shape:?}"),
        ));
    }
    let (c_in, h_in, w_in) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (c_out, kc_in, k_h, k_w) = (
        kernel_shape[0],
        kernel_shape[1],
        kernel_shape[2],
        kernel_shape[3],
    );
    if kc_in != c_in {
        return Err(Error::dimension(
            "conv2d",
            format!("kernel input-channel axis 1 is {kc_in} but input channel axis 0 is {c_in}"),
        ));
    }
    let (h_out, w_out, pad_y, pad_x) = match padding {
        Padding::Valid => {
            if k_h > h_in || k_w > w_in {
                return Err(Error::dimension(
                    "conv2d",
                    format!(
                        "valid padding needs kernel {k_h}x{k_w} <= input {h_in}x{w_in} on axes 1,2"
                    ),
                ));
            }
            (h_in - k_h + 1, w_in - k_w + 1, 0, 0)
        }
        Padding::Same => (h_in, w_in, (k_h - 1) / 2, (k_w - 1) / 2),
    };
    Ok(ConvDims {
        c_in,
        h_in,
        w_in,
        c_out,
        k_h,
        k_w,
        h_out,
        w_out,
        pad_y,
        pad_x,
    })
}

/// Row overlap between the output row span and the input row span for a
/// fixed kernel offset: returns (lo, hi) such that for y in lo..hi the input
/// index y + k - pad is in range 0..extent_in.
fn overlap(extent_out: usize, extent_in: usize, k: usize, pad: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(k);
    let hi = (extent_in + pad).saturating_sub(k).min(extent_out);
    (lo.min(hi), hi)
}

/// 2-D cross-correlation of `input` [C_in,H,W] with `kernel`
/// [C_out,C_in,kH,kW] plus optional per-channel `bias` [C_out].
pub fn conv2d(
    input: &Tensor,
    kernel: &Tensor,
    bias: Option<&Tensor>,
    padding: Padding,
) -> Result<Tensor> {
    let d = conv_dims(input, kernel.shape(), padding)?;
    if let Some(b) = bias {
        if b.shape() != [d.c_out] {
            return Err(Error::dimension(
                "conv2d",
                format!(
                    "bias axis 0 is {:?} but kernel output-channel axis 0 is {}",
                    b.shape(),
                    d.c_out
                ),
            ));
        }
    }
    let mut out = vec![0.0; d.c_out * d.h_out * d.w_out];
    let plane_out = d.h_out * d.w_out;
    let plane_in = d.h_in * d.w_in;
    let x = input.data();
    let k = kernel.data();
    for co in 0..d.c_out {
        if let Some(b) = bias {
            let v = b.data()[co];
            out[co * plane_out..(co + 1) * plane_out].fill(v);
        }
        for ci in 0..d.c_in {
            for ky in 0..d.k_h {
                let (y_lo, y_hi) = overlap(d.h_out, d.h_in, ky, d.pad_y);
                for kx in 0..d.k_w {
                    let w = k[((co * d.c_in + ci) * d.k_h + ky) * d.k_w + kx];
                    let (x_lo, x_hi) = overlap(d.w_out, d.w_in, kx, d.pad_x);
                    if x_lo >= x_hi {
                        continue;
                    }
                    for y in y_lo..y_hi {
                        let iy = y + ky - d.pad_y;
                        let in_row = &x[ci * plane_in + iy * d.w_in..];
                        let out_row = &mut out[co * plane_out + y * d.w_out..];
                        let shift = kx - d.pad_x.min(kx); // x + kx - pad_x, rewritten below
                        let in_off = x_lo + kx - d.pad_x + shift - shift; // = x_lo + kx - pad_x
                        let _ = in_off;
                        let src = &in_row[(x_lo + kx) - d.pad_x..(x_hi + kx) - d.pad_x];
                        let dst = &mut out_row[x_lo..x_hi];
                        for (o, i) in dst.iter_mut().zip(src) {
                            *o += w * *i;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![d.c_out, d.h_out, d.w_out], out)
}

/// Gradient of conv2d w.r.t. the bias: per-output-channel sum of upstream.
pub fn conv2d_grad_bias(grad_out: &Tensor) -> Result<Tensor> {
    if grad_out.shape().len() != 3 {
        return Err(Error::dimension(
            "conv2d_grad_bias",
            format!("upstream must be [C,H,W], got {:?}", grad_out.shape()),
        ));
    }
    Ok(channel_sum(grad_out))
}

/// Gradient of conv2d w.r.t. the kernel.
pub fn conv2d_grad_kernel(
    input: &Tensor,
    grad_out: &Tensor,
    kernel_shape: &[usize],
    padding: Padding,
) -> Result<Tensor> {
    let d = conv_dims(input, kernel_shape, padding)?;
    if grad_out.shape() != [d.c_out, d.h_out, d.w_out] {
        return Err(Error::dimension(
            "conv2d_grad_kernel",
            format!(
                "upstream shape {:?} but forward output is [{},{},{}]",
                grad_out.shape(),
                d.c_out,
                d.h_out,
                d.w_out
            ),
        ));
    }
    let mut dk = vec![0.0; d.c_out * d.c_in * d.k_h * d.k_w];
    let plane_out = d.h_out * d.w_out;
    let plane_in = d.h_in * d.w_in;
    let x = input.data();
    let g = grad_out.data();
    for co in 0..d.c_out {
        for ci in 0..d.c_in {
            for ky in 0..d.k_h {
                let (y_lo, y_hi) = overlap(d.h_out, d.h_in, ky, d.pad_y);
                for kx in 0..d.k_w {
                    let (x_lo, x_hi) = overlap(d.w_out, d.w_in, kx, d.pad_x);
                    if x_lo >= x_hi {
                        continue;
                    }
                    let mut acc = 0.0;
                    for y in y_lo..y_hi {
                        let iy = y + ky - d.pad_y;
                        let in_row = &x[ci * plane_in + iy * d.w_in..];
                        let g_row = &g[co * plane_out + y * d.w_out..];
                        let src = &in_row[(x_lo + kx) - d.pad_x..(x_hi + kx) - d.pad_x];
                        let up = &g_row[x_lo..x_hi];
                        for (i, gv) in src.iter().zip(up) {
                            acc += *i * *gv;
                        }
                    }
                    dk[((co * d.c_in + ci) * d.k_h + ky) * d.k_w + kx] = acc;
                }
            }
        }
    }
    Tensor::new(kernel_shape.to_vec(), dk)
}

/// Gradient of conv2d w.r.t. the input.
pub fn conv2d_grad_input(
    grad_out: &Tensor,
    kernel: &Tensor,
    input_shape: &[usize],
    padding: Padding,
) -> Result<Tensor> {
    let probe = Tensor::zeros(input_shape);
    let d = conv_dims(&probe, kernel.shape(), padding)?;
    if grad_out.shape() != [d.c_out, d.h_out, d.w_out] {
        return Err(Error::dimension(
            "conv2d_grad_input",
            format!(
                "upstream shape {:?} but forward output is [{},{},{}]",
                grad_out.shape(),
                d.c_out,
                d.h_out,
                d.w_out
            ),
        ));
    }
    let mut dx = vec![0.0; d.c_in * d.h_in * d.w_in];
    let plane_out = d.h_out * d.w_out;
    let plane_in = d.h_in * d.w_in;
    let g = grad_out.data();
    let k = kernel.data();
    for co in 0..d.c_out {
        for ci in 0..d.c_in {
            for ky in 0..d.k_h {
                let (y_lo, y_hi) = overlap(d.h_out, d.h_in, ky, d.pad_y);
                for kx in 0..d.k_w {
                    let w = k[((co * d.c_in + ci) * d.k_h + ky) * d.k_w + kx];
                    let (x_lo, x_hi) = overlap(d.w_out, d.w_in, kx, d.pad_x);
                    if x_lo >= x_hi {
                        continue;
                    }
                    for y in y_lo..y_hi {
                        let iy = y + ky - d.pad_y;
                        let g_row = &g[co * plane_out + y * d.w_out..];
                        let dst_row = &mut dx[ci * plane_in + iy * d.w_in..];
                        let dst = &mut dst_row[(x_lo + kx) - d.pad_x..(x_hi + kx) - d.pad_x];
                        let up = &g_row[x_lo..x_hi];
                        for (o, gv) in dst.iter_mut().zip(up) {
                            *o += w * *gv;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(input_shape.to_vec(), dx)
}

pub struct ConvGrads {
    pub input: Tensor,
    pub kernel: Tensor,
    pub bias: Tensor,
}

/// Full backward of conv2d, gradients w.r.t. input, kernel and bias.
pub fn conv2d_backward(
    input: &Tensor,
    kernel: &Tensor,
    padding: Padding,
    grad_out: &Tensor,
) -> Result<ConvGrads> {
    Ok(ConvGrads {
        input: conv2d_grad_input(grad_out, kernel, input.shape(), padding)?,
        kernel: conv2d_grad_kernel(input, grad_out, kernel.shape(), padding)?,
        bias: conv2d_grad_bias(grad_out)?,
    })
}

fn lift_1d(t: &Tensor, context: &'static str) -> Result<Tensor> {
    match t.shape() {
        [c, l] => t.reshape(&[*c, 1, *l]),
        other => Err(Error::dimension(
            context,
            format!("expected rank-2 tensor, got {other:?}"),
        )),
    }
}

fn lift_kernel_1d(t: &Tensor) -> Result<Tensor> {
    match t.shape() {
        [co, ci, k] => t.reshape(&[*co, *ci, 1, *k]),
        other => Err(Error::dimension(
            "conv1d",
            format!("kernel must be [C_out,C_in,k], got {other:?}"),
        )),
    }
}

/// 1-D cross-correlation of `input` [C_in,L] with `kernel` [C_out,C_in,k];
/// same conventions as conv2d, realized as a height-1 2-D correlation.
pub fn conv1d(
    input: &Tensor,
    kernel: &Tensor,
    bias: Option<&Tensor>,
    padding: Padding,
) -> Result<Tensor> {
    let out = conv2d(&lift_1d(input, "conv1d")?, &lift_kernel_1d(kernel)?, bias, padding)?;
    let s = out.shape().to_vec();
    out.reshape(&[s[0], s[2]])
}

pub fn conv1d_backward(
    input: &Tensor,
    kernel: &Tensor,
    padding: Padding,
    grad_out: &Tensor,
) -> Result<ConvGrads> {
    let input2 = lift_1d(input, "conv1d_backward")?;
    let kernel2 = lift_kernel_1d(kernel)?;
    let g2 = lift_1d(grad_out, "conv1d_backward")?;
    let grads = conv2d_backward(&input2, &kernel2, padding, &g2)?;
    Ok(ConvGrads {
        input: grads.input.reshape(input.shape())?,
        kernel: grads.kernel.reshape(kernel.shape())?,
        bias: grads.bias,
    })
}

/// weight·input + bias with `input` [n], `weight` [m,n], `bias` [m].
pub fn dense(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let n = input.len();
    let ws = weight.shape();
    if ws.len() != 2 || ws[1] != n {
        return Err(Error::dimension(
            "dense",
            format!(
                "weight axis 1 must match input length {n}, weight shape {ws:?}"
            ),
        ));
    }
    let m = ws[0];
    if bias.len() != m {
        return Err(Error::dimension(
            "dense",
            format!("bias length {} but weight axis 0 is {m}", bias.len()),
        ));
    }
    let mut out = bias.data().to_vec();
    let w = weight.data();
    let x = input.data();
    for (j, o) in out.iter_mut().enumerate() {
        let row = &w[j * n..(j + 1) * n];
        let mut acc = 0.0;
        for (wv, xv) in row.iter().zip(x) {
            acc += wv * xv;
        }
        *o += acc;
    }
    Tensor::new(vec![m], out)
}

pub struct DenseGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

pub fn dense_backward(input: &Tensor, weight: &Tensor, grad_out: &Tensor) -> Result<DenseGrads> {
    let n = input.len();
    let m = weight.shape()[0];
    if grad_out.len() != m {
        return Err(Error::dimension(
            "dense_backward",
            format!("upstream length {} but weight axis 0 is {m}", grad_out.len()),
        ));
    }
    let w = weight.data();
    let x = input.data();
    let g = grad_out.data();
    let mut d_input = vec![0.0; n];
    let mut d_weight = vec![0.0; m * n];
    for j in 0..m {
        let gj = g[j];
        let row = &w[j * n..(j + 1) * n];
        let drow = &mut d_weight[j * n..(j + 1) * n];
        for i in 0..n {
            d_input[i] += row[i] * gj;
            drow[i] = x[i] * gj;
        }
    }
    Ok(DenseGrads {
        input: Tensor::new(vec![n], d_input)?,
        weight: Tensor::new(weight.shape().to_vec(), d_weight)?,
        bias: Tensor::new(vec![m], g.to_vec())?,
    })
}

pub fn relu(input: &Tensor) -> Tensor {
    input.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Backward of relu given the pre-activation input.
pub fn relu_backward(pre: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    if pre.shape() != upstream.shape() {
        return Err(Error::dimension(
            "relu_backward",
            format!("pre shape {:?} vs upstream {:?}", pre.shape(), upstream.shape()),
        ));
    }
    let data = pre
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&p, &g)| if p > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(pre.shape().to_vec(), data)
}

pub struct MaxPoolCache {
    input_shape: Vec<usize>,
    /// Flat input index of the selected maximum per output element.
    argmax: Vec<usize>,
}

/// Channel-wise max pooling with a square window and matching stride.
/// Trailing rows/columns that do not fill a window are dropped.
pub fn max_pool2(input: &Tensor, size: usize) -> Result<(Tensor, MaxPoolCache)> {
    if input.shape().len() != 3 {
        return Err(Error::dimension(
            "max_pool2",
            format!("input must be [C,H,W], got {:?}", input.shape()),
        ));
    }
    if size == 0 {
        return Err(Error::Domain("pool size must be positive".into()));
    }
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (h_out, w_out) = (h / size, w / size);
    if h_out == 0 || w_out == 0 {
        return Err(Error::dimension(
            "max_pool2",
            format!("pool window {size} exceeds input {h}x{w}"),
        ));
    }
    let x = input.data();
    let mut out = vec![0.0; c * h_out * w_out];
    let mut argmax = vec![0usize; c * h_out * w_out];
    for ch in 0..c {
        for oy in 0..h_out {
            for ox in 0..w_out {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0usize;
                for dy in 0..size {
                    for dx in 0..size {
                        let idx = (ch * h + oy * size + dy) * w + ox * size + dx;
                        if x[idx] > best {
                            best = x[idx];
                            best_idx = idx;
                        }
                    }
                }
                let o = (ch * h_out + oy) * w_out + ox;
                out[o] = best;
                argmax[o] = best_idx;
            }
        }
    }
    let out = Tensor::new(vec![c, h_out, w_out], out)?;
    Ok((
        out,
        MaxPoolCache {
            input_shape: input.shape().to_vec(),
            argmax,
        },
    ))
}

pub fn max_pool2_backward(cache: &MaxPoolCache, upstream: &Tensor) -> Result<Tensor> {
    if upstream.len() != cache.argmax.len() {
        return Err(Error::dimension(
            "max_pool2_backward",
            format!(
                "upstream has {} elements but pool produced {}",
                upstream.len(),
                cache.argmax.len()
            ),
        ));
    }
    let mut dx = Tensor::zeros(&cache.input_shape);
    for (&idx, &g) in cache.argmax.iter().zip(upstream.data()) {
        dx.data_mut()[idx] += g;
    }
    Ok(dx)
}

/// Multiplicative keep/drop factors recorded by a dropout forward; the
/// backward is a Hadamard product with these factors.
#[derive(Debug, Clone)]
pub struct DropoutMask {
    factors: Tensor,
}

impl DropoutMask {
    pub fn identity(shape: &[usize]) -> Self {
        DropoutMask {
            factors: Tensor::filled(shape, 1.0),
        }
    }

    pub fn factors(&self) -> &Tensor {
        &self.factors
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Domain(format!(
            "dropout rate must be in [0,1), got {rate}"
        )));
    }
    Ok(())
}

/// Element dropout: zero each unit with probability `rate`, scale survivors
/// by 1/(1-rate). Identity when not training or rate is zero.
pub fn dropout<R: Rng>(
    input: &Tensor,
    rate: f64,
    training: bool,
    rng: &mut R,
) -> Result<(Tensor, DropoutMask)> {
    check_rate(rate)?;
    if !training || rate == 0.0 {
        return Ok((input.clone(), DropoutMask::identity(input.shape())));
    }
    let keep = 1.0 / (1.0 - rate);
    let factors: Vec<f64> = (0..input.len())
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let factors = Tensor::new(input.shape().to_vec(), factors)?;
    let out = input.hadamard(&factors)?;
    Ok((out, DropoutMask { factors }))
}

/// 2-D dropout: zero whole channels of a [C,H,W] tensor.
pub fn dropout2d<R: Rng>(
    input: &Tensor,
    rate: f64,
    training: bool,
    rng: &mut R,
) -> Result<(Tensor, DropoutMask)> {
    check_rate(rate)?;
    if input.shape().len() != 3 {
        return Err(Error::dimension(
            "dropout2d",
            format!("input must be [C,H,W], got {:?}", input.shape()),
        ));
    }
    if !training || rate == 0.0 {
        return Ok((input.clone(), DropoutMask::identity(input.shape())));
    }
    let keep = 1.0 / (1.0 - rate);
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let mut factors = vec![0.0; c * h * w];
    for ch in 0..c {
        let f = if rng.gen::<f64>() < rate { 0.0 } else { keep };
        factors[ch * h * w..(ch + 1) * h * w].fill(f);
    }
    let factors = Tensor::new(input.shape().to_vec(), factors)?;
    let out = input.hadamard(&factors)?;
    Ok((out, DropoutMask { factors }))
}

pub fn dropout_backward(mask: &DropoutMask, upstream: &Tensor) -> Result<Tensor> {
    upstream.hadamard(&mask.factors)
}

/// Per-channel sum of a [C,H,W] tensor, the bias gradient reduction.
pub fn channel_sum(t: &Tensor) -> Tensor {
    let (c, rest) = (t.shape()[0], t.len() / t.shape()[0]);
    let mut out = vec![0.0; c];
    for (ch, o) in out.iter_mut().enumerate() {
        *o = t.data()[ch * rest..(ch + 1) * rest].iter().sum();
    }
    Tensor::new(vec![c], out).expect("channel count is positive")
}

/// Mean over the spatial axes of [C,H,W] -> [C].
pub fn global_avg_pool(input: &Tensor) -> Result<Tensor> {
    if input.shape().len() != 3 {
        return Err(Error::dimension(
            "global_avg_pool",
            format!("input must be [C,H,W], got {:?}", input.shape()),
        ));
    }
    let area = (input.shape()[1] * input.shape()[2]) as f64;
    Ok(channel_sum(input).scale(1.0 / area))
}

pub fn global_avg_pool_backward(input_shape: &[usize], upstream: &Tensor) -> Result<Tensor> {
    let (c, h, w) = (input_shape[0], input_shape[1], input_shape[2]);
    if upstream.len() != c {
        return Err(Error::dimension(
            "global_avg_pool_backward",
            format!("upstream length {} but input has {c} channels", upstream.len()),
        ));
    }
    let inv = 1.0 / ((h * w) as f64);
    let mut dx = vec![0.0; c * h * w];
    for ch in 0..c {
        dx[ch * h * w..(ch + 1) * h * w].fill(upstream.data()[ch] * inv);
    }
    Tensor::new(input_shape.to_vec(), dx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn conv2d_scalar_scaling() {
        let input = Tensor::filled(&[1, 3, 3], 1.0);
        let kernel = Tensor::new(vec![1, 1, 1, 1], vec![2.0]).unwrap();
        let bias = Tensor::zeros(&[1]);
        let out = conv2d(&input, &kernel, Some(&bias), Padding::Valid).unwrap();
        assert_eq!(out.shape(), &[1, 3, 3]);
        assert!(out.data().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn conv2d_identity_kernel_is_identity_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let input = Tensor::uniform(&[2, 4, 5], -3.0, 3.0, &mut rng);
        let mut kernel = Tensor::zeros(&[2, 2, 1, 1]);
        kernel.data_mut()[0] = 1.0; // out0 <- in0
        kernel.data_mut()[3] = 1.0; // out1 <- in1
        let out = conv2d(&input, &kernel, None, Padding::Valid).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn conv2d_hand_sum() {
        let input = Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let kernel = Tensor::filled(&[1, 1, 2, 2], 1.0);
        let bias = Tensor::zeros(&[1]);
        let out = conv2d(&input, &kernel, Some(&bias), Padding::Valid).unwrap();
        assert_eq!(out.shape(), &[1, 1, 1]);
        assert_eq!(out.data(), &[10.0]);
    }

    #[test]
    fn conv2d_same_keeps_extent() {
        let input = Tensor::filled(&[1, 4, 4], 1.0);
        let kernel = Tensor::filled(&[1, 1, 3, 3], 1.0);
        let out = conv2d(&input, &kernel, None, Padding::Same).unwrap();
        assert_eq!(out.shape(), &[1, 4, 4]);
        // corner sees a 2x2 window, centre a 3x3 one
        assert_eq!(out.data()[0], 4.0);
        assert_eq!(out.data()[5], 9.0);
    }

    #[test]
    fn conv2d_channel_mismatch_names_axes() {
        let input = Tensor::zeros(&[3, 4, 4]);
        let kernel = Tensor::zeros(&[1, 2, 3, 3]);
        let err = conv2d(&input, &kernel, None, Padding::Valid).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("axis 1") && msg.contains("axis 0"), "{msg}");
    }

    #[test]
    fn conv1d_identity_and_hand_sums() {
        let input = Tensor::new(vec![1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let k1 = Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap();
        let b = Tensor::zeros(&[1]);
        let out = conv1d(&input, &k1, Some(&b), Padding::Valid).unwrap();
        assert_eq!(out.data(), &[1.0, 2.0, 3.0]);

        let k2 = Tensor::new(vec![1, 1, 2], vec![1.0, 1.0]).unwrap();
        let out = conv1d(&input, &k2, Some(&b), Padding::Valid).unwrap();
        assert_eq!(out.data(), &[3.0, 5.0]);
    }

    #[test]
    fn conv1d_zero_input_yields_bias() {
        let input = Tensor::zeros(&[1, 5]);
        let kernel = Tensor::new(vec![1, 1, 3], vec![0.3, -1.0, 2.0]).unwrap();
        let bias = Tensor::new(vec![1], vec![0.7]).unwrap();
        let out = conv1d(&input, &kernel, Some(&bias), Padding::Valid).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn dense_hand_cases() {
        let x = Tensor::new(vec![2], vec![2.0, 3.0]).unwrap();
        let ident = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let zero_b = Tensor::zeros(&[2]);
        assert_eq!(dense(&x, &ident, &zero_b).unwrap().data(), &[2.0, 3.0]);

        let w = Tensor::new(vec![1, 2], vec![1.0, 1.0]).unwrap();
        let b = Tensor::new(vec![1], vec![1.0]).unwrap();
        assert_eq!(dense(&x, &w, &b).unwrap().data(), &[6.0]);

        let zero_w = Tensor::zeros(&[2, 2]);
        let b2 = Tensor::new(vec![2], vec![0.4, -0.4]).unwrap();
        assert_eq!(dense(&x, &zero_w, &b2).unwrap().data(), &[0.4, -0.4]);
    }

    #[test]
    fn max_pool_picks_max_and_routes_gradient() {
        let input = Tensor::new(
            vec![1, 2, 4],
            vec![1.0, 5.0, 2.0, 0.0, 3.0, 4.0, 8.0, 1.0],
        )
        .unwrap();
        let (out, cache) = max_pool2(&input, 2).unwrap();
        assert_eq!(out.shape(), &[1, 1, 2]);
        assert_eq!(out.data(), &[5.0, 8.0]);
        let up = Tensor::new(vec![1, 1, 2], vec![1.0, 2.0]).unwrap();
        let dx = max_pool2_backward(&cache, &up).unwrap();
        assert_eq!(dx.data(), &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0]);
    }

    #[test]
    fn dropout_rate_zero_and_eval_are_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let input = Tensor::uniform(&[4, 4], -1.0, 1.0, &mut rng);
        let (out, _) = dropout(&input, 0.0, true, &mut rng).unwrap();
        assert_eq!(out, input);
        let (out, _) = dropout(&input, 0.9, false, &mut rng).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn dropout_rejects_bad_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let input = Tensor::zeros(&[2]);
        assert!(dropout(&input, 1.0, true, &mut rng).is_err());
        assert!(dropout(&input, -0.1, true, &mut rng).is_err());
    }

    #[test]
    fn dropout_zero_fraction_tracks_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let input = Tensor::filled(&[10_000], 1.0);
        let (out, _) = dropout(&input, 0.5, true, &mut rng).unwrap();
        let zeros = out.data().iter().filter(|&&v| v == 0.0).count();
        // binomial 3 sigma: 10_000 * 0.5 +- 3 * 50
        assert!((4850..=5150).contains(&zeros), "zeros = {zeros}");
        let keep = out.data().iter().find(|&&v| v != 0.0).unwrap();
        assert!((keep - 2.0).abs() < 1e-15);
    }

    #[test]
    fn dropout2d_zeroes_whole_channels() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let input = Tensor::filled(&[8, 3, 3], 1.0);
        let (out, _) = dropout2d(&input, 0.5, true, &mut rng).unwrap();
        for ch in 0..8 {
            let plane = &out.data()[ch * 9..(ch + 1) * 9];
            let all_zero = plane.iter().all(|&v| v == 0.0);
            let all_kept = plane.iter().all(|&v| (v - 2.0).abs() < 1e-15);
            assert!(all_zero || all_kept);
        }
    }

    #[test]
    fn global_avg_pool_means() {
        let input = Tensor::new(vec![2, 1, 2], vec![1.0, 3.0, 10.0, 20.0]).unwrap();
        let out = global_avg_pool(&input).unwrap();
        assert_eq!(out.data(), &[2.0, 15.0]);
    }
}
