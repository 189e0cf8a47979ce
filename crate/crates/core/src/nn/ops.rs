//! Forward and backward kernels on plain tensors.
//!
//! Spatial ops accept either `[C, H, W]` or a batch `[N, C, H, W]`; the output
//! keeps the rank of the input.

use crate::error::{Error, Result};
use crate::nn::tensor::{shape_str, Scalar, Tensor};

fn with_batch_rank<T: Scalar>(like: &Tensor<T>, n: usize, c: usize, h: usize, w: usize, data: Vec<T>) -> Tensor<T> {
    let shape = if like.ndim() == 3 { vec![c, h, w] } else { vec![n, c, h, w] };
    Tensor::new(shape, data).expect("kernel produced a consistent buffer")
}

/// Validates a `[C_out, C_in, k, k]` kernel and `[C_out]` bias against an input
/// with `c_in` channels, returning `(C_out, k)`.
pub fn check_conv_params<T: Scalar>(kernel: &Tensor<T>, bias: &Tensor<T>, c_in: usize) -> Result<(usize, usize)> {
    let (c_out, kc_in, kh, kw) = match *kernel.shape() {
        [a, b, c, d] => (a, b, c, d),
        _ => {
            return Err(Error::shape(
                "conv2d kernel",
                "[C_out, C_in, k, k]",
                shape_str(kernel.shape()),
            ))
        }
    };
    if kh != kw || kh % 2 == 0 {
        return Err(Error::shape(
            "conv2d kernel",
            "square kernel with odd k",
            format!("{kh}x{kw}"),
        ));
    }
    if kc_in != c_in {
        return Err(Error::shape(
            "conv2d",
            format!("input with {kc_in} channels"),
            format!("{c_in} channels"),
        ));
    }
    if bias.shape() != [c_out] {
        return Err(Error::shape("conv2d bias", format!("[{c_out}]"), shape_str(bias.shape())));
    }
    Ok((c_out, kh))
}

/// Unfolds zero-padded `k x k` neighbourhoods into a `[C*k*k, N*H*W]` matrix.
fn im2col<T: Scalar>(src: &[T], n: usize, c: usize, h: usize, w: usize, k: usize) -> Vec<T> {
    let hw = h * w;
    let cols_w = n * hw;
    let pad = (k / 2) as isize;
    let mut cols = vec![T::zero(); c * k * k * cols_w];
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                let x_lo = (-dx).max(0) as usize;
                let x_hi = ((w as isize) - dx).min(w as isize).max(0) as usize;
                for b in 0..n {
                    let plane = &src[(b * c + ci) * hw..(b * c + ci + 1) * hw];
                    let dst_base = row * cols_w + b * hw;
                    for y in 0..h {
                        let sy = y as isize + dy;
                        if sy < 0 || sy >= h as isize || x_lo >= x_hi {
                            continue;
                        }
                        let src_row = &plane[sy as usize * w..(sy as usize + 1) * w];
                        let dst = &mut cols[dst_base + y * w..dst_base + (y + 1) * w];
                        let s_lo = (x_lo as isize + dx) as usize;
                        dst[x_lo..x_hi].copy_from_slice(&src_row[s_lo..s_lo + (x_hi - x_lo)]);
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the input grid.
fn col2im<T: Scalar>(cols: &[T], n: usize, c: usize, h: usize, w: usize, k: usize) -> Vec<T> {
    let hw = h * w;
    let cols_w = n * hw;
    let pad = (k / 2) as isize;
    let mut out = vec![T::zero(); n * c * hw];
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                let x_lo = (-dx).max(0) as usize;
                let x_hi = ((w as isize) - dx).min(w as isize).max(0) as usize;
                for b in 0..n {
                    let src_base = row * cols_w + b * hw;
                    let plane_base = (b * c + ci) * hw;
                    for y in 0..h {
                        let sy = y as isize + dy;
                        if sy < 0 || sy >= h as isize || x_lo >= x_hi {
                            continue;
                        }
                        let s_lo = (x_lo as isize + dx) as usize;
                        let dst_row = plane_base + sy as usize * w;
                        let src = &cols[src_base + y * w + x_lo..src_base + y * w + x_hi];
                        for (d, &g) in out[dst_row + s_lo..dst_row + s_lo + src.len()].iter_mut().zip(src) {
                            *d += g;
                        }
                    }
                }
            }
        }
    }
    out
}

/// `[N, C, HW]` to `[C, N*HW]`.
fn batch_to_channel_major<T: Scalar>(src: &[T], n: usize, c: usize, hw: usize) -> Vec<T> {
    if n == 1 {
        return src.to_vec();
    }
    let mut out = vec![T::zero(); src.len()];
    for b in 0..n {
        for ci in 0..c {
            let s = (b * c + ci) * hw;
            let d = ci * n * hw + b * hw;
            out[d..d + hw].copy_from_slice(&src[s..s + hw]);
        }
    }
    out
}

fn channel_major_to_batch<T: Scalar>(src: &[T], n: usize, c: usize, hw: usize) -> Vec<T> {
    if n == 1 {
        return src.to_vec();
    }
    let mut out = vec![T::zero(); src.len()];
    for b in 0..n {
        for ci in 0..c {
            let d = (b * c + ci) * hw;
            let s = ci * n * hw + b * hw;
            out[d..d + hw].copy_from_slice(&src[s..s + hw]);
        }
    }
    out
}

/// Same-padded, stride-1 2-D convolution (cross-correlation, as in every CNN framework).
pub fn conv2d<T: Scalar>(input: &Tensor<T>, kernel: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c_in, h, w) = input.nchw()?;
    let (c_out, k) = check_conv_params(kernel, bias, c_in)?;
    if h == 0 || w == 0 {
        return Err(Error::shape("conv2d", "spatial dims >= 1", format!("{h}x{w}")));
    }
    let hw = h * w;
    let kk = c_in * k * k;
    let cols_owned;
    let cols: &[T] = if k == 1 && n == 1 {
        input.data()
    } else if k == 1 {
        cols_owned = batch_to_channel_major(input.data(), n, c_in, hw);
        &cols_owned
    } else {
        cols_owned = im2col(input.data(), n, c_in, h, w, k);
        &cols_owned
    };
    let cols_w = n * hw;
    let mut out = vec![T::zero(); c_out * cols_w];
    for (co, &b) in bias.data().iter().enumerate() {
        out[co * cols_w..(co + 1) * cols_w].fill(b);
    }
    T::gemm(
        c_out,
        kk,
        cols_w,
        T::one(),
        kernel.data(),
        (kk as isize, 1),
        cols,
        (cols_w as isize, 1),
        T::one(),
        &mut out,
        (cols_w as isize, 1),
    );
    let out = channel_major_to_batch(&out, n, c_out, hw);
    Ok(with_batch_rank(input, n, c_out, h, w, out))
}

/// Gradients of [`conv2d`]; entries are `None` when not requested.
#[derive(Debug)]
pub struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub kernel: Option<Tensor<T>>,
    pub bias: Option<Tensor<T>>,
}

pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    grad_out: &Tensor<T>,
    want: [bool; 3],
) -> Result<ConvGrads<T>> {
    let (n, c_in, h, w) = input.nchw()?;
    let c_out = kernel.shape()[0];
    let k = kernel.shape()[2];
    let hw = h * w;
    let kk = c_in * k * k;
    let cols_w = n * hw;
    let expected = if input.ndim() == 3 { vec![c_out, h, w] } else { vec![n, c_out, h, w] };
    if grad_out.shape() != expected.as_slice() {
        return Err(Error::shape("conv2d_backward", shape_str(&expected), shape_str(grad_out.shape())));
    }
    let [want_input, want_kernel, want_bias] = want;
    let g = batch_to_channel_major(grad_out.data(), n, c_out, hw);

    let kernel_grad = if want_kernel {
        let cols_owned;
        let cols: &[T] = if k == 1 && n == 1 {
            input.data()
        } else if k == 1 {
            cols_owned = batch_to_channel_major(input.data(), n, c_in, hw);
            &cols_owned
        } else {
            cols_owned = im2col(input.data(), n, c_in, h, w, k);
            &cols_owned
        };
        let mut gk = vec![T::zero(); c_out * kk];
        T::gemm(
            c_out,
            cols_w,
            kk,
            T::one(),
            &g,
            (cols_w as isize, 1),
            cols,
            (1, cols_w as isize),
            T::zero(),
            &mut gk,
            (kk as isize, 1),
        );
        Some(Tensor::new(kernel.shape().to_vec(), gk)?)
    } else {
        None
    };

    let bias_grad = if want_bias {
        let gb = (0..c_out).map(|co| g[co * cols_w..(co + 1) * cols_w].iter().copied().sum()).collect();
        Some(Tensor::new(vec![c_out], gb)?)
    } else {
        None
    };

    let input_grad = if want_input {
        let mut gcols = vec![T::zero(); kk * cols_w];
        T::gemm(
            kk,
            c_out,
            cols_w,
            T::one(),
            kernel.data(),
            (1, kk as isize),
            &g,
            (cols_w as isize, 1),
            T::zero(),
            &mut gcols,
            (cols_w as isize, 1),
        );
        let gi = if k == 1 {
            channel_major_to_batch(&gcols, n, c_in, hw)
        } else {
            col2im(&gcols, n, c_in, h, w, k)
        };
        Some(Tensor::new(input.shape().to_vec(), gi)?)
    } else {
        None
    };

    Ok(ConvGrads {
        input: input_grad,
        kernel: kernel_grad,
        bias: bias_grad,
    })
}

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Subgradient at exactly zero is taken as zero.
pub fn relu_backward<T: Scalar>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    input.zip_map(grad_out, "relu_backward", |x, g| if x > T::zero() { g } else { T::zero() })
}

/// `[C*r*r, H, W]` to `[C, r*H, r*W]` with `out[c, r*y+dy, r*x+dx] = in[c*r*r + dy*r + dx, y, x]`.
pub fn pixel_shuffle<T: Scalar>(input: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let (n, c_in, h, w) = input.nchw()?;
    if r == 0 || c_in % (r * r) != 0 {
        return Err(Error::shape(
            "pixel_shuffle",
            format!("channel count divisible by r^2 = {}", r * r),
            format!("{c_in} channels"),
        ));
    }
    let c = c_in / (r * r);
    let (oh, ow) = (h * r, w * r);
    let src = input.data();
    let mut out = vec![T::zero(); src.len()];
    for b in 0..n {
        for ci in 0..c {
            for dy in 0..r {
                for dx in 0..r {
                    let plane = ((b * c_in) + ci * r * r + dy * r + dx) * h * w;
                    for y in 0..h {
                        let orow = ((b * c + ci) * oh + y * r + dy) * ow;
                        for x in 0..w {
                            out[orow + x * r + dx] = src[plane + y * w + x];
                        }
                    }
                }
            }
        }
    }
    Ok(with_batch_rank(input, n, c, oh, ow, out))
}

/// Inverse of [`pixel_shuffle`]; also its backward pass.
pub fn pixel_unshuffle<T: Scalar>(input: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let (n, c, oh, ow) = input.nchw()?;
    if r == 0 || oh % r != 0 || ow % r != 0 {
        return Err(Error::shape(
            "pixel_unshuffle",
            format!("spatial dims divisible by {r}"),
            format!("{oh}x{ow}"),
        ));
    }
    let (h, w) = (oh / r, ow / r);
    let c_out = c * r * r;
    let src = input.data();
    let mut out = vec![T::zero(); src.len()];
    for b in 0..n {
        for ci in 0..c {
            for dy in 0..r {
                for dx in 0..r {
                    let plane = ((b * c_out) + ci * r * r + dy * r + dx) * h * w;
                    for y in 0..h {
                        let irow = ((b * c + ci) * oh + y * r + dy) * ow;
                        for x in 0..w {
                            out[plane + y * w + x] = src[irow + x * r + dx];
                        }
                    }
                }
            }
        }
    }
    Ok(with_batch_rank(input, n, c_out, h, w, out))
}

/// Concatenates along the channel axis, blocks in argument order.
pub fn concat_channels<T: Scalar>(inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::invalid("concat_channels of zero tensors"))?;
    let (n, _, h, w) = first.nchw()?;
    let mut channels = Vec::with_capacity(inputs.len());
    for t in inputs {
        let (tn, tc, th, tw) = t.nchw()?;
        if t.ndim() != first.ndim() || (tn, th, tw) != (n, h, w) {
            return Err(Error::shape(
                "concat_channels",
                shape_str(first.shape()),
                shape_str(t.shape()),
            ));
        }
        channels.push(tc);
    }
    let total: usize = channels.iter().sum();
    let hw = h * w;
    let mut out = Vec::with_capacity(n * total * hw);
    for b in 0..n {
        for (t, &c) in inputs.iter().zip(&channels) {
            out.extend_from_slice(&t.data()[b * c * hw..(b + 1) * c * hw]);
        }
    }
    Ok(with_batch_rank(first, n, total, h, w, out))
}

/// Splits a channel-concatenated tensor back into blocks of the given widths.
pub fn split_channels<T: Scalar>(input: &Tensor<T>, widths: &[usize]) -> Result<Vec<Tensor<T>>> {
    let (n, c, h, w) = input.nchw()?;
    if widths.iter().sum::<usize>() != c {
        return Err(Error::shape("split_channels", format!("{c} channels"), format!("{widths:?}")));
    }
    let hw = h * w;
    let mut offset = 0;
    let mut parts = Vec::with_capacity(widths.len());
    for &cw in widths {
        let mut data = Vec::with_capacity(n * cw * hw);
        for b in 0..n {
            let base = (b * c + offset) * hw;
            data.extend_from_slice(&input.data()[base..base + cw * hw]);
        }
        parts.push(with_batch_rank(input, n, cw, h, w, data));
        offset += cw;
    }
    Ok(parts)
}

/// Mean absolute error.
pub fn l1_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<T> {
    if pred.shape() != target.shape() {
        return Err(Error::shape("l1_loss", shape_str(target.shape()), shape_str(pred.shape())));
    }
    if pred.is_empty() {
        return Err(Error::invalid("l1_loss of empty tensors"));
    }
    let total: T = pred.data().iter().zip(target.data()).map(|(&p, &t)| (p - t).abs()).sum();
    Ok(total / T::from_f64(pred.len() as f64))
}

/// `sign(pred - target) / N` scaled by the upstream gradient.
pub fn l1_loss_backward<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>, upstream: T) -> Result<Tensor<T>> {
    let scale = upstream / T::from_f64(pred.len() as f64);
    pred.zip_map(target, "l1_loss_backward", |p, t| {
        let d = p - t;
        if d > T::zero() {
            scale
        } else if d < T::zero() {
            -scale
        } else {
            T::zero()
        }
    })
}
