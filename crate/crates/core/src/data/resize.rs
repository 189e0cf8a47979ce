//! Separable bicubic resampling with antialiasing on downscale, following the
//! de facto `imresize` behaviour SR benchmarks are built with.

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

/// Keys cubic with `a = -0.5`.
pub fn cubic(x: f64) -> f64 {
    let ax = x.abs();
    let ax2 = ax * ax;
    let ax3 = ax2 * ax;
    if ax <= 1.0 {
        1.5 * ax3 - 2.5 * ax2 + 1.0
    } else if ax <= 2.0 {
        -0.5 * ax3 + 2.5 * ax2 - 4.0 * ax + 2.0
    } else {
        0.0
    }
}

/// One output sample: input indices (already clamped to the border) and weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Taps {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Resampling taps for one axis. Rows are normalized to sum to one.
pub fn weight_table(in_len: usize, out_len: usize, scale: f64) -> Vec<Taps> {
    let antialias = scale < 1.0;
    let kernel_width = if antialias { 4.0 / scale } else { 4.0 };
    let taps = kernel_width.ceil() as isize + 2;
    (0..out_len)
        .map(|o| {
            let center = (o as f64 + 0.5) / scale - 0.5;
            let left = (center - kernel_width / 2.0).floor() as isize;
            let mut indices = Vec::with_capacity(taps as usize);
            let mut weights = Vec::with_capacity(taps as usize);
            for t in 0..taps {
                let idx = left + t;
                let dist = center - idx as f64;
                let w = if antialias { scale * cubic(scale * dist) } else { cubic(dist) };
                if w == 0.0 {
                    continue;
                }
                indices.push(idx.clamp(0, in_len as isize - 1) as usize);
                weights.push(w);
            }
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
            Taps { indices, weights }
        })
        .collect()
}

fn resample_axis(src: &[f32], planes: usize, rows: usize, cols: usize, table: &[Taps], along_cols: bool) -> Vec<f32> {
    if along_cols {
        let out_cols = table.len();
        let mut out = vec![0.0f32; planes * rows * out_cols];
        for r in 0..planes * rows {
            let line = &src[r * cols..(r + 1) * cols];
            for (o, taps) in table.iter().enumerate() {
                let v: f64 = taps.indices.iter().zip(&taps.weights).map(|(&i, &w)| line[i] as f64 * w).sum();
                out[r * out_cols + o] = v as f32;
            }
        }
        out
    } else {
        let out_rows = table.len();
        let mut out = vec![0.0f32; planes * out_rows * cols];
        let mut acc = vec![0.0f64; cols];
        for p in 0..planes {
            for (o, taps) in table.iter().enumerate() {
                acc.fill(0.0);
                for (&i, &w) in taps.indices.iter().zip(&taps.weights) {
                    let line = &src[(p * rows + i) * cols..(p * rows + i + 1) * cols];
                    for (a, &s) in acc.iter_mut().zip(line) {
                        *a += s as f64 * w;
                    }
                }
                let dst = &mut out[(p * out_rows + o) * cols..(p * out_rows + o + 1) * cols];
                for (d, a) in dst.iter_mut().zip(&acc) {
                    *d = *a as f32;
                }
            }
        }
        out
    }
}

/// Resizes `[C, H, W]` to `[C, out_h, out_w]`.
pub fn resize_to(img: &Tensor<f32>, out_h: usize, out_w: usize) -> Result<Tensor<f32>> {
    let (_, h, w) = img.chw()?;
    if out_h == 0 || out_w == 0 || h == 0 || w == 0 {
        return Err(Error::invalid(format!("cannot resize {h}x{w} to {out_h}x{out_w}")));
    }
    let (sy, sx) = (out_h as f64 / h as f64, out_w as f64 / w as f64);
    resize_with_scale(img, out_h, out_w, sy, sx)
}

fn resize_with_scale(img: &Tensor<f32>, out_h: usize, out_w: usize, sy: f64, sx: f64) -> Result<Tensor<f32>> {
    let (c, h, w) = img.chw()?;
    if (out_h, out_w) == (h, w) && sy == 1.0 && sx == 1.0 {
        return Ok(img.clone());
    }
    let cols = weight_table(w, out_w, sx);
    let tmp = resample_axis(img.data(), c, h, w, &cols, true);
    let rows = weight_table(h, out_h, sy);
    let out = resample_axis(&tmp, c, h, out_w, &rows, false);
    Tensor::new(vec![c, out_h, out_w], out)
}

/// Resizes by a uniform factor; output dims are `ceil(scale * dim)`.
pub fn bicubic_resize(img: &Tensor<f32>, scale: f64) -> Result<Tensor<f32>> {
    let (_, h, w) = img.chw()?;
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::invalid(format!("resize scale must be positive, got {scale}")));
    }
    let dim = |d: usize| (d as f64 * scale - 1e-9).ceil() as usize;
    let (out_h, out_w) = (dim(h), dim(w));
    if out_h == 0 || out_w == 0 {
        return Err(Error::invalid(format!(
            "resizing {h}x{w} by {scale} gives a degenerate {out_h}x{out_w} image"
        )));
    }
    resize_with_scale(img, out_h, out_w, scale, scale)
}

/// Integer-factor bicubic downscale (degradation model for training pairs).
pub fn downscale(img: &Tensor<f32>, factor: usize) -> Result<Tensor<f32>> {
    let (_, h, w) = img.chw()?;
    if factor == 0 || h % factor != 0 || w % factor != 0 {
        return Err(Error::invalid(format!(
            "{h}x{w} is not divisible by the scale factor {factor}"
        )));
    }
    resize_with_scale(img, h / factor, w / factor, 1.0 / factor as f64, 1.0 / factor as f64)
}

/// Integer-factor bicubic upscale.
pub fn upscale(img: &Tensor<f32>, factor: usize) -> Result<Tensor<f32>> {
    let (_, h, w) = img.chw()?;
    if factor == 0 {
        return Err(Error::invalid("scale factor must be positive"));
    }
    resize_with_scale(img, h * factor, w * factor, factor as f64, factor as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_sum_to_one() {
        for (n_in, n_out) in [(64, 32), (32, 64), (17, 5), (5, 17), (10, 10)] {
            for taps in weight_table(n_in, n_out, n_out as f64 / n_in as f64) {
                let s: f64 = taps.weights.iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
                assert!(taps.indices.iter().all(|&i| i < n_in));
            }
        }
    }

    #[test]
    fn constant_image_stays_constant() {
        let img = Tensor::full(vec![2, 9, 7], 0.37f32);
        for scale in [0.5, 0.25, 2.0, 3.0, 0.7] {
            let out = bicubic_resize(&img, scale).unwrap();
            assert!(out.data().iter().all(|&v| (v - 0.37).abs() < 1e-6), "scale {scale}");
        }
    }

    #[test]
    fn unit_scale_is_identity() {
        let img = Tensor::from_fn(vec![1, 5, 6], |i| (i as f32 * 0.37).sin());
        assert_eq!(bicubic_resize(&img, 1.0).unwrap(), img);
    }

    #[test]
    fn downscaled_ramp_keeps_slope() {
        // I(x) = 0.01 x sampled at output o lands on input position 2o + 0.5.
        let (h, w) = (8, 64);
        let img = Tensor::from_fn(vec![1, h, w], |i| 0.01 * (i % w) as f32);
        let out = downscale(&img, 2).unwrap();
        let ow = w / 2;
        for y in 0..h / 2 {
            for o in 2..ow - 2 {
                let expected = 0.01 * (2.0 * o as f32 + 0.5);
                assert!((out.data()[y * ow + o] - expected).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn degenerate_target_rejected() {
        let img = Tensor::zeros(vec![1, 2, 2]);
        assert!(bicubic_resize(&img, 0.0).is_err());
        assert!(resize_to(&img, 0, 3).is_err());
        assert!(downscale(&Tensor::zeros(vec![1, 5, 4]), 2).is_err());
    }
}
