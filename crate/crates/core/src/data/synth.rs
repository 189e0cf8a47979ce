//! Synthetic light fields with genuine parallax: a procedurally drawn scene
//! translated per view by `disparity * (u - c, v - c)`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::lightfield::{ColorSpace, LightField};
use crate::data::resize::cubic;
use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

/// Samples `img` at fractional source positions with separable Keys cubic
/// interpolation and border clamping; integral positions copy exactly.
fn sample_plane(src: &[f32], h: usize, w: usize, ys: &[f64], xs: &[f64]) -> Vec<f32> {
    let taps = |p: f64| -> Vec<(usize, f64)> {
        let i0 = p.floor();
        let f = p - i0;
        if f == 0.0 {
            return vec![((i0 as isize).clamp(0, h.max(w) as isize - 1) as usize, 1.0)];
        }
        (-1..=2)
            .map(|d| {
                let idx = i0 as isize + d;
                (idx, cubic(f - d as f64))
            })
            .map(|(i, wt)| (i.max(0) as usize, wt))
            .collect()
    };
    let ytaps: Vec<Vec<(usize, f64)>> = ys
        .iter()
        .map(|&y| taps(y).into_iter().map(|(i, wt)| (i.min(h - 1), wt)).collect())
        .collect();
    let xtaps: Vec<Vec<(usize, f64)>> = xs
        .iter()
        .map(|&x| taps(x).into_iter().map(|(i, wt)| (i.min(w - 1), wt)).collect())
        .collect();
    let mut out = Vec::with_capacity(ys.len() * xs.len());
    for yt in &ytaps {
        for xt in &xtaps {
            let mut acc = 0.0;
            for &(yi, wy) in yt {
                for &(xi, wx) in xt {
                    acc += wy * wx * src[yi * w + xi] as f64;
                }
            }
            out.push(acc as f32);
        }
    }
    out
}

/// Margin cropped from each side so every view stays inside the base image.
pub fn parallax_margin(angular: usize, disparity_px: f32) -> usize {
    let c = (angular as f64 - 1.0) / 2.0;
    (disparity_px.abs() as f64 * c - 1e-9).ceil().max(0.0) as usize
}

/// View `(u, v)` is `base` translated by `disparity * (u - c, v - c)` pixels
/// (rows, cols) with `c = (a - 1) / 2`, then cropped to the common window.
pub fn synth_lf(base: &Tensor<f32>, angular: usize, disparity_px: f32, color_space: ColorSpace) -> Result<LightField> {
    let (c, h, w) = base.chw()?;
    if angular == 0 {
        return Err(Error::invalid("angular resolution must be at least 1"));
    }
    if !disparity_px.is_finite() {
        return Err(Error::invalid("disparity must be finite"));
    }
    let m = parallax_margin(angular, disparity_px);
    if 2 * m >= h || 2 * m >= w {
        return Err(Error::invalid(format!(
            "disparity {disparity_px} at angular resolution {angular} shifts views out of a {h}x{w} base"
        )));
    }
    let (oh, ow) = (h - 2 * m, w - 2 * m);
    let center = (angular as f64 - 1.0) / 2.0;
    let d = disparity_px as f64;
    let mut views = Vec::with_capacity(angular * angular);
    for u in 0..angular {
        for v in 0..angular {
            let ty = d * (u as f64 - center);
            let tx = d * (v as f64 - center);
            let ys: Vec<f64> = (0..oh).map(|y| (y + m) as f64 - ty).collect();
            let xs: Vec<f64> = (0..ow).map(|x| (x + m) as f64 - tx).collect();
            let mut data = Vec::with_capacity(c * oh * ow);
            for ch in 0..c {
                let plane = &base.data()[ch * h * w..(ch + 1) * h * w];
                data.extend(sample_plane(plane, h, w, &ys, &xs));
            }
            views.push(Tensor::new(vec![c, oh, ow], data)?);
        }
    }
    LightField::from_views(angular, &views, color_space)
}

/// A random scene with flat regions, sharp edges, thin lines and gratings, in `[0, 1]`.
pub fn synth_scene(channels: usize, h: usize, w: usize, rng: &mut impl Rng) -> Tensor<f32> {
    let mut img = vec![0.0f32; channels * h * w];
    let (hf, wf) = (h as f32, w as f32);

    // Smooth background.
    for ch in 0..channels {
        let (gy, gx, base) = (rng.random_range(-0.3..0.3f32), rng.random_range(-0.3..0.3f32), rng.random_range(0.3..0.7f32));
        let (fy, fx, amp) = (rng.random_range(1.0..4.0f32), rng.random_range(1.0..4.0f32), rng.random_range(0.02..0.1f32));
        for y in 0..h {
            for x in 0..w {
                let (ny, nx) = (y as f32 / hf, x as f32 / wf);
                img[(ch * h + y) * w + x] = base
                    + gy * (ny - 0.5)
                    + gx * (nx - 0.5)
                    + amp * (std::f32::consts::TAU * (fy * ny + fx * nx)).sin();
            }
        }
    }

    let colour = |rng: &mut dyn rand::RngCore| -> Vec<f32> { (0..channels).map(|_| rng.random_range(0.0..1.0f32)).collect() };
    let paint = |img: &mut Vec<f32>, y: usize, x: usize, col: &[f32], alpha: f32| {
        for (ch, &cv) in col.iter().enumerate() {
            let p = &mut img[(ch * h + y) * w + x];
            *p = (1.0 - alpha) * *p + alpha * cv;
        }
    };

    let area = (h * w) as f32;
    let shapes = ((area / 180.0) as usize).clamp(6, 400);
    for _ in 0..shapes {
        let col = colour(rng);
        match rng.random_range(0..5u32) {
            0 | 1 => {
                let (cy, cx) = (rng.random_range(0.0..hf), rng.random_range(0.0..wf));
                let r = rng.random_range(1.5..(hf.min(wf) / 6.0).max(2.0));
                for y in 0..h {
                    for x in 0..w {
                        let dd = (y as f32 - cy).powi(2) + (x as f32 - cx).powi(2);
                        if dd <= r * r {
                            paint(&mut img, y, x, &col, 1.0);
                        }
                    }
                }
            }
            2 => {
                let (y0, x0) = (rng.random_range(0..h), rng.random_range(0..w));
                let (rh, rw) = (rng.random_range(2..(h / 4).max(3)), rng.random_range(2..(w / 4).max(3)));
                for y in y0..(y0 + rh).min(h) {
                    for x in x0..(x0 + rw).min(w) {
                        paint(&mut img, y, x, &col, 1.0);
                    }
                }
            }
            3 => {
                // Thin line segment.
                let (y0, x0) = (rng.random_range(0.0..hf), rng.random_range(0.0..wf));
                let ang = rng.random_range(0.0..std::f32::consts::PI);
                let len = rng.random_range(wf.min(hf) / 6.0..wf.min(hf) / 2.0);
                let steps = (len * 2.0) as usize;
                for s in 0..steps {
                    let t = s as f32 / 2.0;
                    let (y, x) = (y0 + t * ang.sin(), x0 + t * ang.cos());
                    if y >= 0.0 && x >= 0.0 && (y as usize) < h && (x as usize) < w {
                        paint(&mut img, y as usize, x as usize, &col, 1.0);
                    }
                }
            }
            _ => {
                // Oriented grating inside a rectangle.
                let (y0, x0) = (rng.random_range(0..h), rng.random_range(0..w));
                let (rh, rw) = (rng.random_range(4..(h / 3).max(5)), rng.random_range(4..(w / 3).max(5)));
                let period = rng.random_range(2.5..6.0f32);
                let ang = rng.random_range(0.0..std::f32::consts::PI);
                let (sa, ca) = ang.sin_cos();
                for y in y0..(y0 + rh).min(h) {
                    for x in x0..(x0 + rw).min(w) {
                        let phase = (y as f32 * sa + x as f32 * ca) / period;
                        if phase.rem_euclid(1.0) < 0.5 {
                            paint(&mut img, y, x, &col, 0.8);
                        }
                    }
                }
            }
        }
    }
    for v in &mut img {
        *v = v.clamp(0.0, 1.0);
    }
    Tensor::new(vec![channels, h, w], img).expect("scene buffer")
}

/// `count` RGB light fields of `size x size` views, seeded.
pub fn synth_dataset(count: usize, angular: usize, disparity_px: f32, size: usize, seed: u64) -> Result<Vec<LightField>> {
    let m = parallax_margin(angular, disparity_px);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let base = synth_scene(3, size + 2 * m, size + 2 * m, &mut rng);
            synth_lf(&base, angular, disparity_px, ColorSpace::Rgb)
        })
        .collect()
}
