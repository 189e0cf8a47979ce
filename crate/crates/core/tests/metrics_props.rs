//! PSNR/SSIM closed forms, invariants, and light-field aggregation.

use lfsafa::data::{ColorSpace, LightField};
use lfsafa::metrics::{evaluate_lf, psnr, ssim, EvalOptions};
use lfsafa::nn::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

fn image(h: usize, w: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> Tensor<f32> {
    Tensor::uniform(vec![1, h, w], lo, hi, rng)
}

#[test]
fn uniform_error_of_sixteen_levels() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let d = 16.0f32 / 255.0;
    let a = image(24, 20, 0.0, 0.9, &mut rng);
    let b = a.map(|v| v + d);
    let expected = 10.0 * (255.0f64 * 255.0 / 256.0).log10();
    assert!((expected - 24.05).abs() < 0.005);
    assert!((psnr(&a, &b).unwrap() - expected).abs() < 0.01);
    assert!((psnr(&b, &a).unwrap() - expected).abs() < 0.01);
}

#[test]
fn psnr_falls_as_noise_grows() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let reference = image(32, 32, 0.0, 1.0, &mut rng);
    let noise = image(32, 32, -1.0, 1.0, &mut rng);
    let values: Vec<f64> = [0.01f32, 0.02, 0.05, 0.1, 0.2]
        .iter()
        .map(|&amp| {
            let noisy = reference.zip_map(&noise, "noise", |r, n| r + amp * n).unwrap();
            psnr(&reference, &noisy).unwrap()
        })
        .collect();
    assert!(values.windows(2).all(|w| w[0] > w[1]), "{values:?}");
}

#[test]
fn ssim_of_constant_images_is_the_luminance_term() {
    for (c, d) in [(0.3f64, 0.1f64), (0.5, -0.25), (0.05, 0.6), (0.9, 0.0)] {
        let a = Tensor::full(vec![1, 16, 16], c as f32);
        let b = Tensor::full(vec![1, 16, 16], (c + d) as f32);
        let (x, y) = (c as f32 as f64, (c + d) as f32 as f64);
        let expected = (2.0 * x * y + C1) * C2 / ((x * x + y * y + C1) * C2);
        assert!((ssim(&a, &b).unwrap() - expected).abs() < 1e-9, "c={c} d={d}");
    }
}

#[test]
fn ssim_barely_moves_when_both_images_shift() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let a = image(32, 32, 0.1, 0.8, &mut rng);
    let noise = image(32, 32, -0.05, 0.05, &mut rng);
    let b = a.add(&noise).unwrap();
    let base = ssim(&a, &b).unwrap();
    for c in [0.01f32, 0.05, 0.1] {
        let moved = ssim(&a.map(|v| v + c), &b.map(|v| v + c)).unwrap();
        assert!((moved - base).abs() < 1e-3, "c={c}: {base} -> {moved}");
    }
}

#[test]
fn small_images_are_rejected() {
    let a = Tensor::zeros(vec![1, 10, 30]);
    assert!(ssim(&a, &a).is_err());
    assert!(psnr(&a, &Tensor::zeros(vec![1, 10, 29])).is_err());
}

/// Scores one luma plane with direct 2D window sums instead of the separable filter.
fn direct_ssim(x: &[f64], y: &[f64], h: usize, w: usize) -> f64 {
    let g: Vec<f64> = (0..11).map(|i| (-((i as f64 - 5.0).powi(2)) / 4.5).exp()).collect();
    let norm: f64 = g.iter().sum::<f64>().powi(2);
    let mut total = 0.0;
    let mut count = 0;
    for oy in 0..=h - 11 {
        for ox in 0..=w - 11 {
            let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    let k = g[i] * g[j] / norm;
                    let (a, b) = (x[(oy + i) * w + ox + j], y[(oy + i) * w + ox + j]);
                    mx += k * a;
                    my += k * b;
                    sxx += k * a * a;
                    syy += k * b * b;
                    sxy += k * a * b;
                }
            }
            let (vx, vy, cov) = (sxx - mx * mx, syy - my * my, sxy - mx * my);
            total += (2.0 * mx * my + C1) * (2.0 * cov + C2) / ((mx * mx + my * my + C1) * (vx + vy + C2));
            count += 1;
        }
    }
    total / count as f64
}

/// BT.601 luma of one RGB view, border-cropped.
fn luma(view: &Tensor<f32>, border: usize) -> (Vec<f64>, usize, usize) {
    let (_, h, w) = view.chw().unwrap();
    let d = view.data();
    let mut out = Vec::new();
    for y in border..h - border {
        for x in border..w - border {
            let p = y * w + x;
            let v = (65.481 * d[p] as f64 + 128.553 * d[h * w + p] as f64 + 24.966 * d[2 * h * w + p] as f64 + 16.0) / 255.0;
            out.push(v as f32 as f64);
        }
    }
    (out, h - 2 * border, w - 2 * border)
}

#[test]
fn report_means_match_a_scalar_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let a = 2;
    let hr_views: Vec<Tensor<f32>> = (0..a * a).map(|_| Tensor::uniform(vec![3, 18, 17], 0.0, 1.0, &mut rng)).collect();
    let sr_views: Vec<Tensor<f32>> = hr_views
        .iter()
        .map(|v| {
            let noise: Tensor<f32> = Tensor::uniform(v.shape().to_vec(), -0.1, 0.1, &mut rng);
            v.zip_map(&noise, "noise", |x, n| (x + n).clamp(0.0, 1.0)).unwrap()
        })
        .collect();
    let hr = LightField::from_views(a, &hr_views, ColorSpace::Rgb).unwrap();
    let sr = LightField::from_views(a, &sr_views, ColorSpace::Rgb).unwrap();
    let report = evaluate_lf(&sr, &hr, &EvalOptions::for_scale(2)).unwrap();
    assert_eq!(report.per_view.len(), a * a);

    let (mut p_sum, mut s_sum) = (0.0, 0.0);
    for (h, s) in hr_views.iter().zip(&sr_views) {
        let (yh, ch, cw) = luma(h, 2);
        let (ys, _, _) = luma(s, 2);
        let mse = yh.iter().zip(&ys).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / yh.len() as f64;
        p_sum += -10.0 * mse.log10();
        s_sum += direct_ssim(&yh, &ys, ch, cw);
    }
    let n = (a * a) as f64;
    assert!((report.mean_psnr - p_sum / n).abs() < 1e-6, "{} vs {}", report.mean_psnr, p_sum / n);
    assert!((report.mean_ssim - s_sum / n).abs() < 1e-6, "{} vs {}", report.mean_ssim, s_sum / n);
}

#[test]
fn single_view_report_has_one_row() {
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    let hr = LightField::new(Tensor::uniform(vec![1, 1, 1, 16, 16], 0.0, 1.0, &mut rng), ColorSpace::Y).unwrap();
    let sr = LightField::new(Tensor::uniform(vec![1, 1, 1, 16, 16], 0.0, 1.0, &mut rng), ColorSpace::Y).unwrap();
    let opts = EvalOptions {
        scale: 2,
        border_crop: 0,
        quantize: false,
    };
    let r = evaluate_lf(&sr, &hr, &opts).unwrap();
    assert_eq!(r.per_view.len(), 1);
    assert_eq!((r.mean_psnr, r.mean_ssim), (r.per_view[0].psnr, r.per_view[0].ssim));
    let same = evaluate_lf(&hr, &hr, &opts).unwrap();
    assert_eq!((same.mean_psnr, same.mean_ssim), (f64::INFINITY, 1.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn both_metrics_are_symmetric(seed in any::<u64>(), h in 11usize..20, w in 11usize..20, amp in 0.0f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = image(h, w, 0.0, 1.0, &mut rng);
        let noise = image(h, w, -amp, amp + 1e-9, &mut rng);
        let b = a.add(&noise).unwrap();
        prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        prop_assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
        let s = ssim(&a, &b).unwrap();
        prop_assert!((-1.0..=1.0 + 1e-12).contains(&s));
    }
}
