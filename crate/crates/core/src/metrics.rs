//! Y-channel PSNR/SSIM over every sub-aperture view.
//!
//! PSNR of identical images is reported as `f64::INFINITY`; JSON output
//! spells it `"identical"`.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::color::quantize_u8;
use crate::data::degrade::{degrade_pair, to_luma, upscale_lf};
use crate::data::lightfield::{LightField, SaiIndex};
use crate::error::{Error, Result};
use crate::nn::Tensor;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn check_same(op: &'static str, a: &Tensor<f32>, b: &Tensor<f32>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{:?}", a.shape()), format!("{:?}", b.shape())));
    }
    if a.is_empty() {
        return Err(Error::invalid(format!("{op} of empty images")));
    }
    Ok(())
}

pub fn mse(reference: &Tensor<f32>, test: &Tensor<f32>) -> Result<f64> {
    check_same("mse", reference, test)?;
    let sum: f64 = reference
        .data()
        .iter()
        .zip(test.data())
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum();
    Ok(sum / reference.len() as f64)
}

/// `10 log10(1 / MSE)` for a peak of 1.0; infinite when the images are identical.
pub fn psnr(reference: &Tensor<f32>, test: &Tensor<f32>) -> Result<f64> {
    let m = mse(reference, test)?;
    Ok(if m == 0.0 { f64::INFINITY } else { -10.0 * m.log10() })
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let raw: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let x = i as f64 - half;
            (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Separable "valid" filtering of an `h x w` plane.
fn filter_valid(src: &[f64], h: usize, w: usize, win: &[f64]) -> Vec<f64> {
    let k = win.len();
    let (oh, ow) = (h + 1 - k, w + 1 - k);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = win.iter().enumerate().map(|(t, &c)| c * src[y * w + x + t]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = win.iter().enumerate().map(|(t, &c)| c * rows[(y + t) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM over every valid 11x11 Gaussian window position (dynamic range 1.0),
/// averaged over channels.
pub fn ssim(reference: &Tensor<f32>, test: &Tensor<f32>) -> Result<f64> {
    check_same("ssim", reference, test)?;
    let (c, h, w) = reference.chw()?;
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}"
        )));
    }
    let win = gaussian_window();
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut total = 0.0;
    let mut count = 0usize;
    for ch in 0..c {
        let plane = |t: &Tensor<f32>| -> Vec<f64> { t.data()[ch * h * w..(ch + 1) * h * w].iter().map(|&v| v as f64).collect() };
        let x = plane(reference);
        let y = plane(test);
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * b).collect();
        let [mx, my, sxx, syy, sxy] = [&x, &y, &xx, &yy, &xy].map(|p| filter_valid(p, h, w, &win));
        for i in 0..mx.len() {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cov = sxy[i] - ux * uy;
            total += ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

fn ser_psnr<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str("identical")
    } else {
        s.serialize_f64(*v)
    }
}

fn de_psnr<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }
    match Raw::deserialize(d)? {
        Raw::Num(v) => Ok(v),
        Raw::Text(t) if t == "identical" => Ok(f64::INFINITY),
        Raw::Text(t) => Err(serde::de::Error::custom(format!("unexpected PSNR value {t:?}"))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewMetrics {
    pub u: usize,
    pub v: usize,
    #[serde(serialize_with = "ser_psnr", deserialize_with = "de_psnr")]
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_view: Vec<ViewMetrics>,
    #[serde(serialize_with = "ser_psnr", deserialize_with = "de_psnr")]
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub scale: usize,
    pub border_crop: usize,
    pub quantized: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvalOptions {
    pub scale: usize,
    /// Pixels removed from every side before scoring.
    pub border_crop: usize,
    /// Round Y to 8-bit levels before scoring.
    pub quantize: bool,
}

impl EvalOptions {
    /// Border crop equal to the scale factor, float metrics.
    pub fn for_scale(scale: usize) -> Self {
        EvalOptions {
            scale,
            border_crop: scale,
            quantize: false,
        }
    }
}

fn prepare(lf: &LightField, opts: &EvalOptions) -> Result<LightField> {
    let y = to_luma(lf)?;
    let b = opts.border_crop;
    if 2 * b >= y.height() || 2 * b >= y.width() {
        return Err(Error::invalid(format!(
            "border crop of {b} px leaves nothing of {}x{} views",
            y.height(),
            y.width()
        )));
    }
    let y = if b > 0 { y.crop(b, b, y.height() - 2 * b, y.width() - 2 * b)? } else { y };
    Ok(if opts.quantize { y.map_views(y.color_space(), |_, v| Ok(quantize_u8(v)))? } else { y })
}

/// Scores `sr` against `hr` view by view on the Y channel.
pub fn evaluate_lf(sr: &LightField, hr: &LightField, opts: &EvalOptions) -> Result<EvalReport> {
    if sr.angular() != hr.angular() || sr.height() != hr.height() || sr.width() != hr.width() {
        return Err(Error::shape(
            "evaluate_lf",
            format!("{0}x{0} views of {1}x{2}", hr.angular(), hr.height(), hr.width()),
            format!("{0}x{0} views of {1}x{2}", sr.angular(), sr.height(), sr.width()),
        ));
    }
    let (sy, hy) = (prepare(sr, opts)?, prepare(hr, opts)?);
    let a = hr.angular();
    let per_view = (0..a * a)
        .map(|i| {
            let idx = SaiIndex::from_flat(i, a);
            let (s, h) = (sy.view(idx), hy.view(idx));
            Ok(ViewMetrics {
                u: idx.u,
                v: idx.v,
                psnr: psnr(&h, &s)?,
                ssim: ssim(&h, &s)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = per_view.len() as f64;
    Ok(EvalReport {
        mean_psnr: per_view.iter().map(|m| m.psnr).sum::<f64>() / n,
        mean_ssim: per_view.iter().map(|m| m.ssim).sum::<f64>() / n,
        per_view,
        scale: opts.scale,
        border_crop: opts.border_crop,
        quantized: opts.quantize,
    })
}

/// Per-view means averaged over scenes.
pub fn mean_over_scenes(reports: &[EvalReport]) -> (f64, f64) {
    let n = reports.len().max(1) as f64;
    (
        reports.iter().map(|r| r.mean_psnr).sum::<f64>() / n,
        reports.iter().map(|r| r.mean_ssim).sum::<f64>() / n,
    )
}

/// Bicubic downscale then bicubic upscale, scored against the (mod-cropped) original.
pub fn bicubic_baseline(hr: &LightField, opts: &EvalOptions) -> Result<EvalReport> {
    let (lr, hr) = degrade_pair(hr, opts.scale)?;
    let up = upscale_lf(&lr, opts.scale)?;
    evaluate_lf(&up, &hr, opts)
}

pub fn format_psnr(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v:.2}")
    }
}

impl EvalReport {
    /// One line per view followed by the mean.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "x{} Y-channel, border {} px{}\n{:<8} {:>8} {:>7}\n",
            self.scale,
            self.border_crop,
            if self.quantized { ", 8-bit" } else { "" },
            "view",
            "PSNR",
            "SSIM"
        );
        for m in &self.per_view {
            out.push_str(&format!(
                "{:<8} {:>8} {:>7.4}\n",
                format!("({},{})", m.u, m.v),
                format_psnr(m.psnr),
                m.ssim
            ));
        }
        out.push_str(&format!("{:<8} {:>8} {:>7.4}\n", "mean", format_psnr(self.mean_psnr), self.mean_ssim));
        out
    }
}

/// `Method | Scale | PSNR/SSIM` rows.
pub fn comparison_table(rows: &[(String, usize, f64, f64)]) -> String {
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(6).max(6);
    let mut out = format!("{:<width$}  {:>5}  {:>14}\n", "Method", "Scale", "PSNR/SSIM");
    for (name, scale, p, s) in rows {
        out.push_str(&format!(
            "{:<width$}  {:>5}  {:>14}\n",
            name,
            format!("x{scale}"),
            format!("{}/{:.3}", format_psnr(*p), s)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::lightfield::ColorSpace;

    #[test]
    fn identical_images_hit_the_sentinels() {
        let a = Tensor::from_fn(vec![1, 12, 13], |i| (i % 7) as f32 / 7.0);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn small_image_rejected_by_ssim() {
        let a = Tensor::zeros(vec![1, 10, 20]);
        assert!(ssim(&a, &a).is_err());
    }

    #[test]
    fn sentinel_serializes_as_text() {
        let lf = LightField::new(Tensor::full(vec![1, 1, 1, 16, 16], 0.5), ColorSpace::Y).unwrap();
        let r = evaluate_lf(&lf, &lf, &EvalOptions::for_scale(2)).unwrap();
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"mean_psnr\":\"identical\""), "{json}");
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        assert!(r.to_table().contains("inf"));
    }

    #[test]
    fn oversized_border_rejected() {
        let lf = LightField::new(Tensor::zeros(vec![1, 1, 1, 8, 8]), ColorSpace::Y).unwrap();
        let opts = EvalOptions {
            scale: 2,
            border_crop: 4,
            quantize: false,
        };
        assert!(evaluate_lf(&lf, &lf, &opts).is_err());
    }

    #[test]
    fn comparison_table_layout() {
        let t = comparison_table(&[("Bicubic".into(), 2, 29.5, 0.935)]);
        assert!(t.lines().nth(1).unwrap().ends_with("29.50/0.935"), "{t}");
    }
}
