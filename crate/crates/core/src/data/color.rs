//! BT.601 studio-swing YCbCr on `[0, 1]` values, the convention used for
//! Y-channel PSNR/SSIM in the super-resolution literature.

use crate::error::{Error, Result};
use crate::nn::tensor::{shape_str, Tensor};

const FORWARD: [[f64; 3]; 3] = [
    [65.481, 128.553, 24.966],
    [-37.797, -74.203, 112.0],
    [112.0, -93.786, -18.214],
];
const OFFSET: [f64; 3] = [16.0, 128.0, 128.0];

fn inverse_matrix() -> [[f64; 3]; 3] {
    let m = FORWARD;
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let cof = |r0: usize, c0: usize, r1: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    [
        [cof(1, 1, 2, 2) / det, -cof(0, 1, 2, 2) / det, cof(0, 1, 1, 2) / det],
        [-cof(1, 0, 2, 2) / det, cof(0, 0, 2, 2) / det, -cof(0, 0, 1, 2) / det],
        [cof(1, 0, 2, 1) / det, -cof(0, 0, 2, 1) / det, cof(0, 0, 1, 1) / det],
    ]
}

fn check_three(img: &Tensor<f32>, op: &'static str) -> Result<usize> {
    let (c, h, w) = img.chw()?;
    if c != 3 {
        return Err(Error::shape(op, "[3, H, W]", shape_str(img.shape())));
    }
    Ok(h * w)
}

fn apply(img: &Tensor<f32>, matrix: &[[f64; 3]; 3], pre: [f64; 3], post: [f64; 3], scale: f64) -> Tensor<f32> {
    let plane = img.len() / 3;
    let src = img.data();
    let mut out = vec![0.0f32; img.len()];
    for p in 0..plane {
        let x = [
            src[p] as f64 - pre[0],
            src[plane + p] as f64 - pre[1],
            src[2 * plane + p] as f64 - pre[2],
        ];
        for (r, row) in matrix.iter().enumerate() {
            let v = row[0] * x[0] + row[1] * x[1] + row[2] * x[2];
            out[r * plane + p] = (v * scale + post[r]) as f32;
        }
    }
    Tensor::new(img.shape().to_vec(), out).expect("same shape")
}

/// `Y = (65.481 R + 128.553 G + 24.966 B + 16) / 255`, Cb/Cr likewise.
pub fn rgb_to_ycbcr(img: &Tensor<f32>) -> Result<Tensor<f32>> {
    check_three(img, "rgb_to_ycbcr")?;
    let post = OFFSET.map(|o| o / 255.0);
    Ok(apply(img, &FORWARD, [0.0; 3], post, 1.0 / 255.0))
}

pub fn ycbcr_to_rgb(img: &Tensor<f32>) -> Result<Tensor<f32>> {
    check_three(img, "ycbcr_to_rgb")?;
    let pre = OFFSET.map(|o| o / 255.0);
    Ok(apply(img, &inverse_matrix(), pre, [0.0; 3], 255.0))
}

/// Luma plane `[1, H, W]` of an RGB image.
pub fn rgb_to_y(img: &Tensor<f32>) -> Result<Tensor<f32>> {
    let ycc = rgb_to_ycbcr(img)?;
    let (_, h, w) = ycc.chw()?;
    ycc.select(0)?.reshape(vec![1, h, w])
}

/// Rounds `[0, 1]` values to the nearest 8-bit level.
pub fn quantize_u8(img: &Tensor<f32>) -> Tensor<f32> {
    img.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pixel(r: f32, g: f32, b: f32) -> Tensor<f32> {
        Tensor::new(vec![3, 1, 1], vec![r, g, b]).unwrap()
    }

    #[test]
    fn white_and_black_luma() {
        let white = rgb_to_ycbcr(&pixel(1.0, 1.0, 1.0)).unwrap();
        // (65.481 + 128.553 + 24.966 + 16) / 255 = 235 / 255
        assert!((white.data()[0] - 235.0 / 255.0).abs() < 1e-6);
        assert!((white.data()[0] - 0.9216).abs() < 1e-4);
        assert!((white.data()[1] - 128.0 / 255.0).abs() < 1e-5);
        let black = rgb_to_ycbcr(&pixel(0.0, 0.0, 0.0)).unwrap();
        assert!((black.data()[0] - 16.0 / 255.0).abs() < 1e-7);
        assert!((black.data()[0] - 0.0627).abs() < 1e-4);
    }

    #[test]
    fn round_trip() {
        let img = Tensor::from_fn(vec![3, 4, 4], |i| ((i * 37) % 101) as f32 / 100.0);
        let back = ycbcr_to_rgb(&rgb_to_ycbcr(&img).unwrap()).unwrap();
        assert!(back.max_abs_diff(&img) < 1e-4);
    }

    #[test]
    fn rejects_single_channel() {
        assert!(rgb_to_ycbcr(&Tensor::zeros(vec![1, 2, 2])).is_err());
    }
}
