//! Light-field level colour and scale conversions.

use crate::data::color::{rgb_to_y, rgb_to_ycbcr, ycbcr_to_rgb};
use crate::data::lightfield::{ColorSpace, LightField};
use crate::data::resize;
use crate::error::{Error, Result};

/// Crops every view to the largest size divisible by `scale`.
pub fn modcrop(lf: &LightField, scale: usize) -> Result<LightField> {
    if scale == 0 {
        return Err(Error::invalid("scale must be positive"));
    }
    let (h, w) = (lf.height() - lf.height() % scale, lf.width() - lf.width() % scale);
    if (h, w) == (lf.height(), lf.width()) {
        return Ok(lf.clone());
    }
    lf.crop(0, 0, h, w)
}

/// Bicubic (antialiased) downscale of every view.
pub fn downscale_lf(lf: &LightField, scale: usize) -> Result<LightField> {
    lf.map_views(lf.color_space(), |_, v| resize::downscale(v, scale))
}

pub fn upscale_lf(lf: &LightField, scale: usize) -> Result<LightField> {
    lf.map_views(lf.color_space(), |_, v| resize::upscale(v, scale))
}

/// The Y channel of every view.
pub fn to_luma(lf: &LightField) -> Result<LightField> {
    match lf.color_space() {
        ColorSpace::Y => Ok(lf.clone()),
        ColorSpace::Rgb => lf.map_views(ColorSpace::Y, |_, v| rgb_to_y(v)),
        ColorSpace::YCbCr => lf.map_views(ColorSpace::Y, |_, v| {
            let (_, h, w) = v.chw()?;
            v.select(0)?.reshape(vec![1, h, w])
        }),
    }
}

pub fn to_ycbcr(lf: &LightField) -> Result<LightField> {
    match lf.color_space() {
        ColorSpace::YCbCr => Ok(lf.clone()),
        ColorSpace::Rgb => lf.map_views(ColorSpace::YCbCr, |_, v| rgb_to_ycbcr(v)),
        ColorSpace::Y => Err(Error::invalid("a luma-only light field has no chroma")),
    }
}

pub fn to_rgb(lf: &LightField) -> Result<LightField> {
    match lf.color_space() {
        ColorSpace::Rgb => Ok(lf.clone()),
        ColorSpace::YCbCr => lf.map_views(ColorSpace::Rgb, |_, v| ycbcr_to_rgb(v)),
        ColorSpace::Y => Ok(lf.clone()),
    }
}

/// HR/LR training pair: the HR light field cropped to a multiple of `scale`
/// and its bicubic downscale.
pub fn degrade_pair(hr: &LightField, scale: usize) -> Result<(LightField, LightField)> {
    let hr = modcrop(hr, scale)?;
    let lr = downscale_lf(&hr, scale)?;
    Ok((lr, hr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    #[test]
    fn modcrop_trims_to_multiple() {
        let lf = LightField::new(Tensor::zeros(vec![2, 2, 1, 9, 10]), ColorSpace::Y).unwrap();
        let c = modcrop(&lf, 4).unwrap();
        assert_eq!((c.height(), c.width()), (8, 8));
    }

    #[test]
    fn luma_of_grey_rgb() {
        let lf = LightField::new(Tensor::full(vec![1, 1, 3, 2, 2], 1.0), ColorSpace::Rgb).unwrap();
        let y = to_luma(&lf).unwrap();
        assert_eq!(y.channels(), 1);
        assert!((y.tensor().data()[0] - 235.0 / 255.0).abs() < 1e-5);
    }

    #[test]
    fn degrade_pair_dims() {
        let lf = LightField::new(Tensor::full(vec![1, 1, 1, 13, 12], 0.5), ColorSpace::Y).unwrap();
        let (lr, hr) = degrade_pair(&lf, 2).unwrap();
        assert_eq!((hr.height(), hr.width(), lr.height(), lr.width()), (12, 12, 6, 6));
    }
}
