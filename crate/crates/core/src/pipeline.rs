//! End-to-end super-resolution of a light field.

use crate::adapt::{adapt_batch, AdaptationParams};
use crate::backbone::{features, reconstruct, unwrap_arc, BackboneParams};
use crate::data::color::{rgb_to_ycbcr, ycbcr_to_rgb};
use crate::data::lightfield::{ColorSpace, LightField};
use crate::data::resize;
use crate::error::{Error, Result};
use crate::nn::{Eager, Graph, Tensor};

/// Checks that an adaptation module fits a backbone and a light field.
pub fn check_compatible(backbone: &BackboneParams, adapt: &AdaptationParams, angular: usize) -> Result<()> {
    if adapt.config.feat_width != backbone.config.width {
        return Err(Error::invalid(format!(
            "adaptation expects {} feature channels but the backbone produces {}",
            adapt.config.feat_width, backbone.config.width
        )));
    }
    if adapt.config.angular != angular {
        return Err(Error::invalid(format!(
            "adaptation was built for {0}x{0} views but the light field has {1}x{1}",
            adapt.config.angular, angular
        )));
    }
    Ok(())
}

/// Runs the network on every view of `lr` in the backbone's own channel layout.
/// Without an adaptation module each view goes through the plain SISR path.
pub fn super_resolve_raw(backbone: &BackboneParams, adapt: Option<&AdaptationParams>, lr: &LightField) -> Result<LightField> {
    if lr.channels() != backbone.config.image_channels {
        return Err(Error::shape(
            "super_resolve",
            format!("{} channels per view", backbone.config.image_channels),
            format!("{}", lr.channels()),
        ));
    }
    if let Some(p) = adapt {
        check_compatible(backbone, p, lr.angular())?;
    }
    let mut g = Eager;
    let bb = backbone.bind(&mut g);
    let x = g.constant(lr.stacked());
    let f = features(&mut g, &bb, &x)?;
    let f = match adapt {
        Some(p) => {
            let nodes = p.bind(&mut g, false);
            adapt_batch(&mut g, &nodes, &f)?
        }
        None => f,
    };
    let y = unwrap_arc(reconstruct(&mut g, &bb, &f)?);
    let (n, c, h, w) = y.nchw()?;
    let a = lr.angular();
    debug_assert_eq!(n, a * a);
    let views = Tensor::new(vec![a, a, c, h, w], y.into_data())?;
    Ok(LightField::new(views, lr.color_space())?.clamped())
}

/// Super-resolves `lr`, keeping its colour space.
///
/// With a single-channel backbone, RGB and YCbCr inputs are processed on Y and
/// the chroma channels are bicubic-upscaled.
pub fn super_resolve(backbone: &BackboneParams, adapt: Option<&AdaptationParams>, lr: &LightField) -> Result<LightField> {
    let scale = backbone.config.scale;
    if backbone.config.image_channels != 1 || lr.color_space() == ColorSpace::Y {
        return super_resolve_raw(backbone, adapt, lr);
    }
    let ycc = match lr.color_space() {
        ColorSpace::Rgb => lr.map_views(ColorSpace::YCbCr, |_, v| rgb_to_ycbcr(v))?,
        _ => lr.clone(),
    };
    let luma = ycc.map_views(ColorSpace::Y, |_, v| {
        let (_, h, w) = v.chw()?;
        v.select(0)?.reshape(vec![1, h, w])
    })?;
    let sr_y = super_resolve_raw(backbone, adapt, &luma)?;
    let a = lr.angular();
    let mut views = Vec::with_capacity(a * a);
    for (y, full) in sr_y.views().iter().zip(ycc.views()) {
        let up = resize::upscale(&full, scale)?;
        let (_, h, w) = up.chw()?;
        let mut data = y.data().to_vec();
        data.extend_from_slice(&up.data()[h * w..]);
        views.push(Tensor::new(vec![3, h, w], data)?);
    }
    let out = LightField::from_views(a, &views, ColorSpace::YCbCr)?;
    let out = match lr.color_space() {
        ColorSpace::Rgb => out.map_views(ColorSpace::Rgb, |_, v| ycbcr_to_rgb(v))?,
        _ => out,
    };
    Ok(out.clamped())
}

/// Bicubic upscale of every view.
pub fn bicubic_sr(lr: &LightField, scale: usize) -> Result<LightField> {
    Ok(crate::data::degrade::upscale_lf(lr, scale)?.clamped())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapt::{AdaptConfig, AdaptFlags};
    use crate::backbone::BackboneConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn nets(a: usize) -> (BackboneParams, AdaptationParams) {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cfg = BackboneConfig {
            image_channels: 1,
            width: 6,
            blocks: 1,
            scale: 2,
        };
        let bb = BackboneParams::init(cfg, &mut rng).unwrap().set_frozen(true);
        let ad = AdaptationParams::init(AdaptConfig::new(a, 6, 4, AdaptFlags::default()), &mut rng).unwrap();
        (bb, ad)
    }

    #[test]
    fn fresh_adaptation_matches_plain_path_on_rgb() {
        let (bb, ad) = nets(2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let lr = LightField::new(Tensor::uniform(vec![2, 2, 3, 7, 6], 0.0, 1.0, &mut rng), ColorSpace::Rgb).unwrap();
        let plain = super_resolve(&bb, None, &lr).unwrap();
        let adapted = super_resolve(&bb, Some(&ad), &lr).unwrap();
        assert_eq!(plain.tensor().shape(), &[2, 2, 3, 14, 12]);
        assert_eq!(plain, adapted);
    }

    #[test]
    fn angular_mismatch_rejected() {
        let (bb, ad) = nets(3);
        let lr = LightField::new(Tensor::zeros(vec![2, 2, 1, 4, 4]), ColorSpace::Y).unwrap();
        assert!(super_resolve(&bb, Some(&ad), &lr).is_err());
    }
}
