//! PNG ingestion and export for light fields.
//!
//! Two layouts are supported: a directory of `view_{u}_{v}.png` files, and a
//! single macro-pixel image where `view[u, v][y, x] = image[y*a + u, x*a + v]`.

use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use crate::data::lightfield::{ColorSpace, LightField, SaiIndex};
use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum BitDepth {
    #[default]
    Eight,
    Sixteen,
}

pub fn view_file_name(u: usize, v: usize) -> String {
    format!("view_{u}_{v}.png")
}

/// Reads a PNG as `[C, H, W]` in `[0, 1]`; grey images give one channel, colour three.
pub fn read_image(path: &Path) -> Result<(Tensor<f32>, ColorSpace)> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let grey = matches!(
        img,
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLumaA16(_)
    );
    let sixteen = matches!(
        img,
        DynamicImage::ImageLuma16(_)
            | DynamicImage::ImageLumaA16(_)
            | DynamicImage::ImageRgb16(_)
            | DynamicImage::ImageRgba16(_)
    );
    let planes = if grey { 1 } else { 3 };
    let mut data = vec![0.0f32; planes * h * w];
    match (grey, sixteen) {
        (true, false) => {
            for (i, p) in img.to_luma8().into_raw().into_iter().enumerate() {
                data[i] = p as f32 / 255.0;
            }
        }
        (true, true) => {
            for (i, p) in img.to_luma16().into_raw().into_iter().enumerate() {
                data[i] = p as f32 / 65535.0;
            }
        }
        (false, false) => {
            for (i, p) in img.to_rgb8().into_raw().into_iter().enumerate() {
                data[(i % 3) * h * w + i / 3] = p as f32 / 255.0;
            }
        }
        (false, true) => {
            for (i, p) in img.to_rgb16().into_raw().into_iter().enumerate() {
                data[(i % 3) * h * w + i / 3] = p as f32 / 65535.0;
            }
        }
    }
    let space = if grey { ColorSpace::Y } else { ColorSpace::Rgb };
    Ok((Tensor::new(vec![planes, h, w], data)?, space))
}

/// Writes a one- or three-channel `[C, H, W]` image, clamping to `[0, 1]`.
pub fn write_image(path: &Path, img: &Tensor<f32>, depth: BitDepth) -> Result<()> {
    let (c, h, w) = img.chw()?;
    if c != 1 && c != 3 {
        return Err(Error::invalid(format!("cannot write a {c}-channel image as PNG")));
    }
    let plane = h * w;
    let interleave = |max: f32| -> Vec<f32> {
        (0..c * plane)
            .map(|i| (img.data()[(i % c) * plane + i / c].clamp(0.0, 1.0) * max).round())
            .collect()
    };
    let (wu, hu) = (w as u32, h as u32);
    let dynimg = match (c, depth) {
        (1, BitDepth::Eight) => DynamicImage::ImageLuma8(
            ImageBuffer::<Luma<u8>, _>::from_raw(wu, hu, interleave(255.0).into_iter().map(|v| v as u8).collect())
                .expect("buffer size"),
        ),
        (1, BitDepth::Sixteen) => DynamicImage::ImageLuma16(
            ImageBuffer::<Luma<u16>, _>::from_raw(wu, hu, interleave(65535.0).into_iter().map(|v| v as u16).collect())
                .expect("buffer size"),
        ),
        (_, BitDepth::Eight) => DynamicImage::ImageRgb8(
            ImageBuffer::<Rgb<u8>, _>::from_raw(wu, hu, interleave(255.0).into_iter().map(|v| v as u8).collect())
                .expect("buffer size"),
        ),
        (_, BitDepth::Sixteen) => DynamicImage::ImageRgb16(
            ImageBuffer::<Rgb<u16>, _>::from_raw(wu, hu, interleave(65535.0).into_iter().map(|v| v as u16).collect())
                .expect("buffer size"),
        ),
    };
    dynimg
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

/// Splits a macro-pixel image `[C, a*H, a*W]` into an `a x a` light field.
pub fn demux_macro_pixel(img: &Tensor<f32>, angular: usize, color_space: ColorSpace) -> Result<LightField> {
    let (c, mh, mw) = img.chw()?;
    if angular == 0 || mh % angular != 0 || mw % angular != 0 || mh < angular || mw < angular {
        return Err(Error::invalid(format!(
            "macro-pixel image of {mh}x{mw} is not divisible by angular resolution {angular}"
        )));
    }
    let (h, w) = (mh / angular, mw / angular);
    let mut data = vec![0.0f32; img.len()];
    let src = img.data();
    for u in 0..angular {
        for v in 0..angular {
            let base = (u * angular + v) * c * h * w;
            for ch in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        data[base + (ch * h + y) * w + x] = src[(ch * mh + y * angular + u) * mw + x * angular + v];
                    }
                }
            }
        }
    }
    LightField::new(Tensor::new(vec![angular, angular, c, h, w], data)?, color_space)
}

/// Inverse of [`demux_macro_pixel`]: output is `[C, a*H, a*W]`.
pub fn encode_macro_pixel(lf: &LightField) -> Tensor<f32> {
    let (a, c, h, w) = (lf.angular(), lf.channels(), lf.height(), lf.width());
    let (mh, mw) = (a * h, a * w);
    let mut out = vec![0.0f32; c * mh * mw];
    let src = lf.tensor().data();
    for u in 0..a {
        for v in 0..a {
            let base = (u * a + v) * c * h * w;
            for ch in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        out[(ch * mh + y * a + u) * mw + x * a + v] = src[base + (ch * h + y) * w + x];
                    }
                }
            }
        }
    }
    Tensor::new(vec![c, mh, mw], out).expect("macro-pixel buffer")
}

/// Loads a light field from a view directory or a macro-pixel PNG.
pub fn decode_lf(source: &Path, angular: usize) -> Result<LightField> {
    if angular == 0 {
        return Err(Error::invalid("angular resolution must be at least 1"));
    }
    if source.is_dir() {
        let mut views = Vec::with_capacity(angular * angular);
        let mut space = None;
        for u in 0..angular {
            for v in 0..angular {
                let path = source.join(view_file_name(u, v));
                if !path.is_file() {
                    return Err(Error::MissingView { u, v, path });
                }
                let (img, s) = read_image(&path)?;
                if let Some(first) = views.first() {
                    let first: &Tensor<f32> = first;
                    if first.shape() != img.shape() {
                        return Err(Error::shape(
                            "decode_lf",
                            format!("view size {:?}", first.shape()),
                            format!("{:?} for {}", img.shape(), path.display()),
                        ));
                    }
                }
                space = Some(s);
                views.push(img);
            }
        }
        LightField::from_views(angular, &views, space.expect("at least one view"))
    } else {
        let (img, space) = read_image(source)?;
        demux_macro_pixel(&img, angular, space)
    }
}

/// Writes every view as `view_{u}_{v}.png` into `dir` and returns the paths.
pub fn write_lf_dir(lf: &LightField, dir: &Path, depth: BitDepth) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let a = lf.angular();
    let mut paths = Vec::with_capacity(lf.num_views());
    for i in 0..lf.num_views() {
        let idx = SaiIndex::from_flat(i, a);
        let path = dir.join(view_file_name(idx.u, idx.v));
        write_image(&path, &lf.view(idx), depth)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Detects the angular resolution of a view directory from its file names.
pub fn detect_angular(dir: &Path) -> Result<usize> {
    let mut a = 0;
    while dir.join(view_file_name(a, a)).is_file() {
        a += 1;
    }
    if a == 0 {
        return Err(Error::MissingView {
            u: 0,
            v: 0,
            path: dir.join(view_file_name(0, 0)),
        });
    }
    Ok(a)
}
