//! Aligned LR/HR patch sampling and angularly consistent augmentation.

use rand::Rng;

use crate::data::lightfield::LightField;
use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct PatchPair {
    pub lr: LightField,
    pub hr: LightField,
    pub scale: usize,
}

/// Top-left corner of an LR crop.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CropOffset {
    pub y: usize,
    pub x: usize,
}

fn check_pair(lr: &LightField, hr: &LightField, scale: usize) -> Result<()> {
    if scale == 0 {
        return Err(Error::invalid("scale must be positive"));
    }
    if lr.angular() != hr.angular() || lr.channels() != hr.channels() {
        return Err(Error::shape(
            "patch pair",
            format!("{}x{} views with {} channels", lr.angular(), lr.angular(), lr.channels()),
            format!("{}x{} views with {} channels", hr.angular(), hr.angular(), hr.channels()),
        ));
    }
    if hr.height() != lr.height() * scale || hr.width() != lr.width() * scale {
        return Err(Error::shape(
            "patch pair",
            format!("HR views of {}x{}", lr.height() * scale, lr.width() * scale),
            format!("{}x{}", hr.height(), hr.width()),
        ));
    }
    Ok(())
}

/// Crops the same window from every view, LR at `offset` and HR at `scale * offset`.
pub fn crop_pair(lr: &LightField, hr: &LightField, offset: CropOffset, patch: usize, scale: usize) -> Result<PatchPair> {
    check_pair(lr, hr, scale)?;
    Ok(PatchPair {
        lr: lr.crop(offset.y, offset.x, patch, patch)?,
        hr: hr.crop(offset.y * scale, offset.x * scale, patch * scale, patch * scale)?,
        scale,
    })
}

/// Uniform offset in `[0, H - p] x [0, W - p]`.
pub fn sample_offset(h: usize, w: usize, patch: usize, rng: &mut impl Rng) -> Result<CropOffset> {
    if patch == 0 || patch > h || patch > w {
        return Err(Error::invalid(format!(
            "patch of {patch}x{patch} does not fit in {h}x{w} views"
        )));
    }
    Ok(CropOffset {
        y: rng.random_range(0..=h - patch),
        x: rng.random_range(0..=w - patch),
    })
}

pub fn sample_patch(lr: &LightField, hr: &LightField, patch: usize, scale: usize, rng: &mut impl Rng) -> Result<PatchPair> {
    check_pair(lr, hr, scale)?;
    let offset = sample_offset(lr.height(), lr.width(), patch, rng)?;
    crop_pair(lr, hr, offset, patch, scale)
}

/// A dihedral transform: flips first, then `rot_k` counter-clockwise quarter turns.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Augmentation {
    pub rot_k: u8,
    pub hflip: bool,
    pub vflip: bool,
}

impl Augmentation {
    pub fn random(rng: &mut impl Rng) -> Self {
        Augmentation {
            rot_k: rng.random_range(0..4),
            hflip: rng.random(),
            vflip: rng.random(),
        }
    }

    /// Source `(row, col)` in an `h x w` grid for destination `(y, x)`.
    /// Output dims are `(w, h)` when `rot_k` is odd.
    fn source(self, y: usize, x: usize, h: usize, w: usize) -> (usize, usize) {
        // Undo the rotation first (it was applied last).
        let (mut y, mut x) = (y, x);
        let (mut ch, mut cw) = if self.rot_k % 2 == 1 { (w, h) } else { (h, w) };
        for _ in 0..self.rot_k % 4 {
            // One CCW quarter turn maps src (r, c) of an (ch' x cw') grid to
            // dst (cw' - 1 - c, r); invert it.
            let (src_h, src_w) = (cw, ch);
            let (r, c) = (x, src_w - 1 - y);
            y = r;
            x = c;
            ch = src_h;
            cw = src_w;
        }
        if self.vflip {
            y = h - 1 - y;
        }
        if self.hflip {
            x = w - 1 - x;
        }
        (y, x)
    }

    fn apply_grid<T: Copy>(self, src: &[T], h: usize, w: usize) -> Vec<T> {
        let (oh, ow) = if self.rot_k % 2 == 1 { (w, h) } else { (h, w) };
        let mut out = Vec::with_capacity(src.len());
        for y in 0..oh {
            for x in 0..ow {
                let (sy, sx) = self.source(y, x, h, w);
                out.push(src[sy * w + sx]);
            }
        }
        out
    }

    /// Transforms the pixels of every view and, identically, the `(u, v)` grid.
    pub fn apply_lf(self, lf: &LightField) -> Result<LightField> {
        let (a, c, h, w) = (lf.angular(), lf.channels(), lf.height(), lf.width());
        if self.rot_k % 2 == 1 && h != w {
            return Err(Error::invalid(format!(
                "odd rotation needs square views, got {h}x{w}"
            )));
        }
        let views = lf.views();
        let order: Vec<usize> = self.apply_grid(&(0..a * a).collect::<Vec<_>>(), a, a);
        let (oh, ow) = if self.rot_k % 2 == 1 { (w, h) } else { (h, w) };
        let mut out = Vec::with_capacity(a * a);
        for &src in &order {
            let v = &views[src];
            let mut data = Vec::with_capacity(v.len());
            for ch in 0..c {
                data.extend(self.apply_grid(&v.data()[ch * h * w..(ch + 1) * h * w], h, w));
            }
            out.push(Tensor::new(vec![c, oh, ow], data)?);
        }
        LightField::from_views(a, &out, lf.color_space())
    }
}

pub fn augment(pair: &PatchPair, aug: Augmentation) -> Result<PatchPair> {
    Ok(PatchPair {
        lr: aug.apply_lf(&pair.lr)?,
        hr: aug.apply_lf(&pair.hr)?,
        scale: pair.scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::lightfield::ColorSpace;

    fn grid(h: usize, w: usize) -> Vec<usize> {
        (0..h * w).collect()
    }

    #[test]
    fn quarter_turn_matches_rot90() {
        // numpy.rot90([[0,1,2],[3,4,5]]) == [[2,5],[1,4],[0,3]]
        let aug = Augmentation { rot_k: 1, ..Default::default() };
        assert_eq!(aug.apply_grid(&grid(2, 3), 2, 3), vec![2, 5, 1, 4, 0, 3]);
        let half = Augmentation { rot_k: 2, ..Default::default() };
        assert_eq!(half.apply_grid(&grid(2, 3), 2, 3), vec![5, 4, 3, 2, 1, 0]);
    }

    #[test]
    fn flips() {
        let h = Augmentation { hflip: true, ..Default::default() };
        assert_eq!(h.apply_grid(&grid(2, 3), 2, 3), vec![2, 1, 0, 5, 4, 3]);
        let v = Augmentation { vflip: true, ..Default::default() };
        assert_eq!(v.apply_grid(&grid(2, 3), 2, 3), vec![3, 4, 5, 0, 1, 2]);
    }

    #[test]
    fn four_quarter_turns_is_identity() {
        let lf = LightField::new(Tensor::from_fn(vec![3, 3, 1, 4, 4], |i| i as f32), ColorSpace::Y).unwrap();
        let mut cur = lf.clone();
        for _ in 0..4 {
            cur = Augmentation { rot_k: 1, ..Default::default() }.apply_lf(&cur).unwrap();
        }
        assert_eq!(cur, lf);
    }

    #[test]
    fn odd_rotation_of_rectangular_views_rejected() {
        let lf = LightField::new(Tensor::zeros(vec![1, 1, 1, 2, 3]), ColorSpace::Y).unwrap();
        assert!(Augmentation { rot_k: 1, ..Default::default() }.apply_lf(&lf).is_err());
        assert!(Augmentation { rot_k: 2, ..Default::default() }.apply_lf(&lf).is_ok());
    }

    #[test]
    fn oversized_patch_rejected() {
        let lr = LightField::new(Tensor::zeros(vec![1, 1, 1, 8, 8]), ColorSpace::Y).unwrap();
        let hr = LightField::new(Tensor::zeros(vec![1, 1, 1, 16, 16]), ColorSpace::Y).unwrap();
        let mut rng = rand::rng();
        assert!(sample_patch(&lr, &hr, 9, 2, &mut rng).is_err());
        assert!(sample_patch(&lr, &hr, 4, 3, &mut rng).is_err());
    }
}
