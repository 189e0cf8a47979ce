use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::tensor::{shape_str, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorSpace {
    Rgb,
    YCbCr,
    Y,
}

impl ColorSpace {
    pub fn channels(self) -> usize {
        match self {
            ColorSpace::Rgb | ColorSpace::YCbCr => 3,
            ColorSpace::Y => 1,
        }
    }
}

/// Angular coordinate of a sub-aperture view; flat index is `u * a + v`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SaiIndex {
    pub u: usize,
    pub v: usize,
}

impl SaiIndex {
    pub fn new(u: usize, v: usize, angular: usize) -> Result<Self> {
        if u >= angular || v >= angular {
            return Err(Error::invalid(format!(
                "view ({u},{v}) outside a {angular}x{angular} grid"
            )));
        }
        Ok(SaiIndex { u, v })
    }

    pub fn from_flat(i: usize, angular: usize) -> Self {
        SaiIndex {
            u: i / angular,
            v: i % angular,
        }
    }

    pub fn flat(self, angular: usize) -> usize {
        self.u * angular + self.v
    }
}

/// An `a x a` grid of sub-aperture views stored as `[a, a, C, H, W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LightField {
    views: Tensor<f32>,
    color_space: ColorSpace,
}

impl LightField {
    pub fn new(views: Tensor<f32>, color_space: ColorSpace) -> Result<Self> {
        match *views.shape() {
            [a, b, c, h, w] if a == b && a >= 1 && h >= 1 && w >= 1 => {
                if c != color_space.channels() {
                    return Err(Error::shape(
                        "LightField",
                        format!("{} channels for {color_space:?}", color_space.channels()),
                        format!("{c} channels"),
                    ));
                }
            }
            _ => {
                return Err(Error::shape(
                    "LightField",
                    "[a, a, C, H, W] with a >= 1",
                    shape_str(views.shape()),
                ))
            }
        }
        Ok(LightField { views, color_space })
    }

    /// Builds a light field from views in flat (row-major angular) order.
    pub fn from_views(angular: usize, views: &[Tensor<f32>], color_space: ColorSpace) -> Result<Self> {
        if angular == 0 || views.len() != angular * angular {
            return Err(Error::invalid(format!(
                "{} views cannot form a {angular}x{angular} light field",
                views.len()
            )));
        }
        let refs: Vec<&Tensor<f32>> = views.iter().collect();
        let stacked = Tensor::stack(&refs)?;
        let (c, h, w) = views[0].chw()?;
        LightField::new(stacked.reshape(vec![angular, angular, c, h, w])?, color_space)
    }

    pub fn angular(&self) -> usize {
        self.views.shape()[0]
    }

    pub fn num_views(&self) -> usize {
        self.angular() * self.angular()
    }

    pub fn channels(&self) -> usize {
        self.views.shape()[2]
    }

    pub fn height(&self) -> usize {
        self.views.shape()[3]
    }

    pub fn width(&self) -> usize {
        self.views.shape()[4]
    }

    pub fn color_space(&self) -> ColorSpace {
        self.color_space
    }

    pub fn tensor(&self) -> &Tensor<f32> {
        &self.views
    }

    fn view_len(&self) -> usize {
        self.channels() * self.height() * self.width()
    }

    pub fn view_data(&self, idx: SaiIndex) -> &[f32] {
        let i = idx.flat(self.angular()) * self.view_len();
        &self.views.data()[i..i + self.view_len()]
    }

    /// Copy of view `(u, v)` as `[C, H, W]`.
    pub fn view(&self, idx: SaiIndex) -> Tensor<f32> {
        Tensor::new(vec![self.channels(), self.height(), self.width()], self.view_data(idx).to_vec())
            .expect("view slice matches its shape")
    }

    /// All views in flat order.
    pub fn views(&self) -> Vec<Tensor<f32>> {
        (0..self.num_views())
            .map(|i| self.view(SaiIndex::from_flat(i, self.angular())))
            .collect()
    }

    /// Views stacked as `[n, C, H, W]`.
    pub fn stacked(&self) -> Tensor<f32> {
        let (a, c, h, w) = (self.angular(), self.channels(), self.height(), self.width());
        self.views.clone().reshape(vec![a * a, c, h, w]).expect("same element count")
    }

    /// Applies `f` to every view; all outputs must share a shape.
    pub fn map_views(
        &self,
        color_space: ColorSpace,
        mut f: impl FnMut(SaiIndex, &Tensor<f32>) -> Result<Tensor<f32>>,
    ) -> Result<LightField> {
        let a = self.angular();
        let out = self
            .views()
            .iter()
            .enumerate()
            .map(|(i, v)| f(SaiIndex::from_flat(i, a), v))
            .collect::<Result<Vec<_>>>()?;
        for v in &out[1..] {
            if v.shape() != out[0].shape() {
                return Err(Error::shape("map_views", shape_str(out[0].shape()), shape_str(v.shape())));
            }
        }
        LightField::from_views(a, &out, color_space)
    }

    /// Central `sub x sub` angular window.
    pub fn center_subset(&self, sub: usize) -> Result<LightField> {
        let a = self.angular();
        if sub == 0 || sub > a || (a - sub) % 2 != 0 {
            return Err(Error::invalid(format!(
                "cannot take a centered {sub}x{sub} window of a {a}x{a} light field"
            )));
        }
        let off = (a - sub) / 2;
        let views: Vec<Tensor<f32>> = (0..sub * sub)
            .map(|i| self.view(SaiIndex { u: off + i / sub, v: off + i % sub }))
            .collect();
        LightField::from_views(sub, &views, self.color_space)
    }

    /// Spatial window `[y0, y0+h) x [x0, x0+w)` of every view.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<LightField> {
        if y0 + h > self.height() || x0 + w > self.width() || h == 0 || w == 0 {
            return Err(Error::invalid(format!(
                "crop {h}x{w} at ({y0},{x0}) outside {}x{} views",
                self.height(),
                self.width()
            )));
        }
        let (c, sw) = (self.channels(), self.width());
        self.map_views(self.color_space, |_, v| {
            let mut data = Vec::with_capacity(c * h * w);
            for ch in 0..c {
                for y in y0..y0 + h {
                    let row = (ch * self.height() + y) * sw;
                    data.extend_from_slice(&v.data()[row + x0..row + x0 + w]);
                }
            }
            Tensor::new(vec![c, h, w], data)
        })
    }

    /// Clamps every value into `[0, 1]`.
    pub fn clamped(&self) -> LightField {
        LightField {
            views: self.views.map(|v| v.clamp(0.0, 1.0)),
            color_space: self.color_space,
        }
    }
}
