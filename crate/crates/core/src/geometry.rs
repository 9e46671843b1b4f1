//! Axis-aligned image boxes and conversions to the `[u, v, h, β]` observation form.

use nalgebra::Vector4;

use crate::{Error, Result};

/// An axis-aligned box in pixel coordinates, `(x, y)` being the top-left corner.
///
/// Image `y` grows downwards, so a larger [`BBox::bottom`] is closer to the camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        BBox { x, y, w, h }
    }

    /// Builds a box from centroid, height and aspect ratio `β = h / w`.
    pub fn from_center(u: f64, v: f64, h: f64, beta: f64) -> Self {
        let w = h / beta;
        BBox {
            x: u - w / 2.0,
            y: v - h / 2.0,
            w,
            h,
        }
    }

    /// Builds a box from an observation vector `[u, v, h, β]`.
    pub fn from_observation(obs: &Vector4<f64>) -> Self {
        Self::from_center(obs[0], obs[1], obs[2], obs[3])
    }

    /// The observation vector `[u, v, h, β]` of this box.
    pub fn to_observation(&self) -> Vector4<f64> {
        Vector4::new(
            self.x + self.w / 2.0,
            self.y + self.h / 2.0,
            self.h,
            self.h / self.w,
        )
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Whether the box has a strictly positive, finite area.
    pub fn is_proper(&self) -> bool {
        self.w > 0.0 && self.h > 0.0 && self.area().is_finite() && self.x.is_finite() && self.y.is_finite()
    }

    pub(crate) fn ensure_proper(&self) -> Result<()> {
        if self.is_proper() {
            Ok(())
        } else {
            Err(Error::Model(format!("degenerate box {self:?}")))
        }
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let iw = self.right().min(other.right()) - self.x.max(other.x);
        let ih = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    /// The smallest box containing both boxes.
    pub fn enclosing(&self, other: &BBox) -> BBox {
        let x = self.x.min(other.x);
        let y = self.y.min(other.y);
        BBox {
            x,
            y,
            w: self.right().max(other.right()) - x,
            h: self.bottom().max(other.bottom()) - y,
        }
    }
}
