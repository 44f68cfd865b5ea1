//! Normalized axis-aligned boxes in `[cx, cy, w, h]` form.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used when checking that a clamped box sits inside the unit square.
pub const FRAME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoxError {
    #[error("box has non-finite coordinate")]
    NonFinite,
    #[error("box has non-positive size (w={w}, h={h})")]
    NonPositiveSize { w: f64, h: f64 },
    #[error("box lies entirely outside the image frame")]
    EmptyAfterClamp,
}

/// A box in normalized image coordinates: center and size as fractions of
/// the image width and height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct NormBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

/// Corner form `(x1, y1, x2, y2)` of a box. Unlike [`NormBox`] it may extend
/// past the frame; geometry routines work on it directly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl Rect {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Rect { x1, y1, x2, y2 }
    }

    pub fn width(&self) -> f64 {
        (self.x2 - self.x1).max(0.0)
    }

    pub fn height(&self) -> f64 {
        (self.y2 - self.y1).max(0.0)
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn is_empty(&self) -> bool {
        self.x2 <= self.x1 || self.y2 <= self.y1
    }

    /// Intersection of two rectangles; `None` when they do not overlap with
    /// positive area.
    pub fn intersect(&self, other: &Rect) -> Option<Rect> {
        let r = Rect {
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
            x2: self.x2.min(other.x2),
            y2: self.y2.min(other.y2),
        };
        if r.is_empty() {
            None
        } else {
            Some(r)
        }
    }

    pub const UNIT: Rect = Rect {
        x1: 0.0,
        y1: 0.0,
        x2: 1.0,
        y2: 1.0,
    };
}

impl NormBox {
    /// Builds a box, rejecting non-finite values and non-positive sizes.
    /// Position is not checked; use [`NormBox::clamp`] to bring it in frame.
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self, BoxError> {
        if !(cx.is_finite() && cy.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(BoxError::NonFinite);
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(BoxError::NonPositiveSize { w, h });
        }
        Ok(NormBox { cx, cy, w, h })
    }

    pub fn from_corners(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, BoxError> {
        NormBox::new((x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1)
    }

    pub fn from_rect(r: &Rect) -> Result<Self, BoxError> {
        NormBox::from_corners(r.x1, r.y1, r.x2, r.y2)
    }

    /// `(x1, y1, x2, y2)`.
    pub fn corners(&self) -> (f64, f64, f64, f64) {
        (
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )
    }

    pub fn rect(&self) -> Rect {
        let (x1, y1, x2, y2) = self.corners();
        Rect { x1, y1, x2, y2 }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Intersects the box with the unit square.
    pub fn clamp(&self) -> Result<NormBox, BoxError> {
        if self.is_in_frame() {
            return Ok(*self);
        }
        let r = self.rect().intersect(&Rect::UNIT).ok_or(BoxError::EmptyAfterClamp)?;
        NormBox::from_rect(&r).map_err(|_| BoxError::EmptyAfterClamp)
    }

    pub fn is_in_frame(&self) -> bool {
        let (x1, y1, x2, y2) = self.corners();
        x1 >= -FRAME_EPS && y1 >= -FRAME_EPS && x2 <= 1.0 + FRAME_EPS && y2 <= 1.0 + FRAME_EPS
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.cx, self.cy, self.w, self.h]
    }
}

impl TryFrom<[f64; 4]> for NormBox {
    type Error = BoxError;

    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        NormBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<NormBox> for [f64; 4] {
    fn from(b: NormBox) -> Self {
        b.to_array()
    }
}
