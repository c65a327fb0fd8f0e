//! Image-plane primitives shared by every module.
//!
//! Pixel `(i, j)` covers `[i, i+1) x [j, j+1)`; it belongs to a rectangle when
//! its center `(i + 0.5, j + 0.5)` does. Points use the same half-open test.

use serde::{Deserialize, Serialize};

/// A point in image pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// A displacement in image pixels.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Offset {
    pub dx: f64,
    pub dy: f64,
}

/// A feature-map cell (grid coordinates).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }

    /// Ordering key used by every tie-break: row first, then column.
    pub fn yx(&self) -> (usize, usize) {
        (self.y, self.x)
    }
}

/// Axis-aligned rectangle in pixels, `{x, y, w, h}` with `(x, y)` the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn centered(center: Point, w: f64, h: f64) -> Self {
        Self::new(center.x - w / 2.0, center.y - h / 2.0, w, h)
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn center(&self) -> Point {
        Point::new(self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn diagonal(&self) -> f64 {
        self.w.hypot(self.h)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.w.is_finite() && self.h.is_finite()
    }

    /// Half-open containment: `x <= p.x < x + w`.
    pub fn contains_point(&self, p: Point) -> bool {
        p.x >= self.x && p.x < self.right() && p.y >= self.y && p.y < self.bottom()
    }

    /// Closed containment, used for "lies within" checks on boxes.
    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }

    pub fn intersect(&self, other: &Rect) -> Rect {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        Rect::new(x0, y0, (x1 - x0).max(0.0), (y1 - y0).max(0.0))
    }

    pub fn scaled(&self, k: f64) -> Rect {
        Rect::new(self.x * k, self.y * k, self.w * k, self.h * k)
    }

    /// Column range `[start, end)` of pixels whose centers fall inside, clamped to `[0, width)`.
    pub fn pixel_cols(&self, width: usize) -> std::ops::Range<usize> {
        pixel_span(self.x, self.right(), width)
    }

    pub fn pixel_rows(&self, height: usize) -> std::ops::Range<usize> {
        pixel_span(self.y, self.bottom(), height)
    }
}

// Pixel i is inside when lo <= i + 0.5 < hi.
fn pixel_span(lo: f64, hi: f64, len: usize) -> std::ops::Range<usize> {
    let start = (lo - 0.5).ceil().max(0.0);
    let end = (hi - 0.5).ceil().max(0.0);
    let start = (start as usize).min(len);
    let end = (end as usize).min(len);
    start..end.max(start)
}

/// Image dimensions plus the object box that parsing searches over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageFrame {
    pub width_px: u32,
    pub height_px: u32,
    pub object_box: Rect,
}

impl ImageFrame {
    pub fn full(width_px: u32, height_px: u32) -> Self {
        Self {
            width_px,
            height_px,
            object_box: Rect::new(0.0, 0.0, width_px as f64, height_px as f64),
        }
    }

    pub fn bounds(&self) -> Rect {
        Rect::new(0.0, 0.0, self.width_px as f64, self.height_px as f64)
    }

    pub fn clip(&self, r: &Rect) -> Rect {
        r.intersect(&self.bounds())
    }
}
