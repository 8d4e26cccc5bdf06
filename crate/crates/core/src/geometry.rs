//! Lane curves as y-monotone polylines, plus the densification and row
//! sampling every other module builds on.
//!
//! A lane is a single-valued function `x = f(y)`: its points are stored with
//! strictly increasing `y`, and sampling between vertices is piecewise
//! linear. Nothing here ever extrapolates past the first or last vertex.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid curve: {0}")]
    InvalidCurve(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

/// Subpixel image coordinate, origin top-left, `y` pointing down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImagePoint {
    pub x: f64,
    pub y: f64,
}

impl ImagePoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Nearest integer pixel `(column, row)`, without bounds checks.
    pub fn pixel(&self) -> (i64, i64) {
        (self.x.round() as i64, self.y.round() as i64)
    }
}

/// Image dimensions in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageSpec {
    pub width: u32,
    pub height: u32,
}

impl ImageSpec {
    pub fn new(width: u32, height: u32) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidConfig(format!(
                "image size must be positive, got {width}x{height}"
            )));
        }
        Ok(Self { width, height })
    }

    pub fn w(&self) -> usize {
        self.width as usize
    }

    pub fn h(&self) -> usize {
        self.height as usize
    }

    /// True when the integer pixel `(col, row)` lies inside the image.
    pub fn contains_pixel(&self, col: i64, row: i64) -> bool {
        col >= 0 && row >= 0 && col < self.width as i64 && row < self.height as i64
    }
}

/// An ordered polyline with strictly increasing `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaneCurve {
    id: u32,
    points: Vec<ImagePoint>,
}

impl LaneCurve {
    /// Validates and wraps a point list. Points must already be sorted by
    /// strictly increasing `y`.
    pub fn new(id: u32, points: Vec<ImagePoint>) -> Result<Self, GeometryError> {
        if points.len() < 2 {
            return Err(GeometryError::InvalidCurve(format!(
                "lane {id} has {} point(s), need at least 2",
                points.len()
            )));
        }
        if let Some(p) = points.iter().find(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(GeometryError::InvalidCurve(format!(
                "lane {id} has a non-finite point ({}, {})",
                p.x, p.y
            )));
        }
        if let Some(w) = points.windows(2).find(|w| w[1].y <= w[0].y) {
            return Err(GeometryError::InvalidCurve(format!(
                "lane {id} is not strictly increasing in y ({} then {})",
                w[0].y, w[1].y
            )));
        }
        Ok(Self { id, points })
    }

    /// Builds a curve from `(x, y)` pairs.
    pub fn from_xy(id: u32, xy: &[(f64, f64)]) -> Result<Self, GeometryError> {
        Self::new(id, xy.iter().map(|&(x, y)| ImagePoint::new(x, y)).collect())
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn with_id(mut self, id: u32) -> Self {
        self.id = id;
        self
    }

    pub fn points(&self) -> &[ImagePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Vertical extent `(top, bottom)`.
    pub fn y_span(&self) -> (f64, f64) {
        (self.points[0].y, self.points[self.points.len() - 1].y)
    }

    /// Piecewise-linear `x` at row `y`; `None` outside the curve's y-span.
    pub fn sample_x(&self, y: f64) -> Option<f64> {
        sample_x(self, y)
    }

    /// Returns a copy with every point shifted by `(dx, dy)`.
    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            id: self.id,
            points: self
                .points
                .iter()
                .map(|p| ImagePoint::new(p.x + dx, p.y + dy))
                .collect(),
        }
    }
}

/// Piecewise-linear horizontal coordinate of `curve` at row `y`.
///
/// Exact vertex rows return the stored vertex `x` bit-for-bit, which the
/// encoder and the losses rely on to produce identical offset targets.
pub fn sample_x(curve: &LaneCurve, y: f64) -> Option<f64> {
    let pts = &curve.points;
    let (top, bottom) = curve.y_span();
    if !y.is_finite() || y < top || y > bottom {
        return None;
    }
    let i = pts.partition_point(|p| p.y < y);
    let hi = pts[i];
    if hi.y == y {
        return Some(hi.x);
    }
    let lo = pts[i - 1];
    let t = (y - lo.y) / (hi.y - lo.y);
    Some(lo.x + t * (hi.x - lo.x))
}

/// Interpolates the curve onto every integer row between its endpoints.
///
/// Rows run from `ceil(top)` to `floor(bottom)`; a curve that does not span
/// at least two integer rows is rejected.
pub fn densify(curve: &LaneCurve) -> Result<LaneCurve, GeometryError> {
    let (top, bottom) = curve.y_span();
    let first = top.ceil() as i64;
    let last = bottom.floor() as i64;
    if last - first < 1 {
        return Err(GeometryError::InvalidCurve(format!(
            "lane {} spans fewer than 2 integer rows ({top}..{bottom})",
            curve.id
        )));
    }
    let points = (first..=last)
        .map(|row| {
            let y = row as f64;
            // in span by construction
            ImagePoint::new(sample_x(curve, y).unwrap_or(f64::NAN), y)
        })
        .collect();
    Ok(LaneCurve { id: curve.id, points })
}

/// Samples the curve on the global row grid `{k * dy}` inside its span.
pub fn resample_rows(curve: &LaneCurve, dy: u32) -> Result<LaneCurve, GeometryError> {
    if dy < 1 {
        return Err(GeometryError::InvalidConfig(
            "row interval must be at least 1 pixel".into(),
        ));
    }
    let step = dy as i64;
    let (top, bottom) = curve.y_span();
    let first = (top / step as f64).ceil() as i64 * step;
    let mut points = Vec::new();
    let mut row = first;
    while (row as f64) <= bottom {
        let y = row as f64;
        if let Some(x) = sample_x(curve, y) {
            points.push(ImagePoint::new(x, y));
        }
        row += step;
    }
    if points.len() < 2 {
        return Err(GeometryError::InvalidCurve(format!(
            "lane {} covers {} grid row(s) at interval {dy}, need at least 2",
            curve.id,
            points.len()
        )));
    }
    Ok(LaneCurve { id: curve.id, points })
}
