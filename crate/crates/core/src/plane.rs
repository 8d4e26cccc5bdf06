//! Dense single-channel `f32` planes in row-major layout.

use crate::geometry::ImageSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Plane {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn for_image(spec: ImageSpec) -> Self {
        Self::zeros(spec.w(), spec.h())
    }

    /// Wraps row-major data; `None` if the length does not match.
    pub fn from_vec(width: usize, height: usize, data: Vec<f32>) -> Option<Self> {
        (data.len() == width * height).then_some(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> f32 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, col: usize, row: usize, v: f32) {
        self.data[row * self.width + col] = v;
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[f32] {
        &self.data[row * self.width..(row + 1) * self.width]
    }

    #[inline]
    pub fn row_mut(&mut self, row: usize) -> &mut [f32] {
        &mut self.data[row * self.width..(row + 1) * self.width]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    /// Value at the pixel nearest to `(x, y)`, clamped to the border.
    #[inline]
    pub fn read_clamped(&self, x: f64, y: f64) -> f32 {
        let (c, r) = self.clamp_pixel(x, y);
        self.get(c, r)
    }

    /// Nearest pixel to `(x, y)`, clamped into the plane.
    #[inline]
    pub fn clamp_pixel(&self, x: f64, y: f64) -> (usize, usize) {
        let c = (x.round().max(0.0) as usize).min(self.width - 1);
        let r = (y.round().max(0.0) as usize).min(self.height - 1);
        (c, r)
    }

    /// Shifts content horizontally by `k` columns, filling vacated columns with zero.
    pub fn shifted_x(&self, k: i64) -> Self {
        let mut out = Self::zeros(self.width, self.height);
        for r in 0..self.height {
            for c in 0..self.width {
                let src = c as i64 - k;
                if src >= 0 && (src as usize) < self.width {
                    out.set(c, r, self.get(src as usize, r));
                }
            }
        }
        out
    }
}
