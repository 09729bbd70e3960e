//! Minimal scatter rasterizer producing binary PPM (P6) images.
//!
//! Pixels are stored row by row from the top of the image, three bytes per
//! pixel in R, G, B order. The `y` axis points up: `ymax` maps to the first
//! row. Points outside the bounds are skipped and counted.

use serde::Serialize;

use crate::batch::SampleBatch;
use crate::error::{Error, Result};

pub const BACKGROUND: [u8; 3] = [255, 255, 255];
/// Reference (data) points.
pub const DATA_COLOR: [u8; 3] = [31, 119, 180];
/// Generated points, drawn on top of the data.
pub const GENERATED_COLOR: [u8; 3] = [214, 39, 40];

pub const MIN_RESOLUTION: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
}

impl Bounds {
    pub fn square(half_width: f64) -> Self {
        Self {
            xmin: -half_width,
            xmax: half_width,
            ymin: -half_width,
            ymax: half_width,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.xmin, self.xmax, self.ymin, self.ymax].iter().all(|v| v.is_finite())
            && self.xmin < self.xmax
            && self.ymin < self.ymax;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid render bounds {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RenderSummary {
    pub drawn: usize,
    pub clipped: usize,
}

pub struct Canvas {
    size: usize,
    bounds: Bounds,
    pixels: Vec<u8>,
    summary: RenderSummary,
}

impl Canvas {
    pub fn new(size: usize, bounds: Bounds) -> Result<Self> {
        if size < MIN_RESOLUTION {
            return Err(Error::invalid(format!(
                "resolution must be at least {MIN_RESOLUTION}, got {size}"
            )));
        }
        bounds.validate()?;
        Ok(Self {
            size,
            bounds,
            pixels: BACKGROUND.repeat(size * size),
            summary: RenderSummary { drawn: 0, clipped: 0 },
        })
    }

    /// Pixel `(column, row)` for a point, or `None` outside the bounds.
    pub fn pixel_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let b = &self.bounds;
        if !(b.xmin..=b.xmax).contains(&x) || !(b.ymin..=b.ymax).contains(&y) {
            return None;
        }
        let n = self.size as f64;
        let col = (((x - b.xmin) / (b.xmax - b.xmin)) * n).floor().min(n - 1.0) as usize;
        let row = (((b.ymax - y) / (b.ymax - b.ymin)) * n).floor().min(n - 1.0) as usize;
        Some((col, row))
    }

    pub fn draw(&mut self, points: &SampleBatch, color: [u8; 3]) -> Result<()> {
        if points.dim() != 2 {
            return Err(Error::invalid(format!("can only render 2D points, got dimension {}", points.dim())));
        }
        for p in points.iter_rows() {
            match self.pixel_of(p[0], p[1]) {
                Some((c, r)) => {
                    let i = 3 * (r * self.size + c);
                    self.pixels[i..i + 3].copy_from_slice(&color);
                    self.summary.drawn += 1;
                }
                None => self.summary.clipped += 1,
            }
        }
        Ok(())
    }

    pub fn pixel(&self, col: usize, row: usize) -> [u8; 3] {
        let i = 3 * (row * self.size + col);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn summary(&self) -> RenderSummary {
        self.summary
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.size, self.size).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centre_point_lands_in_centre_pixel() {
        let mut c = Canvas::new(17, Bounds::square(2.0)).unwrap();
        c.draw(&SampleBatch::from_rows(&[[0.0, 0.0]]).unwrap(), GENERATED_COLOR).unwrap();
        assert_eq!(c.pixel(8, 8), GENERATED_COLOR);
        assert_eq!(c.summary(), RenderSummary { drawn: 1, clipped: 0 });
    }

    #[test]
    fn y_axis_points_up_and_clipping_counts() {
        let mut c = Canvas::new(16, Bounds::square(1.0)).unwrap();
        let pts = SampleBatch::from_rows(&[[-0.99, 0.99], [5.0, 0.0], [0.0, -3.0]]).unwrap();
        c.draw(&pts, DATA_COLOR).unwrap();
        assert_eq!(c.pixel(0, 0), DATA_COLOR);
        assert_eq!(c.summary().clipped, 2);
    }

    #[test]
    fn rejects_small_resolution_and_bad_bounds() {
        assert!(Canvas::new(15, Bounds::square(1.0)).is_err());
        assert!(Canvas::new(16, Bounds { xmin: 1.0, xmax: 0.0, ymin: 0.0, ymax: 1.0 }).is_err());
    }

    #[test]
    fn ppm_header() {
        let c = Canvas::new(16, Bounds::square(1.0)).unwrap();
        let ppm = c.to_ppm();
        assert!(ppm.starts_with(b"P6\n16 16\n255\n"));
        assert_eq!(ppm.len(), 13 + 16 * 16 * 3);
    }
}
