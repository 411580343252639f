//! Prewitt edge magnitude, normalized per image to `[0, 1]`.

use crate::error::{Error, Result};
use crate::image::Image;

/// Per-pixel edge intensity in `[0, 1]`, row-major.
///
/// Maps produced by [`EdgeMap::normalized`] (and therefore by [`prewitt`])
/// have a maximum of exactly 1 unless every value is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl EdgeMap {
    /// Wraps raw values without rescaling. Values must already lie in `[0, 1]`.
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "{} edge values for a {width}x{height} map",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidImage(format!("edge value {v} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    /// Divides nonnegative raw strengths by their maximum. An all-zero input
    /// stays all-zero.
    pub fn normalized(width: usize, height: usize, mut raw: Vec<f64>) -> Result<Self> {
        if let Some(v) = raw.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::NonFinite(format!("edge strength {v}")));
        }
        let max = raw.iter().copied().fold(0.0, f64::max);
        if max > 0.0 {
            for v in raw.iter_mut() {
                *v /= max;
            }
        }
        Self::new(width, height, raw)
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Renders the map as an 8-bit image (value × 255) for inspection.
    pub fn to_image(&self) -> Image {
        let pixels = self
            .values
            .iter()
            .map(|&v| crate::image::clamp_to_u8(v * 255.0))
            .collect();
        Image::new(self.width, self.height, pixels).expect("edge map dims come from an image")
    }
}

/// Raw (unnormalized) Prewitt responses `(gx, gy)` at one pixel, with
/// replicate padding.
pub fn prewitt_response(img: &Image, row: usize, col: usize) -> (f64, f64) {
    let (r, c) = (row as isize, col as isize);
    let px = |dr: isize, dc: isize| img.get_clamped(r + dr, c + dc) as f64;
    let mut gx = 0.0;
    let mut gy = 0.0;
    for d in -1..=1 {
        gx += px(d, 1) - px(d, -1);
        gy += px(1, d) - px(-1, d);
    }
    (gx, gy)
}

/// Prewitt gradient magnitude `sqrt(gx² + gy²)`, divided by its image maximum.
pub fn prewitt(img: &Image) -> EdgeMap {
    let (h, w) = img.dims();
    let mut raw = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let (gx, gy) = prewitt_response(img, r, c);
            raw.push(gx.hypot(gy));
        }
    }
    EdgeMap::normalized(w, h, raw).expect("prewitt magnitudes are finite and nonnegative")
}
