use serde::{Deserialize, Serialize};

use crate::calib::PixelPoint;
use crate::error::{Error, Result};

/// Marker for pixels without a usable disparity. Zero is never used for this:
/// it is a legal value (a point at infinity).
pub const INVALID_DISPARITY: f32 = f32::INFINITY;

/// Row-major per-pixel horizontal disparity in pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisparityMap {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl DisparityMap {
    /// Builds a map, replacing every non-finite or non-positive entry with
    /// [`INVALID_DISPARITY`].
    pub fn new(width: usize, height: usize, mut values: Vec<f32>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::InvalidParams(format!(
                "{} disparities for a {width}x{height} map",
                values.len()
            )));
        }
        for v in values.iter_mut() {
            if !(v.is_finite() && *v > 0.0) {
                *v = INVALID_DISPARITY;
            }
        }
        Ok(DisparityMap {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        DisparityMap::new(width, height, vec![value; width * height]).expect("sized")
    }

    pub fn invalid(width: usize, height: usize) -> Self {
        DisparityMap::filled(width, height, INVALID_DISPARITY)
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f32) -> Self {
        let values = (0..height)
            .flat_map(|v| (0..width).map(move |u| (u, v)))
            .map(|(u, v)| f(u, v))
            .collect();
        DisparityMap::new(width, height, values).expect("sized")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Raw value, [`INVALID_DISPARITY`] included.
    #[inline]
    pub fn raw(&self, u: usize, v: usize) -> f32 {
        self.values[v * self.width + u]
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> Option<f32> {
        let d = self.raw(u, v);
        (d != INVALID_DISPARITY).then_some(d)
    }

    #[inline]
    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        self.raw(u, v) != INVALID_DISPARITY
    }

    pub fn valid_count(&self) -> usize {
        self.values
            .iter()
            .filter(|&&d| d != INVALID_DISPARITY)
            .count()
    }

    pub(crate) fn set(&mut self, u: usize, v: usize, d: f32) {
        self.values[v * self.width + u] = if d.is_finite() && d > 0.0 {
            d
        } else {
            INVALID_DISPARITY
        };
    }

    /// Horizontal mirror image of the map.
    pub fn mirrored(&self) -> DisparityMap {
        let mut values = Vec::with_capacity(self.values.len());
        for row in self.values.chunks_exact(self.width) {
            values.extend(row.iter().rev());
        }
        DisparityMap {
            width: self.width,
            height: self.height,
            values,
        }
    }

    /// Bilinear sample at a sub-pixel location. Integer coordinates return the
    /// stored value exactly; any required neighbour being invalid or outside
    /// the map yields `None`.
    pub fn sample(&self, p: PixelPoint) -> Option<f64> {
        if !(p.u >= 0.0 && p.v >= 0.0) {
            return None;
        }
        let (u0, v0) = (p.u.floor() as usize, p.v.floor() as usize);
        let (tu, tv) = (p.u - u0 as f64, p.v - v0 as f64);
        let fetch = |u: usize, v: usize| -> Option<f64> {
            (u < self.width && v < self.height)
                .then(|| self.get(u, v))
                .flatten()
                .map(f64::from)
        };
        let row = |v: usize| -> Option<f64> {
            let a = fetch(u0, v)?;
            if tu == 0.0 {
                return Some(a);
            }
            let b = fetch(u0 + 1, v)?;
            Some(a + tu * (b - a))
        };
        let top = row(v0)?;
        if tv == 0.0 {
            return Some(top);
        }
        let bottom = row(v0 + 1)?;
        Some(top + tv * (bottom - top))
    }
}
