use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Per-pixel census descriptors. Bit `k` corresponds to the `k`-th window
/// neighbour in row-major order (the centre skipped) and is set when that
/// neighbour is darker than the centre.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CensusImage {
    pub width: usize,
    pub height: usize,
    /// Number of meaningful bits per descriptor: window area minus one.
    pub bits: u32,
    pub descriptors: Vec<u64>,
}

impl CensusImage {
    #[inline]
    pub fn get(&self, u: usize, v: usize) -> u64 {
        self.descriptors[v * self.width + u]
    }
}

/// Census transform with edge-clamped neighbourhoods.
pub fn census_transform(img: &GrayImage, window: (usize, usize)) -> Result<CensusImage> {
    let (ww, wh) = window;
    if ww % 2 == 0 || wh % 2 == 0 || ww < 3 || wh < 3 {
        return Err(Error::InvalidParams(format!(
            "census window must be odd and at least 3x3, got {ww}x{wh}"
        )));
    }
    if ww * wh - 1 > 64 {
        return Err(Error::InvalidParams(format!(
            "census window {ww}x{wh} exceeds 64 comparisons"
        )));
    }
    let (w, h) = img.dims();
    if ww > w || wh > h {
        return Err(Error::WindowTooLarge {
            width: ww,
            height: wh,
        });
    }
    let (rx, ry) = ((ww / 2) as isize, (wh / 2) as isize);
    let clamp = |x: isize, max: usize| x.clamp(0, max as isize - 1) as usize;

    let mut descriptors = vec![0u64; w * h];
    for v in 0..h {
        for u in 0..w {
            let centre = img.get(u, v);
            let mut desc = 0u64;
            let mut bit = 0;
            for dy in -ry..=ry {
                let y = clamp(v as isize + dy, h);
                for dx in -rx..=rx {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let x = clamp(u as isize + dx, w);
                    if img.get(x, y) < centre {
                        desc |= 1 << bit;
                    }
                    bit += 1;
                }
            }
            descriptors[v * w + u] = desc;
        }
    }
    Ok(CensusImage {
        width: w,
        height: h,
        bits: (ww * wh - 1) as u32,
        descriptors,
    })
}
