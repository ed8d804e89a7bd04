//! Turning user intent into the pixel pair to measure: explicit clicks
//! (offline) or tool-tip extraction from instrument masks (online).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calib::PixelPoint;
use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Binary instrument mask aligned with the left image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToolMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl ToolMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::InvalidParams(format!(
                "{} mask bits for {width}x{height}",
                bits.len()
            )));
        }
        Ok(ToolMask {
            width,
            height,
            bits,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let bits = (0..height)
            .flat_map(|v| (0..width).map(move |u| (u, v)))
            .map(|(u, v)| f(u, v))
            .collect();
        ToolMask {
            width,
            height,
            bits,
        }
    }

    /// Any nonzero sample marks the tool.
    pub fn from_gray(img: &GrayImage) -> Self {
        ToolMask {
            width: img.width(),
            height: img.height(),
            bits: img.pixels().iter().map(|&p| p != 0).collect(),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> bool {
        self.bits[v * self.width + u]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Set pixels as `(u, v)` in row-major order.
    pub fn set_pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| (i % self.width, i / self.width))
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage::new(
            self.width,
            self.height,
            self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect(),
        )
        .expect("mask dims are valid image dims")
    }
}

/// Decodes a mask image and checks it against the session image size.
pub fn decode_mask(bytes: &[u8], expected: (usize, usize)) -> Result<ToolMask> {
    let mask = ToolMask::from_gray(&GrayImage::decode(bytes)?);
    if mask.dims() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: mask.dims(),
        });
    }
    if mask.count() == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(mask)
}

pub fn import_masks<P: AsRef<Path>>(
    paths: &[P],
    expected: (usize, usize),
) -> Result<Vec<ToolMask>> {
    paths
        .iter()
        .map(|p| decode_mask(&std::fs::read(p)?, expected))
        .collect()
}

/// Exact centroid as coordinate sums over the pixel count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Moments {
    n: i128,
    su: i128,
    sv: i128,
}

impl Moments {
    fn of(mask: &ToolMask) -> Result<Self> {
        let mut m = Moments { n: 0, su: 0, sv: 0 };
        for (u, v) in mask.set_pixels() {
            m.n += 1;
            m.su += u as i128;
            m.sv += v as i128;
        }
        if m.n == 0 {
            return Err(Error::EmptyMask);
        }
        Ok(m)
    }

    fn centroid(&self) -> PixelPoint {
        PixelPoint::new(
            self.su as f64 / self.n as f64,
            self.sv as f64 / self.n as f64,
        )
    }

    /// Squared distance to the centroid, scaled by n^2 so that it is exact.
    fn scaled_dist2(&self, u: usize, v: usize) -> i128 {
        let du = self.n * u as i128 - self.su;
        let dv = self.n * v as i128 - self.sv;
        du * du + dv * dv
    }

    /// Orders by centroid column, then row, without rounding.
    fn cmp_position(&self, other: &Moments) -> std::cmp::Ordering {
        (self.su * other.n)
            .cmp(&(other.su * self.n))
            .then((self.sv * other.n).cmp(&(other.sv * self.n)))
    }
}

/// Mean coordinate of the set pixels.
pub fn centroid(mask: &ToolMask) -> Result<PixelPoint> {
    Ok(Moments::of(mask)?.centroid())
}

/// The set pixel farthest from the centroid; ties go to the smaller row,
/// then the smaller column.
pub fn tooltip(mask: &ToolMask) -> Result<PixelPoint> {
    let m = Moments::of(mask)?;
    let mut best: Option<(i128, usize, usize)> = None;
    // Row-major traversal: the first maximum wins ties.
    for (u, v) in mask.set_pixels() {
        let d = m.scaled_dist2(u, v);
        if best.is_none_or(|(b, _, _)| d > b) {
            best = Some((d, u, v));
        }
    }
    let (_, u, v) = best.expect("non-empty mask");
    Ok(PixelPoint::new(u as f64, v as f64))
}

/// Diagnostics for one mask: its centroid, the chosen tip, and the extremal
/// pixels at both ends of the instrument (the tip and the farthest pixel on
/// the opposite side of the centroid).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionDebug {
    pub centroid: [f64; 2],
    pub tooltip: [f64; 2],
    pub candidates: Vec<[f64; 2]>,
}

pub fn tooltip_debug(mask: &ToolMask) -> Result<SelectionDebug> {
    let m = Moments::of(mask)?;
    let tip = tooltip(mask)?;
    let (tu, tv) = (m.n * tip.u as i128 - m.su, m.n * tip.v as i128 - m.sv);
    let mut candidates = vec![[tip.u, tip.v]];
    let opposite = mask
        .set_pixels()
        .filter(|&(u, v)| {
            let (du, dv) = (m.n * u as i128 - m.su, m.n * v as i128 - m.sv);
            du * tu + dv * tv < 0
        })
        .fold(None::<(i128, usize, usize)>, |best, (u, v)| {
            let d = m.scaled_dist2(u, v);
            match best {
                Some((b, _, _)) if d <= b => best,
                _ => Some((d, u, v)),
            }
        });
    if let Some((_, u, v)) = opposite {
        candidates.push([u as f64, v as f64]);
    }
    let c = m.centroid();
    Ok(SelectionDebug {
        centroid: [c.u, c.v],
        tooltip: [tip.u, tip.v],
        candidates,
    })
}

/// 4-connected components, each as a mask.
pub fn connected_components(mask: &ToolMask) -> Vec<ToolMask> {
    let (w, h) = mask.dims();
    let mut label = vec![usize::MAX; w * h];
    let mut comps = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask.bits[start] || label[start] != usize::MAX {
            continue;
        }
        let id = comps.len();
        let mut members = Vec::new();
        label[start] = id;
        stack.push(start);
        while let Some(i) = stack.pop() {
            members.push(i);
            let (u, v) = (i % w, i / w);
            let mut visit = |j: usize| {
                if mask.bits[j] && label[j] == usize::MAX {
                    label[j] = id;
                    stack.push(j);
                }
            };
            if u > 0 {
                visit(i - 1);
            }
            if u + 1 < w {
                visit(i + 1);
            }
            if v > 0 {
                visit(i - w);
            }
            if v + 1 < h {
                visit(i + w);
            }
        }
        let mut bits = vec![false; w * h];
        for i in members {
            bits[i] = true;
        }
        comps.push(ToolMask {
            width: w,
            height: h,
            bits,
        });
    }
    comps
}

/// Splits a combined mask into the two largest instances, leftmost first.
pub fn split_instances(mask: &ToolMask) -> Result<(ToolMask, ToolMask)> {
    let comps = connected_components(mask);
    if comps.len() < 2 {
        return Err(Error::InsufficientInstances(comps.len()));
    }
    let mut ranked: Vec<(Moments, ToolMask)> = comps
        .into_iter()
        .map(|c| (Moments::of(&c).expect("components are non-empty"), c))
        .collect();
    ranked.sort_by(|(a, _), (b, _)| b.n.cmp(&a.n).then_with(|| a.cmp_position(b)));
    ranked.truncate(2);
    let (mb, b) = ranked.pop().expect("two components");
    let (ma, a) = ranked.pop().expect("two components");
    if mb.cmp_position(&ma).is_lt() {
        Ok((b, a))
    } else {
        Ok((a, b))
    }
}

/// Online selection: tool tips of two instruments, leftmost instrument
/// first. A single mask is split into its two largest instances.
pub fn online_select(
    masks: &[ToolMask],
) -> Result<((PixelPoint, PixelPoint), [SelectionDebug; 2])> {
    let (a, b) = match masks {
        [one] => {
            Moments::of(one)?;
            split_instances(one)?
        }
        [first, second] => {
            let (m1, m2) = (Moments::of(first)?, Moments::of(second)?);
            if m2.cmp_position(&m1).is_lt() {
                (second.clone(), first.clone())
            } else {
                (first.clone(), second.clone())
            }
        }
        _ => {
            return Err(Error::InvalidParams(format!(
                "online selection takes one or two masks, got {}",
                masks.len()
            )))
        }
    };
    let (da, db) = (tooltip_debug(&a)?, tooltip_debug(&b)?);
    let pa = PixelPoint::new(da.tooltip[0], da.tooltip[1]);
    let pb = PixelPoint::new(db.tooltip[0], db.tooltip[1]);
    Ok(((pa, pb), [da, db]))
}
