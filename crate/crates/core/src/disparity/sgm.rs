//! Semi-global matching over a census/Hamming cost volume.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::census::census_transform;
use super::map::DisparityMap;
use crate::error::{Error, Result};
use crate::image::GrayImage;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgmParams {
    /// Number of disparity hypotheses; candidates are `0..max_disparity`.
    pub max_disparity: usize,
    /// Census window as (width, height).
    pub census_window: (usize, usize),
    pub p1: u32,
    pub p2: u32,
    /// Aggregation directions, 4 or 8.
    pub num_paths: usize,
    pub uniqueness_ratio: f64,
    pub lr_threshold: f64,
}

impl Default for SgmParams {
    fn default() -> Self {
        SgmParams {
            max_disparity: 128,
            census_window: (5, 5),
            p1: 6,
            p2: 96,
            num_paths: 8,
            uniqueness_ratio: 0.95,
            lr_threshold: 1.0,
        }
    }
}

impl SgmParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.into()));
        if self.max_disparity < 1 {
            return bad("max_disparity must be at least 1");
        }
        let (ww, wh) = self.census_window;
        if ww % 2 == 0 || wh % 2 == 0 || ww < 3 || wh < 3 {
            return bad("census_window dimensions must be odd and at least 3");
        }
        if !(0 < self.p1 && self.p1 < self.p2) {
            return bad("penalties must satisfy 0 < p1 < p2");
        }
        if self.p2 > 1 << 24 {
            return bad("p2 is unreasonably large");
        }
        if self.num_paths != 4 && self.num_paths != 8 {
            return bad("num_paths must be 4 or 8");
        }
        if !(self.uniqueness_ratio > 0.0 && self.uniqueness_ratio <= 1.0) {
            return bad("uniqueness_ratio must lie in (0, 1]");
        }
        if !(self.lr_threshold >= 0.0) {
            return bad("lr_threshold must be non-negative");
        }
        Ok(())
    }
}

/// Dense `width x height x disparities` volume, disparity fastest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Volume<T> {
    pub width: usize,
    pub height: usize,
    pub disparities: usize,
    pub data: Vec<T>,
}

impl<T: Copy + Default> Volume<T> {
    pub fn new(width: usize, height: usize, disparities: usize) -> Self {
        Volume {
            width,
            height,
            disparities,
            data: vec![T::default(); width * height * disparities],
        }
    }

    pub fn from_data(width: usize, height: usize, disparities: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), width * height * disparities);
        Volume {
            width,
            height,
            disparities,
            data,
        }
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize, d: usize) -> T {
        self.data[(v * self.width + u) * self.disparities + d]
    }

    #[inline]
    pub fn costs(&self, u: usize, v: usize) -> &[T] {
        let start = (v * self.width + u) * self.disparities;
        &self.data[start..start + self.disparities]
    }
}

/// Hamming cost between the left descriptor at `(u, v)` and the right one at
/// `(u - d, v)`. Hypotheses reaching past the left border cost the full
/// descriptor length.
pub fn matching_cost_volume(
    left: &GrayImage,
    right: &GrayImage,
    params: &SgmParams,
) -> Result<Volume<u8>> {
    if left.dims() != right.dims() {
        return Err(Error::DimensionMismatch {
            expected: left.dims(),
            found: right.dims(),
        });
    }
    params.validate()?;
    let cl = census_transform(left, params.census_window)?;
    let cr = census_transform(right, params.census_window)?;
    let (w, h) = left.dims();
    let nd = params.max_disparity;
    let max_cost = cl.bits as u8;

    let mut vol = Volume::<u8>::new(w, h, nd);
    vol.data
        .par_chunks_mut(w * nd)
        .enumerate()
        .for_each(|(v, row)| {
            for (u, cell) in row.chunks_exact_mut(nd).enumerate() {
                let dl = cl.get(u, v);
                for (d, c) in cell.iter_mut().enumerate() {
                    *c = if d > u {
                        max_cost
                    } else {
                        (dl ^ cr.get(u - d, v)).count_ones() as u8
                    };
                }
            }
        });
    Ok(vol)
}

/// Scan directions `r` such that each path step goes from `p - r` to `p`.
pub fn path_directions(num_paths: usize) -> &'static [(isize, isize)] {
    const EIGHT: [(isize, isize); 8] = [
        (1, 0),
        (-1, 0),
        (0, 1),
        (0, -1),
        (1, 1),
        (-1, 1),
        (1, -1),
        (-1, -1),
    ];
    if num_paths == 4 {
        &EIGHT[..4]
    } else {
        &EIGHT[..]
    }
}

/// One step of the path recurrence; returns the minimum of the new costs.
#[inline]
fn recurrence(cost: &[u8], prev: &[u32], prev_min: u32, p1: u32, p2: u32, out: &mut [u32]) -> u32 {
    let n = cost.len();
    let jump = prev_min + p2;
    let mut new_min = u32::MAX;
    for d in 0..n {
        let mut best = prev[d].min(jump);
        if d > 0 {
            best = best.min(prev[d - 1] + p1);
        }
        if d + 1 < n {
            best = best.min(prev[d + 1] + p1);
        }
        let l = cost[d] as u32 + best - prev_min;
        out[d] = l;
        new_min = new_min.min(l);
    }
    new_min
}

#[inline]
fn start(cost: &[u8], out: &mut [u32]) -> u32 {
    let mut m = u32::MAX;
    for (o, &c) in out.iter_mut().zip(cost) {
        *o = c as u32;
        m = m.min(*o);
    }
    m
}

fn aggregate_path_into(
    volume: &Volume<u8>,
    dir: (isize, isize),
    p1: u32,
    p2: u32,
    acc: &mut [u32],
) {
    let (w, h, nd) = (volume.width, volume.height, volume.disparities);
    let (dx, dy) = dir;
    let row_len = w * nd;

    if dy == 0 {
        // Rows are independent chains.
        acc.par_chunks_mut(row_len)
            .enumerate()
            .for_each(|(v, acc_row)| {
                let costs = &volume.data[v * row_len..(v + 1) * row_len];
                let mut prev = vec![0u32; nd];
                let mut cur = vec![0u32; nd];
                let mut prev_min = 0;
                for i in 0..w {
                    let u = if dx > 0 { i } else { w - 1 - i };
                    let c = &costs[u * nd..(u + 1) * nd];
                    prev_min = if i == 0 {
                        start(c, &mut cur)
                    } else {
                        recurrence(c, &prev, prev_min, p1, p2, &mut cur)
                    };
                    for (a, l) in acc_row[u * nd..(u + 1) * nd].iter_mut().zip(&cur) {
                        *a += l;
                    }
                    std::mem::swap(&mut prev, &mut cur);
                }
            });
        return;
    }

    // Each pixel of a row depends only on the previous row along the path.
    let mut prev = vec![0u32; row_len];
    let mut prev_mins = vec![0u32; w];
    let mut cur = vec![0u32; row_len];
    let mut cur_mins = vec![0u32; w];
    for i in 0..h {
        let v = if dy > 0 { i } else { h - 1 - i };
        let costs = &volume.data[v * row_len..(v + 1) * row_len];
        let acc_row = &mut acc[v * row_len..(v + 1) * row_len];
        let (prev_ref, prev_mins_ref) = (&prev, &prev_mins);
        cur.par_chunks_mut(nd)
            .zip(cur_mins.par_iter_mut())
            .zip(acc_row.par_chunks_mut(nd))
            .enumerate()
            .for_each(|(u, ((out, m), a))| {
                let c = &costs[u * nd..(u + 1) * nd];
                let pu = u as isize - dx;
                *m = if i == 0 || pu < 0 || pu >= w as isize {
                    start(c, out)
                } else {
                    let pu = pu as usize;
                    recurrence(
                        c,
                        &prev_ref[pu * nd..(pu + 1) * nd],
                        prev_mins_ref[pu],
                        p1,
                        p2,
                        out,
                    )
                };
                for (x, l) in a.iter_mut().zip(out.iter()) {
                    *x += l;
                }
            });
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut prev_mins, &mut cur_mins);
    }
}

/// Path costs `L_r` along a single direction.
pub fn aggregate_path(volume: &Volume<u8>, dir: (isize, isize), p1: u32, p2: u32) -> Volume<u32> {
    let mut out = Volume::<u32>::new(volume.width, volume.height, volume.disparities);
    aggregate_path_into(volume, dir, p1, p2, &mut out.data);
    out
}

/// Sum of the path costs over `params.num_paths` directions.
pub fn aggregate_costs(volume: &Volume<u8>, params: &SgmParams) -> Volume<u32> {
    let mut out = Volume::<u32>::new(volume.width, volume.height, volume.disparities);
    for &dir in path_directions(params.num_paths) {
        aggregate_path_into(volume, dir, params.p1, params.p2, &mut out.data);
    }
    out
}

/// Winner-take-all with a uniqueness test and parabolic sub-pixel refinement.
pub fn select_disparity(aggregated: &Volume<u32>, params: &SgmParams) -> DisparityMap {
    let (w, h) = (aggregated.width, aggregated.height);
    let values = (0..w * h)
        .into_par_iter()
        .map(|i| pick(aggregated.costs(i % w, i / w), params.uniqueness_ratio))
        .collect();
    DisparityMap::new(w, h, values).expect("sized")
}

fn pick(costs: &[u32], uniqueness_ratio: f64) -> f32 {
    let n = costs.len();
    let mut best_d = 0;
    for d in 1..n {
        if costs[d] < costs[best_d] {
            best_d = d;
        }
    }
    let best = costs[best_d];
    let second = costs
        .iter()
        .enumerate()
        .filter(|(d, _)| d.abs_diff(best_d) > 1)
        .map(|(_, &c)| c)
        .min();
    if let Some(second) = second {
        if best as f64 >= second as f64 * uniqueness_ratio {
            return f32::NAN;
        }
    }
    let mut d = best_d as f64;
    if best_d > 0 && best_d + 1 < n {
        let (cm, c0, cp) = (
            costs[best_d - 1] as f64,
            best as f64,
            costs[best_d + 1] as f64,
        );
        let denom = cm - 2.0 * c0 + cp;
        if denom > 0.0 {
            d += (cm - cp) / (2.0 * denom);
        }
    }
    d as f32
}

/// Keeps a left disparity only when the right-view disparity at the matched
/// column agrees within `threshold` pixels.
pub fn lr_consistency_check(
    left: &DisparityMap,
    right: &DisparityMap,
    threshold: f64,
) -> Result<DisparityMap> {
    if left.dims() != right.dims() {
        return Err(Error::DimensionMismatch {
            expected: left.dims(),
            found: right.dims(),
        });
    }
    let mut out = left.clone();
    for v in 0..left.height() {
        for u in 0..left.width() {
            let Some(dl) = left.get(u, v) else { continue };
            let ur = u as i64 - (dl as f64).round() as i64;
            let keep = ur >= 0
                && right
                    .get(ur as usize, v)
                    .is_some_and(|dr| ((dl - dr) as f64).abs() <= threshold);
            if !keep {
                out.set(u, v, f32::NAN);
            }
        }
    }
    Ok(out)
}

fn one_way(left: &GrayImage, right: &GrayImage, params: &SgmParams) -> Result<DisparityMap> {
    let volume = matching_cost_volume(left, right, params)?;
    let aggregated = aggregate_costs(&volume, params);
    Ok(select_disparity(&aggregated, params))
}

/// Full matcher: both matching directions followed by the left-right check.
/// The right-view map comes from a second pass over the swapped, mirrored
/// pair.
pub fn estimate_disparity(
    left: &GrayImage,
    right: &GrayImage,
    params: &SgmParams,
) -> Result<DisparityMap> {
    if left.dims() != right.dims() {
        return Err(Error::DimensionMismatch {
            expected: left.dims(),
            found: right.dims(),
        });
    }
    params.validate()?;
    let (left_map, right_map) = rayon::join(
        || one_way(left, right, params),
        || one_way(&right.mirrored(), &left.mirrored(), params).map(|m| m.mirrored()),
    );
    lr_consistency_check(&left_map?, &right_map?, params.lr_threshold)
}
