use serde::{Deserialize, Serialize};

use crate::calib::WorldPoint;
use crate::error::{Error, Result};
use crate::numeric::adaptive_simpson;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplineParams {
    /// Keep every k-th path vertex; both endpoints are always kept. Knots
    /// several pixels apart let the spline cut across the grid staircase.
    pub downsample_stride: usize,
    pub arclen_rel_tol: f64,
}

impl Default for SplineParams {
    fn default() -> Self {
        SplineParams {
            downsample_stride: 8,
            arclen_rel_tol: 1e-6,
        }
    }
}

impl SplineParams {
    pub fn validate(&self) -> Result<()> {
        if self.downsample_stride < 1 {
            return Err(Error::InvalidParams(
                "downsample_stride must be at least 1".into(),
            ));
        }
        if !(self.arclen_rel_tol > 0.0) {
            return Err(Error::InvalidParams(
                "arclen_rel_tol must be positive".into(),
            ));
        }
        Ok(())
    }
}

type V3 = [f64; 3];

fn sub(a: V3, b: V3) -> V3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm(a: V3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

fn lin(terms: &[(f64, V3)]) -> V3 {
    let mut out = [0.0; 3];
    for &(c, v) in terms {
        for k in 0..3 {
            out[k] += c * v[k];
        }
    }
    out
}

/// Keeps indices `0, k, 2k, ...` plus the last point, then drops consecutive
/// duplicates.
pub fn downsample(path: &[WorldPoint], stride: usize) -> Vec<WorldPoint> {
    let stride = stride.max(1);
    let mut kept: Vec<WorldPoint> = path.iter().step_by(stride).copied().collect();
    if let Some(last) = path.last() {
        if !(path.len() - 1).is_multiple_of(stride) {
            kept.push(*last);
        }
    }
    kept.dedup();
    kept
}

/// Arc length of a centripetal Catmull-Rom spline through the downsampled
/// path. End tangents come from phantom points reflected through the
/// endpoints.
pub fn spline_length(path: &[WorldPoint], params: &SplineParams) -> Result<f64> {
    params.validate()?;
    let pts: Vec<V3> = downsample(path, params.downsample_stride)
        .iter()
        .map(WorldPoint::as_array)
        .collect();
    match pts.len() {
        0 | 1 => return Err(Error::DegeneratePath),
        2 => return Ok(norm(sub(pts[1], pts[0]))),
        _ => {}
    }
    let n = pts.len();
    let at = |i: isize| -> V3 {
        if i < 0 {
            lin(&[(2.0, pts[0]), (-1.0, pts[1])])
        } else if i as usize >= n {
            lin(&[(2.0, pts[n - 1]), (-1.0, pts[n - 2])])
        } else {
            pts[i as usize]
        }
    };

    let mut total = 0.0;
    for i in 0..n - 1 {
        let i = i as isize;
        let (p0, p1, p2, p3) = (at(i - 1), at(i), at(i + 1), at(i + 2));
        let (m1, m2) = hermite_tangents(p0, p1, p2, p3);
        let speed = |s: f64| {
            let s2 = s * s;
            norm(lin(&[
                (6.0 * s2 - 6.0 * s, p1),
                (3.0 * s2 - 4.0 * s + 1.0, m1),
                (-6.0 * s2 + 6.0 * s, p2),
                (3.0 * s2 - 2.0 * s, m2),
            ]))
        };
        total += adaptive_simpson(speed, 0.0, 1.0, params.arclen_rel_tol);
    }
    Ok(total)
}

/// Tangents at `p1` and `p2` of the centripetal (alpha = 1/2) segment,
/// rescaled to a unit parameter interval.
fn hermite_tangents(p0: V3, p1: V3, p2: V3, p3: V3) -> (V3, V3) {
    let knot = |a: V3, b: V3| norm(sub(b, a)).sqrt();
    let (d01, d12, d23) = (knot(p0, p1), knot(p1, p2), knot(p2, p3));
    let m1 = lin(&[
        (d12 / d01, sub(p1, p0)),
        (-d12 / (d01 + d12), sub(p2, p0)),
        (1.0, sub(p2, p1)),
    ]);
    let m2 = lin(&[
        (1.0, sub(p2, p1)),
        (-d12 / (d12 + d23), sub(p3, p1)),
        (d12 / d23, sub(p3, p2)),
    ]);
    (m1, m2)
}
