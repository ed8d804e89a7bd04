//! Rectified pinhole stereo rig and the pixel/disparity <-> world mapping.
//!
//! World coordinates are millimetres in the left-camera frame: x right,
//! y down, z along the optical axis.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

const CALIBRATION_KEYS: [&str; 7] = ["fx", "fy", "cx", "cy", "baseline_mm", "width", "height"];

/// Intrinsics shared by both rectified views plus the baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StereoRig {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(rename = "baseline_mm")]
    pub baseline: f64,
    pub width: usize,
    pub height: usize,
}

impl StereoRig {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        baseline: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let rig = StereoRig {
            fx,
            fy,
            cx,
            cy,
            baseline,
            width,
            height,
        };
        rig.validate()?;
        Ok(rig)
    }

    pub fn validate(&self) -> Result<()> {
        for (key, value) in [
            ("fx", self.fx),
            ("fy", self.fy),
            ("baseline_mm", self.baseline),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::NonPositiveValue(key.into()));
            }
        }
        if self.width < 2 {
            return Err(Error::InvalidParams("width must be at least 2".into()));
        }
        if self.height < 2 {
            return Err(Error::InvalidParams("height must be at least 2".into()));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return Err(Error::InvalidParams(format!(
                "cx = {} lies outside [0, {})",
                self.cx, self.width
            )));
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(Error::InvalidParams(format!(
                "cy = {} lies outside [0, {})",
                self.cy, self.height
            )));
        }
        Ok(())
    }

    /// Metric size of one pixel at depth `z`, the quantization floor of any
    /// pixel-level measurement.
    pub fn pixel_footprint(&self, z: f64) -> f64 {
        z / self.fx
    }

    pub fn contains(&self, p: PixelPoint) -> bool {
        p.u >= 0.0 && p.v >= 0.0 && p.u < self.width as f64 && p.v < self.height as f64
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("rig serializes")
    }
}

/// Parses a calibration document. All seven keys are required and unknown
/// keys are rejected.
pub fn parse_calibration(text: &str) -> Result<StereoRig> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| Error::MalformedFile(e.to_string()))?;
    let Value::Object(map) = value else {
        return Err(Error::MalformedFile(
            "calibration must be a JSON object".into(),
        ));
    };
    if let Some(key) = map.keys().find(|k| !CALIBRATION_KEYS.contains(&k.as_str())) {
        return Err(Error::MalformedFile(format!("unknown key `{key}`")));
    }

    let fx = number(&map, "fx")?;
    let fy = number(&map, "fy")?;
    let cx = number(&map, "cx")?;
    let cy = number(&map, "cy")?;
    let baseline = number(&map, "baseline_mm")?;
    let width = number(&map, "width")?;
    let height = number(&map, "height")?;
    for (key, value) in [
        ("fx", fx),
        ("fy", fy),
        ("baseline_mm", baseline),
        ("width", width),
        ("height", height),
    ] {
        if value <= 0.0 {
            return Err(Error::NonPositiveValue(key.into()));
        }
    }
    for (key, value) in [("width", width), ("height", height)] {
        if value.fract() != 0.0 {
            return Err(Error::MalformedFile(format!("`{key}` must be an integer")));
        }
    }
    StereoRig::new(fx, fy, cx, cy, baseline, width as usize, height as usize)
}

fn number(map: &Map<String, Value>, key: &str) -> Result<f64> {
    match map.get(key) {
        None => Err(Error::MissingField(key.into())),
        Some(v) => v
            .as_f64()
            .filter(|x| x.is_finite())
            .ok_or_else(|| Error::MalformedFile(format!("`{key}` must be a number"))),
    }
}

pub fn load_calibration(path: impl AsRef<Path>) -> Result<StereoRig> {
    parse_calibration(&fs::read_to_string(path)?)
}

/// Sub-pixel image location in left-image coordinates (column `u`, row `v`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

impl PixelPoint {
    pub const fn new(u: f64, v: f64) -> Self {
        PixelPoint { u, v }
    }

    pub fn rounded(self) -> (i64, i64) {
        (self.u.round() as i64, self.v.round() as i64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl WorldPoint {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        WorldPoint { x, y, z }
    }

    pub fn distance(&self, other: &WorldPoint) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// 4x4 matrix taking homogeneous `(u, v, d, 1)` to homogeneous world
/// coordinates. Both views share the principal point, so the `(cx - cx')`
/// term vanishes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReprojectionMatrix {
    pub q: [[f64; 4]; 4],
}

pub fn build_q(rig: &StereoRig) -> ReprojectionMatrix {
    let aspect = rig.fx / rig.fy;
    ReprojectionMatrix {
        q: [
            [1.0, 0.0, 0.0, -rig.cx],
            [0.0, aspect, 0.0, -rig.cy * aspect],
            [0.0, 0.0, 0.0, rig.fx],
            [0.0, 0.0, 1.0 / rig.baseline, 0.0],
        ],
    }
}

impl ReprojectionMatrix {
    pub fn apply(&self, h: [f64; 4]) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (row, o) in self.q.iter().zip(out.iter_mut()) {
            *o = row.iter().zip(h.iter()).map(|(a, b)| a * b).sum();
        }
        out
    }
}

pub fn is_valid_disparity(d: f64) -> bool {
    d.is_finite() && d > 0.0
}

pub fn reproject_pixel(q: &ReprojectionMatrix, p: PixelPoint, d: f64) -> Result<WorldPoint> {
    if !is_valid_disparity(d) {
        return Err(Error::InvalidDisparity { u: p.u, v: p.v });
    }
    let [x, y, z, w] = q.apply([p.u, p.v, d, 1.0]);
    Ok(WorldPoint::new(x / w, y / w, z / w))
}

/// Inverse of [`reproject_pixel`]. The result may fall outside the image.
pub fn project_point(rig: &StereoRig, w: WorldPoint) -> Result<(PixelPoint, f64)> {
    if !(w.z > 0.0) {
        return Err(Error::NonPositiveDepth(w.z));
    }
    let u = rig.cx + rig.fx * w.x / w.z;
    let v = rig.cy + rig.fy * w.y / w.z;
    let d = rig.fx * rig.baseline / w.z;
    Ok((PixelPoint::new(u, v), d))
}
