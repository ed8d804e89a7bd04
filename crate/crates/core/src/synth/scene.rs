//! Analytic scene descriptions and their ground-truth lengths.
//!
//! Scene coordinates are millimetres with the origin midway between the two
//! camera centres, so a feature at `x = 0` is seen symmetrically by both
//! views. Every shape is a ridge profile extruded along `y`: the surface is
//! `z = depth - h(x)` with `h > 0` pointing toward the cameras. Such a
//! surface is developable, which gives exact geodesics by unrolling.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calib::{StereoRig, WorldPoint};
use crate::error::{Error, Result};
use crate::numeric::adaptive_simpson;

const ORACLE_REL_TOL: f64 = 1e-12;
const SHAPE_KINDS: [&str; 4] = ["plane", "wave", "curve", "triangle"];

/// Surface profile across `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    /// A plane through `(0, 0, depth)` rotated about the `y` axis; positive
    /// tilt recedes to the right.
    Plane {
        #[serde(default)]
        tilt_rad: f64,
    },
    /// `h = A sin(2 pi (x - x0) / lambda)` over `periods` wavelengths
    /// centred on `x = 0`, flat elsewhere.
    Wave {
        amplitude_mm: f64,
        wavelength_mm: f64,
        #[serde(default = "one")]
        periods: f64,
    },
    /// A cylindrical cap of the given radius spanning `arc_span_rad`,
    /// bulging toward the cameras unless `concave`.
    Curve {
        radius_mm: f64,
        arc_span_rad: f64,
        #[serde(default)]
        concave: bool,
    },
    /// A symmetric ridge; negative height gives a valley.
    Triangle { height_mm: f64, base_mm: f64 },
}

fn one() -> f64 {
    1.0
}

impl Shape {
    pub fn kind(&self) -> &'static str {
        match self {
            Shape::Plane { .. } => "plane",
            Shape::Wave { .. } => "wave",
            Shape::Curve { .. } => "curve",
            Shape::Triangle { .. } => "triangle",
        }
    }

    fn validate(&self, depth: f64) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParams(format!("{}: {what}", self.kind())));
        match *self {
            Shape::Plane { tilt_rad } => {
                if !(tilt_rad.abs() < 1.4) {
                    return bad("|tilt_rad| must be below 1.4");
                }
            }
            Shape::Wave {
                amplitude_mm,
                wavelength_mm,
                periods,
            } => {
                if !(amplitude_mm.is_finite() && wavelength_mm > 0.0 && wavelength_mm.is_finite()) {
                    return bad("amplitude must be finite and wavelength positive");
                }
                if !(periods > 0.0 && (2.0 * periods).fract() == 0.0) {
                    return bad("periods must be a positive multiple of 0.5");
                }
            }
            Shape::Curve {
                radius_mm,
                arc_span_rad,
                ..
            } => {
                if !(radius_mm > 0.0 && radius_mm.is_finite()) {
                    return bad("radius must be positive");
                }
                if !(arc_span_rad > 0.0 && arc_span_rad < std::f64::consts::PI) {
                    return bad("arc span must lie in (0, pi)");
                }
            }
            Shape::Triangle { height_mm, base_mm } => {
                if !(height_mm.is_finite() && base_mm > 0.0 && base_mm.is_finite()) {
                    return bad("height must be finite and base positive");
                }
            }
        }
        let (lo, hi) = self.height_bounds().unwrap_or((0.0, 0.0));
        if hi >= depth || lo <= -1e6 {
            return bad("the surface must stay in front of the cameras");
        }
        Ok(())
    }

    /// Extent of the non-flat part; `None` for the plane, which has none.
    pub fn feature_range(&self) -> Option<(f64, f64)> {
        let half = match *self {
            Shape::Plane { .. } => return None,
            Shape::Wave {
                wavelength_mm,
                periods,
                ..
            } => 0.5 * wavelength_mm * periods,
            Shape::Curve {
                radius_mm,
                arc_span_rad,
                ..
            } => radius_mm * (0.5 * arc_span_rad).sin(),
            Shape::Triangle { base_mm, .. } => 0.5 * base_mm,
        };
        Some((-half, half))
    }

    /// Height toward the cameras at `x`.
    pub fn height(&self, x: f64) -> f64 {
        if let Shape::Plane { tilt_rad } = *self {
            return -x * tilt_rad.tan();
        }
        let (lo, hi) = self.feature_range().expect("non-plane");
        if x <= lo || x >= hi {
            return 0.0;
        }
        match *self {
            Shape::Wave {
                amplitude_mm,
                wavelength_mm,
                ..
            } => amplitude_mm * (std::f64::consts::TAU * (x - lo) / wavelength_mm).sin(),
            Shape::Curve {
                radius_mm: r,
                arc_span_rad,
                concave,
            } => {
                let h = (r * r - x * x).sqrt() - r * (0.5 * arc_span_rad).cos();
                if concave {
                    -h
                } else {
                    h
                }
            }
            Shape::Triangle { height_mm, base_mm } => height_mm * (1.0 - 2.0 * x.abs() / base_mm),
            Shape::Plane { .. } => unreachable!(),
        }
    }

    /// `dh/dx`, one-sided at kinks.
    pub fn slope(&self, x: f64) -> f64 {
        if let Shape::Plane { tilt_rad } = *self {
            return -tilt_rad.tan();
        }
        let (lo, hi) = self.feature_range().expect("non-plane");
        if x <= lo || x >= hi {
            return 0.0;
        }
        match *self {
            Shape::Wave {
                amplitude_mm,
                wavelength_mm,
                ..
            } => {
                let k = std::f64::consts::TAU / wavelength_mm;
                amplitude_mm * k * (k * (x - lo)).cos()
            }
            Shape::Curve {
                radius_mm: r,
                concave,
                ..
            } => {
                let s = -x / (r * r - x * x).sqrt();
                if concave {
                    -s
                } else {
                    s
                }
            }
            Shape::Triangle { height_mm, base_mm } => -2.0 * height_mm / base_mm * x.signum(),
            Shape::Plane { .. } => unreachable!(),
        }
    }

    /// Range of `h` over all `x`; `None` for the unbounded plane.
    pub fn height_bounds(&self) -> Option<(f64, f64)> {
        let (a, b) = match *self {
            Shape::Plane { .. } => return None,
            Shape::Wave {
                amplitude_mm,
                periods,
                ..
            } => {
                let a = amplitude_mm.abs();
                // Half a period only reaches one side.
                if periods == 0.5 {
                    (0.0f64.min(amplitude_mm), 0.0f64.max(amplitude_mm))
                } else {
                    (-a, a)
                }
            }
            Shape::Curve {
                radius_mm: r,
                arc_span_rad,
                concave,
            } => {
                let h = r * (1.0 - (0.5 * arc_span_rad).cos());
                if concave {
                    (-h, 0.0)
                } else {
                    (0.0, h)
                }
            }
            Shape::Triangle { height_mm, .. } => (height_mm.min(0.0), height_mm.max(0.0)),
        };
        Some((a, b))
    }

    /// Length of the profile curve between `x1` and `x2`, in closed form
    /// except for the wave, which is integrated numerically.
    pub fn profile_arc(&self, x1: f64, x2: f64) -> f64 {
        let (a, b) = if x1 <= x2 { (x1, x2) } else { (x2, x1) };
        if let Shape::Plane { tilt_rad } = *self {
            return (b - a) / tilt_rad.cos();
        }
        let (lo, hi) = self.feature_range().expect("non-plane");
        let (fa, fb) = (a.max(lo), b.min(hi));
        if fa >= fb {
            return b - a;
        }
        let flat = (b - a) - (fb - fa);
        let curved = match *self {
            Shape::Wave { .. } => {
                adaptive_simpson(|x| self.slope(x).hypot(1.0), fa, fb, ORACLE_REL_TOL)
            }
            Shape::Curve { radius_mm: r, .. } => r * ((fb / r).asin() - (fa / r).asin()),
            Shape::Triangle { height_mm, base_mm } => {
                let k = (2.0 * height_mm / base_mm).hypot(1.0);
                let left = (fb.min(0.0) - fa).max(0.0);
                let right = (fb - fa.max(0.0)).max(0.0);
                k * (left + right)
            }
            Shape::Plane { .. } => unreachable!(),
        };
        flat + curved
    }

    /// Numerical profile length, split at every kink. Used to cross-check
    /// the closed forms.
    pub fn profile_arc_numeric(&self, x1: f64, x2: f64, rel_tol: f64) -> f64 {
        let (a, b) = if x1 <= x2 { (x1, x2) } else { (x2, x1) };
        let mut cuts = vec![a];
        if let Some((lo, hi)) = self.feature_range() {
            for k in [lo, 0.0, hi] {
                if k > a && k < b {
                    cuts.push(k);
                }
            }
        }
        cuts.push(b);
        cuts.windows(2)
            .map(|w| adaptive_simpson(|x| self.slope(x).hypot(1.0), w[0], w[1], rel_tol))
            .sum()
    }
}

/// A named pair of marker positions, given as scene `(x, y)` coordinates on
/// the surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkerPairSpec {
    pub label: String,
    pub a: [f64; 2],
    pub b: [f64; 2],
}

/// Everything needed to render a scene and score measurements on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub name: String,
    pub shape: Shape,
    #[serde(default = "default_depth")]
    pub depth_mm: f64,
    #[serde(default)]
    pub marker_pairs: Vec<MarkerPairSpec>,
    #[serde(default)]
    pub texture_seed: u64,
    /// Standard deviation of the texture in grey levels; zero renders a
    /// uniform, textureless surface.
    #[serde(default = "default_texture_amplitude")]
    pub texture_amplitude: f64,
    #[serde(default = "default_rig")]
    pub rig: StereoRig,
}

fn default_depth() -> f64 {
    500.0
}

fn default_texture_amplitude() -> f64 {
    40.0
}

/// 320x240 views, 700 px focal length, 50 mm baseline.
pub fn default_rig() -> StereoRig {
    StereoRig {
        fx: 700.0,
        fy: 700.0,
        cx: 160.0,
        cy: 120.0,
        baseline: 50.0,
        width: 320,
        height: 240,
    }
}

impl SceneSpec {
    pub fn new(name: &str, shape: Shape) -> Self {
        SceneSpec {
            name: name.into(),
            shape,
            depth_mm: default_depth(),
            marker_pairs: Vec::new(),
            texture_seed: 0,
            texture_amplitude: default_texture_amplitude(),
            rig: default_rig(),
        }
    }

    pub fn with_pair(mut self, label: &str, a: [f64; 2], b: [f64; 2]) -> Self {
        self.marker_pairs.push(MarkerPairSpec {
            label: label.into(),
            a,
            b,
        });
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::MalformedFile(format!("scene: {e}")))?;
        if let Some(kind) = value.pointer("/shape/kind").and_then(|k| k.as_str()) {
            if !SHAPE_KINDS.contains(&kind) {
                return Err(Error::UnsupportedShape(kind.into()));
            }
        }
        let spec: SceneSpec = serde_json::from_value(value)
            .map_err(|e| Error::MalformedFile(format!("scene: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.rig.validate()?;
        if !(self.depth_mm > 0.0 && self.depth_mm.is_finite()) {
            return Err(Error::NonPositiveValue("depth_mm".into()));
        }
        if !(self.texture_amplitude >= 0.0 && self.texture_amplitude.is_finite()) {
            return Err(Error::InvalidParams(
                "texture_amplitude must be >= 0".into(),
            ));
        }
        self.shape.validate(self.depth_mm)?;
        for pair in &self.marker_pairs {
            let finite = pair.a.iter().chain(&pair.b).all(|c| c.is_finite());
            if !finite || pair.a == pair.b {
                return Err(Error::InvalidParams(format!(
                    "marker pair `{}` must join two distinct finite points",
                    pair.label
                )));
            }
        }
        Ok(())
    }

    /// Depth of the surface at scene `x`.
    pub fn depth_at(&self, x: f64) -> f64 {
        self.depth_mm - self.shape.height(x)
    }

    /// Surface point above scene `(x, y)` in the left-camera frame.
    pub fn surface_point(&self, x: f64, y: f64) -> WorldPoint {
        WorldPoint::new(x + 0.5 * self.rig.baseline, y, self.depth_at(x))
    }

    /// Straight-line distance between two surface points.
    pub fn direct_length(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        self.surface_point(a[0], a[1])
            .distance(&self.surface_point(b[0], b[1]))
    }

    /// Geodesic distance along the surface: a straight line in the unrolled
    /// `(arc length, y)` plane.
    pub fn surface_length(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        self.shape.profile_arc(a[0], b[0]).hypot(b[1] - a[1])
    }
}

/// Ground-truth on-surface length of one marker pair.
pub fn oracle_surface_length(spec: &SceneSpec, pair: &MarkerPairSpec) -> f64 {
    spec.surface_length(pair.a, pair.b)
}
