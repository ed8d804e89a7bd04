//! Ray-cast rendering of a scene into a rectified stereo pair with exact
//! disparity and projected markers.

use std::f64::consts::TAU;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scene::{SceneSpec, Shape};
use crate::calib::{PixelPoint, StereoRig, WorldPoint};
use crate::disparity::{write_pfm, DisparityMap};
use crate::error::{Error, Result};
use crate::image::GrayImage;

const TEXTURE_COMPONENTS: usize = 40;
/// Texture periods in pixels at the nominal scene depth.
const TEXTURE_PERIOD_PX: (f64, f64) = (10.0, 40.0);
const MARCH_STEPS: usize = 4096;

/// Which camera a ray starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum View {
    Left,
    Right,
}

/// Band-limited solid noise: a seeded sum of plane waves in 3D, so both
/// views see the same pattern painted on the surface.
#[derive(Debug, Clone)]
pub struct Texture {
    waves: Vec<([f64; 3], f64)>,
    gain: f64,
}

impl Texture {
    pub fn new(seed: u64, amplitude: f64, mm_per_px: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let waves = (0..TEXTURE_COMPONENTS)
            .map(|_| {
                let period = rng.random_range(TEXTURE_PERIOD_PX.0..TEXTURE_PERIOD_PX.1) * mm_per_px;
                // Uniform direction on the sphere.
                let z: f64 = rng.random_range(-1.0..1.0);
                let phi = rng.random_range(0.0..TAU);
                let r = (1.0 - z * z).sqrt();
                let k = TAU / period;
                let dir = [k * r * phi.cos(), k * r * phi.sin(), k * z];
                (dir, rng.random_range(0.0..TAU))
            })
            .collect();
        Texture {
            waves,
            gain: amplitude / (TEXTURE_COMPONENTS as f64 / 2.0).sqrt(),
        }
    }

    pub fn intensity(&self, p: [f64; 3]) -> u8 {
        if self.gain == 0.0 {
            return 128;
        }
        let s: f64 = self
            .waves
            .iter()
            .map(|(k, phase)| (k[0] * p[0] + k[1] * p[1] + k[2] * p[2] + phase).sin())
            .sum();
        (128.0 + self.gain * s).round().clamp(0.0, 255.0) as u8
    }
}

/// Intersects the ray through column `u` of a view with the surface and
/// returns scene `(x, z)` of the first hit. The hit does not depend on the
/// row because every shape is extruded along `y`.
pub fn cast_column(spec: &SceneSpec, view: View, u: f64) -> Result<(f64, f64)> {
    let rig = &spec.rig;
    let t = (u - rig.cx) / rig.fx;
    let cam = match view {
        View::Left => -0.5 * rig.baseline,
        View::Right => 0.5 * rig.baseline,
    };
    let depth = spec.depth_mm;
    let z = match (spec.shape, spec.shape.height_bounds()) {
        (Shape::Plane { tilt_rad }, _) => {
            let k = tilt_rad.tan();
            let z = (depth + cam * k) / (1.0 - t * k);
            if !(z > 0.0 && z.is_finite()) {
                return Err(Error::InvalidParams(format!(
                    "column {u} of the {view:?} view misses the plane"
                )));
            }
            z
        }
        (_, Some((lo, hi))) if lo == hi => depth - lo,
        (shape, Some((lo, hi))) => {
            // f(z) = z - depth + h(x(z)) is <= 0 at the near bound and >= 0
            // at the far bound; march to the first crossing, then bisect.
            let f = |z: f64| z - depth + shape.height(cam + t * z);
            let (near, far) = (depth - hi, depth - lo);
            let step = (far - near) / MARCH_STEPS as f64;
            let mut a = near;
            let mut b = far;
            for i in 1..=MARCH_STEPS {
                let z = if i == MARCH_STEPS {
                    far
                } else {
                    near + i as f64 * step
                };
                if f(z) >= 0.0 {
                    b = z;
                    break;
                }
                a = z;
            }
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if m <= a || m >= b {
                    break;
                }
                if f(m) >= 0.0 {
                    b = m;
                } else {
                    a = m;
                }
            }
            b
        }
        (_, None) => unreachable!("only the plane is unbounded"),
    };
    Ok((cam + t * z, z))
}

/// One marker pair with its projections and ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerPair {
    pub label: String,
    /// Subpixel positions in the left image.
    pub a: PixelPoint,
    pub b: PixelPoint,
    /// Left-camera-frame positions.
    pub a_world: WorldPoint,
    pub b_world: WorldPoint,
    pub gt_direct_mm: f64,
    pub gt_surface_mm: f64,
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub spec: SceneSpec,
    pub left: GrayImage,
    pub right: GrayImage,
    pub gt_disparity: DisparityMap,
    pub markers: Vec<MarkerPair>,
}

impl SyntheticScene {
    pub fn rig(&self) -> &StereoRig {
        &self.spec.rig
    }

    /// Writes left.png, right.png, gt_disp.pfm, markers.json and
    /// calibration.json into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        self.left.save_png(dir.join("left.png"))?;
        self.right.save_png(dir.join("right.png"))?;
        write_pfm(&self.gt_disparity, dir.join("gt_disp.pfm"))?;
        let markers = serde_json::to_string_pretty(&self.markers).expect("markers serialize");
        std::fs::write(dir.join("markers.json"), markers + "\n")?;
        std::fs::write(dir.join("calibration.json"), self.spec.rig.to_json() + "\n")?;
        Ok(())
    }
}

fn project_marker(
    spec: &SceneSpec,
    label: &str,
    end: &str,
    xy: [f64; 2],
) -> Result<(PixelPoint, WorldPoint)> {
    let rig = &spec.rig;
    let w = spec.surface_point(xy[0], xy[1]);
    let u = rig.cx + rig.fx * w.x / w.z;
    let v = rig.cy + rig.fy * w.y / w.z;
    let ur = u - rig.fx * rig.baseline / w.z;
    let (maxu, maxv) = ((rig.width - 1) as f64, (rig.height - 1) as f64);
    let inside = |u: f64| (0.0..=maxu).contains(&u);
    if !(inside(u) && inside(ur) && (0.0..=maxv).contains(&v)) {
        return Err(Error::MarkerOutOfView(format!(
            "marker {end} of pair `{label}` projects to ({u:.2}, {v:.2}) left, {ur:.2} right"
        )));
    }
    Ok((PixelPoint::new(u, v), w))
}

/// Projects every marker pair of the scene and attaches its ground truth.
pub fn project_markers(spec: &SceneSpec) -> Result<Vec<MarkerPair>> {
    spec.marker_pairs
        .iter()
        .map(|pair| {
            let (a, a_world) = project_marker(spec, &pair.label, "a", pair.a)?;
            let (b, b_world) = project_marker(spec, &pair.label, "b", pair.b)?;
            Ok(MarkerPair {
                label: pair.label.clone(),
                a,
                b,
                a_world,
                b_world,
                gt_direct_mm: a_world.distance(&b_world),
                gt_surface_mm: spec.surface_length(pair.a, pair.b),
            })
        })
        .collect()
}

/// Exact left-view disparity of the scene.
pub fn ground_truth_disparity(spec: &SceneSpec) -> Result<DisparityMap> {
    let rig = &spec.rig;
    let depths = (0..rig.width)
        .map(|u| cast_column(spec, View::Left, u as f64).map(|(_, z)| z))
        .collect::<Result<Vec<_>>>()?;
    Ok(DisparityMap::from_fn(rig.width, rig.height, |u, _| {
        (rig.fx * rig.baseline / depths[u]) as f32
    }))
}

/// Renders both views, the exact left disparity and the marker projections.
pub fn generate_scene(spec: &SceneSpec) -> Result<SyntheticScene> {
    spec.validate()?;
    let rig = spec.rig;
    let markers = project_markers(spec)?;

    let texture = Texture::new(
        spec.texture_seed,
        spec.texture_amplitude,
        spec.depth_mm / rig.fx,
    );
    let (w, h) = (rig.width, rig.height);
    let columns = |view| -> Result<Vec<(f64, f64)>> {
        (0..w)
            .into_par_iter()
            .map(|u| cast_column(spec, view, u as f64))
            .collect()
    };
    let (left_hits, right_hits) = (columns(View::Left)?, columns(View::Right)?);
    let render = |hits: &[(f64, f64)]| {
        let mut pixels = vec![0u8; w * h];
        pixels.par_chunks_mut(w).enumerate().for_each(|(v, row)| {
            let ty = (v as f64 - rig.cy) / rig.fy;
            for (px, &(x, z)) in row.iter_mut().zip(hits) {
                *px = texture.intensity([x, ty * z, z]);
            }
        });
        GrayImage::new(w, h, pixels).expect("rig dims are valid")
    };
    let left = render(&left_hits);
    let right = render(&right_hits);
    let gt_disparity = ground_truth_disparity(spec)?;
    Ok(SyntheticScene {
        spec: spec.clone(),
        left,
        right,
        gt_disparity,
        markers,
    })
}
