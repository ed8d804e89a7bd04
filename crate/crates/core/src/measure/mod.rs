//! Direct and on-surface distances between two selected left-image pixels.

mod geodesic;
mod spline;

use serde::{Deserialize, Serialize};

pub use geodesic::geodesic_path;
pub use spline::{downsample, spline_length, SplineParams};

use crate::calib::{
    build_q, reproject_pixel, PixelPoint, ReprojectionMatrix, StereoRig, WorldPoint,
};
use crate::disparity::DisparityMap;
use crate::error::{Error, Result};
use crate::surface::{
    mesh_to_graph, reproject_map, triangulate_grid, DepthRange, SurfaceGraph, SurfaceMesh,
};

pub fn direct_distance(a: &WorldPoint, b: &WorldPoint) -> f64 {
    a.distance(b)
}

fn nearest_in_radius(
    width: usize,
    height: usize,
    p: PixelPoint,
    radius: f64,
    accept: impl Fn(usize, usize) -> bool,
) -> Option<(usize, usize)> {
    let (ru, rv) = p.rounded();
    if ru >= 0
        && rv >= 0
        && (ru as usize) < width
        && (rv as usize) < height
        && accept(ru as usize, rv as usize)
    {
        return Some((ru as usize, rv as usize));
    }
    let r = radius.floor().max(0.0) as i64;
    let r2 = radius * radius;
    let mut best: Option<(i64, i64, i64)> = None;
    // Row-major scan makes the first minimum the smaller row, then column.
    for v in (rv - r)..=(rv + r) {
        for u in (ru - r)..=(ru + r) {
            if u < 0 || v < 0 || u as usize >= width || v as usize >= height {
                continue;
            }
            let d2 = (u - ru).pow(2) + (v - rv).pow(2);
            if d2 as f64 > r2 || !accept(u as usize, v as usize) {
                continue;
            }
            if best.is_none_or(|(b, _, _)| d2 < b) {
                best = Some((d2, u, v));
            }
        }
    }
    best.map(|(_, u, v)| (u as usize, v as usize))
}

/// Mesh vertex "belonging" to a selected pixel: the vertex at the rounded
/// pixel if there is one, otherwise the nearest vertex within
/// `search_radius` pixels (ties: smaller row, then smaller column).
pub fn nearest_vertex(mesh: &SurfaceMesh, p: PixelPoint, search_radius: f64) -> Result<usize> {
    nearest_in_radius(mesh.width, mesh.height, p, search_radius, |u, v| {
        mesh.vertex_at(u, v).is_some()
    })
    .and_then(|(u, v)| mesh.vertex_at(u, v))
    .ok_or(Error::NoVertexInRadius {
        u: p.u,
        v: p.v,
        radius: search_radius,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurfaceParams {
    pub jump_threshold_px: f64,
    pub depth_range: DepthRange,
}

impl Default for SurfaceParams {
    fn default() -> Self {
        SurfaceParams {
            jump_threshold_px: 1.0,
            depth_range: DepthRange::default(),
        }
    }
}

/// Mesh plus its edge graph, built once per disparity map.
#[derive(Debug, Clone)]
pub struct Surface {
    pub mesh: SurfaceMesh,
    pub graph: SurfaceGraph,
}

impl Surface {
    pub fn build(
        disp: &DisparityMap,
        q: &ReprojectionMatrix,
        params: &SurfaceParams,
    ) -> Result<Self> {
        if !(params.jump_threshold_px >= 0.0) {
            return Err(Error::InvalidParams(
                "jump_threshold_px must be non-negative".into(),
            ));
        }
        // A map with no usable pixel cannot be meshed; report it as such.
        let cloud = reproject_map(disp, q, params.depth_range).map_err(|e| match e {
            Error::EmptyCloud => Error::EmptyMesh,
            e => e,
        })?;
        let mesh = triangulate_grid(&cloud, disp, params.jump_threshold_px)?;
        let graph = mesh_to_graph(&mesh);
        Ok(Surface { mesh, graph })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureMode {
    Direct,
    Surface,
    Both,
}

impl MeasureMode {
    pub fn needs_surface(self) -> bool {
        !matches!(self, MeasureMode::Direct)
    }
}

impl std::str::FromStr for MeasureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(MeasureMode::Direct),
            "surface" => Ok(MeasureMode::Surface),
            "both" => Ok(MeasureMode::Both),
            other => Err(Error::InvalidParams(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasureParams {
    pub search_radius_px: f64,
    pub spline: SplineParams,
}

impl Default for MeasureParams {
    fn default() -> Self {
        MeasureParams {
            search_radius_px: 5.0,
            spline: SplineParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementResult {
    pub direct_mm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface_basic_mm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface_spline_mm: Option<f64>,
    #[serde(skip)]
    pub path: Vec<WorldPoint>,
    #[serde(default, skip_serializing_if = "Vec::is_empty", with = "pixel_pairs")]
    pub path_pixels: Vec<PixelPoint>,
}

mod pixel_pairs {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::calib::PixelPoint;

    pub fn serialize<S: Serializer>(v: &[PixelPoint], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|p| [p.u, p.v])
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<PixelPoint>, D::Error> {
        let raw = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(raw
            .into_iter()
            .map(|[u, v]| PixelPoint::new(u, v))
            .collect())
    }
}

/// Everything a measurement reads: the rig, a disparity map and, for
/// on-surface distances, the surface built from that map.
#[derive(Debug, Clone, Copy)]
pub struct MeasureContext<'a> {
    pub rig: &'a StereoRig,
    pub disparity: &'a DisparityMap,
    pub surface: Option<&'a Surface>,
}

impl MeasureContext<'_> {
    /// World point of a selected pixel: bilinear disparity at the exact
    /// location when its neighbourhood is valid, otherwise the nearest valid
    /// pixel within the search radius.
    pub fn world_point(
        &self,
        p: PixelPoint,
        search_radius: f64,
    ) -> Result<(PixelPoint, WorldPoint)> {
        let q = build_q(self.rig);
        if let Some(d) = self.disparity.sample(p) {
            if let Ok(w) = reproject_pixel(&q, p, d) {
                return Ok((p, w));
            }
        }
        let (w, h) = self.disparity.dims();
        let (u, v) =
            nearest_in_radius(w, h, p, search_radius, |u, v| self.disparity.is_valid(u, v))
                .ok_or(Error::InvalidDisparity { u: p.u, v: p.v })?;
        let snapped = PixelPoint::new(u as f64, v as f64);
        let d = self.disparity.raw(u, v) as f64;
        Ok((snapped, reproject_pixel(&q, snapped, d)?))
    }
}

fn check_bounds(rig: &StereoRig, p: PixelPoint) -> Result<()> {
    if rig.contains(p) {
        Ok(())
    } else {
        Err(Error::OutOfBounds {
            u: p.u,
            v: p.v,
            width: rig.width,
            height: rig.height,
        })
    }
}

/// Measures between two left-image pixels.
///
/// The on-surface path is the Dijkstra path between the vertices belonging
/// to the two pixels, with its end vertices replaced by the selected points
/// themselves so that both distances share the same endpoints.
pub fn measure_pair(
    ctx: &MeasureContext<'_>,
    pa: PixelPoint,
    pb: PixelPoint,
    mode: MeasureMode,
    params: &MeasureParams,
) -> Result<MeasurementResult> {
    check_bounds(ctx.rig, pa)?;
    check_bounds(ctx.rig, pb)?;
    if ctx.disparity.dims() != (ctx.rig.width, ctx.rig.height) {
        return Err(Error::DimensionMismatch {
            expected: (ctx.rig.width, ctx.rig.height),
            found: ctx.disparity.dims(),
        });
    }
    let (pa_px, wa) = ctx.world_point(pa, params.search_radius_px)?;
    let (pb_px, wb) = ctx.world_point(pb, params.search_radius_px)?;
    let direct_mm = direct_distance(&wa, &wb);
    let mut result = MeasurementResult {
        direct_mm,
        surface_basic_mm: None,
        surface_spline_mm: None,
        path: Vec::new(),
        path_pixels: Vec::new(),
    };
    if !mode.needs_surface() {
        return Ok(result);
    }

    let surface = ctx
        .surface
        .ok_or_else(|| Error::InvalidParams("on-surface measurement needs a surface".into()))?;
    let mesh = &surface.mesh;
    let va = nearest_vertex(mesh, pa, params.search_radius_px)?;
    let vb = nearest_vertex(mesh, pb, params.search_radius_px)?;
    let (vertices, _) = geodesic_path(&surface.graph, va, vb)?;

    let interior = if vertices.len() > 2 {
        &vertices[1..vertices.len() - 1]
    } else {
        &[][..]
    };
    let mut path = Vec::with_capacity(interior.len() + 2);
    let mut path_pixels = Vec::with_capacity(interior.len() + 2);
    path.push(wa);
    path_pixels.push(pa_px);
    for &i in interior {
        path.push(mesh.vertices[i]);
        let (u, v) = mesh.vertex_pixel[i];
        path_pixels.push(PixelPoint::new(u as f64, v as f64));
    }
    path.push(wb);
    path_pixels.push(pb_px);

    let basic: f64 = path.windows(2).map(|s| s[0].distance(&s[1])).sum();
    let spline = if path.windows(2).all(|s| s[0] == s[1]) {
        0.0
    } else {
        spline_length(&path, &params.spline)?
    };
    result.surface_basic_mm = Some(basic);
    result.surface_spline_mm = Some(spline);
    result.path = path;
    result.path_pixels = path_pixels;
    Ok(result)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn mesh_from(vertices: Vec<WorldPoint>, faces: Vec<[u32; 3]>) -> SurfaceMesh {
        let n = vertices.len();
        SurfaceMesh::from_parts(
            n,
            1,
            vertices,
            faces,
            (0..n as u32).map(|i| (i, 0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn direct_examples() {
        let o = WorldPoint::new(0.0, 0.0, 0.0);
        assert_eq!(direct_distance(&o, &WorldPoint::new(0.0, 0.0, 40.0)), 40.0);
        assert_eq!(direct_distance(&o, &o), 0.0);
        assert_eq!(direct_distance(&WorldPoint::new(1.0, 2.0, 2.0), &o), 3.0);
    }

    fn grid_mesh(disp: &DisparityMap) -> SurfaceMesh {
        let (w, h) = disp.dims();
        let rig = StereoRig::new(700.0, 700.0, w as f64 / 2.0, h as f64 / 2.0, 50.0, w, h).unwrap();
        Surface::build(disp, &build_q(&rig), &SurfaceParams::default())
            .unwrap()
            .mesh
    }

    #[test]
    fn nearest_vertex_rules() {
        let mut disp = DisparityMap::filled(30, 30, 10.0);
        disp.set(5, 5, f32::NAN);
        let mesh = grid_mesh(&disp);
        let v = nearest_vertex(&mesh, PixelPoint::new(7.2, 3.4), 5.0).unwrap();
        assert_eq!(mesh.vertex_pixel[v], (7, 3));
        // All four 4-neighbours tie; the smaller row wins.
        let v = nearest_vertex(&mesh, PixelPoint::new(5.0, 5.0), 5.0).unwrap();
        assert_eq!(mesh.vertex_pixel[v], (5, 4));

        let hole = DisparityMap::from_fn(40, 40, |u, v| {
            if (10..30).contains(&u) && (10..30).contains(&v) {
                0.0
            } else {
                10.0
            }
        });
        let mesh = grid_mesh(&hole);
        assert!(matches!(
            nearest_vertex(&mesh, PixelPoint::new(20.0, 20.0), 5.0),
            Err(Error::NoVertexInRadius { .. })
        ));
        let v = nearest_vertex(&mesh, PixelPoint::new(11.0, 20.0), 5.0).unwrap();
        assert_eq!(mesh.vertex_pixel[v], (9, 20));
    }

    #[test]
    fn same_pixel_measures_zero() {
        let rig = StereoRig::new(700.0, 700.0, 10.0, 10.0, 50.0, 20, 20).unwrap();
        let disp = DisparityMap::filled(20, 20, 70.0);
        let surface = Surface::build(&disp, &build_q(&rig), &SurfaceParams::default()).unwrap();
        let ctx = MeasureContext {
            rig: &rig,
            disparity: &disp,
            surface: Some(&surface),
        };
        let p = PixelPoint::new(4.0, 7.0);
        let r = measure_pair(&ctx, p, p, MeasureMode::Both, &MeasureParams::default()).unwrap();
        assert_eq!(r.direct_mm, 0.0);
        assert_eq!(r.surface_basic_mm, Some(0.0));
        assert_eq!(r.surface_spline_mm, Some(0.0));
        assert!(matches!(
            measure_pair(
                &ctx,
                p,
                PixelPoint::new(20.0, 3.0),
                MeasureMode::Direct,
                &MeasureParams::default()
            ),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn result_json_omits_absent_fields() {
        let r = MeasurementResult {
            direct_mm: 40.0,
            surface_basic_mm: None,
            surface_spline_mm: None,
            path: vec![],
            path_pixels: vec![],
        };
        assert_eq!(serde_json::to_string(&r).unwrap(), r#"{"direct_mm":40.0}"#);
        let r = MeasurementResult {
            surface_basic_mm: Some(41.0),
            surface_spline_mm: Some(40.5),
            path_pixels: vec![PixelPoint::new(1.0, 2.0), PixelPoint::new(3.5, 2.0)],
            ..r
        };
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(
            json,
            r#"{"direct_mm":40.0,"surface_basic_mm":41.0,"surface_spline_mm":40.5,"path_pixels":[[1.0,2.0],[3.5,2.0]]}"#
        );
        let back: MeasurementResult = serde_json::from_str(&json).unwrap();
        assert_eq!(back.path_pixels, r.path_pixels);
    }
}
