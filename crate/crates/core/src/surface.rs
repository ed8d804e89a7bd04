//! Point cloud, grid triangulation and the edge graph used for on-surface
//! distances.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calib::{reproject_pixel, PixelPoint, ReprojectionMatrix, WorldPoint};
use crate::disparity::DisparityMap;
use crate::error::{Error, Result};

/// Inclusive depth window in millimetres. A missing bound is open.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DepthRange {
    pub min: Option<f64>,
    pub max: Option<f64>,
}

impl DepthRange {
    pub fn contains(&self, z: f64) -> bool {
        self.min.is_none_or(|m| z >= m) && self.max.is_none_or(|m| z <= m)
    }
}

#[derive(Debug, Clone)]
pub struct PointCloud {
    pub width: usize,
    pub height: usize,
    pub points: Vec<WorldPoint>,
    /// Source pixel `(u, v)` of each point.
    pub pixels: Vec<(u32, u32)>,
    pixel_index: Vec<Option<u32>>,
}

impl PointCloud {
    pub fn index_of(&self, u: usize, v: usize) -> Option<usize> {
        self.pixel_index[v * self.width + u].map(|i| i as usize)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// ASCII XYZ, one `x y z` triple (mm) per line.
    pub fn to_xyz(&self) -> String {
        let mut s = String::with_capacity(self.points.len() * 40);
        for p in &self.points {
            let _ = writeln!(s, "{:.6} {:.6} {:.6}", p.x, p.y, p.z);
        }
        s
    }
}

/// Reprojects every valid pixel whose depth lies inside `depth_range`.
pub fn reproject_map(
    disp: &DisparityMap,
    q: &ReprojectionMatrix,
    depth_range: DepthRange,
) -> Result<PointCloud> {
    let (w, h) = disp.dims();
    let mut points = Vec::new();
    let mut pixels = Vec::new();
    let mut pixel_index = vec![None; w * h];
    for v in 0..h {
        for u in 0..w {
            let Some(d) = disp.get(u, v) else { continue };
            let p = reproject_pixel(q, PixelPoint::new(u as f64, v as f64), d as f64)?;
            if !(p.z > 0.0 && depth_range.contains(p.z)) {
                continue;
            }
            pixel_index[v * w + u] = Some(points.len() as u32);
            points.push(p);
            pixels.push((u as u32, v as u32));
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(PointCloud {
        width: w,
        height: h,
        points,
        pixels,
        pixel_index,
    })
}

/// Triangle mesh laid over the pixel grid. Vertex `i` is cloud point `i`.
#[derive(Debug, Clone)]
pub struct SurfaceMesh {
    pub width: usize,
    pub height: usize,
    pub vertices: Vec<WorldPoint>,
    pub faces: Vec<[u32; 3]>,
    pub vertex_pixel: Vec<(u32, u32)>,
    pixel_vertex: Vec<Option<u32>>,
}

impl SurfaceMesh {
    /// Assembles a mesh from explicit parts; `vertex_pixel` must be injective
    /// and inside `width x height`.
    pub fn from_parts(
        width: usize,
        height: usize,
        vertices: Vec<WorldPoint>,
        faces: Vec<[u32; 3]>,
        vertex_pixel: Vec<(u32, u32)>,
    ) -> Result<Self> {
        if vertex_pixel.len() != vertices.len() {
            return Err(Error::InvalidParams(
                "one source pixel per vertex required".into(),
            ));
        }
        if faces
            .iter()
            .flatten()
            .any(|&i| i as usize >= vertices.len())
        {
            return Err(Error::InvalidParams("face index out of range".into()));
        }
        let mut pixel_vertex = vec![None; width * height];
        for (i, &(u, v)) in vertex_pixel.iter().enumerate() {
            let (u, v) = (u as usize, v as usize);
            if u >= width || v >= height {
                return Err(Error::InvalidParams(format!(
                    "vertex pixel ({u}, {v}) out of range"
                )));
            }
            if pixel_vertex[v * width + u].replace(i as u32).is_some() {
                return Err(Error::InvalidParams(format!(
                    "pixel ({u}, {v}) owns two vertices"
                )));
            }
        }
        Ok(SurfaceMesh {
            width,
            height,
            vertices,
            faces,
            vertex_pixel,
            pixel_vertex,
        })
    }

    pub fn vertex_at(&self, u: usize, v: usize) -> Option<usize> {
        if u >= self.width || v >= self.height {
            return None;
        }
        self.pixel_vertex[v * self.width + u].map(|i| i as usize)
    }

    /// Wavefront OBJ: vertices in mm with six decimals, then 1-based faces.
    pub fn to_obj(&self) -> String {
        let mut s = String::with_capacity(self.vertices.len() * 40 + self.faces.len() * 24);
        for p in &self.vertices {
            let _ = writeln!(s, "v {:.6} {:.6} {:.6}", p.x, p.y, p.z);
        }
        for f in &self.faces {
            let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
        }
        s
    }
}

pub fn export_mesh(mesh: &SurfaceMesh, path: impl AsRef<Path>) -> Result<()> {
    if mesh.faces.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(mesh.to_obj().as_bytes())?;
    f.flush()?;
    Ok(())
}

/// Minimal OBJ reader for `v` and triangular `f` records.
pub fn parse_obj(text: &str) -> Result<(Vec<WorldPoint>, Vec<[u32; 3]>)> {
    let bad = |line: &str| Error::MalformedFile(format!("bad OBJ record `{line}`"));
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for line in text.lines() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let c: Vec<f64> = it
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad(line))?;
                if c.len() != 3 {
                    return Err(bad(line));
                }
                vertices.push(WorldPoint::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<u32> = it
                    .map(|t| t.split('/').next().unwrap_or("").parse::<u32>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad(line))?;
                if idx.len() != 3 || idx.iter().any(|&i| i == 0 || i as usize > vertices.len()) {
                    return Err(bad(line));
                }
                faces.push([idx[0] - 1, idx[1] - 1, idx[2] - 1]);
            }
            _ => {}
        }
    }
    Ok((vertices, faces))
}

fn triangle_area2(a: &WorldPoint, b: &WorldPoint, c: &WorldPoint) -> f64 {
    let (ux, uy, uz) = (b.x - a.x, b.y - a.y, b.z - a.z);
    let (vx, vy, vz) = (c.x - a.x, c.y - a.y, c.z - a.z);
    let (cx, cy, cz) = (uy * vz - uz * vy, uz * vx - ux * vz, ux * vy - uy * vx);
    (cx * cx + cy * cy + cz * cz).sqrt()
}

/// Triangulates each 2x2 pixel quad with at least three valid corners.
/// Triangle edges whose disparity gap exceeds `jump_threshold` pixels are
/// treated as depth discontinuities and never spanned.
pub fn triangulate_grid(
    cloud: &PointCloud,
    disp: &DisparityMap,
    jump_threshold: f64,
) -> Result<SurfaceMesh> {
    if disp.dims() != (cloud.width, cloud.height) {
        return Err(Error::DimensionMismatch {
            expected: (cloud.width, cloud.height),
            found: disp.dims(),
        });
    }
    let (w, h) = disp.dims();
    let corner = |u: usize, v: usize| -> Option<(u32, f32)> {
        let i = cloud.index_of(u, v)?;
        Some((i as u32, disp.get(u, v)?))
    };
    let tri_ok = |t: [(u32, f32); 3]| -> bool {
        let jumps_ok = (0..3).all(|k| {
            let (d0, d1) = (t[k].1 as f64, t[(k + 1) % 3].1 as f64);
            (d0 - d1).abs() <= jump_threshold
        });
        jumps_ok
            && triangle_area2(
                &cloud.points[t[0].0 as usize],
                &cloud.points[t[1].0 as usize],
                &cloud.points[t[2].0 as usize],
            ) > 0.0
    };
    let face = |t: [(u32, f32); 3]| [t[0].0, t[1].0, t[2].0];

    let rows: Vec<Vec<[u32; 3]>> = (0..h.saturating_sub(1))
        .into_par_iter()
        .map(|v| {
            let mut out = Vec::new();
            for u in 0..w - 1 {
                let (a, b, c, d) = (
                    corner(u, v),
                    corner(u + 1, v),
                    corner(u, v + 1),
                    corner(u + 1, v + 1),
                );
                match (a, b, c, d) {
                    (Some(a), Some(b), Some(c), Some(d)) => {
                        // Diagonals alternate in a checkerboard so that
                        // neither diagonal direction is missing from the graph.
                        let split_main = [[a, b, d], [a, d, c]];
                        let split_anti = [[a, b, c], [b, d, c]];
                        let (first, second) = if (u + v) % 2 == 0 {
                            (split_main, split_anti)
                        } else {
                            (split_anti, split_main)
                        };
                        if first.iter().all(|&t| tri_ok(t)) {
                            out.extend(first.map(face));
                        } else if second.iter().all(|&t| tri_ok(t)) {
                            out.extend(second.map(face));
                        } else if let Some(&t) = [[a, b, c], [a, b, d], [a, d, c], [b, d, c]]
                            .iter()
                            .find(|&&t| tri_ok(t))
                        {
                            out.push(face(t));
                        }
                    }
                    (Some(a), Some(b), Some(c), None) => push_if(&mut out, [a, b, c], tri_ok, face),
                    (Some(a), Some(b), None, Some(d)) => push_if(&mut out, [a, b, d], tri_ok, face),
                    (Some(a), None, Some(c), Some(d)) => push_if(&mut out, [a, d, c], tri_ok, face),
                    (None, Some(b), Some(c), Some(d)) => push_if(&mut out, [b, d, c], tri_ok, face),
                    _ => {}
                }
            }
            out
        })
        .collect();
    let faces: Vec<[u32; 3]> = rows.into_iter().flatten().collect();
    if faces.is_empty() {
        return Err(Error::EmptyMesh);
    }
    Ok(SurfaceMesh {
        width: w,
        height: h,
        vertices: cloud.points.clone(),
        faces,
        vertex_pixel: cloud.pixels.clone(),
        pixel_vertex: cloud.pixel_index.clone(),
    })
}

fn push_if(
    out: &mut Vec<[u32; 3]>,
    t: [(u32, f32); 3],
    ok: impl Fn([(u32, f32); 3]) -> bool,
    face: impl Fn([(u32, f32); 3]) -> [u32; 3],
) {
    if ok(t) {
        out.push(face(t));
    }
}

/// Undirected graph over mesh vertices; an edge joins two vertices sharing a
/// face and weighs their Euclidean distance in mm.
#[derive(Debug, Clone)]
pub struct SurfaceGraph {
    adjacency: Vec<Vec<(u32, f64)>>,
    edge_count: usize,
}

impl SurfaceGraph {
    pub fn vertex_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn neighbors(&self, v: usize) -> &[(u32, f64)] {
        &self.adjacency[v]
    }

    /// Each undirected edge once, as `(i, j, weight)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(i, adj)| {
            adj.iter()
                .filter(move |(j, _)| (*j as usize) > i)
                .map(move |&(j, w)| (i, j as usize, w))
        })
    }

    /// Connected components counted over vertices that have at least one edge.
    pub fn component_count(&self) -> usize {
        let n = self.adjacency.len();
        let mut seen = vec![false; n];
        let mut count = 0;
        let mut stack = Vec::new();
        for s in 0..n {
            if seen[s] || self.adjacency[s].is_empty() {
                continue;
            }
            count += 1;
            seen[s] = true;
            stack.push(s);
            while let Some(x) = stack.pop() {
                for &(y, _) in &self.adjacency[x] {
                    if !seen[y as usize] {
                        seen[y as usize] = true;
                        stack.push(y as usize);
                    }
                }
            }
        }
        count
    }
}

pub fn mesh_to_graph(mesh: &SurfaceMesh) -> SurfaceGraph {
    let mut edges: Vec<(u32, u32)> = mesh
        .faces
        .iter()
        .flat_map(|f| [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])])
        .map(|(a, b)| (a.min(b), a.max(b)))
        .collect();
    edges.sort_unstable();
    edges.dedup();

    let mut adjacency = vec![Vec::new(); mesh.vertices.len()];
    for &(a, b) in &edges {
        let w = mesh.vertices[a as usize].distance(&mesh.vertices[b as usize]);
        adjacency[a as usize].push((b, w));
        adjacency[b as usize].push((a, w));
    }
    SurfaceGraph {
        adjacency,
        edge_count: edges.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calib::{build_q, StereoRig};

    fn q() -> ReprojectionMatrix {
        build_q(&StereoRig::new(700.0, 700.0, 1.0, 1.0, 50.0, 3, 3).unwrap())
    }

    fn mesh_for(disp: &DisparityMap, jump: f64) -> Result<SurfaceMesh> {
        let cloud = reproject_map(disp, &q(), DepthRange::default())?;
        triangulate_grid(&cloud, disp, jump)
    }

    #[test]
    fn constant_disparity_plane() {
        let disp = DisparityMap::filled(3, 3, 7.0);
        let cloud = reproject_map(&disp, &q(), DepthRange::default()).unwrap();
        assert_eq!(cloud.len(), 9);
        assert!(cloud.points.iter().all(|p| (p.z - 5000.0).abs() < 1e-9));
        assert_eq!(mesh_for(&disp, 1.0).unwrap().faces.len(), 8);
    }

    #[test]
    fn diagonals_alternate() {
        let disp = DisparityMap::filled(3, 3, 7.0);
        let mesh = mesh_for(&disp, 1.0).unwrap();
        let graph = mesh_to_graph(&mesh);
        let id = |u, v| mesh.vertex_at(u, v).unwrap();
        let linked = |a: usize, b: usize| graph.neighbors(a).iter().any(|&(n, _)| n as usize == b);
        // The centre meets all four diagonals; (0,0)-(1,1) and (2,0)-(1,1)
        // come from neighbouring quads.
        for (u, v) in [(0, 0), (2, 0), (0, 2), (2, 2)] {
            assert!(linked(id(1, 1), id(u, v)));
        }
        assert!(!linked(id(1, 0), id(0, 1)) && !linked(id(1, 0), id(2, 1)));
        assert_eq!(graph.edge_count(), 16);
    }

    #[test]
    fn empty_inputs() {
        let disp = DisparityMap::invalid(3, 3);
        assert!(matches!(
            reproject_map(&disp, &q(), DepthRange::default()),
            Err(Error::EmptyCloud)
        ));
        let far = DisparityMap::filled(3, 3, 7.0);
        let window = DepthRange {
            min: Some(100.0),
            max: Some(1000.0),
        };
        assert!(matches!(
            reproject_map(&far, &q(), window),
            Err(Error::EmptyCloud)
        ));
    }

    #[test]
    fn quad_with_one_far_corner() {
        // Wherever the outlier sits, only the triangle of the three equal
        // corners survives.
        for far in 0..4 {
            let disp =
                DisparityMap::from_fn(2, 2, |u, v| if u + 2 * v == far { 30.0 } else { 10.0 });
            let mesh = mesh_for(&disp, 1.0).unwrap();
            assert_eq!(mesh.faces.len(), 1, "outlier at corner {far}");
            let far_vertex = mesh.vertex_at(far % 2, far / 2).unwrap() as u32;
            assert!(!mesh.faces[0].contains(&far_vertex));
        }
    }

    #[test]
    fn isolated_pixel_has_no_face() {
        let disp = DisparityMap::from_fn(3, 3, |u, v| if (u, v) == (1, 1) { 5.0 } else { 0.0 });
        let cloud = reproject_map(&disp, &q(), DepthRange::default()).unwrap();
        assert_eq!(cloud.len(), 1);
        assert!(matches!(
            triangulate_grid(&cloud, &disp, 1.0),
            Err(Error::EmptyMesh)
        ));
    }

    fn mesh_from(vertices: Vec<WorldPoint>, faces: Vec<[u32; 3]>) -> SurfaceMesh {
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
    fn graph_of_345_triangle() {
        let m = mesh_from(
            vec![
                WorldPoint::new(0.0, 0.0, 1.0),
                WorldPoint::new(3.0, 0.0, 1.0),
                WorldPoint::new(0.0, 4.0, 1.0),
            ],
            vec![[0, 1, 2]],
        );
        let g = mesh_to_graph(&m);
        let mut w: Vec<f64> = g.edges().map(|e| e.2).collect();
        w.sort_by(f64::total_cmp);
        assert_eq!(w, vec![3.0, 4.0, 5.0]);
    }

    #[test]
    fn shared_edge_counted_once() {
        let m = mesh_from(
            vec![
                WorldPoint::new(0.0, 0.0, 1.0),
                WorldPoint::new(1.0, 0.0, 1.0),
                WorldPoint::new(0.0, 1.0, 1.0),
                WorldPoint::new(1.0, 1.0, 1.0),
            ],
            vec![[0, 1, 3], [0, 3, 2]],
        );
        let g = mesh_to_graph(&m);
        assert_eq!(g.edge_count(), 5);
        assert_eq!(g.edges().count(), 5);
        assert_eq!(g.component_count(), 1);
    }

    #[test]
    fn obj_output() {
        let m = mesh_from(
            vec![
                WorldPoint::new(0.0, 0.0, 1.0),
                WorldPoint::new(3.0, 0.0, 1.0),
                WorldPoint::new(0.0, 4.0, 1.0),
            ],
            vec![[0, 1, 2]],
        );
        let obj = m.to_obj();
        assert_eq!(obj.lines().filter(|l| l.starts_with("v ")).count(), 3);
        assert_eq!(obj.lines().filter(|l| l.starts_with("f ")).count(), 1);
        assert!(obj.contains("v 3.000000 0.000000 1.000000"));
        assert!(obj.ends_with("f 1 2 3\n"));
        let (v, f) = parse_obj(&obj).unwrap();
        assert_eq!(v, m.vertices);
        assert_eq!(f, m.faces);
        assert!(parse_obj("f 1 2 3").is_err());

        let empty = mesh_from(vec![WorldPoint::new(0.0, 0.0, 1.0)], vec![]);
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            export_mesh(&empty, dir.path().join("m.obj")),
            Err(Error::EmptyMesh)
        ));
    }
}
