//! Python bindings: calibration, images, disparity estimation, surfaces,
//! measurement, tool-tip selection and the synthetic evaluation harness.
//!
//! Every pipeline failure raises `StereoMeasureError(code, message)` where
//! `code` is the same machine-readable name the CLI and the service report.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use stereo_measure as sm;
use stereo_measure::disparity::write_pfm;

create_exception!(stereomeasure, StereoMeasureError, PyException);

fn err(e: sm::Error) -> PyErr {
    StereoMeasureError::new_err((e.code(), e.to_string()))
}

trait OrRaise<T> {
    fn or_raise(self) -> PyResult<T>;
}

impl<T> OrRaise<T> for sm::Result<T> {
    fn or_raise(self) -> PyResult<T> {
        self.map_err(err)
    }
}

/// Pinhole model of a rectified stereo pair; lengths in millimetres.
#[pyclass(
    frozen,
    skip_from_py_object,
    name = "StereoRig",
    module = "stereomeasure"
)]
#[derive(Clone)]
struct PyStereoRig(sm::StereoRig);

#[pymethods]
impl PyStereoRig {
    #[new]
    fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        baseline: f64,
        width: usize,
        height: usize,
    ) -> PyResult<Self> {
        sm::StereoRig::new(fx, fy, cx, cy, baseline, width, height)
            .map(PyStereoRig)
            .or_raise()
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        sm::load_calibration(path).map(PyStereoRig).or_raise()
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        sm::parse_calibration(text).map(PyStereoRig).or_raise()
    }

    #[getter]
    fn fx(&self) -> f64 {
        self.0.fx
    }
    #[getter]
    fn fy(&self) -> f64 {
        self.0.fy
    }
    #[getter]
    fn cx(&self) -> f64 {
        self.0.cx
    }
    #[getter]
    fn cy(&self) -> f64 {
        self.0.cy
    }
    #[getter]
    fn baseline(&self) -> f64 {
        self.0.baseline
    }
    #[getter]
    fn width(&self) -> usize {
        self.0.width
    }
    #[getter]
    fn height(&self) -> usize {
        self.0.height
    }

    /// World point `(x, y, z)` of pixel `(u, v)` at disparity `d`.
    fn reproject(&self, u: f64, v: f64, d: f64) -> PyResult<(f64, f64, f64)> {
        let w =
            sm::reproject_pixel(&sm::build_q(&self.0), sm::PixelPoint::new(u, v), d).or_raise()?;
        Ok((w.x, w.y, w.z))
    }

    /// Inverse of `reproject`: `(u, v, d)` of a world point.
    fn project(&self, x: f64, y: f64, z: f64) -> PyResult<(f64, f64, f64)> {
        let (p, d) = sm::project_point(&self.0, sm::WorldPoint::new(x, y, z)).or_raise()?;
        Ok((p.u, p.v, d))
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }

    fn __repr__(&self) -> String {
        let r = &self.0;
        format!(
            "StereoRig(fx={}, fy={}, cx={}, cy={}, baseline={}, width={}, height={})",
            r.fx, r.fy, r.cx, r.cy, r.baseline, r.width, r.height
        )
    }
}

/// 8-bit grayscale image.
#[pyclass(frozen, name = "GrayImage", module = "stereomeasure")]
struct PyGrayImage(sm::GrayImage);

#[pymethods]
impl PyGrayImage {
    #[new]
    fn new(width: usize, height: usize, pixels: Vec<u8>) -> PyResult<Self> {
        sm::GrayImage::new(width, height, pixels)
            .map(PyGrayImage)
            .or_raise()
    }

    /// Loads a PNG or PNM file; colour images are reduced to luma.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        sm::GrayImage::load(path).map(PyGrayImage).or_raise()
    }

    #[staticmethod]
    fn decode(data: &[u8]) -> PyResult<Self> {
        sm::GrayImage::decode(data).map(PyGrayImage).or_raise()
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }
    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    fn get(&self, u: usize, v: usize) -> PyResult<u8> {
        if u >= self.0.width() || v >= self.0.height() {
            return Err(err(sm::Error::OutOfBounds {
                u: u as f64,
                v: v as f64,
                width: self.0.width(),
                height: self.0.height(),
            }));
        }
        Ok(self.0.get(u, v))
    }

    fn pixels(&self) -> Vec<u8> {
        self.0.pixels().to_vec()
    }

    fn save_png(&self, path: PathBuf) -> PyResult<()> {
        self.0.save_png(path).or_raise()
    }
}

/// Dense left-view disparity; invalid pixels read as `None`.
#[pyclass(frozen, name = "DisparityMap", module = "stereomeasure")]
struct PyDisparityMap(sm::DisparityMap);

#[pymethods]
impl PyDisparityMap {
    /// Non-finite and non-positive values are stored as invalid.
    #[new]
    fn new(width: usize, height: usize, values: Vec<f32>) -> PyResult<Self> {
        sm::DisparityMap::new(width, height, values)
            .map(PyDisparityMap)
            .or_raise()
    }

    /// Reads a PFM file, optionally checking its size against `(width, height)`.
    #[staticmethod]
    #[pyo3(signature = (path, expected=None))]
    fn load(path: PathBuf, expected: Option<(usize, usize)>) -> PyResult<Self> {
        sm::disparity::import_disparity(path, expected)
            .map(PyDisparityMap)
            .or_raise()
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }
    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    fn valid_count(&self) -> usize {
        self.0.valid_count()
    }

    fn get(&self, u: usize, v: usize) -> Option<f32> {
        if u < self.0.width() && v < self.0.height() {
            self.0.get(u, v)
        } else {
            None
        }
    }

    /// Row-major values with invalid pixels as `inf`.
    fn values(&self) -> Vec<f32> {
        self.0.values().to_vec()
    }

    fn save_pfm(&self, path: PathBuf) -> PyResult<()> {
        write_pfm(&self.0, path).or_raise()
    }
}

/// Census + semi-global matching with a left-right check.
#[pyfunction]
#[pyo3(signature = (
    left, right, *, max_disparity=128, census_window=(5, 5), p1=6, p2=96, num_paths=8,
    uniqueness_ratio=0.95, lr_threshold=1.0,
))]
#[allow(clippy::too_many_arguments)]
fn estimate_disparity(
    py: Python<'_>,
    left: &PyGrayImage,
    right: &PyGrayImage,
    max_disparity: usize,
    census_window: (usize, usize),
    p1: u32,
    p2: u32,
    num_paths: usize,
    uniqueness_ratio: f64,
    lr_threshold: f64,
) -> PyResult<PyDisparityMap> {
    let params = sm::SgmParams {
        max_disparity,
        census_window,
        p1,
        p2,
        num_paths,
        uniqueness_ratio,
        lr_threshold,
    };
    let (l, r) = (&left.0, &right.0);
    py.detach(|| sm::estimate_disparity(l, r, &params))
        .map(PyDisparityMap)
        .or_raise()
}

/// Triangulated surface over the valid disparity pixels.
#[pyclass(frozen, name = "Surface", module = "stereomeasure")]
struct PySurface(sm::Surface);

#[pymethods]
impl PySurface {
    #[staticmethod]
    #[pyo3(signature = (disparity, rig, *, jump_threshold_px=1.0, min_depth=None, max_depth=None))]
    fn build(
        py: Python<'_>,
        disparity: &PyDisparityMap,
        rig: &PyStereoRig,
        jump_threshold_px: f64,
        min_depth: Option<f64>,
        max_depth: Option<f64>,
    ) -> PyResult<Self> {
        let params = sm::SurfaceParams {
            jump_threshold_px,
            depth_range: sm::surface::DepthRange {
                min: min_depth,
                max: max_depth,
            },
        };
        let q = sm::build_q(&rig.0);
        let d = &disparity.0;
        py.detach(|| sm::Surface::build(d, &q, &params))
            .map(PySurface)
            .or_raise()
    }

    #[getter]
    fn vertex_count(&self) -> usize {
        self.0.mesh.vertices.len()
    }
    #[getter]
    fn face_count(&self) -> usize {
        self.0.mesh.faces.len()
    }

    fn to_obj(&self) -> String {
        self.0.mesh.to_obj()
    }
}

/// Binary instrument mask aligned with the left image.
#[pyclass(frozen, from_py_object, name = "ToolMask", module = "stereomeasure")]
#[derive(Clone)]
struct PyToolMask(sm::ToolMask);

#[pymethods]
impl PyToolMask {
    #[new]
    fn new(width: usize, height: usize, bits: Vec<bool>) -> PyResult<Self> {
        sm::ToolMask::new(width, height, bits)
            .map(PyToolMask)
            .or_raise()
    }

    /// Loads a mask image; non-zero pixels are set.
    #[staticmethod]
    fn load(path: PathBuf, width: usize, height: usize) -> PyResult<Self> {
        let mut masks = sm::select::import_masks(&[path], (width, height)).or_raise()?;
        Ok(PyToolMask(masks.remove(0)))
    }

    fn count(&self) -> usize {
        self.0.count()
    }

    /// Set pixel farthest from the mask centroid.
    fn tooltip(&self) -> PyResult<(f64, f64)> {
        let p = sm::tooltip(&self.0).or_raise()?;
        Ok((p.u, p.v))
    }
}

/// Distances between two selected pixels, in millimetres.
#[pyclass(frozen, name = "MeasurementResult", module = "stereomeasure")]
struct PyMeasurement(sm::MeasureResponse);

#[pymethods]
impl PyMeasurement {
    #[getter]
    fn direct_mm(&self) -> f64 {
        self.0.result.direct_mm
    }
    #[getter]
    fn surface_basic_mm(&self) -> Option<f64> {
        self.0.result.surface_basic_mm
    }
    #[getter]
    fn surface_spline_mm(&self) -> Option<f64> {
        self.0.result.surface_spline_mm
    }
    /// Pixels of the on-surface path, empty in direct mode.
    #[getter]
    fn path_pixels(&self) -> Vec<(f64, f64)> {
        self.0
            .result
            .path_pixels
            .iter()
            .map(|p| (p.u, p.v))
            .collect()
    }
    /// Tool tips chosen from masks, or `None` for explicit points.
    #[getter]
    fn points(&self) -> Option<((f64, f64), (f64, f64))> {
        self.0
            .selection
            .as_ref()
            .map(|s| ((s.point_a[0], s.point_a[1]), (s.point_b[0], s.point_b[1])))
    }

    /// The same JSON the CLI prints and the service returns.
    fn to_json(&self) -> String {
        self.0.to_json()
    }

    fn __repr__(&self) -> String {
        format!("MeasurementResult({})", self.0.to_json())
    }
}

fn measure_with(
    py: Python<'_>,
    rig: &PyStereoRig,
    disparity: &PyDisparityMap,
    selection: sm::Selection,
    mode: &str,
    surface: Option<&PySurface>,
    search_radius_px: f64,
) -> PyResult<PyMeasurement> {
    let mode: sm::MeasureMode = mode.parse().or_raise()?;
    let params = sm::MeasureParams {
        search_radius_px,
        ..sm::MeasureParams::default()
    };
    let ctx = sm::MeasureContext {
        rig: &rig.0,
        disparity: &disparity.0,
        surface: surface.map(|s| &s.0),
    };
    py.detach(|| sm::run_measurement(&ctx, &selection, mode, &params))
        .map(PyMeasurement)
        .or_raise()
}

/// Measures between two left-image points. `mode` is direct, surface or
/// both; the last two need a surface.
#[pyfunction]
#[pyo3(signature = (rig, disparity, point_a, point_b, *, mode="direct", surface=None, search_radius_px=5.0))]
#[allow(clippy::too_many_arguments)]
fn measure(
    py: Python<'_>,
    rig: &PyStereoRig,
    disparity: &PyDisparityMap,
    point_a: (f64, f64),
    point_b: (f64, f64),
    mode: &str,
    surface: Option<&PySurface>,
    search_radius_px: f64,
) -> PyResult<PyMeasurement> {
    let selection = sm::Selection::Points(
        sm::PixelPoint::new(point_a.0, point_a.1),
        sm::PixelPoint::new(point_b.0, point_b.1),
    );
    measure_with(
        py,
        rig,
        disparity,
        selection,
        mode,
        surface,
        search_radius_px,
    )
}

/// Measures between the tool tips of two instruments: one mask holding both
/// or one mask each.
#[pyfunction]
#[pyo3(signature = (rig, disparity, masks, *, mode="direct", surface=None, search_radius_px=5.0))]
fn measure_masks(
    py: Python<'_>,
    rig: &PyStereoRig,
    disparity: &PyDisparityMap,
    masks: Vec<PyToolMask>,
    mode: &str,
    surface: Option<&PySurface>,
    search_radius_px: f64,
) -> PyResult<PyMeasurement> {
    let selection = sm::Selection::Masks(masks.into_iter().map(|m| m.0).collect());
    measure_with(
        py,
        rig,
        disparity,
        selection,
        mode,
        surface,
        search_radius_px,
    )
}

/// Rendered scene with exact disparity and projected marker pairs.
#[pyclass(frozen, name = "SyntheticScene", module = "stereomeasure")]
struct PyScene(sm::synth::SyntheticScene);

#[pymethods]
impl PyScene {
    /// Renders a scene from its JSON description.
    #[staticmethod]
    fn generate(py: Python<'_>, spec_json: &str) -> PyResult<Self> {
        let spec = sm::SceneSpec::from_json(spec_json).or_raise()?;
        py.detach(|| sm::generate_scene(&spec))
            .map(PyScene)
            .or_raise()
    }

    #[getter]
    fn rig(&self) -> PyStereoRig {
        PyStereoRig(*self.0.rig())
    }
    #[getter]
    fn left(&self) -> PyGrayImage {
        PyGrayImage(self.0.left.clone())
    }
    #[getter]
    fn right(&self) -> PyGrayImage {
        PyGrayImage(self.0.right.clone())
    }
    #[getter]
    fn gt_disparity(&self) -> PyDisparityMap {
        PyDisparityMap(self.0.gt_disparity.clone())
    }

    /// One dict per pair: label, pixel positions `a`/`b` and both ground
    /// truths.
    #[getter]
    fn markers<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.0
            .markers
            .iter()
            .map(|m| {
                let d = PyDict::new(py);
                d.set_item("label", &m.label)?;
                d.set_item("a", (m.a.u, m.a.v))?;
                d.set_item("b", (m.b.u, m.b.v))?;
                d.set_item("gt_direct_mm", m.gt_direct_mm)?;
                d.set_item("gt_surface_mm", m.gt_surface_mm)?;
                Ok(d)
            })
            .collect()
    }

    /// Writes the images, ground truth, markers and calibration to `dir`.
    fn write(&self, dir: PathBuf) -> PyResult<()> {
        self.0.write(dir).or_raise()
    }
}

/// Evaluation report: per-cell error statistics and per-trial records.
#[pyclass(frozen, name = "EvalReport", module = "stereomeasure")]
struct PyEvalReport(sm::EvalReport);

#[pymethods]
impl PyEvalReport {
    /// Runs the evaluation described by a config file.
    #[staticmethod]
    fn run(py: Python<'_>, config_path: PathBuf) -> PyResult<Self> {
        let cfg = sm::EvalConfig::load(config_path).or_raise()?;
        py.detach(|| sm::run_eval(&cfg))
            .map(PyEvalReport)
            .or_raise()
    }

    #[getter]
    fn cells<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.0
            .cells
            .iter()
            .map(|c| {
                let d = PyDict::new(py);
                d.set_item("scene", &c.scene)?;
                d.set_item("pair", &c.pair)?;
                d.set_item("estimator", &c.estimator)?;
                d.set_item("mode", &c.mode)?;
                d.set_item("gt_mm", c.gt_mm)?;
                d.set_item("mae_mm", c.mae_mm)?;
                d.set_item("std_mm", c.std_mm)?;
                d.set_item("max_mm", c.max_mm)?;
                d.set_item("n", c.n)?;
                d.set_item("failed", c.failed)?;
                Ok(d)
            })
            .collect()
    }

    fn to_csv(&self) -> String {
        self.0.to_csv()
    }

    fn to_table(&self) -> String {
        self.0.to_table()
    }
}

#[pymodule]
fn stereomeasure(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add(
        "StereoMeasureError",
        m.py().get_type::<StereoMeasureError>(),
    )?;
    m.add_class::<PyStereoRig>()?;
    m.add_class::<PyGrayImage>()?;
    m.add_class::<PyDisparityMap>()?;
    m.add_class::<PySurface>()?;
    m.add_class::<PyToolMask>()?;
    m.add_class::<PyMeasurement>()?;
    m.add_class::<PyScene>()?;
    m.add_class::<PyEvalReport>()?;
    m.add_function(wrap_pyfunction!(estimate_disparity, m)?)?;
    m.add_function(wrap_pyfunction!(measure, m)?)?;
    m.add_function(wrap_pyfunction!(measure_masks, m)?)?;
    Ok(())
}
