//! Metric measurement on rectified stereo laparoscopic images.
//!
//! The pipeline runs from calibration and a rectified image pair to a dense
//! disparity map, a triangulated tissue surface, and distances between two
//! selected image points, either straight through space or along the surface.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calib;
pub mod disparity;
pub mod error;
pub mod image;
pub mod measure;
mod numeric;
pub mod request;
pub mod select;
pub mod surface;
pub mod synth;

pub use calib::{
    build_q, load_calibration, parse_calibration, project_point, reproject_pixel, PixelPoint,
    ReprojectionMatrix, StereoRig, WorldPoint,
};
pub use disparity::{estimate_disparity, DisparityMap, SgmParams, INVALID_DISPARITY};
pub use error::{Error, Result};
pub use image::GrayImage;
pub use measure::{
    direct_distance, measure_pair, MeasureContext, MeasureMode, MeasureParams, MeasurementResult,
    Surface, SurfaceParams,
};
pub use request::{run_measurement, MeasureRequest, MeasureResponse, Selection, SelectionRequest};
pub use select::{online_select, tooltip, ToolMask};
pub use synth::{generate_scene, run_eval, EvalConfig, EvalReport, SceneSpec, Shape};
