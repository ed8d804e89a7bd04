//! Request and response shapes shared by every front end, so that the same
//! inputs produce byte-identical JSON whichever way they arrive.

use serde::{Deserialize, Serialize};

use crate::calib::PixelPoint;
use crate::error::Result;
use crate::measure::{measure_pair, MeasureContext, MeasureMode, MeasureParams, MeasurementResult};
use crate::select::{online_select, SelectionDebug, ToolMask};

/// How the two points are chosen. Online masks are referenced by name; the
/// caller owns the mapping from names to decoded masks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum SelectionRequest {
    Offline {
        point_a: [f64; 2],
        point_b: [f64; 2],
    },
    Online {
        masks: Vec<String>,
    },
}

fn default_mode() -> MeasureMode {
    MeasureMode::Direct
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureRequest {
    pub selection: SelectionRequest,
    #[serde(default = "default_mode")]
    pub mode: MeasureMode,
    #[serde(default)]
    pub params: MeasureParams,
}

/// Points chosen by tool-tip extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionInfo {
    pub point_a: [f64; 2],
    pub point_b: [f64; 2],
    pub instruments: [SelectionDebug; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureResponse {
    #[serde(flatten)]
    pub result: MeasurementResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<SelectionInfo>,
}

impl MeasureResponse {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("response serializes")
    }
}

/// A selection with its masks already decoded.
#[derive(Debug, Clone)]
pub enum Selection {
    Points(PixelPoint, PixelPoint),
    Masks(Vec<ToolMask>),
}

/// Resolves the selection and measures between the chosen points.
pub fn run_measurement(
    ctx: &MeasureContext<'_>,
    selection: &Selection,
    mode: MeasureMode,
    params: &MeasureParams,
) -> Result<MeasureResponse> {
    let (pa, pb, info) = match selection {
        Selection::Points(a, b) => (*a, *b, None),
        Selection::Masks(masks) => {
            let ((a, b), instruments) = online_select(masks)?;
            let info = SelectionInfo {
                point_a: [a.u, a.v],
                point_b: [b.u, b.v],
                instruments,
            };
            (a, b, Some(info))
        }
    };
    Ok(MeasureResponse {
        result: measure_pair(ctx, pa, pb, mode, params)?,
        selection: info,
    })
}
