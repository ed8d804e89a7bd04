use std::sync::Arc;

use axum::body::{to_bytes, Bytes};
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};
use stereo_measure::{
    estimate_disparity, DisparityMap, MeasureMode, MeasureParams, MeasureRequest, MeasureResponse,
    SelectionRequest, SgmParams, SurfaceParams,
};

use crate::error::ApiError;
use crate::store::{SharedSession, Store};

/// Uploads are whole images and disparity maps.
const BODY_LIMIT: usize = 256 * 1024 * 1024;

#[derive(Clone)]
struct AppState {
    store: Arc<Store>,
}

pub fn router(store: Arc<Store>) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/disparity", post(compute_disparity))
        .route("/sessions/{id}/surface", post(build_surface))
        .route(
            "/sessions/{id}/measurements",
            post(measure).get(list_measurements),
        )
        .route("/sessions/{id}/image/{view}", get(get_image))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(AppState { store })
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn is_multipart(headers: &HeaderMap) -> bool {
    headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"))
}

async fn body_bytes(req: Request) -> Result<Bytes, ApiError> {
    to_bytes(req.into_body(), BODY_LIMIT)
        .await
        .map_err(|e| ApiError::bad_request(format!("unreadable body: {e}")))
}

/// Parses a JSON body, treating an empty body as all defaults.
fn json_or_default<T: DeserializeOwned + Default>(bytes: &[u8]) -> Result<T, ApiError> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(bytes).map_err(|e| ApiError::bad_request(format!("invalid JSON: {e}")))
}

async fn multipart_parts(req: Request) -> Result<Vec<(String, Bytes)>, ApiError> {
    let mut mp = Multipart::from_request(req, &())
        .await
        .map_err(|e| ApiError::bad_request(e.body_text()))?;
    let mut parts = Vec::new();
    while let Some(field) = mp
        .next_field()
        .await
        .map_err(|e| ApiError::bad_request(e.body_text()))?
    {
        let name = field.name().unwrap_or_default().to_string();
        let data = field
            .bytes()
            .await
            .map_err(|e| ApiError::bad_request(e.body_text()))?;
        parts.push((name, data));
    }
    Ok(parts)
}

fn take_part(parts: &mut Vec<(String, Bytes)>, name: &str) -> Result<Bytes, ApiError> {
    let i = parts
        .iter()
        .position(|(n, _)| n == name)
        .ok_or_else(|| ApiError::bad_request(format!("missing multipart part `{name}`")))?;
    Ok(parts.remove(i).1)
}

async fn create_session(State(app): State<AppState>, req: Request) -> Result<Response, ApiError> {
    let mut parts = multipart_parts(req).await?;
    let calibration = take_part(&mut parts, "calibration")?;
    let left = take_part(&mut parts, "left")?;
    let right = take_part(&mut parts, "right")?;
    let store = app.store.clone();
    let id = blocking(move || store.create(&calibration, left.to_vec(), right.to_vec())).await?;
    tracing::info!(%id, "session created");
    Ok((
        StatusCode::CREATED,
        Json(json!({ "id": id, "state": "created" })),
    )
        .into_response())
}

async fn summaries(sessions: Vec<SharedSession>) -> Vec<Value> {
    let mut out = Vec::with_capacity(sessions.len());
    for s in sessions {
        out.push(s.read().await.summary());
    }
    out.sort_by(|a, b| {
        (a["created_ms"].as_u64(), a["id"].as_str())
            .cmp(&(b["created_ms"].as_u64(), b["id"].as_str()))
    });
    out
}

async fn list_sessions(State(app): State<AppState>) -> Json<Vec<Value>> {
    Json(summaries(app.store.all()).await)
}

async fn get_session(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<Value>, ApiError> {
    let session = app.store.get(&id)?;
    let guard = session.read().await;
    let mut summary = guard.summary();
    summary["calibration"] = serde_json::to_value(guard.rig).expect("rig serializes");
    Ok(Json(summary))
}

#[derive(Deserialize)]
struct DisparityQuery {
    source: Option<String>,
}

async fn compute_disparity(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Query(query): Query<DisparityQuery>,
    req: Request,
) -> Result<Json<Value>, ApiError> {
    let session = app.store.get(&id)?;
    let multipart = is_multipart(req.headers());
    let source = query
        .source
        .unwrap_or_else(|| if multipart { "import" } else { "sgm" }.to_string());
    match source.as_str() {
        "sgm" => {
            let params: SgmParams = json_or_default(&body_bytes(req).await?)?;
            let mut guard = session.write_owned().await;
            blocking(move || {
                let map = estimate_disparity(&guard.left, &guard.right, &params)?;
                guard.set_disparity(map, "sgm")?;
                Ok(Json(guard.summary()))
            })
            .await
        }
        "import" => {
            if !multipart {
                return Err(ApiError::bad_request(
                    "import expects a multipart PFM upload",
                ));
            }
            let mut parts = multipart_parts(req).await?;
            let pfm = take_part(&mut parts, "disparity")?;
            let mut guard = session.write_owned().await;
            blocking(move || {
                let map = DisparityMap::from_pfm_bytes(&pfm, Some(guard.left.dims()))?;
                guard.set_disparity(map, "import")?;
                Ok(Json(guard.summary()))
            })
            .await
        }
        other => Err(ApiError::bad_request(format!(
            "unknown disparity source `{other}`, expected sgm or import"
        ))),
    }
}

async fn build_surface(
    State(app): State<AppState>,
    Path(id): Path<String>,
    req: Request,
) -> Result<Json<Value>, ApiError> {
    let session = app.store.get(&id)?;
    let params: SurfaceParams = json_or_default(&body_bytes(req).await?)?;
    let mut guard = session.write_owned().await;
    blocking(move || {
        let faces = guard.build_surface(params)?;
        let mut summary = guard.summary();
        summary["faces"] = json!(faces);
        Ok(Json(summary))
    })
    .await
}

/// Reads a multipart measurement: any number of `mask` parts plus optional
/// `mode` and `params` fields.
fn multipart_request(
    parts: Vec<(String, Bytes)>,
) -> Result<(MeasureRequest, Vec<Vec<u8>>), ApiError> {
    let mut mode = MeasureMode::Direct;
    let mut params = MeasureParams::default();
    let mut masks = Vec::new();
    for (name, data) in parts {
        match name.as_str() {
            "mask" => masks.push(data.to_vec()),
            "mode" => {
                let text = std::str::from_utf8(&data)
                    .map_err(|_| ApiError::bad_request("mode is not UTF-8"))?;
                mode = text
                    .trim()
                    .parse()
                    .map_err(|e: stereo_measure::Error| ApiError::bad_request(e.to_string()))?;
            }
            "params" => params = json_or_default(&data)?,
            other => {
                return Err(ApiError::bad_request(format!(
                    "unexpected multipart part `{other}`"
                )))
            }
        }
    }
    if masks.is_empty() {
        return Err(ApiError::bad_request(
            "online measurement needs at least one `mask` part",
        ));
    }
    let req = MeasureRequest {
        selection: SelectionRequest::Online { masks: Vec::new() },
        mode,
        params,
    };
    Ok((req, masks))
}

async fn measure(
    State(app): State<AppState>,
    Path(id): Path<String>,
    req: Request,
) -> Result<Json<MeasureResponse>, ApiError> {
    let session = app.store.get(&id)?;
    let (request, uploads) = if is_multipart(req.headers()) {
        multipart_request(multipart_parts(req).await?)?
    } else {
        let bytes = body_bytes(req).await?;
        let request: MeasureRequest = serde_json::from_slice(&bytes)
            .map_err(|e| ApiError::bad_request(format!("invalid measurement request: {e}")))?;
        (request, Vec::new())
    };
    let mut guard = session.write_owned().await;
    blocking(move || guard.measure(request, uploads).map(Json)).await
}

async fn list_measurements(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<Value>, ApiError> {
    let session = app.store.get(&id)?;
    let guard = session.read().await;
    Ok(Json(
        serde_json::to_value(&guard.history).expect("history serializes"),
    ))
}

fn content_type(bytes: &[u8]) -> &'static str {
    if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
        "image/png"
    } else if bytes.starts_with(b"P5") || bytes.starts_with(b"P2") {
        "image/x-portable-graymap"
    } else {
        "application/octet-stream"
    }
}

async fn get_image(
    State(app): State<AppState>,
    Path((id, view)): Path<(String, String)>,
) -> Result<Response, ApiError> {
    let session = app.store.get(&id)?;
    let guard = session.read_owned().await;
    let bytes = match view.as_str() {
        "left" => blocking(move || Ok(guard.left_bytes()?)).await?,
        "right" => blocking(move || Ok(guard.right_bytes()?)).await?,
        other => {
            return Err(ApiError::new(
                StatusCode::NOT_FOUND,
                "NotFound",
                format!("no image `{other}`"),
                json!({ "view": other }),
            ))
        }
    };
    Ok(([(header::CONTENT_TYPE, content_type(&bytes))], bytes).into_response())
}
