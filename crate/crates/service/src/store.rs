//! On-disk session store.
//!
//! Layout under the data directory:
//!
//! ```text
//! sessions/<id>/session.json      metadata and state
//! sessions/<id>/calibration.json  upload, verbatim
//! sessions/<id>/left.png          upload, verbatim
//! sessions/<id>/right.png         upload, verbatim
//! sessions/<id>/disparity.pfm
//! sessions/<id>/mesh.obj
//! sessions/<id>/history.jsonl     one measurement per line
//! sessions/<id>/masks/            masks uploaded with online requests
//! ```
//!
//! A session directory is assembled under `staging/` and renamed into place,
//! so a half-created session is never visible. Single files are replaced by
//! write-to-temp, fsync, rename.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock as StdRwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::json;
use stereo_measure::disparity::encode_pfm;
use stereo_measure::select::decode_mask;
use stereo_measure::{
    parse_calibration, run_measurement, DisparityMap, Error, GrayImage, MeasureContext,
    MeasureRequest, MeasureResponse, PixelPoint, Selection, SelectionRequest, StereoRig, Surface,
    SurfaceParams,
};
use tokio::sync::RwLock;

use crate::error::ApiError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Created,
    HasDisparity,
    HasMesh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub id: String,
    pub state: SessionState,
    pub created_ms: u64,
    #[serde(default)]
    pub disparity_source: Option<String>,
    #[serde(default)]
    pub surface_params: Option<SurfaceParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub timestamp_ms: u64,
    pub request: MeasureRequest,
    pub result: MeasureResponse,
}

pub struct Session {
    pub meta: SessionMeta,
    pub rig: StereoRig,
    pub left: Arc<GrayImage>,
    pub right: Arc<GrayImage>,
    pub disparity: Option<Arc<DisparityMap>>,
    pub surface: Option<Arc<Surface>>,
    pub history: Vec<HistoryEntry>,
    dir: PathBuf,
}

pub type SharedSession = Arc<RwLock<Session>>;

pub struct Store {
    root: PathBuf,
    sessions: StdRwLock<HashMap<String, SharedSession>>,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn sync_dir(dir: &Path) {
    // Not every filesystem supports directory fsync; the rename is what
    // makes the update atomic, this only hastens durability.
    let _ = File::open(dir).and_then(|f| f.sync_all());
}

/// Replaces `path` with `bytes` so that readers see either the old or the
/// new content, never a mix.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("file");
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    sync_dir(dir);
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let text = serde_json::to_string_pretty(value).expect("metadata serializes");
    write_atomic(path, text.as_bytes())
}

fn corrupt(path: &Path, what: impl std::fmt::Display) -> io::Error {
    io::Error::new(
        io::ErrorKind::InvalidData,
        format!("{}: {what}", path.display()),
    )
}

fn invalid_state(message: impl Into<String>, state: SessionState) -> ApiError {
    ApiError::new(
        axum::http::StatusCode::CONFLICT,
        "InvalidState",
        message,
        json!({ "state": state }),
    )
}

/// Parses history lines. A torn final line (crash mid-append) is dropped;
/// damage anywhere else is an error.
fn parse_history(path: &Path, text: &str) -> io::Result<Vec<HistoryEntry>> {
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        match serde_json::from_str(line) {
            Ok(entry) => out.push(entry),
            Err(_) if i + 1 == lines.len() && !text.ends_with('\n') => {
                tracing::warn!("dropping torn history line in {}", path.display());
            }
            Err(e) => return Err(corrupt(path, format!("line {}: {e}", i + 1))),
        }
    }
    Ok(out)
}

impl Session {
    pub fn id(&self) -> &str {
        &self.meta.id
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn left_bytes(&self) -> io::Result<Vec<u8>> {
        fs::read(self.dir.join("left.png"))
    }

    pub fn right_bytes(&self) -> io::Result<Vec<u8>> {
        fs::read(self.dir.join("right.png"))
    }

    fn load(dir: PathBuf) -> io::Result<Session> {
        let meta_path = dir.join("session.json");
        let mut meta: SessionMeta =
            serde_json::from_slice(&fs::read(&meta_path)?).map_err(|e| corrupt(&meta_path, e))?;
        let calib_path = dir.join("calibration.json");
        let rig = parse_calibration(&fs::read_to_string(&calib_path)?)
            .map_err(|e| corrupt(&calib_path, e))?;
        let image = |name: &str| -> io::Result<Arc<GrayImage>> {
            let path = dir.join(name);
            GrayImage::decode(&fs::read(&path)?)
                .map(Arc::new)
                .map_err(|e| corrupt(&path, e))
        };
        let (left, right) = (image("left.png")?, image("right.png")?);

        let pfm_path = dir.join("disparity.pfm");
        let disparity = if meta.state >= SessionState::HasDisparity {
            let map = DisparityMap::from_pfm_bytes(&fs::read(&pfm_path)?, Some(left.dims()))
                .map_err(|e| corrupt(&pfm_path, e))?;
            Some(Arc::new(map))
        } else {
            None
        };
        let surface = match (&disparity, meta.state, meta.surface_params) {
            (Some(disp), SessionState::HasMesh, Some(params)) => {
                let q = stereo_measure::build_q(&rig);
                let s = Surface::build(disp, &q, &params).map_err(|e| corrupt(&pfm_path, e))?;
                Some(Arc::new(s))
            }
            _ => {
                if meta.state == SessionState::HasMesh {
                    meta.state = SessionState::HasDisparity;
                }
                None
            }
        };

        let hist_path = dir.join("history.jsonl");
        let history = match fs::read_to_string(&hist_path) {
            Ok(text) => parse_history(&hist_path, &text)?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e),
        };
        Ok(Session {
            meta,
            rig,
            left,
            right,
            disparity,
            surface,
            history,
            dir,
        })
    }

    /// Stores a new disparity map. Any mesh built from the previous map is
    /// dropped.
    pub fn set_disparity(&mut self, map: DisparityMap, source: &str) -> Result<(), ApiError> {
        if map.dims() != self.left.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.left.dims(),
                found: map.dims(),
            }
            .into());
        }
        // Downgrade first so that a crash part-way never pairs the new map
        // with a stale mesh.
        if self.meta.state == SessionState::HasMesh {
            let mut meta = self.meta.clone();
            meta.state = SessionState::HasDisparity;
            meta.surface_params = None;
            write_json(&self.dir.join("session.json"), &meta)?;
        }
        write_atomic(&self.dir.join("disparity.pfm"), &encode_pfm(&map))?;
        let mut meta = self.meta.clone();
        meta.state = SessionState::HasDisparity;
        meta.surface_params = None;
        meta.disparity_source = Some(source.to_string());
        write_json(&self.dir.join("session.json"), &meta)?;
        match fs::remove_file(self.dir.join("mesh.obj")) {
            Err(e) if e.kind() != io::ErrorKind::NotFound => return Err(e.into()),
            _ => {}
        }
        self.meta = meta;
        self.disparity = Some(Arc::new(map));
        self.surface = None;
        Ok(())
    }

    /// Builds and caches the surface from the stored disparity.
    pub fn build_surface(&mut self, params: SurfaceParams) -> Result<usize, ApiError> {
        let disp = self
            .disparity
            .clone()
            .ok_or_else(|| invalid_state("surface needs a disparity map", self.meta.state))?;
        let surface = Surface::build(&disp, &stereo_measure::build_q(&self.rig), &params)?;
        write_atomic(&self.dir.join("mesh.obj"), surface.mesh.to_obj().as_bytes())?;
        let mut meta = self.meta.clone();
        meta.state = SessionState::HasMesh;
        meta.surface_params = Some(params);
        write_json(&self.dir.join("session.json"), &meta)?;
        self.meta = meta;
        let faces = surface.mesh.faces.len();
        self.surface = Some(Arc::new(surface));
        Ok(faces)
    }

    fn check_state(&self, req: &MeasureRequest) -> Result<(), ApiError> {
        let needed = if req.mode.needs_surface() {
            SessionState::HasMesh
        } else {
            SessionState::HasDisparity
        };
        if self.meta.state < needed {
            let what = if needed == SessionState::HasMesh {
                "a surface"
            } else {
                "a disparity map"
            };
            return Err(invalid_state(
                format!("measurement needs {what}"),
                self.meta.state,
            ));
        }
        Ok(())
    }

    fn stored_mask(&self, name: &str) -> Result<Vec<u8>, ApiError> {
        let valid = !name.is_empty()
            && name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
            && !name.starts_with('.');
        if !valid {
            return Err(ApiError::bad_request(format!("invalid mask name `{name}`")));
        }
        fs::read(self.dir.join("masks").join(name)).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => ApiError::bad_request(format!("no stored mask `{name}`")),
            _ => e.into(),
        })
    }

    /// Measures and appends the result to the history.
    ///
    /// `uploads` are masks sent with this request. They are stored under
    /// `masks/` and the recorded request names the stored files, so online
    /// requests stay replayable. With no uploads an online request names
    /// masks stored earlier.
    pub fn measure(
        &mut self,
        mut req: MeasureRequest,
        uploads: Vec<Vec<u8>>,
    ) -> Result<MeasureResponse, ApiError> {
        self.check_state(&req)?;
        let dims = self.left.dims();
        let selection = match &req.selection {
            SelectionRequest::Offline { point_a, point_b } => {
                if !uploads.is_empty() {
                    return Err(ApiError::bad_request("offline selection takes no masks"));
                }
                Selection::Points(
                    PixelPoint::new(point_a[0], point_a[1]),
                    PixelPoint::new(point_b[0], point_b[1]),
                )
            }
            SelectionRequest::Online { masks } => {
                let bytes: Vec<Vec<u8>> = if uploads.is_empty() {
                    masks
                        .iter()
                        .map(|m| self.stored_mask(m))
                        .collect::<Result<_, _>>()?
                } else {
                    uploads.clone()
                };
                let decoded = bytes
                    .iter()
                    .map(|b| decode_mask(b, dims))
                    .collect::<Result<Vec<_>, _>>()?;
                Selection::Masks(decoded)
            }
        };
        let ctx = MeasureContext {
            rig: &self.rig,
            disparity: self.disparity.as_deref().expect("state checked"),
            surface: self.surface.as_deref(),
        };
        let result = run_measurement(&ctx, &selection, req.mode, &req.params)?;

        if !uploads.is_empty() {
            let dir = self.dir.join("masks");
            fs::create_dir_all(&dir)?;
            let n = self.history.len();
            let mut names = Vec::with_capacity(uploads.len());
            for (k, bytes) in uploads.iter().enumerate() {
                let name = format!("{n}-{k}.png");
                write_atomic(&dir.join(&name), bytes)?;
                names.push(name);
            }
            req.selection = SelectionRequest::Online { masks: names };
        }
        let entry = HistoryEntry {
            timestamp_ms: now_ms(),
            request: req,
            result: result.clone(),
        };
        let mut line = serde_json::to_string(&entry).expect("history serializes");
        line.push('\n');
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.dir.join("history.jsonl"))?;
        f.write_all(line.as_bytes())?;
        f.sync_all()?;
        self.history.push(entry);
        Ok(result)
    }

    pub fn summary(&self) -> serde_json::Value {
        json!({
            "id": self.meta.id,
            "state": self.meta.state,
            "created_ms": self.meta.created_ms,
            "width": self.rig.width,
            "height": self.rig.height,
            "disparity_source": self.meta.disparity_source,
            "surface_params": self.meta.surface_params,
            "measurements": self.history.len(),
        })
    }
}

impl Store {
    /// Opens the data directory, creating it if needed, and loads every
    /// complete session found there.
    pub fn open(root: impl Into<PathBuf>) -> io::Result<Store> {
        let root = root.into();
        fs::create_dir_all(root.join("sessions"))?;
        let staging = root.join("staging");
        if staging.exists() {
            fs::remove_dir_all(&staging)?;
        }
        fs::create_dir_all(&staging)?;

        let mut sessions = HashMap::new();
        for entry in fs::read_dir(root.join("sessions"))? {
            let dir = entry?.path();
            if !dir.is_dir() {
                continue;
            }
            match Session::load(dir.clone()) {
                Ok(s) => {
                    sessions.insert(s.meta.id.clone(), Arc::new(RwLock::new(s)));
                }
                Err(e) => tracing::warn!("skipping session {}: {e}", dir.display()),
            }
        }
        tracing::info!(
            "loaded {} session(s) from {}",
            sessions.len(),
            root.display()
        );
        Ok(Store {
            root,
            sessions: StdRwLock::new(sessions),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Validates the uploads and persists a new session in state `created`.
    pub fn create(
        &self,
        calibration: &[u8],
        left: Vec<u8>,
        right: Vec<u8>,
    ) -> Result<String, ApiError> {
        let text = std::str::from_utf8(calibration)
            .map_err(|_| Error::MalformedFile("calibration is not UTF-8".into()))?;
        let rig = parse_calibration(text)?;
        let left_img = GrayImage::decode(&left)?;
        let right_img = GrayImage::decode(&right)?;
        if right_img.dims() != left_img.dims() {
            return Err(Error::DimensionMismatch {
                expected: left_img.dims(),
                found: right_img.dims(),
            }
            .into());
        }
        if left_img.dims() != (rig.width, rig.height) {
            return Err(Error::DimensionMismatch {
                expected: (rig.width, rig.height),
                found: left_img.dims(),
            }
            .into());
        }

        let id = uuid::Uuid::new_v4().simple().to_string();
        let meta = SessionMeta {
            id: id.clone(),
            state: SessionState::Created,
            created_ms: now_ms(),
            disparity_source: None,
            surface_params: None,
        };
        let tmp = self.root.join("staging").join(&id);
        fs::create_dir_all(&tmp)?;
        write_atomic(&tmp.join("calibration.json"), calibration)?;
        write_atomic(&tmp.join("left.png"), &left)?;
        write_atomic(&tmp.join("right.png"), &right)?;
        write_json(&tmp.join("session.json"), &meta)?;
        let dir = self.root.join("sessions").join(&id);
        fs::rename(&tmp, &dir)?;
        sync_dir(&self.root.join("sessions"));

        let session = Session {
            meta,
            rig,
            left: Arc::new(left_img),
            right: Arc::new(right_img),
            disparity: None,
            surface: None,
            history: Vec::new(),
            dir,
        };
        self.sessions
            .write()
            .expect("session map lock")
            .insert(id.clone(), Arc::new(RwLock::new(session)));
        Ok(id)
    }

    pub fn get(&self, id: &str) -> Result<SharedSession, ApiError> {
        self.sessions
            .read()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(id))
    }

    pub fn all(&self) -> Vec<SharedSession> {
        self.sessions
            .read()
            .expect("session map lock")
            .values()
            .cloned()
            .collect()
    }
}
