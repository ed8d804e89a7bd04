//! Scoring the pipeline on synthetic scenes: every (scene, marker pair,
//! estimator, mode) cell gets a mean absolute error, the standard deviation
//! of the signed error and the worst absolute error.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::render::{generate_scene, MarkerPair, SyntheticScene};
use super::scene::SceneSpec;
use crate::calib::{build_q, PixelPoint};
use crate::disparity::{estimate_disparity, import_disparity, DisparityMap, SgmParams};
use crate::error::{Error, Result};
use crate::measure::{
    measure_pair, MeasureContext, MeasureMode, MeasureParams, Surface, SurfaceParams,
};

/// A scene given inline or as a path to a scene JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SceneSource {
    Inline(Box<SceneSpec>),
    File(PathBuf),
}

/// Where a disparity map comes from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    GroundTruth,
    Sgm,
    /// Reads `<dir>/<scene name>.pfm`, e.g. the output of an external
    /// matcher.
    Imported(PathBuf),
}

impl Estimator {
    pub fn name(&self) -> &'static str {
        match self {
            Estimator::GroundTruth => "ground_truth",
            Estimator::Sgm => "sgm",
            Estimator::Imported(_) => "imported",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Direct,
    SurfaceBasic,
    SurfaceSpline,
}

impl EvalMode {
    pub fn name(self) -> &'static str {
        match self {
            EvalMode::Direct => "direct",
            EvalMode::SurfaceBasic => "surface_basic",
            EvalMode::SurfaceSpline => "surface_spline",
        }
    }
}

fn default_estimators() -> Vec<Estimator> {
    vec![Estimator::GroundTruth, Estimator::Sgm]
}

fn default_modes() -> Vec<EvalMode> {
    vec![
        EvalMode::Direct,
        EvalMode::SurfaceBasic,
        EvalMode::SurfaceSpline,
    ]
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub scenes: Vec<SceneSource>,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<Estimator>,
    #[serde(default = "default_modes")]
    pub modes: Vec<EvalMode>,
    /// Trials per (scene, pair, estimator) cell.
    #[serde(default = "one")]
    pub trials: usize,
    /// Half-width of the uniform click perturbation in pixels.
    #[serde(default)]
    pub selection_jitter_px: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sgm: SgmParams,
    #[serde(default)]
    pub surface: SurfaceParams,
    #[serde(default)]
    pub measure: MeasureParams,
}

impl EvalConfig {
    pub fn new(scenes: Vec<SceneSpec>) -> Self {
        EvalConfig {
            scenes: scenes
                .into_iter()
                .map(|s| SceneSource::Inline(Box::new(s)))
                .collect(),
            estimators: default_estimators(),
            modes: default_modes(),
            trials: 1,
            selection_jitter_px: 0.0,
            seed: 0,
            sgm: SgmParams::default(),
            surface: SurfaceParams::default(),
            measure: MeasureParams::default(),
        }
    }

    /// Parses a config, resolving relative scene files and import
    /// directories against `base`.
    pub fn from_json(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: EvalConfig = serde_json::from_str(text)
            .map_err(|e| Error::MalformedFile(format!("eval config: {e}")))?;
        for source in &mut cfg.scenes {
            if let SceneSource::File(path) = source {
                let spec = SceneSpec::load(base.join(&*path))?;
                *source = SceneSource::Inline(Box::new(spec));
            }
        }
        for est in &mut cfg.estimators {
            if let Estimator::Imported(dir) = est {
                *dir = base.join(&*dir);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json(&std::fs::read_to_string(path)?, base)
    }

    fn scene_specs(&self) -> Result<Vec<SceneSpec>> {
        self.scenes
            .iter()
            .map(|s| match s {
                SceneSource::Inline(spec) => Ok((**spec).clone()),
                SceneSource::File(path) => SceneSpec::load(path),
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidParams(m.into()));
        if self.scenes.is_empty() || self.estimators.is_empty() || self.modes.is_empty() {
            return fail("scenes, estimators and modes must be non-empty");
        }
        if self.trials == 0 {
            return fail("trials must be at least 1");
        }
        if !(self.selection_jitter_px >= 0.0 && self.selection_jitter_px.is_finite()) {
            return fail("selection_jitter_px must be a non-negative number");
        }
        self.sgm.validate()?;
        self.measure.spline.validate()?;
        let mut names = HashSet::new();
        for spec in self.scene_specs()? {
            spec.validate()?;
            if !names.insert(spec.name.clone()) {
                return Err(Error::InvalidParams(format!(
                    "duplicate scene name `{}`",
                    spec.name
                )));
            }
        }
        Ok(())
    }
}

/// One measured value, or the error code that prevented it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub scene: String,
    pub pair: String,
    pub estimator: String,
    pub mode: String,
    pub trial: usize,
    pub gt_mm: f64,
    pub measured_mm: Option<f64>,
    pub status: String,
}

impl TrialRecord {
    pub fn error_mm(&self) -> Option<f64> {
        self.measured_mm.map(|m| m - self.gt_mm)
    }
}

/// Statistics of one cell. The error fields are absent when every trial
/// failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCell {
    pub scene: String,
    pub pair: String,
    pub estimator: String,
    pub mode: String,
    pub gt_mm: f64,
    pub mae_mm: Option<f64>,
    pub std_mm: Option<f64>,
    pub max_mm: Option<f64>,
    pub n: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cells: Vec<EvalCell>,
    pub trials: Vec<TrialRecord>,
}

/// Mean absolute error, sample standard deviation of the signed errors and
/// maximum absolute error. A single sample has zero spread.
pub fn error_stats(errors: &[f64]) -> Option<(f64, f64, f64)> {
    if errors.is_empty() {
        return None;
    }
    let n = errors.len() as f64;
    let mae = errors.iter().map(|e| e.abs()).sum::<f64>() / n;
    let mean = errors.iter().sum::<f64>() / n;
    let std = if errors.len() > 1 {
        (errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let max = errors.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    Some((mae, std, max))
}

/// Stage outcomes keep only the error code, which is what gets reported.
type Staged<T> = std::result::Result<T, &'static str>;

struct Prepared {
    disparity: Staged<DisparityMap>,
    surface: Option<Staged<Surface>>,
}

fn prepare(
    cfg: &EvalConfig,
    scene: &SyntheticScene,
    est: &Estimator,
    need_surface: bool,
) -> Prepared {
    let rig = scene.rig();
    let disparity = match est {
        Estimator::GroundTruth => Ok(scene.gt_disparity.clone()),
        Estimator::Sgm => estimate_disparity(&scene.left, &scene.right, &cfg.sgm),
        Estimator::Imported(dir) => import_disparity(
            dir.join(format!("{}.pfm", scene.spec.name)),
            Some((rig.width, rig.height)),
        ),
    }
    .map_err(|e| e.code());
    let surface = need_surface.then(|| {
        let disp = disparity.as_ref().map_err(|&code| code)?;
        Surface::build(disp, &build_q(rig), &cfg.surface).map_err(|e| e.code())
    });
    Prepared { disparity, surface }
}

fn jittered(rng: &mut ChaCha8Rng, p: PixelPoint, j: f64) -> PixelPoint {
    if j == 0.0 {
        return p;
    }
    PixelPoint::new(
        p.u + rng.random_range(-j..=j),
        p.v + rng.random_range(-j..=j),
    )
}

fn trial_rng(seed: u64, scene: usize, pair: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((scene as u64) << 40) ^ ((pair as u64) << 20) ^ trial as u64);
    rng
}

#[allow(clippy::too_many_arguments)]
fn run_trial(
    cfg: &EvalConfig,
    scene_idx: usize,
    scene: &SyntheticScene,
    pair_idx: usize,
    pair: &MarkerPair,
    est: &Estimator,
    prep: &Prepared,
    trial: usize,
) -> Vec<TrialRecord> {
    let mut rng = trial_rng(cfg.seed, scene_idx, pair_idx, trial);
    let pa = jittered(&mut rng, pair.a, cfg.selection_jitter_px);
    let pb = jittered(&mut rng, pair.b, cfg.selection_jitter_px);
    let rig = scene.rig();
    let direct = cfg.modes.contains(&EvalMode::Direct).then(|| {
        let disp = prep.disparity.as_ref().map_err(|&code| code)?;
        let ctx = MeasureContext {
            rig,
            disparity: disp,
            surface: None,
        };
        measure_pair(&ctx, pa, pb, MeasureMode::Direct, &cfg.measure).map_err(|e| e.code())
    });
    let surface = prep.surface.as_ref().map(|surface| {
        let surface = surface.as_ref().map_err(|&code| code)?;
        let disp = prep.disparity.as_ref().expect("surface implies disparity");
        let ctx = MeasureContext {
            rig,
            disparity: disp,
            surface: Some(surface),
        };
        measure_pair(&ctx, pa, pb, MeasureMode::Surface, &cfg.measure).map_err(|e| e.code())
    });
    cfg.modes
        .iter()
        .map(|&mode| {
            let (outcome, gt) = match mode {
                EvalMode::Direct => (
                    direct.as_ref().expect("direct requested"),
                    pair.gt_direct_mm,
                ),
                _ => (
                    surface.as_ref().expect("surface requested"),
                    pair.gt_surface_mm,
                ),
            };
            let measured = outcome.as_ref().ok().map(|r| match mode {
                EvalMode::Direct => r.direct_mm,
                EvalMode::SurfaceBasic => r.surface_basic_mm.expect("surface result"),
                EvalMode::SurfaceSpline => r.surface_spline_mm.expect("surface result"),
            });
            TrialRecord {
                scene: scene.spec.name.clone(),
                pair: pair.label.clone(),
                estimator: est.name().into(),
                mode: mode.name().into(),
                trial,
                gt_mm: gt,
                measured_mm: measured,
                status: match outcome {
                    Ok(_) => "ok".into(),
                    Err(code) => (*code).into(),
                },
            }
        })
        .collect()
}

/// Renders every scene, runs each estimator once per scene and measures
/// every marker pair `trials` times. Scene and config problems are errors;
/// pipeline failures are recorded per trial.
pub fn run_eval(cfg: &EvalConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let specs = cfg.scene_specs()?;
    let need_surface = cfg.modes.iter().any(|m| *m != EvalMode::Direct);
    let mut trials = Vec::new();
    for (scene_idx, spec) in specs.iter().enumerate() {
        let scene = generate_scene(spec)?;
        for est in &cfg.estimators {
            let prep = prepare(cfg, &scene, est, need_surface);
            let jobs: Vec<(usize, usize)> = (0..scene.markers.len())
                .flat_map(|p| (0..cfg.trials).map(move |t| (p, t)))
                .collect();
            let records: Vec<Vec<TrialRecord>> = jobs
                .par_iter()
                .map(|&(p, t)| {
                    run_trial(cfg, scene_idx, &scene, p, &scene.markers[p], est, &prep, t)
                })
                .collect();
            trials.extend(records.into_iter().flatten());
        }
    }
    Ok(EvalReport {
        cells: summarize(&trials),
        trials,
    })
}

/// Groups records into cells, keeping first-appearance order.
fn summarize(trials: &[TrialRecord]) -> Vec<EvalCell> {
    let mut cells: Vec<(EvalCell, Vec<f64>)> = Vec::new();
    for r in trials {
        let key = |c: &EvalCell| {
            c.scene == r.scene && c.pair == r.pair && c.estimator == r.estimator && c.mode == r.mode
        };
        let idx = match cells.iter().position(|(c, _)| key(c)) {
            Some(i) => i,
            None => {
                cells.push((
                    EvalCell {
                        scene: r.scene.clone(),
                        pair: r.pair.clone(),
                        estimator: r.estimator.clone(),
                        mode: r.mode.clone(),
                        gt_mm: r.gt_mm,
                        mae_mm: None,
                        std_mm: None,
                        max_mm: None,
                        n: 0,
                        failed: 0,
                    },
                    Vec::new(),
                ));
                cells.len() - 1
            }
        };
        match r.error_mm() {
            Some(e) => cells[idx].1.push(e),
            None => cells[idx].0.failed += 1,
        }
    }
    cells
        .into_iter()
        .map(|(mut cell, errors)| {
            cell.n = errors.len();
            if let Some((mae, std, max)) = error_stats(&errors) {
                (cell.mae_mm, cell.std_mm, cell.max_mm) = (Some(mae), Some(std), Some(max));
            }
            cell
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl EvalReport {
    /// Per-trial CSV. The scene column is `scene:pair`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "scene",
            "estimator",
            "mode",
            "trial",
            "gt_mm",
            "measured_mm",
            "error_mm",
            "status",
        ])
        .expect("in-memory write");
        for r in &self.trials {
            w.write_record([
                format!("{}:{}", r.scene, r.pair),
                r.estimator.clone(),
                r.mode.clone(),
                r.trial.to_string(),
                r.gt_mm.to_string(),
                opt(r.measured_mm),
                opt(r.error_mm()),
                r.status.clone(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    pub fn cell(&self, scene: &str, pair: &str, estimator: &str, mode: &str) -> Option<&EvalCell> {
        self.cells.iter().find(|c| {
            c.scene == scene && c.pair == pair && c.estimator == estimator && c.mode == mode
        })
    }

    /// One row per marker pair, one column per estimator and mode, each
    /// cell showing `MAE ± STD` and `max` in millimetres.
    pub fn to_table(&self) -> String {
        let mut columns: Vec<(String, String)> = Vec::new();
        let mut rows: Vec<(String, String)> = Vec::new();
        for c in &self.cells {
            let col = (c.estimator.clone(), c.mode.clone());
            if !columns.contains(&col) {
                columns.push(col);
            }
            let row = (c.scene.clone(), c.pair.clone());
            if !rows.contains(&row) {
                rows.push(row);
            }
        }
        let mut grid: Vec<Vec<String>> = Vec::new();
        let mut header = vec![
            "measurement".to_string(),
            "gt direct".into(),
            "gt surface".into(),
        ];
        let mut sub = vec![String::new(), "mm".into(), "mm".into()];
        for (est, mode) in &columns {
            header.push(format!("{est} {mode}"));
            header.push(String::new());
            sub.push("MAE ± STD".into());
            sub.push("max".into());
        }
        grid.push(header);
        grid.push(sub);
        for (scene, pair) in &rows {
            let gt = |direct: bool| {
                self.trials
                    .iter()
                    .find(|t| {
                        &t.scene == scene && &t.pair == pair && (t.mode == "direct") == direct
                    })
                    .map(|t| format!("{:.3}", t.gt_mm))
                    .unwrap_or_else(|| "-".into())
            };
            let mut line = vec![format!("{scene}:{pair}"), gt(true), gt(false)];
            for (est, mode) in &columns {
                match self.cell(scene, pair, est, mode) {
                    Some(c) => {
                        let failed = if c.failed > 0 {
                            format!(" ({} failed)", c.failed)
                        } else {
                            String::new()
                        };
                        match (c.mae_mm, c.std_mm, c.max_mm) {
                            (Some(mae), Some(std), Some(max)) => {
                                line.push(format!("{mae:.3} ± {std:.3}{failed}"));
                                line.push(format!("{max:.3}"));
                            }
                            _ => {
                                line.push(format!("-{failed}"));
                                line.push("-".into());
                            }
                        }
                    }
                    None => {
                        line.push(String::new());
                        line.push(String::new());
                    }
                }
            }
            grid.push(line);
        }
        let ncols = grid[0].len();
        let widths: Vec<usize> = (0..ncols)
            .map(|i| grid.iter().map(|r| r[i].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in &grid {
            let cells: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(s, w)| format!("{s:<w$}"))
                .collect();
            writeln!(out, "{}", cells.join("  ").trim_end()).expect("string write");
        }
        out
    }
}
