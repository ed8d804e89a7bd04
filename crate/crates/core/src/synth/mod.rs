//! Synthetic stereo scenes with analytic ground truth, and the evaluation
//! harness that scores the pipeline on them.

mod eval;
mod render;
mod scene;

pub use eval::{
    error_stats, run_eval, Estimator, EvalCell, EvalConfig, EvalMode, EvalReport, SceneSource,
    TrialRecord,
};
pub use render::{
    cast_column, generate_scene, ground_truth_disparity, project_markers, MarkerPair,
    SyntheticScene, Texture, View,
};
pub use scene::{default_rig, oracle_surface_length, MarkerPairSpec, SceneSpec, Shape};
