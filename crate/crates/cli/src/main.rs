//! `stereo-measure`: headless driver for the measurement pipeline.
//!
//! Results go to stdout as JSON (or a table for `eval`); diagnostics go to
//! stderr. Exit codes: 0 success, 2 usage, 3 bad input, 4 pipeline failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stereo_measure::disparity::import_disparity;
use stereo_measure::select::import_masks;
use stereo_measure::{
    build_q, estimate_disparity, generate_scene, load_calibration, run_eval, run_measurement,
    DisparityMap, Error, EvalConfig, GrayImage, MeasureContext, MeasureMode, MeasureParams,
    PixelPoint, SceneSpec, Selection, SgmParams, Surface, SurfaceParams,
};
use stereo_measure_service::ServiceConfig;

#[derive(Parser)]
#[command(
    name = "stereo-measure",
    version,
    about = "Metric measurement on rectified stereo images"
)]
struct Cli {
    /// Cap on worker threads (default: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Measure between two points of the left image.
    Measure(MeasureArgs),
    /// Render a synthetic scene with ground truth.
    Synth(SynthArgs),
    /// Score the pipeline on synthetic scenes.
    Eval(EvalArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

fn parse_point(s: &str) -> Result<PixelPoint, String> {
    let (u, v) = s
        .split_once(',')
        .ok_or_else(|| format!("expected `u,v`, got `{s}`"))?;
    let num = |t: &str| {
        t.trim()
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| format!("`{t}` is not a number"))
    };
    Ok(PixelPoint::new(num(u)?, num(v)?))
}

#[derive(Args)]
struct MeasureArgs {
    #[arg(long)]
    calib: PathBuf,
    #[arg(long)]
    left: PathBuf,
    #[arg(long)]
    right: PathBuf,
    /// Disparity map (PFM) from an external estimator.
    #[arg(long, conflicts_with = "sgm", required_unless_present = "sgm")]
    disparity: Option<PathBuf>,
    /// Estimate disparity with the built-in semi-global matcher.
    #[arg(long)]
    sgm: bool,
    /// JSON file with matcher parameters.
    #[arg(long, requires = "sgm")]
    sgm_params: Option<PathBuf>,
    #[arg(long, value_parser = parse_point, requires = "point_b", conflicts_with = "mask_a")]
    point_a: Option<PixelPoint>,
    #[arg(long, value_parser = parse_point, requires = "point_a")]
    point_b: Option<PixelPoint>,
    /// Tool mask; alone it must hold both instruments.
    #[arg(long, required_unless_present = "point_a")]
    mask_a: Option<PathBuf>,
    #[arg(long, requires = "mask_a")]
    mask_b: Option<PathBuf>,
    #[arg(long, default_value = "direct", value_parser = ["direct", "surface", "both"])]
    mode: String,
    #[arg(long, default_value_t = SurfaceParams::default().jump_threshold_px)]
    jump_threshold: f64,
    #[arg(long, default_value_t = MeasureParams::default().search_radius_px)]
    search_radius: f64,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    config: PathBuf,
    /// Per-trial CSV output.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Full report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    /// TOML config with data_dir, host and port.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    port: Option<u16>,
}

/// A failure with the exit code it maps to.
struct Failure {
    exit: u8,
    code: String,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            exit: if e.is_input_error() { 3 } else { 4 },
            code: e.code().into(),
            message: e.to_string(),
        }
    }
}

fn input_failure(message: impl Into<String>) -> Failure {
    Failure {
        exit: 3,
        code: "InvalidInput".into(),
        message: message.into(),
    }
}

fn read_sgm_params(path: &Path) -> Result<SgmParams, Failure> {
    let text = std::fs::read_to_string(path).map_err(Error::from)?;
    serde_json::from_str(&text)
        .map_err(|e| Error::MalformedFile(format!("{}: {e}", path.display())).into())
}

fn cmd_measure(args: MeasureArgs) -> Result<(), Failure> {
    let rig = load_calibration(&args.calib)?;
    let left = GrayImage::load(&args.left)?;
    let right = GrayImage::load(&args.right)?;
    for img in [&left, &right] {
        if img.dims() != (rig.width, rig.height) {
            return Err(Error::DimensionMismatch {
                expected: (rig.width, rig.height),
                found: img.dims(),
            }
            .into());
        }
    }
    let mode: MeasureMode = args.mode.parse()?;
    let params = MeasureParams {
        search_radius_px: args.search_radius,
        ..MeasureParams::default()
    };
    let selection = match (args.point_a, args.point_b) {
        (Some(a), Some(b)) => Selection::Points(a, b),
        _ => {
            let paths: Vec<&PathBuf> = args.mask_a.iter().chain(args.mask_b.iter()).collect();
            Selection::Masks(import_masks(&paths, left.dims())?)
        }
    };

    let disparity: DisparityMap = match &args.disparity {
        Some(path) => import_disparity(path, Some(left.dims()))?,
        None => {
            let sgm: SgmParams = match &args.sgm_params {
                Some(p) => read_sgm_params(p)?,
                None => SgmParams::default(),
            };
            estimate_disparity(&left, &right, &sgm)?
        }
    };
    let surface = if mode.needs_surface() {
        let sp = SurfaceParams {
            jump_threshold_px: args.jump_threshold,
            ..SurfaceParams::default()
        };
        Some(Surface::build(&disparity, &build_q(&rig), &sp)?)
    } else {
        None
    };
    let ctx = MeasureContext {
        rig: &rig,
        disparity: &disparity,
        surface: surface.as_ref(),
    };
    let response = run_measurement(&ctx, &selection, mode, &params)?;
    println!("{}", response.to_json());
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<(), Failure> {
    let spec = SceneSpec::load(&args.scene)?;
    let scene = generate_scene(&spec)?;
    scene.write(&args.out)?;
    eprintln!("wrote scene `{}` to {}", spec.name, args.out.display());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), Failure> {
    let cfg = EvalConfig::load(&args.config)?;
    let report = run_eval(&cfg)?;
    if let Some(path) = &args.csv {
        std::fs::write(path, report.to_csv()).map_err(Error::from)?;
    }
    if let Some(path) = &args.json {
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        std::fs::write(path, text + "\n").map_err(Error::from)?;
    }
    print!("{}", report.to_table());
    let failed: usize = report.cells.iter().map(|c| c.failed).sum();
    if failed > 0 {
        eprintln!("{failed} trial(s) failed; see the status column");
    }
    Ok(())
}

fn cmd_serve(args: ServeArgs) -> Result<(), Failure> {
    let mut cfg = ServiceConfig::load(args.config.as_deref()).map_err(input_failure)?;
    if let Some(dir) = args.data_dir {
        cfg.data_dir = dir;
    }
    if let Some(port) = args.port {
        cfg.port = port;
    }
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    let runtime = tokio::runtime::Runtime::new().map_err(Error::from)?;
    runtime
        .block_on(stereo_measure_service::serve(cfg))
        .map_err(|e| Failure::from(Error::Io(e)))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("--threads must be at least 1");
            return ExitCode::from(2);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .expect("thread pool is configured once");
    }
    let result = match cli.command {
        Command::Measure(a) => cmd_measure(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Serve(a) => cmd_serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let body = serde_json::json!({ "code": f.code, "message": f.message });
            eprintln!("{body}");
            ExitCode::from(f.exit)
        }
    }
}
