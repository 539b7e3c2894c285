//! The `tacsim` command line.
//!
//! Exit codes:
//!
//! | code | meaning                                   |
//! |------|-------------------------------------------|
//! | 0    | success                                   |
//! | 2    | usage error (bad flags, bad `--override`) |
//! | 3    | invalid configuration or schema violation |
//! | 4    | file could not be read or written         |
//! | 5    | solver failure during a run               |
//! | 6    | a self-check failed                       |
//! | 7    | image dimensions differ                   |
//!
//! With `--json`, stdout carries exactly one JSON document: the result, or
//! `{"error": {"code", "kind", "message"}}`. Human-readable text always goes
//! to stderr.

pub mod check;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::geometry::GeometryError;
use crate::scene::{load_scene, read_trajectory, run, RunSummary, SceneError, MARKERS_FILE};
use crate::tactile::{
    embed_markers, image_metrics, marker_displacements, write_marker_csv, ImageMetrics, MarkerGrid, TactileError,
    TactileImage,
};
use crate::Error;

pub use check::{run_checks, CheckOptions, CheckReport, CheckResult};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_SOLVER: i32 = 5;
pub const EXIT_CHECK_FAILED: i32 = 6;
pub const EXIT_DIMENSION_MISMATCH: i32 = 7;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MARKER_CURVE_FILE: &str = "marker_curve.json";
/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "TACSIM_THREADS";

#[derive(Debug, Parser)]
#[command(name = "tacsim", version, about = "Tactile sensor elastomer simulator")]
pub struct Cli {
    /// Print machine-readable JSON on stdout
    #[arg(long, global = true)]
    pub json: bool,
    /// Log verbosity (-v info, -vv debug)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scene and write states, tactile outputs and a manifest
    Simulate(SimulateArgs),
    /// Track a marker grid over a stored trajectory
    Markers(MarkersArgs),
    /// Compare two tactile images
    Metrics(MetricsArgs),
    /// Finite-difference and CCD self-checks on a scene
    Check(CheckArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub config: PathBuf,
    /// Output directory
    #[arg(short, long)]
    pub out: PathBuf,
    /// Number of steps, overriding the script duration
    #[arg(long)]
    pub steps: Option<usize>,
    /// Dotted-path config override, e.g. `contact.mu=0.8`
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct MarkersArgs {
    /// Directory written by `simulate`
    pub trajectory: PathBuf,
    #[arg(long)]
    pub rows: usize,
    #[arg(long)]
    pub cols: usize,
    /// Grid spacing (m)
    #[arg(long)]
    pub spacing: f64,
    /// Grid centre in imaging-plane coordinates (m)
    #[arg(long, num_args = 2, value_names = ["A", "B"], allow_negative_numbers = true, default_values_t = [0.0, 0.0])]
    pub center: Vec<f64>,
    /// CSV output, default `<trajectory>/markers.csv`
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Mean-displacement curve output, default `<trajectory>/marker_curve.json`
    #[arg(long)]
    pub curve: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    pub image_a: PathBuf,
    pub image_b: PathBuf,
    /// Also write the JSON here
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    pub config: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random configurations per check
    #[arg(long, default_value_t = CheckOptions::default().samples)]
    pub samples: usize,
    /// Relative gradient error bound
    #[arg(long, default_value_t = CheckOptions::default().grad_tol)]
    pub tolerance: f64,
    /// Relative Hessian-vector error bound
    #[arg(long, default_value_t = CheckOptions::default().hvp_tol)]
    pub hessian_tolerance: f64,
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

/// Record of one `simulate` invocation, written as `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_path: PathBuf,
    /// Hex SHA-256 of the config file bytes.
    pub config_sha256: String,
    pub overrides: Vec<String>,
    pub steps_requested: usize,
    /// Output files relative to the output directory.
    pub files: Vec<String>,
    pub summary: RunSummary,
    /// Set when the run aborted; the listed files are the partial output.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: u64,
    pub time: f64,
    /// Mean in-plane marker displacement (m).
    pub mean_displacement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerCurve {
    pub grid: MarkerGrid,
    pub points: Vec<CurvePoint>,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Usage(_) => EXIT_USAGE,
        Error::Scene(s) => match s {
            SceneError::Schema { .. } | SceneError::Config(_) | SceneError::EmptyGlue => EXIT_CONFIG,
            SceneError::Io { .. } | SceneError::Frame { .. } => EXIT_IO,
            SceneError::Geometry(g) => geometry_code(g),
            SceneError::Tactile(t) => tactile_code(t),
            SceneError::Solver { .. } => EXIT_SOLVER,
        },
        Error::Tactile(t) => tactile_code(t),
        Error::Geometry(g) => geometry_code(g),
        Error::Solver(_) => EXIT_SOLVER,
        Error::Energy(_) | Error::Distance(_) => EXIT_CONFIG,
        Error::Io { .. } => EXIT_IO,
    }
}

fn geometry_code(g: &GeometryError) -> i32 {
    match g {
        GeometryError::Io { .. } => EXIT_IO,
        _ => EXIT_CONFIG,
    }
}

fn tactile_code(t: &TactileError) -> i32 {
    match t {
        TactileError::DimensionMismatch { .. } => EXIT_DIMENSION_MISMATCH,
        TactileError::Io { .. } | TactileError::Image { .. } | TactileError::Csv(_) => EXIT_IO,
        TactileError::InvalidSpec(_) | TactileError::MarkerOffSurface { .. } => EXIT_CONFIG,
    }
}

fn error_kind(code: i32) -> &'static str {
    match code {
        EXIT_USAGE => "usage",
        EXIT_CONFIG => "config",
        EXIT_IO => "io",
        EXIT_SOLVER => "solver",
        EXIT_CHECK_FAILED => "check",
        EXIT_DIMENSION_MISMATCH => "dimension_mismatch",
        _ => "internal",
    }
}

/// Splits `key=value` at the first `=`.
pub fn parse_override(raw: &str) -> Result<(String, String), Error> {
    match raw.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.to_string())),
        _ => Err(Error::Usage(format!("override `{raw}` is not of the form key=value"))),
    }
}

fn parse_overrides(raw: &[String]) -> Result<Vec<(String, String)>, Error> {
    raw.iter().map(|r| parse_override(r)).collect()
}

fn sha256_file(path: &Path) -> Result<String, Error> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

/// Loads, runs and records a scene. On a solver failure the partial output
/// and a manifest carrying the error are still written, and the error is
/// returned alongside the manifest.
pub fn cmd_simulate(args: &SimulateArgs) -> Result<RunManifest, (Error, Option<Box<RunManifest>>)> {
    let overrides = parse_overrides(&args.overrides).map_err(|e| (e, None))?;
    let config_sha256 = sha256_file(&args.config).map_err(|e| (e, None))?;
    let scene = load_scene(&args.config, &overrides).map_err(|e| (e.into(), None))?;
    let steps = args.steps.unwrap_or(scene.steps);
    std::fs::create_dir_all(&args.out).map_err(|e| (Error::Io { path: args.out.clone(), source: e }, None))?;
    let result = run(&scene, steps, Some(&args.out));
    let (output, error) = match result {
        Ok(o) => (o, None),
        Err(f) => (*f.partial, Some(f.error)),
    };
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_path: args.config.clone(),
        config_sha256,
        overrides: args.overrides.clone(),
        steps_requested: steps,
        files: output.files,
        summary: output.summary,
        error: error.as_ref().map(|e| e.to_string()),
    };
    let written = write_json(&args.out.join(MANIFEST_FILE), &manifest);
    match (error, written) {
        (Some(e), _) => Err((e.into(), Some(Box::new(manifest)))),
        (None, Err(e)) => Err((e, Some(Box::new(manifest)))),
        (None, Ok(())) => Ok(manifest),
    }
}

/// Embeds `grid` in the first stored frame and tracks it through the rest.
pub fn cmd_markers(args: &MarkersArgs) -> Result<MarkerCurve, Error> {
    let grid = MarkerGrid {
        rows: args.rows,
        cols: args.cols,
        spacing: args.spacing,
        center: [args.center[0], args.center[1]],
    };
    let (index, states) = read_trajectory(&args.trajectory)?;
    let rest = &states[0].x[..index.n_gel];
    let set = embed_markers(rest, &index.surface_tris, &grid, &index.plane)?;
    let frames: Vec<&[crate::geometry::Vec3]> = states.iter().map(|s| &s.x[..index.n_gel]).collect();
    let tracked = marker_displacements(&set, &frames, &index.plane);

    let csv_path = args.out.clone().unwrap_or_else(|| args.trajectory.join(MARKERS_FILE));
    let file = std::fs::File::create(&csv_path).map_err(|e| Error::Io { path: csv_path.clone(), source: e })?;
    write_marker_csv(std::io::BufWriter::new(file), &tracked)?;

    let curve = MarkerCurve {
        grid,
        points: states
            .iter()
            .zip(&tracked)
            .map(|(s, f)| CurvePoint { step: s.step, time: s.time, mean_displacement: f.mean_displacement })
            .collect(),
    };
    write_json(&args.curve.clone().unwrap_or_else(|| args.trajectory.join(MARKER_CURVE_FILE)), &curve)?;
    Ok(curve)
}

pub fn cmd_metrics(args: &MetricsArgs) -> Result<ImageMetrics, Error> {
    let a = TactileImage::read_png(&args.image_a)?;
    let b = TactileImage::read_png(&args.image_b)?;
    let m = image_metrics(&a, &b)?;
    if let Some(out) = &args.out {
        write_json(out, &m)?;
    }
    Ok(m)
}

pub fn cmd_check(args: &CheckArgs) -> Result<CheckReport, Error> {
    let opts = CheckOptions {
        seed: args.seed,
        samples: args.samples,
        grad_tol: args.tolerance,
        hvp_tol: args.hessian_tolerance,
    };
    opts.validate().map_err(|m| Error::Scene(SceneError::Config(m)))?;
    let scene = load_scene(&args.config, &parse_overrides(&args.overrides)?)?;
    Ok(run_checks(&scene, &opts))
}

fn init_threads() -> Result<(), Error> {
    let Ok(raw) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Usage(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Usage(format!("cannot size the thread pool: {e}")))
}

// A closed stdout is not worth a panic.
fn stdout_line(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{text}").and_then(|_| out.flush());
}

struct Output {
    json: bool,
}

impl Output {
    fn result<T: Serialize>(&self, value: &T) {
        if self.json {
            stdout_line(&serde_json::to_string_pretty(value).expect("serializable"));
        }
    }

    fn error(&self, e: &Error) -> i32 {
        let code = exit_code(e);
        eprintln!("error: {e}");
        let mut source = std::error::Error::source(e);
        while let Some(s) = source {
            eprintln!("  caused by: {s}");
            source = s.source();
        }
        if self.json {
            let doc =
                serde_json::json!({ "error": { "code": code, "kind": error_kind(code), "message": e.to_string() } });
            stdout_line(&serde_json::to_string_pretty(&doc).expect("serializable"));
        }
        code
    }
}

/// Runs one parsed invocation and returns its exit code.
pub fn execute(cli: &Cli) -> i32 {
    let out = Output { json: cli.json };
    if let Err(e) = init_threads() {
        return out.error(&e);
    }
    match &cli.command {
        Command::Simulate(args) => match cmd_simulate(args) {
            Ok(m) => {
                eprintln!(
                    "{} steps, {} Newton iterations, {:.2} s, min distance {:e} m, output in {}",
                    m.summary.steps,
                    m.summary.newton_iterations,
                    m.summary.wall_time_s,
                    m.summary.min_distance,
                    args.out.display()
                );
                out.result(&m);
                EXIT_OK
            }
            Err((e, Some(m))) => {
                eprintln!("partial output after {} steps in {}", m.summary.steps, args.out.display());
                out.error(&e)
            }
            Err((e, None)) => out.error(&e),
        },
        Command::Markers(args) => match cmd_markers(args) {
            Ok(c) => {
                let last = c.points.last().map_or(0.0, |p| p.mean_displacement);
                eprintln!("{} frames, final mean displacement {last:e} m", c.points.len());
                out.result(&c);
                EXIT_OK
            }
            Err(e) => out.error(&e),
        },
        Command::Metrics(args) => match cmd_metrics(args) {
            Ok(m) => {
                stdout_line(&serde_json::to_string(&m).expect("serializable"));
                EXIT_OK
            }
            Err(e) => out.error(&e),
        },
        Command::Check(args) => match cmd_check(args) {
            Ok(report) => {
                for c in &report.checks {
                    let status = if c.passed { "pass" } else { "FAIL" };
                    eprintln!("{status} {:<22} max error {:e} (bound {:e})", c.name, c.max_error, c.tolerance);
                }
                out.result(&report);
                if report.passed {
                    EXIT_OK
                } else {
                    let failed: Vec<&str> =
                        report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
                    if !cli.json {
                        eprintln!("failed: {}", failed.join(", "));
                    }
                    EXIT_CHECK_FAILED
                }
            }
            Err(e) => out.error(&e),
        },
    }
}

/// Parses `std::env::args`, runs, and returns the process exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .try_init();
    execute(&cli)
}
