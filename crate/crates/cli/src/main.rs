//! `evflow` command-line front end.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data or format errors.
//! Machine-readable reports are JSON lines.

mod commands;
mod error;
mod selfcheck;
mod synth;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "evflow", version, about = "Event-camera optical flow toolkit", arg_required_else_help = true)]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true, env = "EVFLOW_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Encode an event window into a four-channel EVIMAGE file.
    Encode(EncodeArgs),
    /// Evaluate the photometric + smoothness loss for a frame pair and flow.
    Loss(LossArgs),
    /// Dense flow between two frames by coarse-to-fine loss minimization.
    EstimateVar(EstimateVarArgs),
    /// Sparse flow from local plane fits on events.
    EstimatePlanefit(PlanefitArgs),
    /// Ground-truth flow from poses, depth and calibration.
    Gtflow(GtflowArgs),
    /// Score a predicted flow against ground truth.
    Eval(EvalArgs),
    /// Write synthetic fixtures with known flow.
    Synth(SynthArgs),
    /// Run the built-in property checks.
    Selfcheck(SelfcheckArgs),
}

#[derive(Args, Debug)]
pub struct SensorArgs {
    #[arg(long)]
    pub width: usize,
    #[arg(long)]
    pub height: usize,
}

#[derive(Args, Debug)]
pub struct EncodeArgs {
    /// Event CSV `t,x,y,p`.
    pub events: PathBuf,
    #[command(flatten)]
    pub sensor: SensorArgs,
    /// Window start, microseconds (inclusive).
    #[arg(long)]
    pub t_start: u64,
    /// Window end, microseconds (exclusive).
    #[arg(long)]
    pub t_end: u64,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Also write the event mask as a PGM.
    #[arg(long)]
    pub mask: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct LossParams {
    /// Charbonnier exponent.
    #[arg(long, default_value_t = 0.45)]
    pub alpha: f64,
    /// Charbonnier epsilon.
    #[arg(long, default_value_t = 1e-3)]
    pub epsilon: f64,
    /// Smoothness weight.
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,
    #[arg(long, value_enum, default_value_t = ReductionArg::Sum)]
    pub reduction: ReductionArg,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum ReductionArg {
    Sum,
    Mean,
}

#[derive(Args, Debug)]
pub struct LossArgs {
    pub frame0: PathBuf,
    pub frame1: PathBuf,
    /// Flow to evaluate; zero flow if absent.
    #[arg(long)]
    pub flow: Option<PathBuf>,
    #[command(flatten)]
    pub params: LossParams,
    /// Write the loss gradient as a .flo file.
    #[arg(long)]
    pub gradient: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum DescentArg {
    Preconditioned,
    Gradient,
}

#[derive(Args, Debug)]
pub struct EstimateVarArgs {
    pub frame0: PathBuf,
    pub frame1: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub levels: usize,
    #[arg(long, default_value_t = 200)]
    pub iterations: usize,
    #[arg(long, default_value_t = 1.0)]
    pub step_init: f64,
    #[arg(long, default_value_t = 0.5)]
    pub step_decay: f64,
    /// Relative loss decrease below which a level stops.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, value_enum, default_value_t = DescentArg::Preconditioned)]
    pub descent: DescentArg,
    #[command(flatten)]
    pub params: LossParams,
}

#[derive(Args, Debug)]
pub struct PlanefitArgs {
    pub events: PathBuf,
    #[command(flatten)]
    pub sensor: SensorArgs,
    /// CSV `t,x,y,u,v,inliers`.
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub radius: usize,
    /// Microseconds.
    #[arg(long, default_value_t = 50_000)]
    pub temporal_window: u64,
    /// Vanishing gradient threshold, s/px.
    #[arg(long, default_value_t = 1e-3)]
    pub vanish: f64,
    /// Outlier distance, seconds.
    #[arg(long, default_value_t = 1e-2)]
    pub outlier: f64,
    #[arg(long, default_value_t = 10)]
    pub max_refit: usize,
    #[arg(long, default_value_t = 8)]
    pub min_inliers: usize,
    #[arg(long)]
    pub same_polarity: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum ConventionArg {
    Standard,
    NegatedX,
}

#[derive(Args, Debug)]
pub struct GtflowArgs {
    /// Pose CSV `t,px,py,pz,qx,qy,qz,qw`.
    #[arg(long)]
    pub poses: PathBuf,
    /// EVDEPTH maps; the one closest to `--t0` is used.
    #[arg(long, required = true, num_args = 1..)]
    pub depth: Vec<PathBuf>,
    /// Camera JSON.
    #[arg(long)]
    pub camera: PathBuf,
    #[arg(long)]
    pub t0: u64,
    #[arg(long)]
    pub t1: u64,
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value_t = ConventionArg::Standard)]
    pub convention: ConventionArg,
    /// Velocity moving-average half-width, in intervals.
    #[arg(long, default_value_t = 5)]
    pub smooth_halfwidth: usize,
    /// Largest depth-to-t0 gap, microseconds.
    #[arg(long, default_value_t = 10_000)]
    pub depth_tolerance: u64,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    pub pred: PathBuf,
    pub gt: PathBuf,
    /// Event CSV; only pixels with an event are evaluated.
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Restrict the events to `[t_start, t_end)`.
    #[arg(long, requires = "events")]
    pub t_start: Option<u64>,
    #[arg(long, requires = "events")]
    pub t_end: Option<u64>,
    /// Ignore this many pixels along each image edge.
    #[arg(long, default_value_t = 0)]
    pub border: usize,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthCase {
    Shift,
    EdgeSweep,
    Orbit,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub case: SynthCase,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory that receives the fixture files.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Image width (shift, edge-sweep, orbit).
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    /// Shift: displacement in pixels.
    #[arg(long, default_value_t = 3.0, allow_negative_numbers = true)]
    pub dx: f64,
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    pub dy: f64,
    /// Edge-sweep: edge speed in px/s.
    #[arg(long, default_value_t = 20.0)]
    pub speed: f64,
    /// Edge-sweep: uniform timestamp jitter amplitude, microseconds.
    #[arg(long, default_value_t = 0)]
    pub jitter: u64,
    /// Orbit: circle radius, meters.
    #[arg(long, default_value_t = 0.5)]
    pub radius: f64,
    /// Orbit: angular rate along the circle, rad/s.
    #[arg(long, default_value_t = 3.0, allow_negative_numbers = true)]
    pub rate: f64,
    /// Orbit: depth of the fronto-parallel plane, meters.
    #[arg(long, default_value_t = 3.0)]
    pub plane_depth: f64,
    #[arg(long, default_value_t = 80.0)]
    pub focal: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub k1: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub k2: f64,
    /// Orbit: flow interval, microseconds.
    #[arg(long, default_value_t = 500_000)]
    pub t0: u64,
    #[arg(long, default_value_t = 550_000)]
    pub t1: u64,
}

#[derive(Args, Debug)]
pub struct SelfcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot configure threads: {e}")))?;
    }
    match cli.command {
        Command::Encode(a) => commands::encode(&a),
        Command::Loss(a) => commands::loss(&a),
        Command::EstimateVar(a) => commands::estimate_var(&a),
        Command::EstimatePlanefit(a) => commands::estimate_planefit(&a),
        Command::Gtflow(a) => commands::gtflow(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Synth(a) => synth::run(&a),
        Command::Selfcheck(a) => selfcheck::run(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
