//! The `mvseg` command line: generate data, estimate motion, run schemes,
//! evaluate, benchmark, and report curves.
//!
//! Every run writes a manifest with its resolved settings; passing it back
//! through `--config` replays the run.

mod commands;
mod settings;

use std::ops::RangeInclusive;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::frame_io::SequenceFormat;
use crate::parallel::init_thread_pool;
use crate::pipeline::Scheme;

pub use commands::{
    feature_path, merge_manifests, rotating_eval, run_dir_name, seg_path, EncodeSummary,
    EvalReport, MotionStats, RunManifest, CURVE_FILE, FUSION_FILE, HEAD_FILE, MANIFEST_FILE,
    MOTION_SUMMARY_FILE, SCENE_FILE,
};
pub use settings::{PartialSettings, Settings, SettingsArgs};

/// Caps rayon's worker count.
pub const THREADS_ENV: &str = "MVSEG_THREADS";

#[derive(Parser, Debug)]
#[command(
    name = "mvseg",
    version,
    about = "Block-motion feature propagation for video segmentation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Render a synthetic sequence with ground-truth labels.
    Synth(SynthArgs),
    /// Estimate forward and backward block motion sidecars.
    Encode(EncodeArgs),
    /// Run one scheme at one keyframe interval.
    Run(RunArgs),
    /// Average and minimum mIoU over rotating keyframe offsets.
    Eval(EvalArgs),
    /// Sweep intervals and schemes, writing one run per point and a curve.
    Bench(BenchArgs),
    /// Merge run manifests into a curve CSV.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Scene description (JSON); the standard scene when absent.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "ppm")]
    pub format: SequenceFormat,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EncodeArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Sidecar directory; defaults to the input directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    pub block_size: usize,
    #[arg(long, default_value_t = 16)]
    pub radius: usize,
    /// Skip the frame i -> i+1 maps.
    #[arg(long)]
    pub no_backward: bool,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Sidecar directory; motion is estimated up front when absent.
    #[arg(long)]
    pub motion: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub scheme: Option<Scheme>,
    #[arg(long)]
    pub interval: Option<usize>,
    /// Use a saved task head instead of fitting one.
    #[arg(long)]
    pub head: Option<PathBuf>,
    /// Write each frame's features as `feat_%06d.fmap`.
    #[arg(long)]
    pub dump_features: bool,
    #[command(flatten)]
    pub settings: SettingsArgs,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub motion: Option<PathBuf>,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub scheme: Option<Scheme>,
    #[arg(long)]
    pub interval: Option<usize>,
    #[command(flatten)]
    pub settings: SettingsArgs,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub motion: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Keyframe intervals, `a..b` inclusive or a single value.
    #[arg(long, value_parser = parse_sweep, default_value = "1..10")]
    pub sweep: RangeInclusive<usize>,
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "baseline,prop,interp"
    )]
    pub schemes: Vec<Scheme>,
    #[command(flatten)]
    pub settings: SettingsArgs,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Manifest files or directories holding them (one level deep).
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `a..b`, `a..=b` or `a`.
pub fn parse_sweep(s: &str) -> std::result::Result<RangeInclusive<usize>, String> {
    let num = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|e| format!("bad interval {t:?}: {e}"))
    };
    let (lo, hi) = match s.split_once("..") {
        Some((a, b)) => (num(a)?, num(b.strip_prefix('=').unwrap_or(b))?),
        None => {
            let v = num(s)?;
            (v, v)
        }
    };
    if lo == 0 || hi < lo {
        return Err(format!(
            "sweep {s:?} must be a nonempty range of positive intervals"
        ));
    }
    Ok(lo..=hi)
}

/// Process exit status for an error: 3 for malformed data, 2 otherwise.
pub fn exit_code(err: &Error) -> u8 {
    if err.is_data_format() {
        3
    } else {
        2
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    match v.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            init_thread_pool(n);
            Ok(())
        }
        _ => Err(Error::InvalidArgument(format!(
            "{THREADS_ENV} must be a positive integer, got {v:?}"
        ))),
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    configure_threads()?;
    match &cli.command {
        Command::Synth(a) => commands::cmd_synth(a),
        Command::Encode(a) => commands::cmd_encode(a),
        Command::Run(a) => commands::cmd_run(a),
        Command::Eval(a) => commands::cmd_eval(a),
        Command::Bench(a) => commands::cmd_bench(a),
        Command::Report(a) => commands::cmd_report(a),
    }
}
