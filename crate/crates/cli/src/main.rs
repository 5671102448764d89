mod commands;
mod config;
mod overlay;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Tracking fast moving objects by deblatting.
#[derive(Parser, Debug)]
#[command(name = "tbd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic sequence with ground truth.
    Synth(SynthArgs),
    /// Track an object through a directory of frames.
    Track(TrackArgs),
    /// Score predictions against ground truth.
    Eval(EvalArgs),
    /// Fit a trajectory to a blur kernel image.
    Fitpsf(FitpsfArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output directory; receives frames/, truth.csv and config.json.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON synthesis configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// JSON sequence description to render instead of a generated one.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Object speed of the generated sequence, pixels per frame.
    #[arg(long)]
    pub speed: Option<f64>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Args, Debug)]
pub struct TrackArgs {
    /// Directory of frame_*.png files.
    pub frames: Option<PathBuf>,
    /// Output directory; receives trajectory.jsonl, overlays/ and config.json.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// RGBA template image; implies a fixed model unless --gamma is given.
    #[arg(long)]
    pub template: Option<PathBuf>,
    /// Clean background image that replaces the warm-up.
    #[arg(long)]
    pub background: Option<PathBuf>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write the estimated blur, appearance and mask of every frame.
    #[arg(long)]
    pub debug_dumps: bool,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Tracker output (JSON lines), or with --baseline-points a CSV of
    /// frame_index,x,y positions.
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth CSV.
    #[arg(long)]
    pub truth: PathBuf,
    /// Report JSON path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub baseline_points: bool,
    /// Ignore the first N ground-truth frames.
    #[arg(long, default_value_t = 0)]
    pub skip: usize,
}

#[derive(Args, Debug)]
pub struct FitpsfArgs {
    /// Grayscale blur kernel image.
    pub psf: PathBuf,
    /// Output directory; receives curve.json, residual.png and overlay.png.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Track(a) => commands::track(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Fitpsf(a) => commands::fitpsf(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
