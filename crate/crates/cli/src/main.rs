//! `crackseq`: generate, ingest, build, train, eval, infer, report.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::parser::ValueSource;
use clap::{ArgMatches, CommandFactory, FromArgMatches, Parser, Subcommand};
use crackseq::trainer::Experiment;

/// Environment variable naming the default data directory.
pub const DATA_ENV: &str = "CRACKSEQ_DATA";

#[derive(Parser, Debug)]
#[command(name = "crackseq", version, about = "Mono- vs multi-temporal crack segmentation pipeline")]
pub struct Cli {
    /// TOML config file; flags given explicitly override its values
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Threads for data-parallel stages
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Render synthetic scene sequences
    Generate(GenerateArgs),
    /// Copy a real dataset (frame_/mask_ or images/ + masks/ layout) into scene directories
    Ingest(IngestArgs),
    /// Clean, pad, cut, balance and split scenes into a dataset manifest
    Build(BuildArgs),
    /// Train one experiment and evaluate it on the test split
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset split
    Eval(EvalArgs),
    /// Tiled whole-scene inference
    Infer(InferArgs),
    /// Comparison table, curves and sequence strips for finished runs
    Report(ReportArgs),
}

#[derive(clap::Args, Debug)]
pub struct GenerateArgs {
    /// Output directory for scene_<id> folders
    #[arg(long, env = DATA_ENV)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub scenes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 512)]
    pub width: usize,
    #[arg(long, default_value_t = 512)]
    pub height: usize,
    /// Frames (load epochs) per scene
    #[arg(long, default_value_t = 25)]
    pub epochs: usize,
    /// Crack trees per scene
    #[arg(long, default_value_t = 3)]
    pub crack_seeds: usize,
    /// Size factor for distractors (shrink for scenes much smaller than 512 px)
    #[arg(long, default_value_t = 1.0)]
    pub distractor_scale: f64,
}

#[derive(clap::Args, Debug)]
pub struct IngestArgs {
    /// Source directory with one folder per scene (or a single scene)
    #[arg(long)]
    pub src: PathBuf,
    #[arg(long, env = DATA_ENV)]
    pub out: PathBuf,
}

#[derive(clap::Args, Debug)]
pub struct BuildArgs {
    /// Directory holding the scenes; the manifest is written here
    #[arg(long, env = DATA_ENV)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 128)]
    pub patch: usize,
    /// Frames per sequence after padding
    #[arg(long, default_value_t = 32)]
    pub seq_len: usize,
    /// Crack samples kept per crack-free sample
    #[arg(long, default_value_t = 2.0)]
    pub balance_ratio: f64,
    /// Seed for balancing and splitting
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write every patch sequence as PNGs
    #[arg(long)]
    pub materialize: bool,
    /// Reference statistics: `table1` or a JSON expectation file
    #[arg(long)]
    pub expect: Option<String>,
    /// Exit with status 3 if any expectation check fails
    #[arg(long)]
    pub strict: bool,
    /// Write the built statistics as a JSON expectation file
    #[arg(long)]
    pub write_golden: Option<PathBuf>,
}

fn parse_experiment(s: &str) -> Result<Experiment, String> {
    s.parse::<Experiment>().map_err(|e| e.to_string())
}

#[derive(clap::Args, Debug)]
pub struct TrainArgs {
    #[arg(long, env = DATA_ENV)]
    pub data: PathBuf,
    /// Experiment tag: BL-mono, BL-multi, 1, 2 or 3
    #[arg(long, value_parser = parse_experiment)]
    pub exp: Experiment,
    /// Run directory (default: runs/<tag>)
    #[arg(long)]
    pub run: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 4)]
    pub batch_size: usize,
    /// Samples per forward/backward pass; gradients accumulate to the batch size
    #[arg(long, default_value_t = 4)]
    pub micro_batch: usize,
    #[arg(long, default_value_t = 20)]
    pub patience: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Swin-UNETR feature size
    #[arg(long, default_value_t = 24)]
    pub feature_size: usize,
    /// Swin-UNETR attention window
    #[arg(long, default_value_t = 7)]
    pub window_size: usize,
    /// U-Net encoder widths
    #[arg(long, value_delimiter = ',', default_value = "64,128,256,512,1024")]
    pub unet_widths: Vec<usize>,
}

#[derive(clap::Args, Debug)]
pub struct EvalArgs {
    /// Run directory; supplies the data root and best.ckpt
    #[arg(long)]
    pub run: Option<PathBuf>,
    /// Checkpoint (overrides the run's best.ckpt)
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    #[arg(long, env = DATA_ENV)]
    pub data: Option<PathBuf>,
    /// train, val or test
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Report path (default: <run>/report.json, or report.json)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
pub struct InferArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Scene directory
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 128)]
    pub patch: usize,
    /// Frames the scene is padded to (sequence models)
    #[arg(long, default_value_t = 32)]
    pub seq_len: usize,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
}

#[derive(clap::Args, Debug)]
pub struct ReportArgs {
    /// Run directories
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long, default_value = "report")]
    pub out: PathBuf,
    /// Dataset for sequence strips (needs one mono and one multi run)
    #[arg(long, env = DATA_ENV)]
    pub data: Option<PathBuf>,
}

/// True if `id` was set on the command line or through the environment.
pub fn given(m: &ArgMatches, id: &str) -> bool {
    matches!(m.value_source(id), Some(ValueSource::CommandLine | ValueSource::EnvVariable))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).format_timestamp(None).init();
    let matches = Cli::command().get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let sub = matches.subcommand().map(|(_, m)| m.clone()).expect("subcommand is required");
    match commands::run(cli, &sub) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
