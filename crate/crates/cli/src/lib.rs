//! The `hrrp` command-line tool: simulate, train, generate, evaluate and
//! analyze, each writing plot-ready CSV/JSON next to its resolved config.

pub mod commands;
pub mod config;
pub mod generated;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use hrrp_core::dataset::Split;
use hrrp_core::nn::Conditioning;
use hrrp_core::training::ModelKind;

pub use config::{ConfigError, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "hrrp", version, about = "Synthetic HRRP simulation, generative models and evaluation")]
pub struct Cli {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Require bit-reproducible output.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Directory for every artifact of this run.
    #[arg(long, global = true, default_value = "hrrp-out")]
    pub out_dir: PathBuf,
    /// Override one config key, e.g. `--set ddpm.guidance=2`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the fleet and write train/val/test datasets with the split manifest.
    Simulate,
    /// Train a DDPM or WGAN on a simulated dataset.
    Train(TrainArgs),
    /// Generate one profile per condition from a checkpoint.
    Generate(GenerateArgs),
    /// Score generated profiles against real ones.
    Evaluate(EvaluateArgs),
    /// Per-ship LRP and TLOP curves.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory written by `simulate`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub conditioning: Option<String>,
    #[arg(long)]
    pub steps: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// CSV with columns length,width,aspect_angle[,ship_id].
    #[arg(long, conflicts_with = "dataset")]
    pub conditions: Option<PathBuf>,
    /// Take the conditions of a simulated split instead.
    #[arg(long, required_unless_present = "conditions")]
    pub dataset: Option<PathBuf>,
    #[arg(long, default_value = "test", value_parser = parse_split)]
    pub split: Split,
    /// Use at most this many evenly spaced records of the split.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Generated manifest or dataset `*.meta.jsonl`; repeat for several models.
    #[arg(long, required = true)]
    pub generated: Vec<PathBuf>,
    /// Directory written by `simulate`.
    #[arg(long)]
    pub real: PathBuf,
    #[arg(long, default_value = "test", value_parser = parse_split)]
    pub split: Split,
    /// Aspect neighborhood half-width in degrees.
    #[arg(long)]
    pub delta: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Dataset `*.meta.jsonl` or generated manifest.
    #[arg(long)]
    pub input: PathBuf,
}

fn parse_split(s: &str) -> Result<Split, String> {
    match s {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        _ => Err(format!("unknown split {s:?} (expected train, val or test)")),
    }
}

pub fn split_name(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Val => "val",
        Split::Test => "test",
    }
}

/// Fold the config file, global flags and per-command flags into one config.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, ConfigError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    for kv in &cli.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.deterministic {
        cfg.deterministic = true;
    }
    if let Command::Train(t) = &cli.command {
        if let Some(m) = &t.model {
            cfg.model = m.parse::<ModelKind>().map_err(|e| ConfigError(format!("--model: {e}")))?;
        }
        if let Some(c) = &t.conditioning {
            cfg.conditioning = c.parse::<Conditioning>().map_err(|e| ConfigError(format!("--conditioning: {e}")))?;
        }
        if let Some(s) = t.steps {
            cfg.steps = s;
        }
    }
    if let Command::Evaluate(e) = &cli.command {
        if let Some(d) = e.delta {
            cfg.eval_delta = d;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Run the tool on `args` (including the program name) and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let cfg = match resolve_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    match commands::dispatch(&cli, &cfg) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                EXIT_CONFIG
            } else {
                EXIT_RUNTIME
            }
        }
    }
}
