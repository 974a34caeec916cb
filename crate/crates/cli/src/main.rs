//! Command-line front end for the graph-VAE library.
//!
//! Every subcommand reads one experiment file (TOML, see
//! [`rgvae::ExperimentConfig`]) and writes a run manifest next to its primary
//! output that records the full effective configuration and the library
//! version, so any artifact can be traced back to the exact settings that
//! produced it. Command-line flags override the corresponding config fields;
//! unset output paths default to `$RGVAE_OUT_DIR` (or the working
//! directory).
//!
//! Exit codes distinguish the failure classes: 2 for bad flags, 3 for
//! unreadable or inconsistent input files, 4 for failures during the actual
//! work (including a training run that aborted on a non-finite loss).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rgvae::eval::MatchMode;
use rgvae::oracles::Task;
use rgvae::penalties::RegWeights;

mod commands;

#[derive(Parser)]
#[command(
    name = "rgvae",
    version,
    about = "Generate graph datasets, train regularized graph VAEs, and score the results"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and its manifest.
    GenData(GenDataArgs),
    /// Insert edges between incompatible nodes of an existing dataset.
    Corrupt(CorruptArgs),
    /// Train a model, writing checkpoints and a training log.
    Train(TrainArgs),
    /// Score a checkpoint: validity, novelty, reconstruction, denoising.
    Eval(EvalArgs),
    /// Decode posterior means of a corrupted set and report validity.
    Denoise(DenoiseArgs),
    /// Decode a walk through latent space to DOT files.
    Walk(WalkArgs),
    /// Check a dataset against the exact validity rules.
    Check(CheckArgs),
}

/// Task names as spelled on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TaskArg {
    /// Node-compatibility rules on generic labeled graphs.
    Compat,
    /// Valence and connectivity rules on molecule-like graphs.
    Molecule,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Task {
        match t {
            TaskArg::Compat => Task::NodeCompatible,
            TaskArg::Molecule => Task::Molecular,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MatchModeArg {
    Canonical,
    TensorExact,
}

impl From<MatchModeArg> for MatchMode {
    fn from(m: MatchModeArg) -> MatchMode {
        match m {
            MatchModeArg::Canonical => MatchMode::Canonical,
            MatchModeArg::TensorExact => MatchMode::TensorExact,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WalkModeArg {
    /// Two-direction grid around one anchor graph.
    Grid,
    /// Straight line between two anchor graphs.
    Interp,
}

/// `--reg-weights 0` disables regularization; `--reg-weights v,c,k` sets the
/// valence, connectivity and compatibility weights.
fn parse_reg_weights(s: &str) -> Result<RegWeights, String> {
    let parts: Vec<&str> = s.split(',').collect();
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    let weights = match nums.as_slice() {
        [z] if *z == 0.0 => RegWeights::none(),
        [v, c, k] => RegWeights {
            valence: *v,
            connectivity: *c,
            compatibility: *k,
        },
        _ => return Err("expected 0 or three comma-separated weights v,c,k".into()),
    };
    weights.validate()?;
    Ok(weights)
}

/// A fixed count `K` or an inclusive range `LO-HI`.
fn parse_insertions(s: &str) -> Result<(usize, usize), String> {
    let parse = |p: &str| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}"));
    let (lo, hi) = match s.split_once('-') {
        Some((lo, hi)) => (parse(lo)?, parse(hi)?),
        None => {
            let k = parse(s)?;
            (k, k)
        }
    };
    if lo > hi {
        return Err(format!("range {lo}-{hi} is decreasing"));
    }
    Ok((lo, hi))
}

#[derive(Args)]
struct GenDataArgs {
    /// Experiment description (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the task named in the config.
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
    /// Dataset file to write (default `data.jsonl` in the output directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the generation seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of graphs.
    #[arg(long)]
    count: Option<usize>,
}

#[derive(Args)]
struct CorruptArgs {
    /// Experiment description (TOML); supplies the compatibility matrix.
    #[arg(long)]
    config: PathBuf,
    /// Dataset to corrupt.
    #[arg(long = "in")]
    input: PathBuf,
    /// Incompatible edges to insert per graph: a count `K` or a range
    /// `LO-HI`.
    #[arg(long, value_parser = parse_insertions)]
    insertions: Option<(usize, usize)>,
    /// Override the corruption seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Corrupted dataset file to write (default `corrupted.jsonl`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Experiment description (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Training dataset.
    #[arg(long)]
    data: PathBuf,
    /// Directory for the checkpoint, training log and manifest (default
    /// `run/` in the output directory).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Override the training seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the regularizer weights: `0` to disable, or `v,c,k`.
    #[arg(long, value_parser = parse_reg_weights)]
    reg_weights: Option<RegWeights>,
    /// Override the epoch count.
    #[arg(long)]
    epochs: Option<usize>,
    /// Suppress per-epoch progress on standard error.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Experiment description (TOML); supplies the evaluation protocol.
    #[arg(long)]
    config: PathBuf,
    /// Checkpoint to score.
    #[arg(long)]
    ckpt: PathBuf,
    /// Dataset used as the novelty reference and, unless `--holdout` is
    /// given, as the reconstruction set.
    #[arg(long)]
    data: PathBuf,
    /// Separate holdout set for reconstruction.
    #[arg(long)]
    holdout: Option<PathBuf>,
    /// Corrupted set for the denoising metric.
    #[arg(long)]
    corrupted: Option<PathBuf>,
    /// Comma-separated subset of valid,novel,recon,denoise (default:
    /// valid,novel,recon).
    #[arg(long)]
    metrics: Option<String>,
    /// Override the evaluation seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of prior samples.
    #[arg(long)]
    n_samples: Option<usize>,
    /// Override how decoded graphs are matched against references.
    #[arg(long, value_enum)]
    match_mode: Option<MatchModeArg>,
    /// Report file to write (default `eval-report.json`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DenoiseArgs {
    /// Experiment description (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Checkpoint to decode with.
    #[arg(long)]
    ckpt: PathBuf,
    /// Corrupted dataset to clean up.
    #[arg(long)]
    data: PathBuf,
    /// Report file to write (default `denoise-report.json`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct WalkArgs {
    /// Experiment description (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Checkpoint to decode with.
    #[arg(long)]
    ckpt: PathBuf,
    /// Dataset supplying the anchor graphs.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    mode: WalkModeArg,
    /// Steps per direction (grid) or along the line (interp); default 8.
    #[arg(long)]
    steps: Option<usize>,
    /// Latent distance between neighboring grid points; default 0.5.
    #[arg(long)]
    step_size: Option<f64>,
    /// Index of the anchor graph in the dataset (default 0).
    #[arg(long)]
    anchor: Option<usize>,
    /// Index of the second anchor for interp mode (default 1).
    #[arg(long)]
    anchor_b: Option<usize>,
    /// Override the direction-sampling seed (grid mode).
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for the DOT files and index (default `walk/`).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    /// Experiment description (TOML); supplies schema and constraints.
    #[arg(long)]
    config: PathBuf,
    /// Dataset to check.
    #[arg(long)]
    data: PathBuf,
    /// Override the task named in the config.
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
    /// Report file to write (default `check-report.json`).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    // Clap itself exits with code 2 on unparsable flags.
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(args) => commands::gen_data(args),
        Command::Corrupt(args) => commands::corrupt(args),
        Command::Train(args) => commands::train(args),
        Command::Eval(args) => commands::eval(args),
        Command::Denoise(args) => commands::denoise(args),
        Command::Walk(args) => commands::walk(args),
        Command::Check(args) => commands::check(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
