//! Subcommand implementations: load the config, apply flag overrides,
//! resolve defaults, do the work, and leave a run manifest behind.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;

use rgvae::config::{Experiment, ExperimentConfig};
use rgvae::datagen::{
    corrupt_with_incompatible_edges, gen_node_compatible, gen_toy_molecules, DatasetManifest,
};
use rgvae::dataset::{read_dataset, write_dataset};
use rgvae::eval::{denoise_eval, latent_walk_grid, latent_walk_interp, run_eval, EvalInputs};
use rgvae::graph::GraphOneHot;
use rgvae::oracles::{
    check_compatibility, check_connectivity, check_valence, ghosts_isolated, is_valid, Task,
};
use rgvae::trainer::{self, TrainError};
use rgvae::vae::{Checkpoint, Vae};

use crate::{
    CheckArgs, CorruptArgs, DenoiseArgs, EvalArgs, GenDataArgs, TrainArgs, WalkArgs, WalkModeArg,
};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "RGVAE_OUT_DIR";

/// Failure classes, each with its own exit code.
#[derive(Debug)]
pub enum CliError {
    /// Flags that parsed but do not make sense together (exit 2).
    Usage(String),
    /// Unreadable or internally inconsistent input files (exit 3).
    Data(String),
    /// Failures while doing the actual work (exit 4).
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

fn data_err(e: impl fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn runtime_err(e: impl fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Training failures split by class: broken inputs are data errors, broken
/// runs are runtime errors.
fn train_err(e: TrainError) -> CliError {
    match e {
        TrainError::Config(_) | TrainError::EmptyDataset | TrainError::SchemaMismatch { .. } => {
            data_err(e)
        }
        _ => runtime_err(e),
    }
}

fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Flag value if given, otherwise `name` inside the default output
/// directory.
fn resolve_out(flag: Option<PathBuf>, name: &str) -> PathBuf {
    flag.unwrap_or_else(|| default_out_dir().join(name))
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| runtime_err(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    Ok(())
}

/// What every run leaves behind: which command ran, with which library
/// version and effective configuration, on which inputs, producing which
/// outputs.
#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'static str,
    version: &'static str,
    /// Seed of the random stream this command consumed, if it used one.
    seed: Option<u64>,
    inputs: Vec<String>,
    outputs: Vec<String>,
    config: &'a Experiment,
}

impl<'a> RunManifest<'a> {
    fn new(command: &'static str, seed: Option<u64>, config: &'a Experiment) -> Self {
        RunManifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            config,
        }
    }

    fn input(mut self, path: &Path) -> Self {
        self.inputs.push(path.display().to_string());
        self
    }

    fn output(mut self, path: &Path) -> Self {
        self.outputs.push(path.display().to_string());
        self
    }

    fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text)
            .map_err(|e| runtime_err(format!("cannot write {}: {e}", path.display())))
    }
}

/// Sidecar path for a primary output file: `data.jsonl` gets
/// `data.jsonl.run.json`.
fn run_manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".run.json");
    PathBuf::from(name)
}

fn dataset_manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    ExperimentConfig::load(path).map_err(data_err)
}

fn load_checkpoint(path: &Path) -> Result<(Checkpoint, Vae), CliError> {
    let ckpt = Checkpoint::load(path).map_err(data_err)?;
    let vae = ckpt.restore().map_err(data_err)?;
    Ok((ckpt, vae))
}

fn load_graphs(path: &Path, exp: &Experiment) -> Result<Vec<GraphOneHot>, CliError> {
    read_dataset(path, exp.schema()).map_err(data_err)
}

pub fn gen_data(args: GenDataArgs) -> Result<(), CliError> {
    let mut raw = load_config(&args.config)?;
    if let Some(task) = args.task {
        raw.task = task.into();
    }
    if let Some(count) = args.count {
        raw.data.count = count;
    }
    if let Some(seed) = args.seed {
        raw.data.seed = seed;
    }
    let exp = raw.resolve().map_err(data_err)?;
    let seed = exp.data.seed;

    let (graphs, manifest) = match exp.task {
        Task::NodeCompatible => {
            let recipe = exp.node_compatible_recipe();
            let graphs = gen_node_compatible(&recipe, seed).map_err(data_err)?;
            (graphs, DatasetManifest::NodeCompatible { recipe, seed })
        }
        Task::Molecular => {
            let recipe = exp.toy_molecule_recipe();
            let graphs = gen_toy_molecules(&recipe, seed).map_err(data_err)?;
            (graphs, DatasetManifest::ToyMolecules { recipe, seed })
        }
    };

    let out = resolve_out(args.out, "data.jsonl");
    ensure_parent(&out)?;
    write_dataset(&out, &graphs).map_err(runtime_err)?;
    let sidecar = dataset_manifest_path(&out);
    manifest.save(&sidecar).map_err(runtime_err)?;
    RunManifest::new("gen-data", Some(seed), &exp)
        .input(&args.config)
        .output(&out)
        .output(&sidecar)
        .write(&run_manifest_path(&out))?;
    println!("wrote {} graphs to {}", graphs.len(), out.display());
    Ok(())
}

pub fn corrupt(args: CorruptArgs) -> Result<(), CliError> {
    let mut raw = load_config(&args.config)?;
    if let Some(insertions) = args.insertions {
        raw.data.insertions = insertions;
    }
    if let Some(seed) = args.seed {
        raw.data.seed = seed;
    }
    let exp = raw.resolve().map_err(data_err)?;
    let seed = exp.data.seed;

    let input = load_graphs(&args.input, &exp)?;
    let recipe = exp.corruption_recipe();
    let corrupted = corrupt_with_incompatible_edges(&input, &recipe, seed).map_err(data_err)?;

    let out = resolve_out(args.out, "corrupted.jsonl");
    ensure_parent(&out)?;
    write_dataset(&out, &corrupted).map_err(runtime_err)?;
    let sidecar = dataset_manifest_path(&out);
    DatasetManifest::Corrupted {
        recipe,
        seed,
        source: args.input.display().to_string(),
    }
    .save(&sidecar)
    .map_err(runtime_err)?;
    RunManifest::new("corrupt", Some(seed), &exp)
        .input(&args.config)
        .input(&args.input)
        .output(&out)
        .output(&sidecar)
        .write(&run_manifest_path(&out))?;
    println!("corrupted {} graphs into {}", corrupted.len(), out.display());
    Ok(())
}

pub fn train(args: TrainArgs) -> Result<(), CliError> {
    let mut raw = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        raw.train.seed = seed;
    }
    if let Some(weights) = args.reg_weights {
        raw.train.weights = weights;
    }
    if let Some(epochs) = args.epochs {
        raw.train.epochs = epochs;
    }
    let exp = raw.resolve().map_err(data_err)?;

    let dataset = load_graphs(&args.data, &exp)?;
    let out_dir = args
        .out_dir
        .unwrap_or_else(|| default_out_dir().join("run"));
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| runtime_err(format!("cannot create {}: {e}", out_dir.display())))?;

    // Written before training so even an aborted run is traceable.
    RunManifest::new("train", Some(exp.train.seed), &exp)
        .input(&args.config)
        .input(&args.data)
        .output(&out_dir.join("checkpoint.json"))
        .output(&out_dir.join("train_log.jsonl"))
        .write(&out_dir.join("run-manifest.json"))?;

    let outcome = trainer::train(&dataset, &exp.train_setup(), Some(&out_dir), !args.quiet)
        .map_err(train_err)?;

    if let Some(last) = outcome.log.last() {
        println!(
            "epoch {}: loss {:.6}, probe validity {:.1}%",
            last.epoch,
            last.loss,
            100.0 * last.probe_valid
        );
    }
    if let Some(path) = &outcome.checkpoint_path {
        println!("checkpoint at {}", path.display());
    }
    match outcome.aborted {
        Some(reason) => Err(CliError::Runtime(format!(
            "training aborted ({reason}); checkpoint holds the last finite parameters"
        ))),
        None => Ok(()),
    }
}

/// Which metrics an `eval` run should compute. Validity is always on; the
/// others depend on which datasets are available.
struct MetricSet {
    novel: bool,
    recon: bool,
    denoise: bool,
}

fn parse_metrics(list: Option<&str>) -> Result<MetricSet, CliError> {
    let mut set = MetricSet {
        novel: false,
        recon: false,
        denoise: false,
    };
    let Some(list) = list else {
        return Ok(MetricSet {
            novel: true,
            recon: true,
            denoise: false,
        });
    };
    for name in list.split(',') {
        match name.trim() {
            "valid" => {}
            "novel" => set.novel = true,
            "recon" => set.recon = true,
            "denoise" => set.denoise = true,
            other => {
                return Err(CliError::Usage(format!(
                    "unknown metric {other:?}; expected valid, novel, recon or denoise"
                )))
            }
        }
    }
    Ok(set)
}

pub fn eval(args: EvalArgs) -> Result<(), CliError> {
    let mut raw = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        raw.eval.seed = seed;
    }
    if let Some(n) = args.n_samples {
        raw.eval.n_samples = n;
    }
    if let Some(mode) = args.match_mode {
        raw.eval.match_mode = mode.into();
    }
    let exp = raw.resolve().map_err(data_err)?;
    let metrics = parse_metrics(args.metrics.as_deref())?;
    if metrics.denoise && args.corrupted.is_none() {
        return Err(CliError::Usage(
            "the denoise metric needs --corrupted FILE".into(),
        ));
    }

    let (ckpt, vae) = load_checkpoint(&args.ckpt)?;
    if ckpt.config.schema != exp.schema() {
        return Err(data_err(format!(
            "checkpoint schema {:?} does not match the config schema {:?}",
            ckpt.config.schema,
            exp.schema()
        )));
    }

    let dataset = load_graphs(&args.data, &exp)?;
    let holdout = match &args.holdout {
        Some(path) => Some(load_graphs(path, &exp)?),
        None => None,
    };
    let corrupted = match &args.corrupted {
        Some(path) => Some(load_graphs(path, &exp)?),
        None => None,
    };
    let inputs = EvalInputs {
        training: metrics.novel.then_some(dataset.as_slice()),
        holdout: metrics
            .recon
            .then(|| holdout.as_deref().unwrap_or(dataset.as_slice())),
        corrupted: if metrics.denoise {
            corrupted.as_deref()
        } else {
            None
        },
    };

    // The checkpoint knows which task and constraints it was trained
    // against; the config only supplies the scoring protocol.
    let report = run_eval(
        &vae,
        &ckpt.constraint,
        ckpt.weights,
        ckpt.task,
        &exp.eval,
        &inputs,
    )
    .map_err(runtime_err)?;

    let out = resolve_out(args.out, "eval-report.json");
    ensure_parent(&out)?;
    report.save(&out).map_err(runtime_err)?;
    let mut manifest = RunManifest::new("eval", Some(exp.eval.seed), &exp)
        .input(&args.config)
        .input(&args.ckpt)
        .input(&args.data);
    if let Some(path) = &args.holdout {
        manifest = manifest.input(path);
    }
    if let Some(path) = &args.corrupted {
        manifest = manifest.input(path);
    }
    manifest.output(&out).write(&run_manifest_path(&out))?;

    println!("valid: {:.1}%", report.percent_valid);
    if let Some(v) = report.percent_novel {
        println!("novel: {v:.1}%");
    }
    if let Some(v) = report.percent_recon {
        println!("reconstructed: {v:.1}%");
    }
    if let Some(v) = report.percent_denoise {
        println!("denoised to valid: {v:.1}%");
    }
    println!("report at {}", out.display());
    Ok(())
}

#[derive(Serialize)]
struct DenoiseReport {
    n_graphs: usize,
    percent_valid: f64,
}

pub fn denoise(args: DenoiseArgs) -> Result<(), CliError> {
    let exp = load_config(&args.config)?.resolve().map_err(data_err)?;
    let (ckpt, vae) = load_checkpoint(&args.ckpt)?;
    let corrupted = load_graphs(&args.data, &exp)?;

    let percent = denoise_eval(&vae, &corrupted, &ckpt.constraint, ckpt.task)
        .map_err(runtime_err)?;

    let out = resolve_out(args.out, "denoise-report.json");
    ensure_parent(&out)?;
    let report = DenoiseReport {
        n_graphs: corrupted.len(),
        percent_valid: percent,
    };
    std::fs::write(&out, serde_json::to_string_pretty(&report).expect("report serializes"))
        .map_err(|e| runtime_err(format!("cannot write {}: {e}", out.display())))?;
    RunManifest::new("denoise", None, &exp)
        .input(&args.config)
        .input(&args.ckpt)
        .input(&args.data)
        .output(&out)
        .write(&run_manifest_path(&out))?;
    println!(
        "decoded posterior means of {} input graphs: {percent:.1}% valid",
        corrupted.len()
    );
    Ok(())
}

pub fn walk(args: WalkArgs) -> Result<(), CliError> {
    let mut raw = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        raw.eval.seed = seed;
    }
    let exp = raw.resolve().map_err(data_err)?;
    let (ckpt, vae) = load_checkpoint(&args.ckpt)?;
    let dataset = load_graphs(&args.data, &exp)?;

    let anchor_at = |index: usize| -> Result<&GraphOneHot, CliError> {
        dataset.get(index).ok_or_else(|| {
            data_err(format!(
                "anchor index {index} is out of range for {} graphs",
                dataset.len()
            ))
        })
    };
    let steps = args.steps.unwrap_or(8);

    let (points, prefix) = match args.mode {
        WalkModeArg::Grid => {
            let anchor = anchor_at(args.anchor.unwrap_or(0))?;
            let step_size = args.step_size.unwrap_or(0.5);
            let points = latent_walk_grid(
                &vae,
                anchor,
                steps,
                step_size,
                &ckpt.constraint,
                ckpt.task,
                exp.eval.seed,
            )
            .map_err(runtime_err)?;
            (points, "grid")
        }
        WalkModeArg::Interp => {
            let from = anchor_at(args.anchor.unwrap_or(0))?;
            let to = anchor_at(args.anchor_b.unwrap_or(1))?;
            let points = latent_walk_interp(&vae, from, to, steps, &ckpt.constraint, ckpt.task)
                .map_err(runtime_err)?;
            (points, "interp")
        }
    };

    let out_dir = args
        .out_dir
        .unwrap_or_else(|| default_out_dir().join("walk"));
    rgvae::eval::export_walk(&points, &out_dir, prefix).map_err(runtime_err)?;
    RunManifest::new("walk", Some(exp.eval.seed), &exp)
        .input(&args.config)
        .input(&args.ckpt)
        .input(&args.data)
        .output(&out_dir)
        .write(&out_dir.join("run-manifest.json"))?;

    let valid = points.iter().filter(|p| p.valid).count();
    println!(
        "decoded {} walk points ({} valid) into {}",
        points.len(),
        valid,
        out_dir.display()
    );
    Ok(())
}

/// Validity summary plus independent per-rule failure counts; a graph can
/// appear in several counts.
#[derive(Serialize)]
struct CheckReport {
    task: Task,
    total: usize,
    valid: usize,
    percent_valid: f64,
    valence_failures: usize,
    connectivity_failures: usize,
    compatibility_failures: usize,
    ghost_edge_failures: usize,
}

pub fn check(args: CheckArgs) -> Result<(), CliError> {
    let mut raw = load_config(&args.config)?;
    if let Some(task) = args.task {
        raw.task = task.into();
    }
    let exp = raw.resolve().map_err(data_err)?;
    let dataset = load_graphs(&args.data, &exp)?;
    if dataset.is_empty() {
        return Err(CliError::Data(format!(
            "{} holds no graphs",
            args.data.display()
        )));
    }

    let mut report = CheckReport {
        task: exp.task,
        total: dataset.len(),
        valid: 0,
        percent_valid: 0.0,
        valence_failures: 0,
        connectivity_failures: 0,
        compatibility_failures: 0,
        ghost_edge_failures: 0,
    };
    for g in &dataset {
        if is_valid(g, &exp.constraint, exp.task).map_err(data_err)? {
            report.valid += 1;
        }
        if !check_valence(g, &exp.constraint).map_err(data_err)?.all_pass() {
            report.valence_failures += 1;
        }
        if !check_connectivity(g) {
            report.connectivity_failures += 1;
        }
        if !check_compatibility(g, &exp.constraint).map_err(data_err)? {
            report.compatibility_failures += 1;
        }
        if !ghosts_isolated(g) {
            report.ghost_edge_failures += 1;
        }
    }
    report.percent_valid = 100.0 * report.valid as f64 / report.total as f64;

    let out = resolve_out(args.out, "check-report.json");
    ensure_parent(&out)?;
    std::fs::write(&out, serde_json::to_string_pretty(&report).expect("report serializes"))
        .map_err(|e| runtime_err(format!("cannot write {}: {e}", out.display())))?;
    RunManifest::new("check", None, &exp)
        .input(&args.config)
        .input(&args.data)
        .output(&out)
        .write(&run_manifest_path(&out))?;

    println!(
        "{} graphs from {}: {} valid ({:.1}%)",
        report.total,
        args.data.display(),
        report.valid,
        report.percent_valid
    );
    println!(
        "  valence {}, connectivity {}, compatibility {}, ghost edges {}",
        report.valence_failures,
        report.connectivity_failures,
        report.compatibility_failures,
        report.ghost_edge_failures
    );
    Ok(())
}
