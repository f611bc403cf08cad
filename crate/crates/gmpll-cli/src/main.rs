//! Command-line surface of the partial-label graph-matching pipeline.
//!
//! Six subcommands cover the full workflow: `corrupt` manufactures partial
//! labels from supervised data, `train` disambiguates a dataset into a model
//! archive, `predict` labels new instances, `evaluate` cross-validates one
//! corruption setting, `sweep` runs the full parameter grid, and
//! `inspect-affinity` exposes the affinity matrix behind a dataset.
//!
//! Every command is deterministic for a fixed invocation: all randomness
//! flows from the resolved seed (flag, then config file, then `GMPLL_SEED`,
//! then 0), and reports serialize with stable field order, so rerunning a
//! command reproduces its output byte for byte. Output files are written via
//! temp-file-plus-rename so interrupted runs never leave half-written
//! artifacts.
//!
//! Exit codes: 0 on success, 2 for usage and validation problems (bad flags,
//! malformed inputs, out-of-domain parameters), 1 for internal failures
//! (output I/O, serialization).

mod config;

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gmpll::{
    affinity_stats, assemble_sweep_report, build_affinity, build_index, corrupt, expand_grid,
    instance_similarity, load_dataset, load_model, predict_batch, read_affinity_dump,
    run_sweep_cell, save_dataset, save_model, sweep, train, transductive_accuracy,
    write_affinity_dump, write_curve_csv, CorruptionSpec, PartialLabelDataset, SweepCell,
    SweepReport, TrainedModel,
};

use config::{gm_config, load_config, resolve, resolve_seed, sweep_grid};

#[derive(Parser)]
#[command(
    name = "gmpll",
    version,
    about = "Partial-label learning by probabilistic graph matching",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Hide the truth of a supervised dataset behind false candidate labels
    Corrupt(CorruptArgs),
    /// Disambiguate a partially labeled dataset and write a model archive
    Train(TrainArgs),
    /// Predict labels for the instances of a dataset with a trained model
    Predict(PredictArgs),
    /// Cross-validate one corruption setting against the pl-knn baseline
    Evaluate(EvaluateArgs),
    /// Run the corruption-parameter grid and tally wins, ties, and losses
    Sweep(SweepArgs),
    /// Print affinity statistics; optionally cache the matrix on disk
    InspectAffinity(InspectAffinityArgs),
}

#[derive(Args)]
struct CorruptArgs {
    /// Fully supervised input dataset CSV
    #[arg(long)]
    input: PathBuf,
    /// Output dataset CSV (a .meta.json sidecar is written next to it)
    #[arg(long)]
    output: PathBuf,
    /// Proportion of instances to corrupt, in [0, 1]
    #[arg(short)]
    p: f64,
    /// False labels added to each corrupted instance
    #[arg(short)]
    r: usize,
    /// RNG seed; falls back to GMPLL_SEED, then 0
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Partially labeled input dataset CSV
    #[arg(long)]
    input: PathBuf,
    /// Output model archive
    #[arg(long)]
    output: PathBuf,
    /// JSON config file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Affinity bias coefficient
    #[arg(long)]
    alpha: Option<f64>,
    /// Sparsification threshold, in [0, 1]
    #[arg(long)]
    beta: Option<f64>,
    /// Neighborhood size for prediction with the saved model
    #[arg(short)]
    k: Option<usize>,
    /// Solver convergence threshold
    #[arg(long)]
    delta: Option<f64>,
    /// Solver iteration cap
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Fix the prediction-stage candidate depth in the saved model
    #[arg(long)]
    r_override: Option<usize>,
}

#[derive(Args)]
struct PredictArgs {
    /// Trained model archive
    #[arg(long)]
    model: PathBuf,
    /// Dataset CSV with the instances to label
    #[arg(long)]
    input: PathBuf,
    /// Output CSV (instance_id,predicted_label,confidence)
    #[arg(long)]
    output: PathBuf,
    /// Candidate screening depth; overrides the model's own choice
    #[arg(long)]
    r_override: Option<usize>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Fully supervised input dataset CSV
    #[arg(long)]
    input: PathBuf,
    /// Output JSON report
    #[arg(long)]
    output: PathBuf,
    /// JSON config file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corruption proportion, in [0, 1]
    #[arg(short)]
    p: Option<f64>,
    /// False labels per corrupted instance
    #[arg(short)]
    r: Option<usize>,
    /// Affinity bias coefficient
    #[arg(long)]
    alpha: Option<f64>,
    /// Sparsification threshold, in [0, 1]
    #[arg(long)]
    beta: Option<f64>,
    /// Neighborhood size for both methods
    #[arg(short)]
    k: Option<usize>,
    /// Cross-validation fold count
    #[arg(long)]
    folds: Option<usize>,
    /// Solver convergence threshold
    #[arg(long)]
    delta: Option<f64>,
    /// Solver iteration cap
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Master seed; falls back to GMPLL_SEED, then 0
    #[arg(long)]
    seed: Option<u64>,
    /// Fixed prediction-stage candidate depth for gm-pll
    #[arg(long)]
    r_override: Option<usize>,
    /// Also write accuracy-curve CSV rows here
    #[arg(long)]
    curve_csv: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Fully supervised input dataset CSV
    #[arg(long)]
    input: PathBuf,
    /// Output JSON report
    #[arg(long)]
    output: PathBuf,
    /// JSON config file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corruption proportions, comma-separated
    #[arg(long, value_delimiter = ',')]
    p_values: Option<Vec<f64>>,
    /// False-label counts, comma-separated
    #[arg(long, value_delimiter = ',')]
    r_values: Option<Vec<usize>>,
    /// Sparsification thresholds, comma-separated
    #[arg(long, value_delimiter = ',')]
    beta_values: Option<Vec<f64>>,
    /// Bias coefficients, comma-separated
    #[arg(long, value_delimiter = ',')]
    alpha_values: Option<Vec<f64>>,
    /// Neighborhood size for both methods
    #[arg(short)]
    k: Option<usize>,
    /// Cross-validation fold count
    #[arg(long)]
    folds: Option<usize>,
    /// Solver convergence threshold
    #[arg(long)]
    delta: Option<f64>,
    /// Solver iteration cap
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Master seed; falls back to GMPLL_SEED, then 0
    #[arg(long)]
    seed: Option<u64>,
    /// Fixed prediction-stage candidate depth for gm-pll
    #[arg(long)]
    r_override: Option<usize>,
    /// Worker threads for sweep cells; 0 means one per core
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Also write accuracy-curve CSV rows here
    #[arg(long)]
    curve_csv: Option<PathBuf>,
}

#[derive(Args)]
struct InspectAffinityArgs {
    /// Partially labeled input dataset CSV
    #[arg(long)]
    input: PathBuf,
    /// Affinity bias coefficient
    #[arg(long)]
    alpha: Option<f64>,
    /// Sparsification threshold, in [0, 1]
    #[arg(long)]
    beta: Option<f64>,
    /// Write the matrix as a binary dump for later runs
    #[arg(long, conflicts_with = "load")]
    dump: Option<PathBuf>,
    /// Read the matrix from a dump instead of rebuilding it
    #[arg(long)]
    load: Option<PathBuf>,
}

/// A command failure with the exit code it maps to.
enum CliError {
    /// The user asked for something invalid: exit 2.
    Usage(String),
    /// The machine failed us: exit 1.
    Internal(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Internal(m) => f.write_str(m),
        }
    }
}

fn usage(e: impl fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn internal(e: impl fmt::Display) -> CliError {
    CliError::Internal(e.to_string())
}

/// Classifies a library error from the compute phase: domain and data
/// problems trace back to user input, everything else is internal.
fn compute(e: gmpll::Error) -> CliError {
    match e {
        gmpll::Error::InvalidParameter(_)
        | gmpll::Error::InvalidData(_)
        | gmpll::Error::InvalidFormat(_)
        | gmpll::Error::Parse { .. } => CliError::Usage(e.to_string()),
        other => CliError::Internal(other.to_string()),
    }
}

fn parent_dir(path: &Path) -> &Path {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}

/// Writes `bytes` to `path` atomically: temp file in the same directory,
/// then rename.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut tmp = tempfile::NamedTempFile::new_in(parent_dir(path)).map_err(internal)?;
    tmp.write_all(bytes).map_err(internal)?;
    tmp.persist(path).map_err(|e| internal(e.error))?;
    Ok(())
}

/// Atomic counterpart of [`save_dataset`]: the CSV and its meta sidecar are
/// staged in a scratch directory next to the target and renamed into place.
fn save_dataset_atomic(dataset: &PartialLabelDataset, path: &Path) -> Result<(), CliError> {
    let file_name = path
        .file_name()
        .ok_or_else(|| CliError::Usage(format!("{} has no file name", path.display())))?;
    let dir = tempfile::tempdir_in(parent_dir(path)).map_err(internal)?;
    let staged = dir.path().join(file_name);
    save_dataset(dataset, &staged).map_err(compute)?;
    fs::rename(&staged, path).map_err(internal)?;
    fs::rename(
        gmpll::dataset::meta_path(&staged),
        gmpll::dataset::meta_path(path),
    )
    .map_err(internal)?;
    Ok(())
}

fn save_model_atomic(model: &TrainedModel, path: &Path) -> Result<(), CliError> {
    let tmp = tempfile::NamedTempFile::new_in(parent_dir(path)).map_err(internal)?;
    save_model(model, tmp.path()).map_err(internal)?;
    tmp.persist(path).map_err(|e| internal(e.error))?;
    Ok(())
}

/// Pretty JSON plus a trailing newline; the byte layout reruns must hit.
fn to_json_bytes<T: serde::Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(internal)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn cmd_corrupt(args: CorruptArgs) -> Result<(), CliError> {
    let dataset = load_dataset(&args.input).map_err(usage)?;
    let seed = resolve_seed(args.seed, None).map_err(CliError::Usage)?;
    let spec = CorruptionSpec {
        proportion_p: args.p,
        extra_labels_r: args.r,
        seed,
    };
    let corrupted = corrupt(&dataset, &spec).map_err(compute)?;
    save_dataset_atomic(&corrupted, &args.output)
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let file = load_config(args.config.as_deref()).map_err(CliError::Usage)?;
    let gm = gm_config(
        &file,
        args.alpha,
        args.beta,
        args.k,
        args.delta,
        args.max_iterations,
        args.r_override,
    )
    .map_err(CliError::Usage)?;
    let dataset = load_dataset(&args.input).map_err(usage)?;
    let model = train(&dataset, &gm).map_err(compute)?;
    save_model_atomic(&model, &args.output)?;

    let mut summary = serde_json::Map::new();
    summary.insert("instances".into(), model.len().into());
    summary.insert("converged".into(), model.resolved().converged.into());
    summary.insert(
        "iterations_used".into(),
        model.resolved().iterations_used.into(),
    );
    if let Some(truth) = dataset.truth() {
        summary.insert(
            "transductive_accuracy".into(),
            transductive_accuracy(model.resolved(), truth).into(),
        );
    }
    println!(
        "{}",
        serde_json::Value::Object(summary)
    );
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<(), CliError> {
    let model = load_model(&args.model).map_err(usage)?;
    let dataset = load_dataset(&args.input).map_err(usage)?;
    let predictions = predict_batch(&model, &dataset, None, args.r_override).map_err(compute)?;

    let mut out = String::from("instance_id,predicted_label,confidence\n");
    for (i, p) in predictions.iter().enumerate() {
        out.push_str(&format!("{i},{},{}\n", p.label, p.confidence));
    }
    write_atomic(&args.output, out.as_bytes())
}

/// Shared tail of `evaluate` and `sweep`: write the report and, when asked,
/// the accuracy-curve CSV.
fn write_report(
    report: &SweepReport,
    output: &Path,
    curve_csv: Option<&Path>,
) -> Result<(), CliError> {
    write_atomic(output, &to_json_bytes(report)?)?;
    if let Some(curve_path) = curve_csv {
        let mut buf = Vec::new();
        write_curve_csv(report, &mut buf).map_err(internal)?;
        write_atomic(curve_path, &buf)?;
    }
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let file = load_config(args.config.as_deref()).map_err(CliError::Usage)?;
    let gm = gm_config(
        &file,
        args.alpha,
        args.beta,
        args.k,
        args.delta,
        args.max_iterations,
        args.r_override,
    )
    .map_err(CliError::Usage)?;
    let p = args.p.or(file.p).ok_or_else(|| {
        CliError::Usage("missing -p: pass the flag or set \"p\" in the config file".into())
    })?;
    let r = args.r.or(file.r).ok_or_else(|| {
        CliError::Usage("missing -r: pass the flag or set \"r\" in the config file".into())
    })?;
    let folds = resolve(args.folds, file.folds, 10);
    let seed = resolve_seed(args.seed, file.seed).map_err(CliError::Usage)?;

    let dataset = load_dataset(&args.input).map_err(usage)?;
    // A single-cell grid: evaluate is the sweep protocol at one point, so
    // the two commands agree byte for byte on the same parameters.
    let grid = gmpll::SweepGrid {
        p_values: vec![p],
        r_values: vec![r],
        beta_values: vec![gm.beta],
        alpha_values: vec![gm.alpha],
    };
    let report = sweep(&dataset, &grid, &gm, folds, seed).map_err(compute)?;
    write_report(&report, &args.output, args.curve_csv.as_deref())
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    let file = load_config(args.config.as_deref()).map_err(CliError::Usage)?;
    let gm = gm_config(
        &file,
        None,
        None,
        args.k,
        args.delta,
        args.max_iterations,
        args.r_override,
    )
    .map_err(CliError::Usage)?;
    let grid = sweep_grid(
        &file,
        args.p_values,
        args.r_values,
        args.beta_values,
        args.alpha_values,
    )
    .map_err(CliError::Usage)?;
    let folds = resolve(args.folds, file.folds, 10);
    let seed = resolve_seed(args.seed, file.seed).map_err(CliError::Usage)?;
    let dataset = load_dataset(&args.input).map_err(usage)?;

    let report = if args.jobs == 1 {
        sweep(&dataset, &grid, &gm, folds, seed).map_err(compute)?
    } else {
        // Cells are independent (their seeds depend only on the master seed
        // and their own parameters), so a parallel map over the same grid
        // order produces the exact bytes of the sequential path.
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(args.jobs)
            .build()
            .map_err(internal)?;
        let cells: Vec<SweepCell> = expand_grid(&grid);
        let reports = pool
            .install(|| {
                cells
                    .par_iter()
                    .map(|cell| run_sweep_cell(&dataset, cell, &gm, folds, seed))
                    .collect::<gmpll::Result<Vec<_>>>()
            })
            .map_err(compute)?;
        assemble_sweep_report(&dataset, folds, &gm, seed, reports)
    };
    write_report(&report, &args.output, args.curve_csv.as_deref())
}

fn cmd_inspect_affinity(args: InspectAffinityArgs) -> Result<(), CliError> {
    let dataset = load_dataset(&args.input).map_err(usage)?;
    let index = build_index(&dataset);

    let matrix = if let Some(dump_path) = &args.load {
        read_affinity_dump(dump_path, &index).map_err(usage)?
    } else {
        let defaults = gmpll::GmConfig::default();
        let alpha = args.alpha.unwrap_or(defaults.alpha);
        let beta = args.beta.unwrap_or(defaults.beta);
        let similarity = instance_similarity(&dataset).map_err(compute)?;
        build_affinity(&similarity, &index, alpha, beta).map_err(compute)?
    };

    if let Some(dump_path) = &args.dump {
        let tmp = tempfile::NamedTempFile::new_in(parent_dir(dump_path)).map_err(internal)?;
        write_affinity_dump(&matrix, tmp.path()).map_err(internal)?;
        tmp.persist(dump_path).map_err(|e| internal(e.error))?;
    }

    let stats = affinity_stats(&matrix);
    let bytes = to_json_bytes(&stats)?;
    std::io::stdout()
        .write_all(&bytes)
        .map_err(internal)?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Corrupt(args) => cmd_corrupt(args),
        Command::Train(args) => cmd_train(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::InspectAffinity(args) => cmd_inspect_affinity(args),
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Usage(_) => ExitCode::from(2),
                CliError::Internal(_) => ExitCode::from(1),
            }
        }
    }
}
