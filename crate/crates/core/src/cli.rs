//! The `monotune` command line: `tune`, `compare` and `validate`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::engine::{hypertune, parity_stop, run_baseline, HyperTuneConfig, RunRecord, StopRule};
use crate::ep::DEFAULT_SLACK;
use crate::objectives::{ElasticNetTask, SyntheticComplexityParams, SyntheticTask, TuningTask};
use crate::observation::Sign;
use crate::space::{Scale, SearchSpace};

/// Environment variable that overrides `output_dir` from the config.
pub const OUTPUT_DIR_ENV: &str = "MONOTUNE_OUTPUT_DIR";
/// Dataset used when an elastic-net config names none.
pub const BUNDLED_DATASET: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data/classification.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Synthetic,
    ElasticNet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Hypertune,
    Ei,
}

impl Method {
    fn label(self) -> &'static str {
        match self {
            Method::Hypertune => "hypertune",
            Method::Ei => "ei",
        }
    }
}

fn default_b() -> usize {
    5
}
fn default_n() -> usize {
    10
}
fn default_t() -> usize {
    30
}
fn default_fraction() -> f64 {
    0.1
}
fn default_subset_iters() -> usize {
    30
}
fn default_v() -> f64 {
    DEFAULT_SLACK
}

/// One experiment, as read from a JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    #[serde(default)]
    pub dataset_path: Option<PathBuf>,
    pub space: SearchSpace,
    pub method: Method,
    #[serde(rename = "B", default = "default_b")]
    pub b: usize,
    #[serde(rename = "N", default = "default_n")]
    pub n: usize,
    #[serde(rename = "T", default = "default_t")]
    pub t: usize,
    #[serde(default = "default_fraction")]
    pub subset_fraction: f64,
    #[serde(default = "default_subset_iters")]
    pub subset_iters: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub init_points: Option<usize>,
    #[serde(default = "default_v")]
    pub v: f64,
    /// Seed of the train / validation / held-out split (elastic net only).
    #[serde(default)]
    pub split_seed: u64,
    /// Shape of the synthetic objectives (synthetic task only).
    #[serde(default)]
    pub synthetic: SyntheticComplexityParams,
}

/// A failure, split by exit code: 2 for bad input, 1 for runtime errors.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

impl ExperimentConfig {
    pub fn hypertune_config(&self, seed: u64) -> HyperTuneConfig {
        HyperTuneConfig {
            b: self.b,
            subset_fraction: self.subset_fraction,
            subset_iters: self.subset_iters,
            n_virtual: self.n,
            t: self.t,
            init_points: self.init_points,
            v: self.v,
            seed,
        }
    }

    /// Checks every invariant that does not require running anything.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if let Err(e) = self.space.validate() {
            return bad(e.to_string());
        }
        if self.b == 0 {
            return bad("B: must be at least 1".into());
        }
        if self.t == 0 {
            return bad("T: must be at least 1".into());
        }
        if !(self.subset_fraction > 0.0 && self.subset_fraction <= 1.0) {
            return bad(format!("subset_fraction: {} is not in (0, 1]", self.subset_fraction));
        }
        if self.init_points.is_some_and(|n| n < 2) {
            return bad("init_points: must be at least 2".into());
        }
        if !(self.v > 0.0 && self.v.is_finite()) {
            return bad(format!("v: must be positive, got {}", self.v));
        }
        let names = self.space.names();
        match self.task {
            TaskKind::Synthetic => {
                if names[0] != "complexity" || names[1..].iter().any(|n| !n.starts_with("nuisance")) {
                    return bad(format!(
                        "space: synthetic task expects [complexity, nuisance...], got {names:?}"
                    ));
                }
                if let Err(e) = self.synthetic.validate() {
                    return bad(format!("synthetic: {e}"));
                }
            }
            TaskKind::ElasticNet => {
                let mut sorted = names.clone();
                sorted.sort_unstable();
                if sorted != ["alpha", "l1_ratio"] {
                    return bad(format!(
                        "space: elastic-net task expects [l1_ratio, alpha], got {names:?}"
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Parses and validates a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let mut config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        if field == "." {
            CliError::Config(e.inner().to_string())
        } else {
            CliError::Config(format!("{field}: {}", e.inner()))
        }
    })?;
    if let Some(p) = &config.dataset_path {
        if p.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            config.dataset_path = Some(base.join(p));
        }
    }
    config.validate()?;
    Ok(config)
}

/// Builds the task a config describes. `seed` drives synthetic noise.
pub fn build_task(config: &ExperimentConfig, seed: u64) -> Result<Box<dyn TuningTask>, CliError> {
    match config.task {
        TaskKind::Synthetic => SyntheticTask::with_space(config.synthetic, config.space.clone(), seed)
            .map(|t| Box::new(t) as Box<dyn TuningTask>)
            .map_err(|e| CliError::Config(e.to_string())),
        TaskKind::ElasticNet => {
            let path = config
                .dataset_path
                .clone()
                .unwrap_or_else(|| PathBuf::from(BUNDLED_DATASET));
            ElasticNetTask::from_csv(&path, config.space.clone(), config.split_seed)
                .map(|t| Box::new(t) as Box<dyn TuningTask>)
                .map_err(runtime)
        }
    }
}

/// Runs the configured method once. Plain EI gets the initial design plus `T` iterations.
pub fn run_method(config: &ExperimentConfig, task: &dyn TuningTask, seed: u64) -> crate::Result<RunRecord> {
    let ht = config.hypertune_config(seed);
    match config.method {
        Method::Hypertune => hypertune(task, &ht),
        Method::Ei => run_baseline(task, &ht, &StopRule::iterations(config.t)),
    }
}

fn output_dir(config: &ExperimentConfig) -> PathBuf {
    std::env::var_os(OUTPUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| config.output_dir.clone())
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

#[derive(Serialize)]
struct SignPointOut<'a> {
    x_raw: Vec<f64>,
    x_normalized: &'a [f64],
    dimension: &'a str,
    sign: Sign,
}

#[derive(Serialize)]
struct IncumbentOut<'a> {
    phase: String,
    iteration: usize,
    x_raw: &'a [f64],
    y: f64,
}

#[derive(Serialize)]
struct BudgetOut<'a> {
    subset_seconds: &'a [f64],
    main_seconds: f64,
    total_seconds: f64,
    subset_evals: usize,
    main_evals: usize,
    total_evals: usize,
}

#[derive(Serialize)]
struct Summary<'a> {
    task: TaskKind,
    method: &'static str,
    seed: u64,
    averaged_optimum_raw: Option<Vec<f64>>,
    averaged_optimum_normalized: Option<&'a [f64]>,
    subset_optima_raw: Vec<Vec<f64>>,
    sign_points: Vec<SignPointOut<'a>>,
    final_incumbent: Option<IncumbentOut<'a>>,
    heldout_error: Option<f64>,
    budget: BudgetOut<'a>,
    stop_reason: crate::engine::StopReason,
    model_failures: usize,
}

fn summary_json(
    config: &ExperimentConfig,
    record: &RunRecord,
    heldout: Option<f64>,
    seed: u64,
) -> serde_json::Result<String> {
    let space = &config.space;
    let summary = Summary {
        task: config.task,
        method: config.method.label(),
        seed,
        averaged_optimum_raw: record.averaged_optimum.as_ref().map(|a| space.denormalize(a)),
        averaged_optimum_normalized: record.averaged_optimum.as_deref(),
        subset_optima_raw: record.subset_optima.iter().map(|o| space.denormalize(o)).collect(),
        sign_points: record
            .sign_points
            .iter()
            .map(|s| SignPointOut {
                x_raw: space.denormalize(&s.x),
                x_normalized: &s.x,
                dimension: &space.dims()[s.dim].name,
                sign: s.sign,
            })
            .collect(),
        final_incumbent: record.final_incumbent().map(|t| IncumbentOut {
            phase: t.phase.to_string(),
            iteration: t.iteration,
            x_raw: &t.x_raw,
            y: t.y,
        }),
        heldout_error: heldout,
        budget: BudgetOut {
            subset_seconds: &record.budget.subset_seconds,
            main_seconds: record.budget.main_seconds,
            total_seconds: record.budget.total_seconds(),
            subset_evals: record.budget.subset_evals,
            main_evals: record.budget.main_evals,
            total_evals: record.budget.total_evals(),
        },
        stop_reason: record.stop_reason,
        model_failures: record.model_failures,
    };
    serde_json::to_string_pretty(&summary)
}

fn heldout_of(task: &dyn TuningTask, record: &RunRecord) -> Result<Option<f64>, CliError> {
    match record.final_incumbent() {
        Some(best) => task.heldout_error(&best.x_raw).transpose().map_err(runtime),
        None => Ok(None),
    }
}

/// `tune`: one run, writing `trials.jsonl` and `summary.json`.
pub fn cmd_tune(config_path: &Path) -> Result<(), CliError> {
    let config = load_config(config_path)?;
    let task = build_task(&config, config.seed)?;
    let record = run_method(&config, task.as_ref(), config.seed).map_err(runtime)?;
    let heldout = heldout_of(task.as_ref(), &record)?;

    let dir = output_dir(&config);
    let mut lines = String::new();
    for t in &record.trials {
        lines.push_str(&serde_json::to_string(t).map_err(runtime)?);
        lines.push('\n');
    }
    write_atomic(&dir.join("trials.jsonl"), lines.as_bytes()).map_err(runtime)?;
    let summary = summary_json(&config, &record, heldout, config.seed).map_err(runtime)?;
    write_atomic(&dir.join("summary.json"), summary.as_bytes()).map_err(runtime)?;

    println!("{}", task.description());
    match record.final_incumbent() {
        Some(best) => println!(
            "best validation {:.4} at {:?} ({} {})",
            best.y, best.x_raw, best.phase, best.iteration
        ),
        None => println!("no successful evaluation"),
    }
    if let Some(h) = heldout {
        println!("held-out error {h:.4}");
    }
    println!(
        "{} evaluations, {:.2}s budget; output in {}",
        record.budget.total_evals(),
        record.budget.total_seconds(),
        dir.display()
    );
    Ok(())
}

/// One row of `comparison.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub method: &'static str,
    pub seed: u64,
    pub evals_to_1pct: Option<usize>,
    pub final_validation: Option<f64>,
    pub heldout_error: Option<f64>,
    pub budget_seconds: f64,
}

fn mean_stderr(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (Some(mean), None);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some((var / n).sqrt()))
}

fn cell<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Renders per-seed rows followed by a `mean` and a `stderr` row per method.
/// Censored `evals_to_1pct` cells are empty and left out of the statistics.
pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("method,seed,evals_to_1pct,final_validation,heldout_error,budget_seconds\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.method,
            r.seed,
            cell(r.evals_to_1pct),
            cell(r.final_validation),
            cell(r.heldout_error),
            r.budget_seconds
        );
    }
    for method in ["hypertune", "ei"] {
        let mine: Vec<&ComparisonRow> = rows.iter().filter(|r| r.method == method).collect();
        if mine.is_empty() {
            continue;
        }
        let stat = |f: &dyn Fn(&ComparisonRow) -> Option<f64>| {
            mean_stderr(&mine.iter().filter_map(|r| f(r)).collect::<Vec<_>>())
        };
        let cols = [
            stat(&|r| r.evals_to_1pct.map(|v| v as f64)),
            stat(&|r| r.final_validation),
            stat(&|r| r.heldout_error),
            stat(&|r| Some(r.budget_seconds)),
        ];
        let _ = writeln!(
            out,
            "{method},mean,{}",
            cols.iter().map(|c| cell(c.0)).collect::<Vec<_>>().join(",")
        );
        let _ = writeln!(
            out,
            "{method},stderr,{}",
            cols.iter().map(|c| cell(c.1)).collect::<Vec<_>>().join(",")
        );
    }
    out
}

fn median_censored(xs: &[Option<usize>]) -> Option<f64> {
    let mut v: Vec<f64> = xs.iter().map(|x| x.map_or(f64::INFINITY, |v| v as f64)).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Runs `repeats` paired seeds of HyperTune (`a`) and budget-matched EI (`b`).
pub fn run_comparison(
    a: &ExperimentConfig,
    b: &ExperimentConfig,
    repeats: usize,
) -> Result<Vec<ComparisonRow>, CliError> {
    if a.method != Method::Hypertune || b.method != Method::Ei {
        return Err(CliError::Config(
            "method: compare expects --config-a with method hypertune and --config-b with method ei".into(),
        ));
    }
    if a.task != b.task || a.space != b.space {
        return Err(CliError::Config(
            "space: the two configs must share task and search space".into(),
        ));
    }
    if a.seed != b.seed {
        return Err(CliError::Config(
            "seed: the two configs must share the base seed".into(),
        ));
    }
    if repeats == 0 {
        return Err(CliError::Config("repeats: must be at least 1".into()));
    }
    let mut rows = Vec::new();
    for i in 0..repeats as u64 {
        let seed = a.seed.wrapping_add(i);
        let task = build_task(a, seed)?;
        let task = task.as_ref();
        let ht = hypertune(task, &a.hypertune_config(seed)).map_err(runtime)?;
        let ei = run_baseline(task, &b.hypertune_config(seed), &parity_stop(&ht)).map_err(runtime)?;
        // Without a closed-form optimum, the best value either run found is the reference.
        let reference = task.known_optimum().unwrap_or_else(|| {
            ht.main_trials()
                .chain(ei.main_trials())
                .map(|t| t.y)
                .fold(f64::NEG_INFINITY, f64::max)
        });
        let target = reference - 0.01 * reference.abs();
        for (method, rec) in [("hypertune", &ht), ("ei", &ei)] {
            rows.push(ComparisonRow {
                method,
                seed,
                evals_to_1pct: rec.evals_to_target(target),
                final_validation: rec.final_incumbent().map(|t| t.y),
                heldout_error: heldout_of(task, rec)?,
                budget_seconds: rec.budget.total_seconds(),
            });
        }
    }
    Ok(rows)
}

/// `compare`: paired runs written to `comparison.csv` under config A's output directory.
pub fn cmd_compare(config_a: &Path, config_b: &Path, repeats: usize) -> Result<(), CliError> {
    let a = load_config(config_a)?;
    let b = load_config(config_b)?;
    let rows = run_comparison(&a, &b, repeats)?;
    let dir = output_dir(&a);
    write_atomic(&dir.join("comparison.csv"), comparison_csv(&rows).as_bytes()).map_err(runtime)?;
    for method in ["hypertune", "ei"] {
        let mine: Vec<&ComparisonRow> = rows.iter().filter(|r| r.method == method).collect();
        let evals: Vec<Option<usize>> = mine.iter().map(|r| r.evals_to_1pct).collect();
        let held: Vec<f64> = mine.iter().filter_map(|r| r.heldout_error).collect();
        let (m, se) = mean_stderr(&held);
        let mut line = format!(
            "{method:>9}: median evals to 1% {}",
            median_censored(&evals).map_or("-".into(), |v| v.to_string())
        );
        if let Some(m) = m {
            let _ = write!(line, ", held-out error {m:.4}");
            if let Some(se) = se {
                let _ = write!(line, " ± {se:.4}");
            }
        }
        println!("{line}");
    }
    println!("wrote {}", dir.join("comparison.csv").display());
    Ok(())
}

/// Human-readable listing of a space: bounds, scale, and sign per dimension.
pub fn describe_space(space: &SearchSpace) -> String {
    let mut out = String::new();
    for d in space.dims() {
        let scale = match d.scale {
            Scale::Linear => "linear",
            Scale::Exponent => "exponent (base 10)",
        };
        let _ = writeln!(
            out,
            "{:<12} [{}, {}] {scale}; normalized 0 at {}, 1 at {}; sign {}",
            d.name, d.lower, d.upper, d.lower, d.upper, d.monotonicity
        );
    }
    out
}

/// `validate`: parse, check, and print the space.
pub fn cmd_validate(config_path: &Path) -> Result<(), CliError> {
    let config = load_config(config_path)?;
    println!(
        "{} config for task {:?}, seed {}",
        config.method.label(),
        config.task,
        config.seed
    );
    print!("{}", describe_space(&config.space));
    Ok(())
}

#[derive(Parser, Debug)]
#[command(
    name = "monotune",
    version,
    about = "Bayesian hyperparameter tuning with monotonicity hints"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one experiment.
    Tune {
        #[arg(long)]
        config: PathBuf,
    },
    /// Paired HyperTune vs. budget-matched EI runs.
    Compare {
        #[arg(long)]
        config_a: PathBuf,
        #[arg(long)]
        config_b: PathBuf,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
    },
    /// Check a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

/// Entry point shared by the binary and tests; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::Tune { config } => cmd_tune(&config),
        Command::Compare {
            config_a,
            config_b,
            repeats,
        } => cmd_compare(&config_a, &config_b, repeats),
        Command::Validate { config } => cmd_validate(&config),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
