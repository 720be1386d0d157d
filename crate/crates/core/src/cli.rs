//! `odw` command line: `gen`, `train`, `run` and `bench`.
//!
//! Data directory layout (`--out` for `gen`, `--data` elsewhere, defaulting
//! to `$ODW_DATA_DIR`):
//!
//! ```text
//! manifest.csv              name,split
//! trace_000.csv             t_ms,ax,ay,az,gx,gy,gz,mx,my,mz
//! trace_000.labels.csv      start_idx,end_idx,au_label,move_state
//! step_lengths.csv          subject,step_type,move_state,length_m
//! models/move_state.odw     weight files written by `train`
//! models/action_unit.odw
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::bench::{
    self, AugmentConfig, BenchError, BenchReport, ModelPair, PreparedTrace, AU_MODEL_FILE,
    MOVE_MODEL_FILE,
};
use crate::imu::{self, ImuError, DEFAULT_RATE_HZ, DEFAULT_SMOOTH_N};
use crate::labels::{AuLabel, Family};
use crate::locator::{self, LocatorError, PipelineConfig, StepLengthTable, DEFAULT_SUBJECT};
use crate::pdr::{self, DEFAULT_TAU_ABOVE_MEAN};
use crate::seqnet::{SeqnetError, TrainConfig, INPUT_DIM};
use crate::synthgen::{self, GeneratedTrace, PathScript, Split, SubjectProfile, SynthError};
use crate::windowing::{
    FusionThresholds, StrategyKind, TokenConfig, WindowError, DEFAULT_K, DEFAULT_MAX_TOKENS,
    DEFAULT_TAU1, DEFAULT_TAU2, DEFAULT_TOKEN_LEN,
};

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const TABLE_FILE: &str = "step_lengths.csv";
pub const MODELS_DIR: &str = "models";
pub const DEFAULT_SUITE_SIZE: usize = 40;
pub const DEFAULT_SEED: u64 = 2024;
pub const DEFAULT_EPOCHS: usize = 20;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),
    #[error("{0}")]
    Usage(String),
    #[error("model {file}: {message}")]
    ModelMismatch { file: String, message: String },
    #[error("{}: {source}", path.display())]
    Artifact {
        path: PathBuf,
        #[source]
        source: Box<CliError>,
    },
    #[error("artifact {} did not parse back: {message}", path.display())]
    Verify { path: PathBuf, message: String },
    #[error(transparent)]
    Imu(#[from] ImuError),
    #[error(transparent)]
    Seqnet(#[from] SeqnetError),
    #[error(transparent)]
    Locator(#[from] LocatorError),
    #[error(transparent)]
    Window(#[from] WindowError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Pdr(#[from] pdr::PdrError),
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Process exit status for this failure class.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::MissingFile(_) => 3,
            CliError::ModelMismatch { .. } | CliError::Seqnet(SeqnetError::DimMismatch { .. }) => 4,
            CliError::Artifact { source, .. } => source.exit_code(),
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "odw",
    version,
    about = "Online dynamic windowing for inertial dead reckoning"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic traces with label sidecars
    Gen(GenArgs),
    /// Train the movement-state and Action Unit models
    Train(TrainArgs),
    /// Run one trace through the pipeline and write its trajectory
    Run(RunArgs),
    /// Benchmark all windowing strategies over a suite
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Output data directory
    #[arg(long, env = "ODW_DATA_DIR")]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SUITE_SIZE)]
    pub n_traces: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_RATE_HZ)]
    pub rate_hz: f64,
    /// Render this script as a single trace instead of the suite
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// Accelerometer noise std for `--script`, m/s²
    #[arg(long)]
    pub noise_std: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Data directory holding the manifest and traces
    #[arg(long, env = "ODW_DATA_DIR")]
    pub data: PathBuf,
    /// Where to write weight files; defaults to `<data>/models`
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_EPOCHS)]
    pub epochs: usize,
    #[arg(long, default_value_t = 24)]
    pub hidden: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_SMOOTH_N)]
    pub smooth_n: usize,
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

/// Segmentation and estimator knobs shared by `run` and `bench`.
#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// Step threshold above the step-axis mean, m/s²
    #[arg(long, default_value_t = DEFAULT_TAU_ABOVE_MEAN)]
    pub tau: f64,
    #[arg(long, default_value_t = DEFAULT_TAU1)]
    pub tau1: f64,
    #[arg(long, default_value_t = DEFAULT_TAU2)]
    pub tau2: f64,
    #[arg(long, default_value_t = DEFAULT_TOKEN_LEN)]
    pub token_len: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_TOKENS)]
    pub max_tokens: usize,
    #[arg(long, default_value_t = DEFAULT_K)]
    pub k: usize,
    #[arg(long, default_value_t = DEFAULT_SMOOTH_N)]
    pub smooth_n: usize,
    /// Sampling rate; inferred from timestamps when omitted
    #[arg(long)]
    pub rate_hz: Option<f64>,
    #[arg(long, default_value = DEFAULT_SUBJECT)]
    pub subject: String,
    /// Step-length table; defaults to `<data>/step_lengths.csv` or the
    /// built-in table
    #[arg(long)]
    pub table: Option<PathBuf>,
}

impl PipelineArgs {
    pub fn config(&self, strategy: StrategyKind) -> Result<PipelineConfig, CliError> {
        let tokens = TokenConfig {
            token_len: self.token_len,
            max_tokens: self.max_tokens,
            k: self.k,
        };
        tokens.validate()?;
        let thresholds = FusionThresholds {
            tau1: self.tau1,
            tau2: self.tau2,
        };
        thresholds.validate()?;
        if self.smooth_n == 0 {
            return Err(CliError::Usage("--smooth-n must be at least 1".to_string()));
        }
        Ok(PipelineConfig {
            strategy,
            tokens,
            thresholds,
            tau_above_mean: self.tau,
            subject: self.subject.clone(),
            ..PipelineConfig::default()
        })
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Trace CSV
    #[arg(long)]
    pub trace: PathBuf,
    /// Label sidecar; defaults to `<trace>.labels.csv` next to the trace
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Replay the sidecar labels through the estimator instead of
    /// segmenting and classifying
    #[arg(long)]
    pub ground_truth_labels: bool,
    #[arg(long, default_value = "fusion", value_parser = parse_strategy)]
    pub strategy: StrategyKind,
    /// Model directory; defaults to `<data>/models`
    #[arg(long)]
    pub models: Option<PathBuf>,
    #[arg(long, env = "ODW_DATA_DIR")]
    pub data: Option<PathBuf>,
    /// Output directory for trajectory, latency, segmentation and step CSVs
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Data directory; without one the default suite is generated in memory
    #[arg(long, env = "ODW_DATA_DIR")]
    pub data: Option<PathBuf>,
    /// Model directory; without one models are trained on the train split
    #[arg(long)]
    pub models: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Restrict to one strategy; all four by default
    #[arg(long, value_parser = parse_strategy)]
    pub strategy: Option<StrategyKind>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_SUITE_SIZE)]
    pub n_traces: usize,
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    #[arg(long, default_value_t = DEFAULT_EPOCHS)]
    pub epochs: usize,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

fn parse_strategy(s: &str) -> Result<StrategyKind, String> {
    s.parse().map_err(|e: WindowError| e.to_string())
}

/// Parses arguments, runs the command and maps failures to a one-line
/// diagnostic on stderr and a nonzero status.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("odw: error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen(a) => cmd_gen(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Run(a) => cmd_run(&a),
        Command::Bench(a) => cmd_bench(&a),
    }
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("--jobs: {e}")))?;
    Ok(pool.install(f))
}

/// Writes a CSV artifact, then reads it back and checks it parses with the
/// expected number of records.
fn write_csv_artifact<F>(path: &Path, render: F) -> Result<(), CliError>
where
    F: FnOnce(&mut Vec<u8>) -> Result<(), CliError>,
{
    let wrap = |e: CliError| CliError::Artifact {
        path: path.to_path_buf(),
        source: Box::new(e),
    };
    let mut buf = Vec::new();
    render(&mut buf).map_err(wrap)?;
    fs::write(path, &buf).map_err(|e| wrap(e.into()))?;
    let expected = buf
        .iter()
        .filter(|&&b| b == b'\n')
        .count()
        .saturating_sub(1);
    let back = fs::read(path).map_err(|e| wrap(e.into()))?;
    let mut reader = csv::Reader::from_reader(&back[..]);
    let mut n = 0;
    for rec in reader.records() {
        rec.map_err(|e| CliError::Verify {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        n += 1;
    }
    if n != expected || back != buf {
        return Err(CliError::Verify {
            path: path.to_path_buf(),
            message: format!("expected {expected} records, read {n}"),
        });
    }
    Ok(())
}

fn require(path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingFile(path.to_path_buf()))
    }
}

fn split_name(splits: &[Split]) -> &'static str {
    match (
        splits.contains(&Split::Train),
        splits.contains(&Split::Test),
    ) {
        (true, true) => "both",
        (true, false) => "train",
        _ => "test",
    }
}

fn parse_split(s: &str) -> Result<Vec<Split>, CliError> {
    match s.trim() {
        "both" => Ok(vec![Split::Train, Split::Test]),
        other => Ok(vec![other.parse().map_err(CliError::Usage)?]),
    }
}

fn write_trace(dir: &Path, name: &str, trace: &GeneratedTrace) -> Result<(), CliError> {
    write_csv_artifact(&dir.join(format!("{name}.csv")), |buf| {
        Ok(imu::emit_csv(&trace.samples, buf)?)
    })?;
    write_csv_artifact(&dir.join(format!("{name}.labels.csv")), |buf| {
        Ok(imu::emit_labels(&trace.labels, buf)?)
    })
}

pub fn cmd_gen(a: &GenArgs) -> Result<(), CliError> {
    fs::create_dir_all(&a.out)?;
    let mut manifest: Vec<(String, &'static str)> = Vec::new();
    let profile = SubjectProfile::default();
    if let Some(script_path) = &a.script {
        require(script_path)?;
        let mut script = PathScript::parse(&fs::read_to_string(script_path)?)?;
        script.seed = a.seed;
        if let Some(std) = a.noise_std {
            script.noise.accel_std = std;
        }
        let trace = synthgen::generate(&script, a.rate_hz)?;
        write_trace(&a.out, "trace_000", &trace)?;
        manifest.push(("trace_000".to_string(), "both"));
    } else {
        if a.n_traces == 0 {
            return Err(CliError::Usage("--n-traces must be at least 1".to_string()));
        }
        if a.rate_hz != DEFAULT_RATE_HZ {
            return Err(CliError::Usage(
                "suite generation runs at 50 Hz; use --script for other rates".to_string(),
            ));
        }
        for t in synthgen::make_benchmark_suite(a.n_traces, a.seed) {
            write_trace(&a.out, &t.name, &t.trace)?;
            manifest.push((t.name.clone(), split_name(&t.splits)));
        }
    }
    write_csv_artifact(&a.out.join(MANIFEST_FILE), |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["name", "split"])?;
        for (name, split) in &manifest {
            w.write_record([name.as_str(), split])?;
        }
        w.flush()?;
        Ok(())
    })?;
    write_csv_artifact(&a.out.join(TABLE_FILE), |buf| {
        Ok(profile.step_table()?.write_csv(buf)?)
    })?;
    println!("wrote {} trace(s) to {}", manifest.len(), a.out.display());
    Ok(())
}

/// One trace read back from a data directory.
#[derive(Debug, Clone)]
pub struct StoredTrace {
    pub name: String,
    pub splits: Vec<Split>,
    pub trace: GeneratedTrace,
}

fn read_trace(
    csv_path: &Path,
    labels_path: &Path,
    rate_hz: Option<f64>,
) -> Result<GeneratedTrace, CliError> {
    require(csv_path)?;
    let samples = imu::ingest_csv(fs::File::open(csv_path)?)?;
    let labels = if labels_path.exists() {
        imu::ingest_labels(fs::File::open(labels_path)?)?
    } else {
        Vec::new()
    };
    let rate_hz = rate_hz
        .or_else(|| imu::infer_rate_hz(&samples))
        .unwrap_or(DEFAULT_RATE_HZ);
    Ok(GeneratedTrace {
        samples,
        labels,
        rate_hz,
    })
}

pub fn load_data_dir(dir: &Path, rate_hz: Option<f64>) -> Result<Vec<StoredTrace>, CliError> {
    let manifest = dir.join(MANIFEST_FILE);
    require(&manifest)?;
    let mut reader = csv::Reader::from_path(&manifest)?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let name = rec.get(0).unwrap_or("").trim().to_string();
        let splits = parse_split(rec.get(1).unwrap_or(""))?;
        let trace = read_trace(
            &dir.join(format!("{name}.csv")),
            &dir.join(format!("{name}.labels.csv")),
            rate_hz,
        )?;
        out.push(StoredTrace {
            name,
            splits,
            trace,
        });
    }
    Ok(out)
}

fn prepare(
    traces: &[StoredTrace],
    split: Split,
    smooth_n: usize,
) -> Result<Vec<PreparedTrace>, CliError> {
    traces
        .iter()
        .filter(|t| t.splits.contains(&split))
        .map(|t| Ok(PreparedTrace::new(&t.name, &t.trace, smooth_n)?))
        .collect()
}

fn train_and_save(
    train: &[PreparedTrace],
    cfg: &TrainConfig,
    out: Option<&Path>,
) -> Result<ModelPair, CliError> {
    let (models, summary) = bench::train_models(train, cfg, &AugmentConfig::default())?;
    if let Some(dir) = out {
        models.save(dir)?;
        for f in [MOVE_MODEL_FILE, AU_MODEL_FILE] {
            crate::seqnet::load_params(dir.join(f))?;
        }
        write_csv_artifact(&dir.join("training_log.csv"), |buf| {
            let mut w = csv::Writer::from_writer(buf);
            w.write_record(["epoch", "move_state_loss", "action_unit_loss"])?;
            for (i, (m, a)) in summary.move_loss.iter().zip(&summary.au_loss).enumerate() {
                w.write_record([i.to_string(), format!("{m:?}"), format!("{a:?}")])?;
            }
            w.flush()?;
            Ok(())
        })?;
    }
    println!(
        "trained on {} windows per model; final loss movement state {:.4}, action unit {:.4}",
        summary.move_examples,
        summary.move_loss.last().copied().unwrap_or(f64::NAN),
        summary.au_loss.last().copied().unwrap_or(f64::NAN)
    );
    Ok(models)
}

pub fn cmd_train(a: &TrainArgs) -> Result<(), CliError> {
    let traces = load_data_dir(&a.data, None)?;
    let train = prepare(&traces, Split::Train, a.smooth_n)?;
    if train.is_empty() {
        return Err(CliError::Usage(format!(
            "no training traces listed in {}",
            a.data.join(MANIFEST_FILE).display()
        )));
    }
    let cfg = TrainConfig {
        epochs: a.epochs,
        hidden: a.hidden,
        lr: a.lr,
        seed: a.seed,
        ..TrainConfig::default()
    };
    let out = a.out.clone().unwrap_or_else(|| a.data.join(MODELS_DIR));
    with_pool(a.jobs, || train_and_save(&train, &cfg, Some(&out)))??;
    println!("wrote models to {}", out.display());
    Ok(())
}

/// Loads both weight files and checks them against the label families.
pub fn load_models(dir: &Path) -> Result<ModelPair, CliError> {
    for f in [MOVE_MODEL_FILE, AU_MODEL_FILE] {
        require(&dir.join(f))?;
    }
    let models = ModelPair::load(dir)?;
    for (file, p, family) in [
        (MOVE_MODEL_FILE, &models.move_state, Family::MoveState),
        (AU_MODEL_FILE, &models.action_unit, Family::ActionUnit),
    ] {
        if p.input != INPUT_DIM || p.classes != family.class_count() {
            return Err(CliError::ModelMismatch {
                file: file.to_string(),
                message: format!(
                    "expects {} inputs and {} classes, stream has {INPUT_DIM} channels and the label family {}",
                    p.input,
                    p.classes,
                    family.class_count()
                ),
            });
        }
    }
    Ok(models)
}

fn load_table(explicit: Option<&Path>, data: Option<&Path>) -> Result<StepLengthTable, CliError> {
    let path = match (explicit, data) {
        (Some(p), _) => {
            require(p)?;
            Some(p.to_path_buf())
        }
        (None, Some(d)) if d.join(TABLE_FILE).exists() => Some(d.join(TABLE_FILE)),
        _ => None,
    };
    match path {
        Some(p) => Ok(StepLengthTable::read_csv(fs::File::open(p)?)?),
        None => Ok(StepLengthTable::default_table()),
    }
}

fn labels_path_for(trace: &Path) -> PathBuf {
    let stem = trace
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("trace");
    trace.with_file_name(format!("{stem}.labels.csv"))
}

pub fn cmd_run(a: &RunArgs) -> Result<(), CliError> {
    let cfg = a.pipeline.config(a.strategy)?;
    let table = load_table(a.pipeline.table.as_deref(), a.data.as_deref())?;
    let labels_path = a
        .labels
        .clone()
        .unwrap_or_else(|| labels_path_for(&a.trace));
    fs::create_dir_all(&a.out)?;
    if a.ground_truth_labels {
        require(&labels_path)?;
        let labels = imu::ingest_labels(fs::File::open(&labels_path)?)?;
        let track = locator::run_ground_truth(&labels, &table, &cfg)?;
        let path = a.out.join("trajectory.csv");
        write_csv_artifact(&path, |buf| {
            let mut w = csv::Writer::from_writer(buf);
            w.write_record(["k", "x_m", "y_m", "au_label", "move_state"])?;
            w.write_record([
                "0".to_string(),
                format!("{:?}", track.history[0][0]),
                format!("{:?}", track.history[0][1]),
                "-".into(),
                "-".into(),
            ])?;
            for (k, (p, row)) in track.history[1..].iter().zip(&labels).enumerate() {
                w.write_record([
                    (k + 1).to_string(),
                    format!("{:?}", p[0]),
                    format!("{:?}", p[1]),
                    row.au.to_string(),
                    row.state.to_string(),
                ])?;
            }
            w.flush()?;
            Ok(())
        })?;
        let d = track.position[0].hypot(track.position[1]);
        println!(
            "ground-truth replay: {} AUs, distance {:.3} m, endpoint ({:.6}, {:.6}), endpoint error {:.3e} m from origin",
            track.k, track.distance, track.position[0], track.position[1], d
        );
        return Ok(());
    }
    let data = a.data.clone();
    let models_dir = a
        .models
        .clone()
        .or_else(|| data.as_ref().map(|d| d.join(MODELS_DIR)))
        .ok_or_else(|| CliError::Usage("--models or ODW_DATA_DIR is required".to_string()))?;
    let models = load_models(&models_dir)?;
    let trace = read_trace(&a.trace, &labels_path, a.pipeline.rate_hz)?;
    let prepared = PreparedTrace::new("trace", &trace, a.pipeline.smooth_n)?;
    let run = locator::run_pipeline(&prepared.stream, &cfg, models.models(), &table)?;
    let axis = pdr::select_step_axis(&prepared.stream)?;
    let tau = pdr::threshold_above_mean(&prepared.stream, axis, cfg.tau_above_mean);
    let steps = pdr::detect_steps(&prepared.stream, axis, tau)?;
    let headings = pdr::headings_at_steps(&prepared.stream, &steps)?;
    write_csv_artifact(&a.out.join("steps.csv"), |buf| {
        Ok(pdr::write_step_dump(&steps, &headings, buf)?)
    })?;
    write_csv_artifact(&a.out.join("trajectory.csv"), |buf| {
        Ok(run.write_trajectory(buf)?)
    })?;
    write_csv_artifact(&a.out.join("latency.csv"), |buf| {
        Ok(run.latency.write_csv(buf)?)
    })?;
    let outcomes: Vec<_> = run
        .records
        .iter()
        .map(|r| (r.cursor, r.outcome.clone()))
        .collect();
    write_csv_artifact(&a.out.join("segments.csv"), |buf| {
        Ok(crate::windowing::write_segmentation_trace::<AuLabel, _>(
            a.strategy, &outcomes, buf,
        )?)
    })?;
    let mut summary = format!(
        "{}: {} AUs, {:.3} evals/AU, endpoint ({:.3}, {:.3})",
        a.strategy,
        run.latency.aus,
        run.latency.evals_per_decision(),
        run.track.position[0],
        run.track.position[1]
    );
    if !trace.labels.is_empty() {
        let gt = locator::run_ground_truth(&trace.labels, &table, &cfg)?;
        let scores = bench::score_run(&run, &prepared.labels);
        summary.push_str(&format!(
            ", endpoint error {:.3} m, AU accuracy {:.4}",
            locator::endpoint_error(&run.track, &gt),
            scores.action_unit.accuracy()
        ));
    }
    println!("{summary}");
    Ok(())
}

fn write_report(out: &Path, report: &BenchReport) -> Result<(), CliError> {
    fs::create_dir_all(out)?;
    write_csv_artifact(&out.join("bench_report.csv"), |buf| {
        Ok(report.write_csv(buf, true)?)
    })?;
    write_csv_artifact(&out.join("bench_traces.csv"), |buf| {
        Ok(report.write_trace_csv(buf, true)?)
    })?;
    for s in &report.summaries {
        write_csv_artifact(&out.join(format!("cm_{}_au.csv", s.strategy)), |buf| {
            Ok(s.scores.action_unit.write_csv(buf)?)
        })?;
        write_csv_artifact(&out.join(format!("cm_{}_state.csv", s.strategy)), |buf| {
            Ok(s.scores.move_state.write_csv(buf)?)
        })?;
    }
    write_csv_artifact(&out.join("cm_ground_truth_au.csv"), |buf| {
        Ok(report.ground_truth.action_unit.write_csv(buf)?)
    })?;
    write_csv_artifact(&out.join("cm_ground_truth_state.csv"), |buf| {
        Ok(report.ground_truth.move_state.write_csv(buf)?)
    })?;
    let table = report.render();
    fs::write(out.join("bench_report.txt"), &table)?;
    print!("{table}");
    Ok(())
}

pub fn cmd_bench(a: &BenchArgs) -> Result<(), CliError> {
    let strategies: Vec<StrategyKind> = match a.strategy {
        Some(s) => vec![s],
        None => StrategyKind::ALL.to_vec(),
    };
    let base = a.pipeline.config(StrategyKind::Fusion)?;
    let table = load_table(a.pipeline.table.as_deref(), a.data.as_deref())?;
    let traces: Vec<StoredTrace> = match &a.data {
        Some(dir) => load_data_dir(dir, a.pipeline.rate_hz)?,
        None => synthgen::make_benchmark_suite(a.n_traces.max(1), a.seed)
            .into_iter()
            .map(|t| StoredTrace {
                name: t.name,
                splits: t.splits,
                trace: t.trace,
            })
            .collect(),
    };
    let test = prepare(&traces, Split::Test, a.pipeline.smooth_n)?;
    if test.is_empty() {
        return Err(CliError::Usage("no test traces to benchmark".to_string()));
    }
    let report = with_pool(a.jobs, || -> Result<BenchReport, CliError> {
        let models = match &a.models {
            Some(dir) => load_models(dir)?,
            None => {
                let train = prepare(&traces, Split::Train, a.pipeline.smooth_n)?;
                let cfg = TrainConfig {
                    epochs: a.epochs,
                    ..TrainConfig::default()
                };
                train_and_save(&train, &cfg, Some(&a.out.join(MODELS_DIR)))?
            }
        };
        Ok(bench::run_bench(
            &models,
            &test,
            &strategies,
            &base,
            &table,
        )?)
    })??;
    write_report(&a.out, &report)
}
