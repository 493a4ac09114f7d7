//! Batch front end for the gridlearn library: train models, re-round
//! them for prediction, score examples, and run seeded tradeoff sweeps.
//!
//! Every command writes a `manifest.json` next to its outputs recording
//! the fully resolved configuration, the input digest, and the output
//! names. Identical manifests produce byte-identical outputs; nothing
//! here reads a clock or an unseeded random source.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

mod source;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gridlearn::data::SparseExample;
use gridlearn::eval::{self, auc, auc_loss_relative};
use gridlearn::fixed_point::GridSpec;
use gridlearn::logistic::{loss_from_probability, sigmoid, weighted_logit};
use gridlearn::store::{memory_report, quantize_for_prediction, ModelHistogram, StoredModel};
use gridlearn::train::{AlphaSetting, CounterMode, PrecisionMode, TrainConfig, Trainer};
use gridlearn::rng;
use serde::Serialize;
use sha2::{Digest, Sha256};
use source::{DataArgs, Source};
use std::io::Write;
use std::path::{Path, PathBuf};

const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation: reported on stderr, exit code 2.
    Usage(String),
    /// Valid invocation that failed: reported on stderr, exit code 1.
    Run(String),
}

impl From<gridlearn::Error> for CliError {
    fn from(e: gridlearn::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "gridlearn",
    version,
    about = "Memory-frugal online logistic regression on coarse fixed-point grids"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model over a stream with progressive validation
    Train(TrainArgs),
    /// Re-round a stored model onto a prediction grid
    Quantize(QuantizeArgs),
    /// Score a stream with a stored model
    Predict(PredictArgs),
    /// Train or quantize across a grid of points, one seeded run each
    Sweep(SweepArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    /// 32-bit float coefficients, no rounding
    Control,
    /// Qn.m grid fixed for the whole run
    Fixed,
    /// Per-coordinate grids tracking the learning rate
    Adaptive,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum CounterArg {
    /// No per-coordinate counts; the global round number drives rates
    None,
    /// Exact 32-bit counts
    Exact,
    /// 8-bit probabilistic counts
    Morris,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum AlphaPresetArg {
    /// sqrt(2) R / sqrt(G^2 + gamma^2)
    Sqrt2,
    /// R / sqrt(G^2 + gamma^2)
    Unit,
}

/// Hyperparameters shared by train and sweep.
#[derive(Args, Clone, Debug)]
struct ModelArgs {
    #[arg(long, value_enum, default_value = "control")]
    mode: ModeArg,
    /// Integer bits of the fixed grid
    #[arg(long, default_value_t = 2)]
    n: u8,
    /// Fraction bits of the fixed grid
    #[arg(long, default_value_t = 13)]
    m: u8,
    /// Finest fraction bits adaptive mode may reach
    #[arg(long, default_value_t = 40)]
    max_m: u8,
    #[arg(long, value_enum, default_value = "exact")]
    counter: CounterArg,
    /// Probabilistic counter base
    #[arg(long, default_value_t = 1.1)]
    base: f64,
    /// Feasible radius: weights live in [-R, R]
    #[arg(long = "R", default_value_t = 1.0)]
    r: f64,
    /// Gradient magnitude bound
    #[arg(long = "G", default_value_t = 1.0)]
    g: f64,
    /// Rounding resolution as a multiple of the learning rate
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Explicit learning-rate scale
    #[arg(long, conflicts_with = "alpha_preset")]
    alpha: Option<f64>,
    /// Derive the scale from R, G, and gamma
    #[arg(long, value_enum)]
    alpha_preset: Option<AlphaPresetArg>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Skip the projection onto [-R, R] (grid-range clamping still applies)
    #[arg(long)]
    no_project: bool,
}

impl ModelArgs {
    fn to_config(&self) -> TrainConfig {
        let precision = match self.mode {
            ModeArg::Control => PrecisionMode::Float32Control,
            ModeArg::Fixed => PrecisionMode::Fixed {
                int_bits: self.n,
                frac_bits: self.m,
            },
            ModeArg::Adaptive => PrecisionMode::Adaptive {
                max_frac_bits: self.max_m,
            },
        };
        let counter = match self.counter {
            CounterArg::None => CounterMode::None,
            CounterArg::Exact => CounterMode::Exact,
            CounterArg::Morris => CounterMode::Morris { base: self.base },
        };
        let alpha = match (self.alpha, self.alpha_preset) {
            (Some(a), _) => AlphaSetting::Fixed(a),
            (None, Some(AlphaPresetArg::Unit)) => AlphaSetting::PresetUnit,
            (None, _) => AlphaSetting::PresetSqrt2,
        };
        TrainConfig {
            r: self.r,
            alpha,
            gamma: self.gamma,
            gradient_bound: self.g,
            precision,
            counter,
            project: !self.no_project,
            seed: self.seed,
        }
    }
}

#[derive(Args, Clone, Debug)]
struct OutArgs {
    /// Output directory (created if missing)
    #[arg(long, env = "GRIDLEARN_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct QuantizeArgs {
    /// Stored model to re-round
    #[arg(long)]
    model: PathBuf,
    /// Integer bits of the target grid
    #[arg(long, default_value_t = 2)]
    n: u8,
    /// Fraction bits of the target grid
    #[arg(long, default_value_t = 7)]
    m: u8,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct PredictArgs {
    /// Stored model to score with
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Use raw feature values instead of binarizing (exploratory; the
    /// error bounds assume binary features)
    #[arg(long)]
    raw_values: bool,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum AxisArg {
    /// Fraction bits of the training grid (forces --mode fixed)
    M,
    /// Rounding ratio during training
    Gamma,
    /// Fraction bits of a prediction-time re-rounding of one base model
    PredictM,
}

impl AxisArg {
    fn name(self) -> &'static str {
        match self {
            AxisArg::M => "m",
            AxisArg::Gamma => "gamma",
            AxisArg::PredictM => "predict-m",
        }
    }
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_enum)]
    axis: AxisArg,
    /// Comma-separated axis values, one run per value
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<String>,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    out: OutArgs,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Quantize(args) => cmd_quantize(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Sweep(args) => cmd_sweep(args),
    };
    match result {
        Ok(()) => {}
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(2);
        }
        Err(CliError::Run(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(1);
        }
    }
}

// ---- manifest ----

#[derive(Serialize, Clone)]
struct ConfigManifest {
    mode: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    m: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_m: Option<u8>,
    counter: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    base: Option<f64>,
    r: f64,
    g: f64,
    gamma: f64,
    alpha: String,
    alpha_value: f64,
    project: bool,
    seed: u64,
}

impl ConfigManifest {
    fn from_config(cfg: &TrainConfig) -> Self {
        let (mode, n, m, max_m) = match cfg.precision {
            PrecisionMode::Float32Control => ("control", None, None, None),
            PrecisionMode::Fixed {
                int_bits,
                frac_bits,
            } => ("fixed", Some(int_bits), Some(frac_bits), None),
            PrecisionMode::Adaptive { max_frac_bits } => {
                ("adaptive", None, None, Some(max_frac_bits))
            }
        };
        let (counter, base) = match cfg.counter {
            CounterMode::None => ("none", None),
            CounterMode::Exact => ("exact", None),
            CounterMode::Morris { base } => ("morris", Some(base)),
        };
        let alpha = match cfg.alpha {
            AlphaSetting::PresetSqrt2 => "preset-sqrt2",
            AlphaSetting::PresetUnit => "preset-unit",
            AlphaSetting::Fixed(_) => "fixed",
        };
        ConfigManifest {
            mode: mode.to_string(),
            n,
            m,
            max_m,
            counter: counter.to_string(),
            base,
            r: cfg.r,
            g: cfg.gradient_bound,
            gamma: cfg.gamma,
            alpha: alpha.to_string(),
            alpha_value: cfg.resolved_alpha(),
            project: cfg.project,
            seed: cfg.seed,
        }
    }

    /// Digest embedded into model files and used to derive sweep seeds.
    fn digest(&self) -> [u8; 32] {
        let canonical = serde_json::to_string(self).expect("manifest serializes");
        Sha256::digest(canonical.as_bytes()).into()
    }
}

#[derive(Serialize)]
struct QuantizeManifest {
    n: u8,
    m: u8,
    seed: u64,
}

#[derive(Serialize)]
struct Manifest<C: Serialize> {
    artifact_version: u32,
    command: String,
    config: C,
    input_kind: String,
    input_sha256: String,
    outputs: Vec<String>,
}

fn write_manifest<C: Serialize>(dir: &Path, manifest: &Manifest<C>) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    std::fs::write(dir.join("manifest.json"), text)?;
    Ok(())
}

fn prepare_out_dir(out: &OutArgs) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(&out.out_dir)
        .map_err(|e| CliError::Run(format!("creating {}: {e}", out.out_dir.display())))?;
    Ok(out.out_dir.clone())
}

/// Shortest round-trip decimal for a float; `nan` for undefined metrics.
fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x}")
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::Run(format!("writing {}: {e}", path.display())))
}

// ---- train ----

/// Progressive tallies kept while a stream is consumed once.
#[derive(Default)]
struct Tally {
    scored: Vec<(f64, bool)>,
    total_loss: f64,
    positives: u64,
    correct: u64,
}

impl Tally {
    fn record(&mut self, p: f64, label: bool) {
        self.total_loss += loss_from_probability(p, label);
        self.positives += u64::from(label);
        self.correct += u64::from((p > 0.5) == label);
        self.scored.push((p, label));
    }

    fn examples(&self) -> u64 {
        self.scored.len() as u64
    }

    fn mean_loss(&self) -> f64 {
        self.total_loss / self.scored.len() as f64
    }

    fn accuracy(&self) -> f64 {
        self.correct as f64 / self.scored.len() as f64
    }

    fn auc(&self) -> f64 {
        auc(&self.scored).unwrap_or(f64::NAN)
    }
}

fn metrics_rows(tally: &Tally, trainer: &Trainer, model: &StoredModel) -> Vec<Vec<String>> {
    let report = memory_report(model);
    let stats = trainer.stats();
    let row = |k: &str, v: String| vec![k.to_string(), v];
    vec![
        row("examples", tally.examples().to_string()),
        row("positives", tally.positives.to_string()),
        row("mean_loss", fmt_f64(tally.mean_loss())),
        row("total_loss", fmt_f64(tally.total_loss)),
        row("accuracy", fmt_f64(tally.accuracy())),
        row("auc", fmt_f64(tally.auc())),
        row("alpha", fmt_f64(trainer.alpha())),
        row("coordinates", report.coordinates.to_string()),
        row("layout", report.layout.clone()),
        row("coefficient_bits", fmt_f64(report.coefficient_bits)),
        row("counter_bits", report.counter_bits.to_string()),
        row("bits_per_coordinate", fmt_f64(report.bits_per_coordinate)),
        row("total_bits", report.total_bits.to_string()),
        row("clipped_gradients", stats.clipped_gradients.to_string()),
        row("saturated_counters", stats.saturated_counters.to_string()),
        row("range_clamps", stats.range_clamps.to_string()),
    ]
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let cfg = args.model.to_config();
    let mut trainer = Trainer::new(cfg.clone()).map_err(|e| CliError::Usage(e.to_string()))?;
    let out_dir = prepare_out_dir(&args.out)?;
    let (src, info) = source::open(&args.data)?;

    let mut tally = Tally::default();
    source::for_each(src, args.data.fail_fast, &mut |ex| {
        let p = trainer.train_step(&ex)?;
        tally.record(p, ex.label);
        Ok(())
    })?;

    let config = ConfigManifest::from_config(&cfg);
    let mut model = trainer.export_model();
    model.meta.config_digest = config.digest();
    write_file(&out_dir.join("model.bin"), &model.serialize()?)?;

    // An empty stream leaves a valid empty model and a header-only CSV.
    let rows = if tally.examples() == 0 {
        Vec::new()
    } else {
        metrics_rows(&tally, &trainer, &model)
    };
    let mut csv = Vec::new();
    eval::write_csv(&mut csv, "metrics", &["metric", "value"], &rows)?;
    write_file(&out_dir.join("metrics.csv"), &csv)?;

    write_manifest(
        &out_dir,
        &Manifest {
            artifact_version: ARTIFACT_VERSION,
            command: "train".to_string(),
            config,
            input_kind: info.kind.to_string(),
            input_sha256: info.sha256,
            outputs: vec!["model.bin".to_string(), "metrics.csv".to_string()],
        },
    )?;

    let report = memory_report(&model);
    println!(
        "trained {} example(s): mean loss {}, {} coordinate(s), {} bits/coordinate ({})",
        tally.examples(),
        fmt_f64(if tally.examples() == 0 {
            f64::NAN
        } else {
            tally.mean_loss()
        }),
        report.coordinates,
        fmt_f64(report.bits_per_coordinate),
        report.layout
    );
    Ok(())
}

// ---- quantize ----

fn cmd_quantize(args: QuantizeArgs) -> Result<(), CliError> {
    let out_dir = prepare_out_dir(&args.out)?;
    let bytes = std::fs::read(&args.model)
        .map_err(|e| CliError::Run(format!("reading {}: {e}", args.model.display())))?;
    let model = StoredModel::deserialize(&bytes)?;
    let spec = GridSpec::new(args.n, args.m).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut rng = rng::derive(args.seed, rng::label_seed(0, "quantize"));
    let quantized = quantize_for_prediction(&model, spec, &mut rng)?;
    write_file(&out_dir.join("model.bin"), &quantized.serialize()?)?;

    let report = memory_report(&quantized);
    let entropy = if quantized.payload.is_empty() {
        f64::NAN
    } else {
        ModelHistogram::from_model(&quantized)?.optimal_bits_per_value()
    };
    let row = |k: &str, v: String| vec![k.to_string(), v];
    let rows = vec![
        row("coordinates", report.coordinates.to_string()),
        row("layout", report.layout.clone()),
        row("coefficient_bits", fmt_f64(report.coefficient_bits)),
        row("counter_bits", report.counter_bits.to_string()),
        row("bits_per_coordinate", fmt_f64(report.bits_per_coordinate)),
        row("total_bits", report.total_bits.to_string()),
        row("opt_bits_per_value", fmt_f64(entropy)),
    ];
    let mut csv = Vec::new();
    eval::write_csv(&mut csv, "quantize", &["metric", "value"], &rows)?;
    write_file(&out_dir.join("quantize.csv"), &csv)?;

    write_manifest(
        &out_dir,
        &Manifest {
            artifact_version: ARTIFACT_VERSION,
            command: "quantize".to_string(),
            config: QuantizeManifest {
                n: args.n,
                m: args.m,
                seed: args.seed,
            },
            input_kind: "model".to_string(),
            input_sha256: hex::encode(Sha256::digest(&bytes)),
            outputs: vec!["model.bin".to_string(), "quantize.csv".to_string()],
        },
    )?;

    println!(
        "quantized {} coordinate(s) to q{}.{}: {} bits/coordinate, {} optimal bits/value",
        report.coordinates,
        args.n,
        args.m,
        fmt_f64(report.bits_per_coordinate),
        fmt_f64(entropy)
    );
    Ok(())
}

// ---- predict ----

fn cmd_predict(args: PredictArgs) -> Result<(), CliError> {
    let out_dir = prepare_out_dir(&args.out)?;
    let bytes = std::fs::read(&args.model)
        .map_err(|e| CliError::Run(format!("reading {}: {e}", args.model.display())))?;
    let model = StoredModel::deserialize(&bytes)?;
    let (src, info) = source::open(&args.data)?;

    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut ordinal = 0u64;
    let push = |p: f64, rows: &mut Vec<Vec<String>>, ordinal: &mut u64| {
        rows.push(vec![ordinal.to_string(), fmt_f64(p)]);
        *ordinal += 1;
    };
    match src {
        Source::Parsed(reader) => {
            let mut skipped = 0u64;
            for record in reader {
                match record {
                    Ok(rec) => {
                        let p = if args.raw_values {
                            sigmoid(weighted_logit(|i| model.weight_at(i), &rec.line.terms))
                        } else {
                            model.predict(&rec.line.to_example())
                        };
                        push(p, &mut rows, &mut ordinal);
                    }
                    Err(err) => {
                        if args.data.fail_fast || matches!(err.error, gridlearn::Error::Io(_)) {
                            return Err(CliError::Run(err.to_string()));
                        }
                        eprintln!("warning: skipping {err}");
                        skipped += 1;
                    }
                }
            }
            if skipped > 0 {
                eprintln!("warning: skipped {skipped} malformed line(s)");
            }
        }
        Source::Synth(stream) => {
            for example in *stream {
                push(model.predict(&example), &mut rows, &mut ordinal);
            }
        }
    }

    let mut csv = Vec::new();
    eval::write_csv(&mut csv, "predictions", &["ordinal", "probability"], &rows)?;
    write_file(&out_dir.join("predictions.csv"), &csv)?;

    #[derive(Serialize)]
    struct PredictManifest {
        model_sha256: String,
        raw_values: bool,
    }
    write_manifest(
        &out_dir,
        &Manifest {
            artifact_version: ARTIFACT_VERSION,
            command: "predict".to_string(),
            config: PredictManifest {
                model_sha256: hex::encode(Sha256::digest(&bytes)),
                raw_values: args.raw_values,
            },
            input_kind: info.kind.to_string(),
            input_sha256: info.sha256,
            outputs: vec!["predictions.csv".to_string()],
        },
    )?;

    println!("scored {ordinal} example(s)");
    Ok(())
}

// ---- sweep ----

/// One sweep point's results, in row order.
struct PointResult {
    value: String,
    seed: u64,
    examples: u64,
    mean_loss: f64,
    accuracy: f64,
    auc: f64,
    coefficient_bits: f64,
    counter_bits: u32,
    bits_per_coordinate: f64,
    opt_bits_per_value: f64,
}

/// Seed for one sweep point: the first eight little-endian bytes of
/// sha256(config digest | axis | value).
fn point_seed(config_digest: &[u8; 32], axis: &str, value: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(config_digest);
    hasher.update([0u8]);
    hasher.update(axis.as_bytes());
    hasher.update([0u8]);
    hasher.update(value.as_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Train one configuration over the buffered stream and summarize it.
fn run_training_point(
    cfg: TrainConfig,
    examples: &[SparseExample],
    value: String,
) -> Result<PointResult, CliError> {
    let mut trainer = Trainer::new(cfg.clone()).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut tally = Tally::default();
    for ex in examples {
        let p = trainer.train_step(ex)?;
        tally.record(p, ex.label);
    }
    let model = trainer.export_model();
    let report = memory_report(&model);
    let entropy = match &model.payload {
        gridlearn::store::ModelPayload::Grid { .. } if !model.payload.is_empty() => {
            ModelHistogram::from_model(&model)?.optimal_bits_per_value()
        }
        _ => f64::NAN,
    };
    Ok(PointResult {
        value,
        seed: cfg.seed,
        examples: tally.examples(),
        mean_loss: if tally.examples() == 0 {
            f64::NAN
        } else {
            tally.mean_loss()
        },
        accuracy: if tally.examples() == 0 {
            f64::NAN
        } else {
            tally.accuracy()
        },
        auc: tally.auc(),
        coefficient_bits: report.coefficient_bits,
        counter_bits: report.counter_bits,
        bits_per_coordinate: report.bits_per_coordinate,
        opt_bits_per_value: entropy,
    })
}

/// Evaluate a fixed model over the stream (no training).
fn evaluate_model(model: &StoredModel, examples: &[SparseExample]) -> Tally {
    let mut tally = Tally::default();
    for ex in examples {
        tally.record(model.predict(ex), ex.label);
    }
    tally
}

fn parse_axis_values(axis: AxisArg, raw: &[String]) -> Result<(), CliError> {
    for v in raw {
        let ok = match axis {
            AxisArg::M | AxisArg::PredictM => v.parse::<u8>().is_ok(),
            AxisArg::Gamma => v.parse::<f64>().is_ok_and(|g| g.is_finite() && g >= 0.0),
        };
        if !ok {
            return Err(CliError::Usage(format!(
                "bad value {v:?} for axis {}",
                axis.name()
            )));
        }
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    if args.values.is_empty() {
        return Err(CliError::Usage("--values must list at least one point".into()));
    }
    parse_axis_values(args.axis, &args.values)?;
    if args.axis == AxisArg::Gamma && args.model.mode == ModeArg::Control {
        return Err(CliError::Usage(
            "a gamma sweep needs --mode fixed or --mode adaptive; the control mode never rounds"
                .into(),
        ));
    }
    let out_dir = prepare_out_dir(&args.out)?;
    let (src, info) = source::open(&args.data)?;
    let examples = source::collect(src, args.data.fail_fast)?;

    let base_cfg = args.model.to_config();
    let config = ConfigManifest::from_config(&base_cfg);
    let digest = config.digest();

    // The control arm: float32 coefficients, same counter and scale. For
    // prediction sweeps the control is the unquantized base model itself.
    let control_cfg = TrainConfig {
        precision: PrecisionMode::Float32Control,
        seed: point_seed(&digest, "control", ""),
        ..base_cfg.clone()
    };

    let (control_tally, points): (Tally, Vec<PointResult>) = match args.axis {
        AxisArg::PredictM => {
            // One base training run, then one re-rounding per point.
            let mut trainer =
                Trainer::new(TrainConfig {
                    seed: point_seed(&digest, "base", ""),
                    ..base_cfg.clone()
                })
                .map_err(|e| CliError::Usage(e.to_string()))?;
            for ex in &examples {
                trainer.train_step(ex)?;
            }
            let base_model = trainer.export_model();
            let control_tally = evaluate_model(&base_model, &examples);

            let results: Vec<Result<PointResult, CliError>> = std::thread::scope(|scope| {
                let handles: Vec<_> = args
                    .values
                    .iter()
                    .map(|value| {
                        let base_model = &base_model;
                        let examples = &examples;
                        let seed = point_seed(&digest, "predict-m", value);
                        let m: u8 = value.parse().expect("validated above");
                        let n = args.model.n;
                        let value = value.clone();
                        scope.spawn(move || -> Result<PointResult, CliError> {
                            let spec =
                                GridSpec::new(n, m).map_err(|e| CliError::Usage(e.to_string()))?;
                            let mut rng = rng::derive(seed, rng::label_seed(0, "quantize"));
                            let q = quantize_for_prediction(base_model, spec, &mut rng)?;
                            let tally = evaluate_model(&q, examples);
                            let report = memory_report(&q);
                            let entropy = if q.payload.is_empty() {
                                f64::NAN
                            } else {
                                ModelHistogram::from_model(&q)?.optimal_bits_per_value()
                            };
                            Ok(PointResult {
                                value,
                                seed,
                                examples: tally.examples(),
                                mean_loss: if tally.examples() == 0 {
                                    f64::NAN
                                } else {
                                    tally.mean_loss()
                                },
                                accuracy: if tally.examples() == 0 {
                                    f64::NAN
                                } else {
                                    tally.accuracy()
                                },
                                auc: tally.auc(),
                                coefficient_bits: report.coefficient_bits,
                                counter_bits: report.counter_bits,
                                bits_per_coordinate: report.bits_per_coordinate,
                                opt_bits_per_value: entropy,
                            })
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("no panics")).collect()
            });
            let mut points = Vec::with_capacity(results.len());
            for r in results {
                points.push(r?);
            }
            (control_tally, points)
        }
        AxisArg::M | AxisArg::Gamma => {
            let mut control_trainer =
                Trainer::new(control_cfg).map_err(|e| CliError::Usage(e.to_string()))?;
            let mut control_tally = Tally::default();
            for ex in &examples {
                let p = control_trainer.train_step(ex)?;
                control_tally.record(p, ex.label);
            }

            let results: Vec<Result<PointResult, CliError>> = std::thread::scope(|scope| {
                let handles: Vec<_> = args
                    .values
                    .iter()
                    .map(|value| {
                        let examples = &examples;
                        let axis = args.axis;
                        let seed = point_seed(&digest, axis.name(), value);
                        let mut cfg = base_cfg.clone();
                        cfg.seed = seed;
                        match axis {
                            AxisArg::M => {
                                cfg.precision = PrecisionMode::Fixed {
                                    int_bits: args.model.n,
                                    frac_bits: value.parse().expect("validated above"),
                                };
                            }
                            AxisArg::Gamma => {
                                cfg.gamma = value.parse().expect("validated above");
                            }
                            AxisArg::PredictM => unreachable!(),
                        }
                        let value = value.clone();
                        scope.spawn(move || run_training_point(cfg, examples, value))
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("no panics")).collect()
            });
            let mut points = Vec::with_capacity(results.len());
            for r in results {
                points.push(r?);
            }
            (control_tally, points)
        }
    };

    let control_auc = control_tally.auc();
    let control_loss = if control_tally.examples() == 0 {
        f64::NAN
    } else {
        control_tally.mean_loss()
    };
    let columns = [
        "axis",
        "value",
        "seed",
        "examples",
        "mean_loss",
        "accuracy",
        "auc",
        "control_mean_loss",
        "control_auc",
        "auc_loss_vs_control_pct",
        "coefficient_bits",
        "counter_bits",
        "bits_per_coordinate",
        "opt_bits_per_value",
    ];
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            let rel = if p.auc.is_nan() || control_auc.is_nan() {
                f64::NAN
            } else {
                auc_loss_relative(control_auc, p.auc)
            };
            vec![
                args.axis.name().to_string(),
                p.value.clone(),
                p.seed.to_string(),
                p.examples.to_string(),
                fmt_f64(p.mean_loss),
                fmt_f64(p.accuracy),
                fmt_f64(p.auc),
                fmt_f64(control_loss),
                fmt_f64(control_auc),
                fmt_f64(rel),
                fmt_f64(p.coefficient_bits),
                p.counter_bits.to_string(),
                fmt_f64(p.bits_per_coordinate),
                fmt_f64(p.opt_bits_per_value),
            ]
        })
        .collect();
    let mut csv = Vec::new();
    eval::write_csv(&mut csv, "sweep", &columns, &rows)?;
    write_file(&out_dir.join("sweep.csv"), &csv)?;

    #[derive(Serialize)]
    struct SweepManifest {
        axis: String,
        values: Vec<String>,
        base: ConfigManifest,
    }
    write_manifest(
        &out_dir,
        &Manifest {
            artifact_version: ARTIFACT_VERSION,
            command: "sweep".to_string(),
            config: SweepManifest {
                axis: args.axis.name().to_string(),
                values: args.values.clone(),
                base: config,
            },
            input_kind: info.kind.to_string(),
            input_sha256: info.sha256,
            outputs: vec!["sweep.csv".to_string()],
        },
    )?;

    println!(
        "swept {} over {} point(s), {} example(s) each",
        args.axis.name(),
        points.len(),
        examples.len()
    );
    let _ = std::io::stdout().flush();
    Ok(())
}
