use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::Deserialize;

use cpa_core::assessment::{BerThresholds, ThreatAssessment};
use cpa_core::baseline::SequentialConfig;
use cpa_core::experiments::dataset::default_threads;
use cpa_core::experiments::metrics::predictions_csv;
use cpa_core::experiments::{
    assess_inputs, assess_series, build_dataset, checkpoint_header, dataset_header, evaluate_multitask, evaluate_sequential, input_ranges_for,
    step_log_csv, Dataset, ExperimentConfig, MetricsReport, Prediction, Predictor,
};
use cpa_core::features::InputScaling;
use cpa_core::nn::checkpoint;
use cpa_core::nn::train::{steps_per_epoch, train_until};
use cpa_core::nn::{Model, NetworkConfig, TaskMode};
use cpa_core::seed::rng_from;
use cpa_core::signal::ComplexSeries;
use cpa_core::{CpaError, Result};

#[derive(Parser)]
#[command(name = "cpa", version, about = "Threat assessment for optical intersatellite links")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the default experiment configuration as TOML.
    Config {
        /// Full-size frame instead of the desk defaults.
        #[arg(long)]
        full: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate received signals and write a feature dataset.
    Generate(GenerateArgs),
    /// Train a network on a dataset.
    Train(TrainArgs),
    /// Evaluate checkpoints on a dataset.
    Eval(EvalArgs),
    /// Sequential baseline evaluation (same as `eval --mode sequential`).
    Baseline(EvalArgs),
    /// Grade samples from a dataset or a single JSON series.
    Assess(AssessArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Train,
    Test,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Dataset seed; defaults to the split seed derived from the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "train")]
    split: Split,
    /// Samples per threat kind, overriding the config.
    #[arg(long)]
    per_kind: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TrainMode {
    Multitask,
    Intent,
    Capability,
}

impl From<TrainMode> for TaskMode {
    fn from(m: TrainMode) -> Self {
        match m {
            TrainMode::Multitask => TaskMode::Multitask,
            TrainMode::Intent => TaskMode::Intent,
            TrainMode::Capability => TaskMode::Capability,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum, default_value = "multitask")]
    mode: TrainMode,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Continue from this checkpoint instead of initializing.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Stop once the step counter reaches this value.
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    amplification: Option<f64>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long, value_enum)]
    input_scaling: Option<Scaling>,
    /// Per-step loss log (CSV).
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scaling {
    PerSample,
    Shared,
}

impl From<Scaling> for InputScaling {
    fn from(s: Scaling) -> Self {
        match s {
            Scaling::PerSample => InputScaling::PerSample,
            Scaling::Shared => InputScaling::Shared,
        }
    }
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum EvalMode {
    Multitask,
    Sequential,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Multitask checkpoint, or the capability regressor in sequential mode.
    #[arg(long)]
    ckpt: PathBuf,
    /// Intent classifier for sequential mode.
    #[arg(long)]
    ckpt2: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<EvalMode>,
    /// Gate values for sequential mode, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1e-2, 1e-3, 1e-4])]
    theta: Vec<f64>,
    #[arg(long, default_value_t = 1e-2)]
    high_ber: f64,
    #[arg(long, default_value_t = 1e-4)]
    low_ber: f64,
    /// Directory for CSV and JSON outputs.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct AssessArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Dataset file, or JSON `{"re": [...], "im": [...]}` with CP-intact samples.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 1e-2)]
    high_ber: f64,
    #[arg(long, default_value_t = 1e-4)]
    low_ber: f64,
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::desk()),
    }
}

fn run_config(full: bool, out: Option<PathBuf>) -> Result<()> {
    let cfg = if full { ExperimentConfig::full_scale() } else { ExperimentConfig::desk() };
    let text = cfg.to_toml()?;
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run_generate(a: GenerateArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let (default_seed, default_count) = match a.split {
        Split::Train => (cfg.train_seed(), cfg.train_per_kind),
        Split::Test => (cfg.test_seed(), cfg.test_per_kind),
    };
    let header = dataset_header(&cfg, a.seed.unwrap_or(default_seed), a.per_kind.unwrap_or(default_count));
    let start = Instant::now();
    let ds = build_dataset(header, a.threads.unwrap_or_else(default_threads))?;
    ds.save(&a.out)?;
    eprintln!("wrote {} samples to {} in {:.1} s", ds.len(), a.out.display(), start.elapsed().as_secs_f64());
    Ok(())
}

fn run_train(a: TrainArgs) -> Result<()> {
    let ds = Dataset::load(&a.dataset)?;
    let mut cfg = load_config(a.config.as_deref())?;
    if a.config.is_none() {
        cfg.frame = ds.header.frame;
        cfg.features = ds.header.features;
        cfg.network = NetworkConfig::for_input(ds.header.frames, ds.header.bins);
    }
    let mut train = cfg.train.clone();
    let resumed = a.resume.as_deref().map(checkpoint::load).transpose()?;
    if let Some(t) = resumed.as_ref().and_then(|ck| ck.header.train.clone()) {
        train = t;
    }
    train.task = a.mode.into();
    if let Some(v) = a.epochs {
        train.epochs = v;
    }
    if let Some(v) = a.batch_size {
        train.batch_size = v;
    }
    if let Some(v) = a.lr {
        train.adam.learning_rate = v;
    }
    if let Some(v) = a.seed {
        train.seed = v;
    }
    if let Some(v) = a.gamma {
        cfg.network.focal_gamma = v;
    }
    if let Some(v) = a.amplification {
        cfg.network.amplification = v;
    }
    if let Some(v) = a.l2 {
        cfg.network.l2_coeff = v;
    }
    if let Some(v) = a.input_scaling {
        cfg.input_scaling = v.into();
    }
    let start = Instant::now();
    let (model, input_ranges) = match resumed {
        Some(ck) => (ck.model, ck.header.input_ranges),
        None => (
            Model::init(cfg.network.clone(), &mut rng_from(train.seed))?,
            input_ranges_for(cfg.input_scaling, &ds)?,
        ),
    };
    let set = ds.training_set(input_ranges.as_ref())?;
    let per_epoch = steps_per_epoch(set.len(), train.batch_size.clamp(1, set.len())) as u64;
    let until = a.steps.unwrap_or(train.epochs as u64 * per_epoch);
    let mut predictor = Predictor { model, input_ranges };
    let log = train_until(&mut predictor.model, &set, &train, until)?;
    let model = &predictor.model;
    checkpoint::save(&a.out, &checkpoint_header(&cfg, &predictor, &train), &model.params)?;
    if let Some(p) = a.log {
        fs::write(p, step_log_csv(&log))?;
    }
    if let Some(last) = log.last() {
        eprintln!(
            "step {} epoch {}: cls {:.4} reg {:.4} total {:.4} ({:.1} s)",
            last.step,
            last.epoch,
            last.loss.classification,
            last.loss.regression,
            last.loss.total,
            start.elapsed().as_secs_f64()
        );
    }
    eprintln!(
        "reg_label_variance {:e}; checkpoint {}",
        model.config.reg_label_variance.unwrap_or(f64::NAN),
        a.out.display()
    );
    Ok(())
}

fn write_outputs(dir: &Path, tag: &str, preds: &[Prediction], report: &MetricsReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    let labels3: Vec<String> = ["deceptive", "disruptive", "non-adversarial"].iter().map(|s| s.to_string()).collect();
    let labels8: Vec<String> = (0..8).map(|s| s.to_string()).collect();
    fs::write(dir.join(format!("{tag}_predictions.csv")), predictions_csv(preds))?;
    fs::write(dir.join(format!("{tag}_per_scale.csv")), report.per_scale_csv())?;
    fs::write(dir.join(format!("{tag}_intent.csv")), report.intent_csv())?;
    fs::write(dir.join(format!("{tag}_intent_confusion.csv")), report.intent_confusion.to_csv(&labels3))?;
    fs::write(dir.join(format!("{tag}_scale_confusion.csv")), report.scale_confusion.to_csv(&labels8))?;
    fs::write(dir.join(format!("{tag}_report.json")), serde_json::to_string_pretty(report)?)?;
    Ok(())
}

fn run_eval(a: EvalArgs, default_mode: EvalMode) -> Result<()> {
    let thresholds = BerThresholds { high: a.high_ber, low: a.low_ber };
    thresholds.validate()?;
    let ds = Dataset::load(&a.dataset)?;
    let first = checkpoint::load(&a.ckpt)?;
    let first_task = first.header.task;
    let first = Predictor::from_checkpoint(first);
    match a.mode.unwrap_or(default_mode) {
        EvalMode::Multitask => {
            let (preds, report) = evaluate_multitask(&first, &ds, &thresholds)?;
            print!("{report}");
            if let Some(dir) = &a.out_dir {
                write_outputs(dir, "multitask", &preds, &report)?;
            }
        }
        EvalMode::Sequential => {
            let path2 = a
                .ckpt2
                .as_ref()
                .ok_or_else(|| CpaError::InvalidConfig("sequential mode needs --ckpt2".into()))?;
            let second = checkpoint::load(path2)?;
            let second_task = second.header.task;
            let second = Predictor::from_checkpoint(second);
            // the capability regressor gates the intent classifier
            let (reg, clf) = if first_task == TaskMode::Intent && second_task == TaskMode::Capability {
                (second, first)
            } else {
                (first, second)
            };
            for &theta in &a.theta {
                let seq = SequentialConfig { threshold_ber: theta, thresholds };
                let (preds, report) = evaluate_sequential(&reg, &clf, &ds, &seq)?;
                print!("{report}");
                if let Some(dir) = &a.out_dir {
                    write_outputs(dir, &format!("sequential_theta{theta:e}"), &preds, &report)?;
                }
            }
        }
    }
    Ok(())
}

#[derive(Deserialize)]
struct SeriesJson {
    re: Vec<f64>,
    im: Vec<f64>,
}

fn run_assess(a: AssessArgs) -> Result<()> {
    let thresholds = BerThresholds { high: a.high_ber, low: a.low_ber };
    thresholds.validate()?;
    let ck = checkpoint::load(&a.ckpt)?;
    let bytes = fs::read(&a.input)?;
    let assessments = if bytes.starts_with(cpa_core::experiments::dataset::MAGIC) {
        let ds = Dataset::read_from(&mut bytes.as_slice())?;
        assess_inputs(&ck.model, &ds.inputs(ck.header.input_ranges.as_ref()), ds.len(), &thresholds)?
    } else {
        let s: SeriesJson = serde_json::from_slice(&bytes)?;
        if s.re.len() != s.im.len() {
            return Err(CpaError::InputSize { expected: s.re.len(), got: s.im.len() });
        }
        let series = ComplexSeries(s.re.iter().zip(&s.im).map(|(&r, &i)| Complex64::new(r, i)).collect());
        vec![assess_series(&ck, &series, &thresholds)?]
    };
    println!("{}", ThreatAssessment::csv_header());
    for (i, a) in assessments.iter().enumerate() {
        println!("{}", a.csv_line(i));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Config { full, out } => run_config(full, out),
        Command::Generate(a) => run_generate(a),
        Command::Train(a) => run_train(a),
        Command::Eval(a) => run_eval(a, EvalMode::Multitask),
        Command::Baseline(a) => run_eval(a, EvalMode::Sequential),
        Command::Assess(a) => run_assess(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
