//! Dataset construction, training runs and evaluation.

pub mod config;
pub mod dataset;
pub mod metrics;

use std::fmt::Write as _;

use crate::assessment::{assess, BerThresholds, ThreatAssessment};
use crate::baseline::{sequential_assess, SequentialConfig};
use crate::error::{CpaError, Result};
use crate::features::{network_input, ChannelRanges, InputScaling};
use crate::nn::checkpoint::{Checkpoint, CheckpointHeader};
use crate::nn::model::Mode;
use crate::nn::{Model, StepLog, TaskMode, TrainConfig, CLASSES};
use crate::seed::rng_from;
use crate::signal::ComplexSeries;

pub use config::ExperimentConfig;
pub use dataset::{build_dataset, Dataset, DatasetHeader, DatasetReader, DatasetRecord};
pub use metrics::{build_report, report_per_scale, MetricsReport, Prediction};

/// Samples per inference chunk.
pub const EVAL_CHUNK: usize = 64;

pub fn dataset_header(cfg: &ExperimentConfig, seed: u64, per_kind: usize) -> DatasetHeader {
    DatasetHeader::new(seed, per_kind, cfg.frame, cfg.features, cfg.parameters.clone())
}

/// A trained network with the input scaling it was trained under.
#[derive(Debug, Clone)]
pub struct Predictor {
    pub model: Model,
    pub input_ranges: Option<ChannelRanges>,
}

impl Predictor {
    pub fn from_checkpoint(ck: Checkpoint) -> Self {
        Predictor { model: ck.model, input_ranges: ck.header.input_ranges }
    }

    pub fn inputs(&self, ds: &Dataset) -> Vec<f64> {
        ds.inputs(self.input_ranges.as_ref())
    }
}

/// Multitask assessment of `n` channel-first inputs.
pub fn assess_inputs(model: &Model, inputs: &[f64], n: usize, t: &BerThresholds) -> Result<Vec<ThreatAssessment>> {
    let (probs, rho) = model.predict(inputs, n, EVAL_CHUNK)?;
    probs.chunks_exact(CLASSES).zip(rho).map(|(p, r)| assess(p, r, t)).collect()
}

/// Assesses one CP-intact received series with the frame and feature settings
/// recorded in the checkpoint.
pub fn assess_series(ck: &Checkpoint, series: &ComplexSeries, t: &BerThresholds) -> Result<ThreatAssessment> {
    let frame = ck.header.frame.ok_or_else(|| CpaError::InvalidConfig("checkpoint has no frame config".into()))?;
    let fcfg = ck.header.features.unwrap_or_default();
    if series.len() != frame.series_len() {
        return Err(CpaError::InputSize { expected: frame.series_len(), got: series.len() });
    }
    let input = network_input(series, &frame, &fcfg, ck.header.input_ranges.as_ref())?;
    Ok(assess_inputs(&ck.model, &input, 1, t)?.remove(0))
}

pub fn checkpoint_header(cfg: &ExperimentConfig, p: &Predictor, train: &TrainConfig) -> CheckpointHeader {
    CheckpointHeader {
        network: p.model.config.clone(),
        task: train.task,
        train: Some(train.clone()),
        frame: Some(cfg.frame),
        features: Some(cfg.features),
        input_ranges: p.input_ranges,
    }
}

/// Shared input range for training on `ds` under `scaling`.
pub fn input_ranges_for(scaling: InputScaling, ds: &Dataset) -> Result<Option<ChannelRanges>> {
    match scaling {
        InputScaling::PerSample => Ok(None),
        InputScaling::Shared => ds.shared_ranges().map(Some).ok_or(CpaError::EmptyDataset),
    }
}

fn check_shape(model: &Model, ds: &Dataset) -> Result<()> {
    let c = &model.config;
    let h = &ds.header;
    if (c.input_channels, c.input_height, c.input_width) != (h.channels, h.frames, h.bins) {
        return Err(CpaError::ShapeMismatch(format!(
            "dataset tensors are {}x{}x{}, network expects {}x{}x{}",
            h.channels, h.frames, h.bins, c.input_channels, c.input_height, c.input_width
        )));
    }
    Ok(())
}

/// He-initializes a network from `cfg.network` and trains it on `ds` for
/// `train.task`.
pub fn train_model(cfg: &ExperimentConfig, train: &TrainConfig, ds: &Dataset) -> Result<(Predictor, Vec<StepLog>)> {
    let mut model = Model::init(cfg.network.clone(), &mut rng_from(train.seed))?;
    check_shape(&model, ds)?;
    let input_ranges = input_ranges_for(cfg.input_scaling, ds)?;
    let set = ds.training_set(input_ranges.as_ref())?;
    let log = crate::nn::train::train(&mut model, &set, train)?;
    Ok((Predictor { model, input_ranges }, log))
}

pub fn train_multitask(cfg: &ExperimentConfig, ds: &Dataset) -> Result<(Predictor, Vec<StepLog>)> {
    train_model(cfg, &TrainConfig { task: TaskMode::Multitask, ..cfg.train.clone() }, ds)
}

pub fn step_log_csv(log: &[StepLog]) -> String {
    let mut out = String::from("step,epoch,classification,regression,l2,total\n");
    for s in log {
        let l = &s.loss;
        let _ = writeln!(out, "{},{},{:e},{:e},{:e},{:e}", s.step, s.epoch, l.classification, l.regression, l.l2, l.total);
    }
    out
}

fn prediction(index: usize, record: &DatasetRecord, a: &ThreatAssessment, invoked: bool, t: &BerThresholds) -> Prediction {
    let truth = ThreatAssessment::from_parts(record.kind, record.rho, t);
    Prediction {
        index,
        true_kind: record.kind,
        pred_kind: a.intent,
        true_rho: record.rho,
        rho_hat: a.rho_hat,
        true_capability: truth.capability,
        pred_capability: a.capability,
        true_scale: truth.scale,
        pred_scale: a.scale,
        classifier_invoked: invoked,
    }
}

/// Multitask assessment of every record.
pub fn predict_multitask(p: &Predictor, ds: &Dataset, t: &BerThresholds) -> Result<Vec<Prediction>> {
    if ds.is_empty() {
        return Err(CpaError::EmptyDataset);
    }
    check_shape(&p.model, ds)?;
    let (probs, rho_hat) = p.model.predict(&p.inputs(ds), ds.len(), EVAL_CHUNK)?;
    ds.records
        .iter()
        .zip(probs.chunks(CLASSES).zip(&rho_hat))
        .enumerate()
        .map(|(i, (r, (p, &rh)))| Ok(prediction(i, r, &crate::assessment::assess(p, rh, t)?, true, t)))
        .collect()
}

pub fn evaluate_multitask(p: &Predictor, ds: &Dataset, t: &BerThresholds) -> Result<(Vec<Prediction>, MetricsReport)> {
    let preds = predict_multitask(p, ds, t)?;
    let mut report = build_report("multitask", None, &preds, t);
    let model = &p.model;
    let set = ds.training_set(p.input_ranges.as_ref())?;
    let all: Vec<usize> = (0..set.len()).collect();
    let mut sum = crate::nn::LossBreakdown { classification: 0.0, regression: 0.0, l2: 0.0, total: 0.0 };
    for chunk in all.chunks(EVAL_CHUNK) {
        let l = model.loss(&set.batch(chunk), Mode::Infer)?;
        let w = chunk.len() as f64 / set.len() as f64;
        sum.classification += w * l.classification;
        sum.regression += w * l.regression;
        sum.total += w * (l.total - l.l2);
        sum.l2 = l.l2;
    }
    sum.total += sum.l2;
    report.loss = Some(sum);
    Ok((preds, report))
}

pub fn evaluate_sequential(
    regressor: &Predictor,
    classifier: &Predictor,
    ds: &Dataset,
    seq: &SequentialConfig,
) -> Result<(Vec<Prediction>, MetricsReport)> {
    if ds.is_empty() {
        return Err(CpaError::EmptyDataset);
    }
    check_shape(&regressor.model, ds)?;
    if regressor.input_ranges != classifier.input_ranges {
        return Err(CpaError::InvalidConfig("regressor and classifier were trained on different input scalings".into()));
    }
    let out = sequential_assess(&regressor.model, &classifier.model, &regressor.inputs(ds), ds.len(), seq, EVAL_CHUNK)?;
    let preds: Vec<Prediction> = ds
        .records
        .iter()
        .zip(out.assessments.iter().zip(&out.invoked))
        .enumerate()
        .map(|(i, (r, (a, &go)))| prediction(i, r, a, go, &seq.thresholds))
        .collect();
    let report = build_report("sequential", Some(seq.threshold_ber), &preds, &seq.thresholds);
    debug_assert_eq!(report.classifier_invocations, Some(out.classifier_invocations));
    Ok((preds, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureConfig;
    use crate::nn::model::ConvSpec;
    use crate::nn::AdamConfig;
    use crate::signal::FrameConfig;

    fn small() -> ExperimentConfig {
        let frame = FrameConfig::new(16, 4, 8, 4).unwrap();
        let mut network = crate::nn::NetworkConfig::for_input(8, 16);
        network.conv_blocks = vec![ConvSpec { filters: 4, kernel: 3, stride: 1 }];
        ExperimentConfig {
            train_per_kind: 4,
            test_per_kind: 2,
            frame,
            features: FeatureConfig { disk_radius: 1 },
            network,
            train: TrainConfig { epochs: 3, batch_size: 4, adam: AdamConfig { learning_rate: 1e-3, ..AdamConfig::default() }, ..TrainConfig::default() },
            ..ExperimentConfig::desk()
        }
    }

    #[test]
    fn train_and_evaluate_small_run() {
        let cfg = small();
        cfg.validate().unwrap();
        let train = build_dataset(dataset_header(&cfg, cfg.train_seed(), cfg.train_per_kind), 2).unwrap();
        let test = build_dataset(dataset_header(&cfg, cfg.test_seed(), cfg.test_per_kind), 2).unwrap();
        let (model, log) = train_multitask(&cfg, &train).unwrap();
        assert_eq!(log.len(), 9);
        assert!(log.iter().all(|s| s.loss.total.is_finite()));
        let set = train.training_set(model.input_ranges.as_ref()).unwrap();
        assert!((model.model.config.reg_label_variance.unwrap() - set.rho_variance()).abs() < 1e-9);
        let (preds, report) = evaluate_multitask(&model, &test, &cfg.thresholds).unwrap();
        assert_eq!(preds.len(), 6);
        assert!(report.loss.unwrap().total.is_finite());
        let csv = step_log_csv(&log);
        assert_eq!(csv.lines().count(), 10);

        let (seq_preds, seq_report) =
            evaluate_sequential(&model, &model, &test, &SequentialConfig::new(1e-2)).unwrap();
        for p in &seq_preds {
            assert_eq!(p.classifier_invoked, 10f64.powf(p.rho_hat) > 1e-2);
        }
        assert_eq!(seq_report.classifier_invocations.unwrap(), seq_preds.iter().filter(|p| p.classifier_invoked).count());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let cfg = small();
        let ds = build_dataset(dataset_header(&cfg, 1, 1), 1).unwrap();
        let mut other = cfg.clone();
        other.network = crate::nn::NetworkConfig { input_height: 16, ..cfg.network.clone() };
        assert!(matches!(train_multitask(&other, &ds), Err(CpaError::ShapeMismatch(_))));
    }
}
