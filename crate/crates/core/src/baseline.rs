//! Sequential capability-then-intent cascade.
//!
//! A capability-only regressor predicts `log10` BER; the intent-only
//! classifier runs only when the linear estimate `10^rho_hat` exceeds the gate
//! `threshold_ber`. Samples at or below the gate are declared
//! non-adversarial and graded on that row of the threat table.

use serde::{Deserialize, Serialize};

use crate::assessment::{argmax, BerThresholds, ThreatAssessment};
use crate::error::{CpaError, Result};
use crate::nn::model::{Model, NetworkConfig, TaskMode, CLASSES};
use crate::nn::train::{train, StepLog, TrainConfig, TrainingSet};
use crate::threat::ThreatKind;

/// Trains `model` on one task only; the other head receives no gradient.
pub fn train_single_task(model: &mut Model, data: &TrainingSet, cfg: &TrainConfig, task: TaskMode) -> Result<Vec<StepLog>> {
    if task == TaskMode::Multitask {
        return Err(CpaError::InvalidConfig("single-task training needs intent or capability".into()));
    }
    train(model, data, &TrainConfig { task, ..cfg.clone() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequentialConfig {
    pub threshold_ber: f64,
    #[serde(default)]
    pub thresholds: BerThresholds,
}

impl SequentialConfig {
    pub fn new(threshold_ber: f64) -> Self {
        SequentialConfig { threshold_ber, thresholds: BerThresholds::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.threshold_ber) {
            return Err(CpaError::InvalidConfig(format!("gate must lie in [0, 1), got {}", self.threshold_ber)));
        }
        self.thresholds.validate()
    }

    /// True when the classifier must run.
    pub fn passes_gate(&self, rho_hat: f64) -> bool {
        10f64.powf(rho_hat) > self.threshold_ber
    }
}

/// Backbone and input geometry must agree between the two stages.
pub fn check_compatible(a: &NetworkConfig, b: &NetworkConfig) -> Result<()> {
    let shape = |c: &NetworkConfig| (c.input_channels, c.input_height, c.input_width, c.conv_blocks.clone(), c.pool_size, c.batch_norm);
    if shape(a) != shape(b) {
        return Err(CpaError::ShapeMismatch("regressor and classifier backbones differ".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequentialOutcome {
    pub assessments: Vec<ThreatAssessment>,
    /// Whether the classifier was run on each sample.
    pub invoked: Vec<bool>,
    /// Number of samples handed to the classifier.
    pub classifier_invocations: usize,
}

/// Runs the cascade on `n` channel-first samples.
pub fn sequential_assess(
    regressor: &Model,
    classifier: &Model,
    inputs: &[f64],
    n: usize,
    cfg: &SequentialConfig,
    chunk: usize,
) -> Result<SequentialOutcome> {
    cfg.validate()?;
    check_compatible(&regressor.config, &classifier.config)?;
    let (_, rho_hat) = regressor.predict(inputs, n, chunk)?;
    let len = regressor.config.input_len();
    let invoked: Vec<bool> = rho_hat.iter().map(|&r| cfg.passes_gate(r)).collect();
    let mut gated_inputs = Vec::new();
    for (i, _) in invoked.iter().enumerate().filter(|(_, &go)| go) {
        gated_inputs.extend_from_slice(&inputs[i * len..(i + 1) * len]);
    }
    let classifier_invocations = invoked.iter().filter(|&&go| go).count();
    let (probs, _) = classifier.predict(&gated_inputs, classifier_invocations, chunk)?;
    let mut rows = probs.chunks(CLASSES);
    let assessments = rho_hat
        .iter()
        .zip(&invoked)
        .map(|(&r, &go)| {
            let intent = if go {
                ThreatKind::from_index(argmax(rows.next().expect("one row per invocation"))).expect("three classes")
            } else {
                ThreatKind::NonAdversarial
            };
            ThreatAssessment::from_parts(intent, r, &cfg.thresholds)
        })
        .collect();
    Ok(SequentialOutcome { assessments, invoked, classifier_invocations })
}
