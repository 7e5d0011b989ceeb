//! Minibatch training loop.
//!
//! Batch order is a pure function of `(seed, epoch)` and the global step
//! counter, so a run stopped after any step and resumed from its checkpoint
//! reproduces an uninterrupted run bit for bit.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{CpaError, Result};
use crate::nn::adam::{adam_step, AdamConfig};
use crate::nn::layers::Tensor4;
use crate::nn::model::{Batch, LossBreakdown, Model, TaskMode, CLASSES};
use crate::seed::{derive_seed, rng_from};
use crate::threat::ThreatKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub adam: AdamConfig,
    pub seed: u64,
    #[serde(default)]
    pub task: TaskMode,
    /// Update only the heads; backbone weights and running statistics stay fixed.
    #[serde(default)]
    pub freeze_backbone: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 32,
            adam: AdamConfig::default(),
            seed: 0,
            task: TaskMode::Multitask,
            freeze_backbone: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(CpaError::InvalidConfig("batch_size must be positive".into()));
        }
        if !(self.adam.learning_rate > 0.0) || !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) {
            return Err(CpaError::InvalidConfig("ADAM hyperparameters out of range".into()));
        }
        Ok(())
    }
}

/// Channel-first training inputs with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub inputs: Vec<f64>,
    pub kinds: Vec<ThreatKind>,
    pub rho: Vec<f64>,
}

impl TrainingSet {
    pub fn sample_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(CpaError::EmptyDataset);
        }
        if self.rho.len() != self.len() || self.inputs.len() != self.len() * self.sample_len() {
            return Err(CpaError::ShapeMismatch("training inputs and labels disagree in length".into()));
        }
        Ok(())
    }

    pub fn batch(&self, indices: &[usize]) -> Batch {
        let len = self.sample_len();
        let mut data = Vec::with_capacity(indices.len() * len);
        let mut targets = Vec::with_capacity(indices.len() * CLASSES);
        let mut rho = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(&self.inputs[i * len..(i + 1) * len]);
            targets.extend(self.kinds[i].one_hot().iter().map(|&b| f64::from(b)));
            rho.push(self.rho[i]);
        }
        Batch {
            input: Tensor4::from_data(indices.len(), self.channels, self.height, self.width, data),
            targets,
            rho,
        }
    }

    /// Population variance of the capability labels.
    pub fn rho_variance(&self) -> f64 {
        let n = self.rho.len() as f64;
        let mean = self.rho.iter().sum::<f64>() / n;
        self.rho.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: u64,
    pub epoch: usize,
    pub loss: LossBreakdown,
}

/// Full batches per epoch; a trailing partial batch is dropped.
pub fn steps_per_epoch(samples: usize, batch_size: usize) -> usize {
    (samples / batch_size).max(1)
}

pub fn epoch_order(seed: u64, epoch: usize, samples: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..samples).collect();
    order.shuffle(&mut rng_from(derive_seed(seed, epoch as u64)));
    order
}

/// Freezes the regression weighting variance on first use.
pub fn freeze_label_variance(model: &mut Model, data: &TrainingSet) -> Result<()> {
    if model.config.reg_label_variance.is_none() {
        let var = data.rho_variance();
        if !(var > 0.0) {
            return Err(CpaError::InvalidConfig(
                "capability labels have zero variance; set reg_label_variance explicitly".into(),
            ));
        }
        model.config.reg_label_variance = Some(var);
    }
    Ok(())
}

/// Trains until the model's step counter reaches `until_step`.
pub fn train_until(model: &mut Model, data: &TrainingSet, cfg: &TrainConfig, until_step: u64) -> Result<Vec<StepLog>> {
    cfg.validate()?;
    data.validate()?;
    if data.sample_len() != model.config.input_len() {
        return Err(CpaError::InputSize { expected: model.config.input_len(), got: data.sample_len() });
    }
    freeze_label_variance(model, data)?;
    let batch = cfg.batch_size.min(data.len());
    let per_epoch = steps_per_epoch(data.len(), batch) as u64;
    let mut log = Vec::new();
    let mut order: Option<(usize, Vec<usize>)> = None;
    while model.params.step < until_step {
        let step = model.params.step;
        let epoch = (step / per_epoch) as usize;
        let pos = (step % per_epoch) as usize;
        if order.as_ref().map(|(e, _)| *e) != Some(epoch) {
            order = Some((epoch, epoch_order(cfg.seed, epoch, data.len())));
        }
        let indices = &order.as_ref().expect("set above").1[pos * batch..(pos + 1) * batch];
        let (loss, grads, fwd) = model.loss_and_grads(&data.batch(indices), cfg.task)?;
        if !loss.total.is_finite() {
            return Err(CpaError::InvalidConfig(format!("loss diverged at step {step}")));
        }
        let freeze = cfg.freeze_backbone;
        let backbone: Vec<bool> = model.params.tensors.iter().map(|t| t.backbone).collect();
        adam_step(&mut model.params, &grads, &cfg.adam, |i| freeze && backbone[i])?;
        if !freeze {
            model.update_running_stats(&fwd);
        }
        log.push(StepLog { step, epoch, loss });
    }
    Ok(log)
}

/// Runs `cfg.epochs` epochs counted from step zero.
pub fn train(model: &mut Model, data: &TrainingSet, cfg: &TrainConfig) -> Result<Vec<StepLog>> {
    let batch = cfg.batch_size.max(1).min(data.len().max(1));
    let total = (cfg.epochs * steps_per_epoch(data.len(), batch)) as u64;
    train_until(model, data, cfg, total)
}
