use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::assessment::BerThresholds;
use crate::error::{CpaError, Result};
use crate::features::{FeatureConfig, InputScaling, CHANNELS};
use crate::nn::{NetworkConfig, TrainConfig};
use crate::seed::derive_seed;
use crate::signal::FrameConfig;
use crate::threat::ParameterSets;

/// Everything needed to rebuild an experiment from scratch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub train_per_kind: usize,
    pub test_per_kind: usize,
    pub frame: FrameConfig,
    pub features: FeatureConfig,
    #[serde(default)]
    pub input_scaling: InputScaling,
    pub parameters: ParameterSets,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub thresholds: BerThresholds,
    /// Gates swept by the sequential baseline.
    pub thetas: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::desk()
    }
}

impl ExperimentConfig {
    /// Laptop-sized run: `N = 64`, `N_CP = 8`, `M = 64`, disk radius 3.
    pub fn desk() -> Self {
        let frame = FrameConfig::new(64, 8, 64, 4).expect("valid desk frame");
        ExperimentConfig {
            master_seed: 2024,
            train_per_kind: 200,
            test_per_kind: 100,
            frame,
            features: FeatureConfig { disk_radius: 3 },
            input_scaling: InputScaling::Shared,
            parameters: ParameterSets::default(),
            network: NetworkConfig::for_input(frame.n_symbols, frame.n_subcarriers),
            train: TrainConfig { epochs: 20, batch_size: 16, ..TrainConfig::default() },
            thresholds: BerThresholds::default(),
            thetas: vec![1e-2, 1e-3, 1e-4],
        }
    }

    /// Frame and morphology sizes of the original study (`N = 512`,
    /// `N_CP = 64`, `M = 600`, radius 15, 3600 samples per kind).
    pub fn full_scale() -> Self {
        let frame = FrameConfig::new(512, 64, 600, 4).expect("valid full frame");
        ExperimentConfig {
            train_per_kind: 3600,
            test_per_kind: 3600,
            frame,
            features: FeatureConfig { disk_radius: 15 },
            network: NetworkConfig::for_input(frame.n_symbols, frame.n_subcarriers),
            ..ExperimentConfig::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_per_kind == 0 || self.test_per_kind == 0 {
            return Err(CpaError::InvalidConfig("sample counts must be positive".into()));
        }
        self.frame.validate()?;
        self.parameters.validate()?;
        self.network.validate()?;
        self.train.validate()?;
        self.thresholds.validate()?;
        let expected = (CHANNELS, self.frame.n_symbols, self.frame.n_subcarriers);
        let got = (self.network.input_channels, self.network.input_height, self.network.input_width);
        if expected != got {
            return Err(CpaError::InvalidConfig(format!(
                "network input {got:?} does not match feature shape {expected:?}"
            )));
        }
        if self.thetas.iter().any(|t| !(0.0..1.0).contains(t)) {
            return Err(CpaError::InvalidConfig("thetas must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn train_seed(&self) -> u64 {
        derive_seed(self.master_seed, 0)
    }

    pub fn test_seed(&self) -> u64 {
        derive_seed(self.master_seed, 1)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CpaError::Serde(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CpaError::Serde(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        ExperimentConfig::from_toml(&fs::read_to_string(path)?)
    }
}
