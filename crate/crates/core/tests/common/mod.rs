#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cpa_core::experiments::ExperimentConfig;
use cpa_core::features::FeatureConfig;
use cpa_core::nn::{AdamConfig, NetworkConfig, TrainConfig};
use cpa_core::signal::FrameConfig;

/// A configuration small enough to train in seconds.
pub fn small_config() -> ExperimentConfig {
    let frame = FrameConfig::new(16, 4, 16, 4).unwrap();
    ExperimentConfig {
        train_per_kind: 8,
        test_per_kind: 5,
        frame,
        features: FeatureConfig { disk_radius: 1 },
        network: NetworkConfig::for_input(16, 16),
        train: TrainConfig {
            epochs: 2,
            batch_size: 6,
            adam: AdamConfig { learning_rate: 1e-3, ..AdamConfig::default() },
            ..TrainConfig::default()
        },
        ..ExperimentConfig::desk()
    }
}

pub fn cpa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cpa")).args(args).output().expect("cpa binary runs")
}

pub fn ok(args: &[&str]) -> String {
    let out = cpa(args);
    assert!(out.status.success(), "cpa {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Config, train/test datasets and trained multitask, intent and capability
/// checkpoints in `dir`.
pub struct Workspace {
    pub config: PathBuf,
    pub train: PathBuf,
    pub test: PathBuf,
    pub multitask: PathBuf,
    pub intent: PathBuf,
    pub capability: PathBuf,
}

pub fn workspace(dir: &Path) -> Workspace {
    let w = Workspace {
        config: dir.join("small.toml"),
        train: dir.join("train.cpad"),
        test: dir.join("test.cpad"),
        multitask: dir.join("mt.ckpt"),
        intent: dir.join("intent.ckpt"),
        capability: dir.join("cap.ckpt"),
    };
    std::fs::write(&w.config, small_config().to_toml().unwrap()).unwrap();
    ok(&["generate", "--config", s(&w.config), "--out", s(&w.train)]);
    ok(&["generate", "--config", s(&w.config), "--split", "test", "--out", s(&w.test)]);
    for (mode, path) in [("multitask", &w.multitask), ("intent", &w.intent), ("capability", &w.capability)] {
        ok(&["train", "--config", s(&w.config), "--dataset", s(&w.train), "--mode", mode, "--out", s(path)]);
    }
    w
}
