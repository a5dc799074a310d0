//! The declarative run configuration: one JSON file fully determines a
//! run. Command-line flags only choose the file and override the seed or
//! output directory. Unknown keys are rejected.

use crate::attacks::AttackSpec;
use crate::data::{
    load_cifar10_binary, make_synthetic, make_template_images, Dataset, SubsetSpec, SyntheticKind,
    SyntheticSpec, TemplateImageSpec,
};
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::train::{TrainMethod, TrainSpec};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Top-level config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    /// Training run (`train`, `seed-stats`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
    /// Attack grid (`seed-stats` partitions; `train` optional self-eval).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack_grid: Option<Vec<AttackSpec>>,
    /// Benchmark section (`bench`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bench: Option<BenchConfig>,
    /// Checkpoint attack section (`attack`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack: Option<AttackCmdConfig>,
}

impl RunConfig {
    /// Parses a config file; syntax errors carry line/column diagnostics.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| {
            Error::Config(format!(
                "{}:{}:{}: {e}",
                path.display(),
                e.line(),
                e.column()
            ))
        })
    }

    pub fn model_seed(&self) -> u64 {
        derive_seed(self.seed, 0x4d4f_4445)
    }

    pub fn source_model_seed(&self) -> u64 {
        derive_seed(self.seed, 0x534f_5552)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// `mlp-small` or `cnn-small`.
    pub preset: String,
}

impl ModelConfig {
    /// The cross-architecture counterpart used as a transfer source.
    pub fn source_preset(&self) -> &'static str {
        if self.preset == "mlp-small" {
            "cnn-small"
        } else {
            "mlp-small"
        }
    }
}

/// Training parameters as written in config files. The run seed is
/// injected when converting to a [`TrainSpec`], so one seed drives the
/// whole run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub method: TrainMethod,
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub clr_min: f64,
    pub clr_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack: Option<AttackSpec>,
}

impl TrainConfig {
    pub fn to_spec(&self, seed: u64) -> TrainSpec {
        TrainSpec {
            method: self.method,
            epochs: self.epochs,
            batch_size: self.batch_size,
            clr_min: self.clr_min,
            clr_max: self.clr_max,
            gamma: self.gamma,
            attack: self.attack.clone(),
            seed,
        }
    }
}

/// Dataset selection; synthetic kinds derive their train/test seeds from
/// the run seed, so the split is reproducible from the config alone.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetConfig {
    Blobs {
        classes: usize,
        train_n: usize,
        test_n: usize,
        dim: usize,
        noise: f64,
    },
    Rings {
        classes: usize,
        train_n: usize,
        test_n: usize,
        dim: usize,
        noise: f64,
    },
    Cifar10 {
        train_path: PathBuf,
        test_path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        classes: Option<Vec<usize>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        per_class_train: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        per_class_test: Option<usize>,
    },
    /// Generated class-template images in CIFAR layout; a desk-scale
    /// stand-in when no real image corpus is on disk.
    TemplateImages {
        classes: usize,
        per_class_train: usize,
        per_class_test: usize,
        noise: f64,
        blend: f64,
    },
}

impl DatasetConfig {
    /// Builds the (train, test) pair.
    pub fn load(&self, seed: u64) -> Result<(Dataset, Dataset)> {
        let train_seed = derive_seed(seed, 0x7261_494e);
        match self {
            DatasetConfig::Blobs { classes, train_n, test_n, dim, noise }
            | DatasetConfig::Rings { classes, train_n, test_n, dim, noise } => {
                let kind = match self {
                    DatasetConfig::Blobs { .. } => SyntheticKind::GaussianBlobs,
                    _ => SyntheticKind::Rings,
                };
                // both splits must share the class geometry the seed
                // determines, so draw one pool and slice it
                let pool = make_synthetic(&SyntheticSpec {
                    kind,
                    classes: *classes,
                    n: train_n + test_n,
                    dim: *dim,
                    noise: *noise,
                    seed: train_seed,
                })?;
                let train_idx: Vec<usize> = (0..*train_n).collect();
                let test_idx: Vec<usize> = (*train_n..train_n + test_n).collect();
                Ok((pool.select(&train_idx)?, pool.select(&test_idx)?))
            }
            DatasetConfig::Cifar10 {
                train_path,
                test_path,
                classes,
                per_class_train,
                per_class_test,
            } => {
                for path in [train_path, test_path] {
                    if !path.exists() {
                        return Err(Error::Config(format!(
                            "dataset path {} does not exist",
                            path.display()
                        )));
                    }
                }
                let train = load_cifar10_binary(
                    train_path,
                    &SubsetSpec { classes: classes.clone(), per_class_cap: *per_class_train },
                )?;
                let test = load_cifar10_binary(
                    test_path,
                    &SubsetSpec { classes: classes.clone(), per_class_cap: *per_class_test },
                )?;
                Ok((train, test))
            }
            DatasetConfig::TemplateImages { classes, per_class_train, per_class_test, noise, blend } => {
                // train and test must share the class templates, so draw
                // one pool and slice it
                let pool = make_template_images(&TemplateImageSpec {
                    classes: *classes,
                    per_class: per_class_train + per_class_test,
                    noise: *noise,
                    blend: *blend,
                    seed: derive_seed(seed, 0x7433_4d50),
                })?;
                let n_train = classes * per_class_train;
                let train_idx: Vec<usize> = (0..n_train).collect();
                let test_idx: Vec<usize> = (n_train..pool.len()).collect();
                Ok((pool.select(&train_idx)?, pool.select(&test_idx)?))
            }
        }
    }
}

/// Benchmark section: the methods to race, how to train the transfer
/// source, and the attacks the perturbed test sets are built with.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub methods: Vec<TrainConfig>,
    pub source_train: TrainConfig,
    pub eval_attacks: Vec<AttackSpec>,
}

/// Checkpoint-attack section.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackCmdConfig {
    pub checkpoint: PathBuf,
    pub attack: AttackSpec,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses() {
        let json = r#"{
            "seed": 7,
            "out_dir": "runs/demo",
            "dataset": {"kind": "blobs", "classes": 3, "train_n": 90, "test_n": 30, "dim": 4, "noise": 0.1},
            "model": {"preset": "mlp-small"},
            "train": {"method": "normal", "epochs": 2, "batch_size": 16, "clr_max": 0.2}
        }"#;
        let config: RunConfig = serde_json::from_str(json).unwrap();
        assert_eq!(config.seed, 7);
        let (train, test) = config.dataset.load(config.seed).unwrap();
        assert_eq!(train.len(), 90);
        assert_eq!(test.len(), 30);
        assert_eq!(config.model.source_preset(), "cnn-small");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let json = r#"{
            "seed": 7,
            "out_dir": "runs",
            "dataset": {"kind": "blobs", "classes": 3, "train_n": 9, "test_n": 3, "dim": 4, "noise": 0.1},
            "model": {"preset": "mlp-small"},
            "surprise": true
        }"#;
        let err = serde_json::from_str::<RunConfig>(json).unwrap_err();
        assert!(err.to_string().contains("surprise"));
    }

    #[test]
    fn config_load_reports_line_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, "{\n  \"seed\": oops\n}").unwrap();
        match RunConfig::load(&path) {
            Err(Error::Config(msg)) => assert!(msg.contains(":2:"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn splits_are_disjoint_draws_with_shared_geometry() {
        let config = DatasetConfig::Blobs {
            classes: 2,
            train_n: 40,
            test_n: 20,
            dim: 3,
            noise: 0.05,
        };
        let (train_a, test_a) = config.load(9).unwrap();
        let (train_b, test_b) = config.load(9).unwrap();
        assert_eq!(train_a.inputs.data(), train_b.inputs.data());
        assert_eq!(test_a.inputs.data(), test_b.inputs.data());
        assert_ne!(train_a.inputs.data()[..6], test_a.inputs.data()[..6]);
    }
}
