//! The five training loops — normal, latent-perturbation (EAE), FGSM,
//! fast-step, and PGD adversarial training — under one instrumented
//! skeleton.
//!
//! Per minibatch the loops cost exactly:
//!
//! | method   | forwards | param backwards | input-grad backwards |
//! |----------|----------|-----------------|----------------------|
//! | normal   | 1        | 1               | 0                    |
//! | eae      | 1        | 1               | 0                    |
//! | fgsm-at  | 2        | 1               | 1                    |
//! | fast-at  | 2        | 1               | 1                    |
//! | pgd-at   | K+1      | 1               | K                    |
//!
//! Those identities are measured, not assumed: every run snapshots the
//! global pass counters around its loop and reports the deltas.

use crate::attacks::{craft_seeded, AttackKind, AttackSpec};
use crate::counters::{self, PassCounts};
use crate::data::{batches, BatchPlan, Dataset};
use crate::eae::eae_perturb_batch;
use crate::error::{Error, Result};
use crate::evalbench::{EpochRow, RunReport};
use crate::nn::{cross_entropy, sgd_step, CyclicLrSchedule, Model};
use crate::rng::derive_seed;
use crate::tensor::Tensor;
use crate::tensor::tape::{backward, with_tape};
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Threshold thumb rule for latent-perturbation training when no
/// partition-derived value is supplied.
pub const DEFAULT_GAMMA: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMethod {
    Normal,
    Eae,
    FgsmAt,
    FastAt,
    PgdAt,
}

impl TrainMethod {
    pub fn name(&self) -> &'static str {
        match self {
            TrainMethod::Normal => "normal",
            TrainMethod::Eae => "eae",
            TrainMethod::FgsmAt => "fgsm-at",
            TrainMethod::FastAt => "fast-at",
            TrainMethod::PgdAt => "pgd-at",
        }
    }

    fn expected_attack_kind(&self) -> Option<AttackKind> {
        match self {
            TrainMethod::FgsmAt => Some(AttackKind::Fgsm),
            TrainMethod::FastAt => Some(AttackKind::FastStep),
            TrainMethod::PgdAt => Some(AttackKind::Pgd),
            _ => None,
        }
    }
}

/// Everything one training run needs. Method-specific fields must be
/// present exactly when the method uses them.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    pub method: TrainMethod,
    pub epochs: usize,
    pub batch_size: usize,
    pub clr_min: f64,
    pub clr_max: f64,
    /// Gate threshold; EAE training only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Training attack; attack-based methods only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack: Option<AttackSpec>,
    pub seed: u64,
}

impl TrainSpec {
    pub fn normal(epochs: usize, batch_size: usize, clr_max: f64, seed: u64) -> TrainSpec {
        TrainSpec {
            method: TrainMethod::Normal,
            epochs,
            batch_size,
            clr_min: 0.0,
            clr_max,
            gamma: None,
            attack: None,
            seed,
        }
    }

    pub fn eae(epochs: usize, batch_size: usize, clr_max: f64, gamma: f64, seed: u64) -> TrainSpec {
        TrainSpec {
            method: TrainMethod::Eae,
            gamma: Some(gamma),
            ..TrainSpec::normal(epochs, batch_size, clr_max, seed)
        }
    }

    pub fn adversarial(
        method: TrainMethod,
        epochs: usize,
        batch_size: usize,
        clr_max: f64,
        attack: AttackSpec,
        seed: u64,
    ) -> TrainSpec {
        TrainSpec {
            method,
            attack: Some(attack),
            ..TrainSpec::normal(epochs, batch_size, clr_max, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("train spec: epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("train spec: batch_size must be >= 1".into()));
        }
        match self.method {
            TrainMethod::Eae => {
                if self.gamma.is_none() {
                    return Err(Error::Config(
                        "train spec: method 'eae' requires the 'gamma' field".into(),
                    ));
                }
                if self.attack.is_some() {
                    return Err(Error::Config(
                        "train spec: method 'eae' does not take an 'attack' field".into(),
                    ));
                }
                if let Some(g) = self.gamma {
                    if !g.is_finite() || g < 0.0 {
                        return Err(Error::Config(format!(
                            "train spec: gamma must be finite and non-negative, got {g}"
                        )));
                    }
                }
            }
            TrainMethod::Normal => {
                if self.gamma.is_some() || self.attack.is_some() {
                    return Err(Error::Config(
                        "train spec: method 'normal' takes neither 'gamma' nor 'attack'".into(),
                    ));
                }
            }
            method => {
                if self.gamma.is_some() {
                    return Err(Error::Config(format!(
                        "train spec: method '{}' does not take a 'gamma' field",
                        method.name()
                    )));
                }
                let attack = self.attack.as_ref().ok_or_else(|| {
                    Error::Config(format!(
                        "train spec: method '{}' requires the 'attack' field",
                        method.name()
                    ))
                })?;
                attack.validate()?;
                let expected = method.expected_attack_kind().unwrap();
                if attack.kind != expected {
                    return Err(Error::Config(format!(
                        "train spec: method '{}' requires an attack of kind '{}', got '{}'",
                        method.name(),
                        expected.name(),
                        attack.kind.name()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Pass counters and wall times measured over one training loop.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Instrumentation {
    pub passes: PassCounts,
    pub wall_time_per_epoch: Vec<f64>,
    pub threads: usize,
}

impl Instrumentation {
    /// Median per-epoch wall time, excluding the first (warm-up) epoch
    /// whenever more than one epoch ran.
    pub fn sec_per_epoch(&self) -> f64 {
        let times = if self.wall_time_per_epoch.len() > 1 {
            &self.wall_time_per_epoch[1..]
        } else {
            &self.wall_time_per_epoch[..]
        };
        median(times)
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    }
}

/// Runs one training loop. Deterministic given (spec, dataset, seed);
/// a non-finite loss aborts with a numeric error (learning rate too high).
pub fn train(model: Model, dataset: &Dataset, spec: &TrainSpec) -> Result<(Model, Instrumentation, RunReport)> {
    spec.validate()?;
    if dataset.is_empty() {
        return Err(Error::Contract("cannot train on an empty dataset".into()));
    }
    let mut model = model;
    let plan = BatchPlan::new(spec.batch_size, derive_seed(spec.seed, 0x5487_u64))?;
    let k = plan.batch_count(dataset.len());
    let schedule = CyclicLrSchedule::new(spec.clr_min, spec.clr_max, spec.epochs * k)?;

    let mut epoch_rows = Vec::with_capacity(spec.epochs);
    let mut wall_times = Vec::with_capacity(spec.epochs);
    let before = counters::snapshot();
    let mut step = 0usize;
    for epoch in 0..spec.epochs {
        let started = Instant::now();
        let mut loss_sum = 0.0;
        let mut example_count = 0usize;
        for (batch_idx, (x, y)) in batches(dataset, &plan.epoch(epoch)).enumerate() {
            let lr = schedule.lr_at(step);
            let loss_value = match spec.method {
                TrainMethod::Normal => step_on_clean(&model, &x, &y, None)?,
                TrainMethod::Eae => step_on_clean(&model, &x, &y, spec.gamma)?,
                TrainMethod::FgsmAt | TrainMethod::FastAt | TrainMethod::PgdAt => {
                    let attack = spec.attack.as_ref().unwrap();
                    let noise_seed = derive_seed(
                        derive_seed(spec.seed, 0xA77AC4),
                        ((epoch as u64) << 32) | batch_idx as u64,
                    );
                    let x_adv = craft_seeded(&model, &x, &y, attack, noise_seed)?;
                    step_on_clean(&model, &x_adv, &y, None)?
                }
            };
            if !loss_value.is_finite() {
                return Err(Error::Numeric(format!(
                    "loss became {loss_value} at epoch {epoch}, minibatch {batch_idx}; \
                     the learning rate is probably too high"
                )));
            }
            sgd_step(&mut model, lr)?;
            loss_sum += loss_value * y.len() as f64;
            example_count += y.len();
            step += 1;
        }
        let wall = started.elapsed().as_secs_f64();
        wall_times.push(wall);
        epoch_rows.push(EpochRow {
            epoch,
            mean_loss: loss_sum / example_count as f64,
            wall_sec: wall,
        });
    }
    let instrumentation = Instrumentation {
        passes: counters::snapshot().since(&before),
        wall_time_per_epoch: wall_times,
        threads: 1,
    };
    let report = RunReport::from_training(spec, &instrumentation, epoch_rows);
    Ok((model, instrumentation, report))
}

/// Forward, optional latent gate, loss, backward. Returns the loss value;
/// gradients are left in the model for the optimizer step.
fn step_on_clean(model: &Model, x: &Tensor, y: &[usize], gamma: Option<f64>) -> Result<f64> {
    with_tape(|| {
        let z = model.forward_logits(x)?;
        let logits = match gamma {
            Some(g) => eae_perturb_batch(&z, g)?,
            None => z,
        };
        let loss = cross_entropy(&logits, y)?;
        backward(&loss)?;
        loss.item()
    })
}

/// A row of the timing comparison table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchTimeRow {
    pub method: String,
    pub sec_per_epoch: f64,
}

/// Full per-method result of a benchmark sweep.
pub struct BenchRun {
    pub spec: TrainSpec,
    pub model: Model,
    pub instrumentation: Instrumentation,
    pub report: RunReport,
}

/// Trains every method on a fresh copy of the same preset and dataset
/// (identical model seed) and returns the detailed runs, sequentially to
/// keep timings honest.
pub fn bench_runs(
    methods: &[TrainSpec],
    dataset: &Dataset,
    model_preset: &str,
    model_seed: u64,
) -> Result<Vec<BenchRun>> {
    let mut runs = Vec::with_capacity(methods.len());
    for spec in methods {
        let model = Model::preset(
            model_preset,
            dataset.example_shape(),
            dataset.num_classes,
            model_seed,
        )?;
        let (model, instrumentation, report) = train(model, dataset, spec)?;
        runs.push(BenchRun {
            spec: spec.clone(),
            model,
            instrumentation,
            report,
        });
    }
    Ok(runs)
}

/// Median seconds per epoch per method (first epoch excluded as warm-up
/// whenever a run has more than one epoch).
pub fn train_time_benchmark(
    methods: &[TrainSpec],
    dataset: &Dataset,
    model_preset: &str,
    model_seed: u64,
) -> Result<Vec<BenchTimeRow>> {
    let runs = bench_runs(methods, dataset, model_preset, model_seed)?;
    Ok(runs
        .iter()
        .map(|run| BenchTimeRow {
            method: run.spec.method.name().to_string(),
            sec_per_epoch: run.instrumentation.sec_per_epoch(),
        })
        .collect())
}

#[cfg(test)]
mod tests;
