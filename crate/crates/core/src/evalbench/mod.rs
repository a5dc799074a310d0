//! Evaluation protocols: clean accuracy, black-box transfer robustness,
//! threshold sweeps, and report emission.
//!
//! Transfer evaluation is fair by construction: perturbed test sets are
//! generated once from a source model and the byte-identical sets are
//! reused across every defended model in a comparison.

mod perturbed_file;
mod report;
mod svg;

pub use perturbed_file::{read_perturbed_set, write_perturbed_set, PerturbedSetFile};
pub use report::{emit_report, EpochRow, PerturbedAcc, ReportFormat, RunReport};
pub use svg::{emit_bench_svg, emit_histogram_svg, BenchSummaryRow};

use crate::attacks::{self, AttackSpec, PerturbedBatch};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{argmax_rows, Model};
use crate::rng::derive_seed;
use crate::tensor::Tensor;
use crate::train::{train, TrainMethod, TrainSpec};

const EVAL_BATCH: usize = 256;

/// Fraction of rows whose predicted class (argmax of logits, ties to the
/// lowest index) equals the label.
pub fn accuracy(model: &Model, inputs: &Tensor, labels: &[usize]) -> Result<f64> {
    let n = inputs.shape()[0];
    if n != labels.len() {
        return Err(Error::Contract(format!(
            "{n} inputs with {} labels",
            labels.len()
        )));
    }
    if n == 0 {
        return Ok(0.0);
    }
    let stride: usize = inputs.shape()[1..].iter().product();
    let mut correct = 0usize;
    let mut start = 0usize;
    while start < n {
        let end = (start + EVAL_BATCH).min(n);
        let mut shape = vec![end - start];
        shape.extend_from_slice(&inputs.shape()[1..]);
        let chunk = Tensor::new(&shape, inputs.data()[start * stride..end * stride].to_vec())?;
        let z = model.forward_logits(&chunk)?;
        correct += argmax_rows(&z)
            .iter()
            .zip(&labels[start..end])
            .filter(|(p, t)| p == t)
            .count();
        start = end;
    }
    Ok(correct as f64 / n as f64)
}

pub fn accuracy_on(model: &Model, dataset: &Dataset) -> Result<f64> {
    accuracy(model, &dataset.inputs, &dataset.labels)
}

/// Perturbed test sets crafted once against a source model, for black-box
/// transfer evaluation of defended models.
pub struct TransferSuite {
    pub source_preset: String,
    pub labels: Vec<usize>,
    pub sets: Vec<(AttackSpec, PerturbedBatch)>,
}

impl TransferSuite {
    /// Accuracy of a defended model on the perturbed set at `index`.
    pub fn evaluate(&self, model: &Model, index: usize) -> Result<f64> {
        let (_, set) = self.sets.get(index).ok_or_else(|| {
            Error::Contract(format!("transfer suite has {} sets", self.sets.len()))
        })?;
        accuracy(model, &set.x_adv, &self.labels)
    }
}

/// Generates one perturbed copy of `test_set` per grid point, attacking
/// the (normally trained) source model. Deterministic per attack seed.
pub fn build_transfer_suite(
    source_model: &Model,
    test_set: &Dataset,
    grid: &[AttackSpec],
) -> Result<TransferSuite> {
    let mut sets = Vec::with_capacity(grid.len());
    for spec in grid {
        spec.validate()?;
        let stride: usize = test_set.example_shape().iter().product();
        let mut adv = Vec::with_capacity(test_set.len() * stride);
        let mut success = Vec::with_capacity(test_set.len());
        let mut start = 0usize;
        while start < test_set.len() {
            let end = (start + EVAL_BATCH).min(test_set.len());
            let range: Vec<usize> = (start..end).collect();
            let batch = test_set.select(&range)?;
            let crafted = attacks::craft_seeded(
                source_model,
                &batch.inputs,
                &batch.labels,
                spec,
                derive_seed(spec.seed, start as u64),
            )?;
            let preds = source_model.predict(&crafted)?;
            success.extend(preds.iter().zip(&batch.labels).map(|(p, t)| p != t));
            adv.extend_from_slice(crafted.data());
            start = end;
        }
        let mut shape = vec![test_set.len()];
        shape.extend_from_slice(test_set.example_shape());
        sets.push((
            spec.clone(),
            PerturbedBatch {
                x_adv: Tensor::new(&shape, adv)?,
                success_mask: success,
            },
        ));
    }
    Ok(TransferSuite {
        source_preset: source_model.preset_name().to_string(),
        labels: test_set.labels.clone(),
        sets,
    })
}

/// One row of the threshold-sweep table.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SweepRow {
    pub gamma: f64,
    pub sec_per_epoch: f64,
    pub clean_acc: f64,
    pub perturbed_acc: Option<f64>,
}

/// Trains one latent-perturbation model per gamma, everything else held
/// fixed, and tabulates time, clean accuracy, and (when an evaluation set
/// is supplied) perturbed accuracy.
pub fn threshold_sweep(
    train_set: &Dataset,
    test_set: &Dataset,
    gammas: &[f64],
    base: &TrainSpec,
    model_preset: &str,
    model_seed: u64,
    eval_set: Option<(&Tensor, &[usize])>,
) -> Result<Vec<SweepRow>> {
    if gammas.len() < 2 {
        return Err(Error::Contract("threshold sweep needs at least 2 gammas".into()));
    }
    let mut rows = Vec::with_capacity(gammas.len());
    for &gamma in gammas {
        let mut spec = base.clone();
        spec.method = TrainMethod::Eae;
        spec.gamma = Some(gamma);
        spec.attack = None;
        let model = Model::preset(
            model_preset,
            train_set.example_shape(),
            train_set.num_classes,
            model_seed,
        )?;
        let (model, instrumentation, _) = train(model, train_set, &spec)?;
        rows.push(SweepRow {
            gamma,
            sec_per_epoch: instrumentation.sec_per_epoch(),
            clean_acc: accuracy_on(&model, test_set)?,
            perturbed_acc: match eval_set {
                Some((inputs, labels)) => Some(accuracy(&model, inputs, labels)?),
                None => None,
            },
        });
    }
    Ok(rows)
}
