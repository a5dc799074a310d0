//! Latent-space adversarial examples: logit-difference statistics, seed
//! selection, and the closed-form minimal logit perturbation.
//!
//! The perturbation solves
//!
//! ```text
//!   min ||Delta||_2   s.t.   z_y + Delta_y <= z_s + Delta_s
//! ```
//!
//! where y and s index the largest and second-largest logits. Only those
//! two components move, by -(z_y - z_s)/2 and +(z_y - z_s)/2, which
//! equalizes the top-2 scores with the smallest possible L2 norm
//! (z_y - z_s)/sqrt(2). Computing it needs no gradients at all — that is
//! the entire speed story, and the pass counters can prove it.

use crate::attacks::{self, AttackSpec};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{argmax_rows, Model};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

/// Top-2 structure of one logit vector: indices of the largest (y) and
/// second-largest (s) components and their gap d = z_y - z_s >= 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogitDifference {
    pub top1: usize,
    pub top2: usize,
    pub d: f64,
}

/// Finds the top-2 components; exact ties break toward the lower index.
pub fn logit_difference(z: &[f64]) -> Result<LogitDifference> {
    if z.len() < 2 {
        return Err(Error::Contract(format!(
            "logit difference needs at least 2 classes, got {}",
            z.len()
        )));
    }
    let mut top1 = 0;
    for (j, v) in z.iter().enumerate().skip(1) {
        if *v > z[top1] {
            top1 = j;
        }
    }
    let mut top2 = usize::MAX;
    for (j, v) in z.iter().enumerate() {
        if j == top1 {
            continue;
        }
        if top2 == usize::MAX || *v > z[top2] {
            top2 = j;
        }
    }
    Ok(LogitDifference {
        top1,
        top2,
        d: z[top1] - z[top2],
    })
}

/// The closed-form perturbation: sparse on the top-2 components.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitDelta {
    pub delta: Vec<f64>,
    pub top1: usize,
    pub top2: usize,
}

impl LogitDelta {
    pub fn l2_norm(&self) -> f64 {
        self.delta.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Minimal perturbation equalizing the top-2 logits of `z`. The indices
/// come from the logits themselves (predicted top-2), not from any label.
pub fn eae_delta(z: &[f64]) -> Result<LogitDelta> {
    let ld = logit_difference(z)?;
    let mut delta = vec![0.0; z.len()];
    delta[ld.top1] = -ld.d / 2.0;
    delta[ld.top2] = ld.d / 2.0;
    Ok(LogitDelta {
        delta,
        top1: ld.top1,
        top2: ld.top2,
    })
}

/// Applies the gate-and-perturb step of latent adversarial training to a
/// [batch, C] logit tensor: rows whose logit difference is below `gamma`
/// get the closed-form delta added, other rows pass through unchanged.
///
/// The delta enters the tape as a constant, so gradients flow to the
/// parameters through z but not through the delta's dependence on z.
/// Performs zero input-gradient passes.
pub fn eae_perturb_batch(z: &Tensor, gamma: f64) -> Result<Tensor> {
    if z.shape().len() != 2 {
        return Err(Error::Dimension(format!(
            "expected [batch, classes] logits, got {:?}",
            z.shape()
        )));
    }
    if gamma.is_nan() {
        return Err(Error::Contract("gamma must not be NaN".into()));
    }
    let (batch, classes) = (z.shape()[0], z.shape()[1]);
    if classes < 2 {
        return Err(Error::Contract("need at least 2 classes".into()));
    }
    let mut deltas = vec![0.0; batch * classes];
    for i in 0..batch {
        let row = &z.data()[i * classes..(i + 1) * classes];
        let ld = logit_difference(row)?;
        if ld.d < gamma {
            deltas[i * classes + ld.top1] = -ld.d / 2.0;
            deltas[i * classes + ld.top2] = ld.d / 2.0;
        }
    }
    let constant = Tensor::new(&[batch, classes], deltas)?;
    z.add(&constant)
}

/// Per-example record inside a seed partition.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SeedRecord {
    pub index: usize,
    pub ld: f64,
}

/// Correctly classified examples split by whether a given attack flips
/// them: seeds flip, non-seeds survive.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedPartition {
    pub seeds: Vec<SeedRecord>,
    pub non_seeds: Vec<SeedRecord>,
    pub attack: AttackSpec,
    pub epsilon: f64,
    /// Set when the model classified nothing correctly, so the candidate
    /// set (and therefore both sides of the partition) is empty.
    pub empty_candidates: bool,
}

impl SeedPartition {
    pub fn seed_lds(&self) -> Vec<f64> {
        self.seeds.iter().map(|r| r.ld).collect()
    }

    pub fn non_seed_lds(&self) -> Vec<f64> {
        self.non_seeds.iter().map(|r| r.ld).collect()
    }
}

const PARTITION_BATCH: usize = 128;

/// Splits the correctly classified examples of `dataset` by whether
/// `attack` defeats them, recording each example's clean logit difference.
pub fn partition_seeds(model: &Model, dataset: &Dataset, attack: &AttackSpec) -> Result<SeedPartition> {
    attack.validate()?;
    let classes = model.num_classes();
    let mut candidates: Vec<SeedRecord> = Vec::new();
    let mut index = 0;
    while index < dataset.len() {
        let end = (index + PARTITION_BATCH).min(dataset.len());
        let range: Vec<usize> = (index..end).collect();
        let batch = dataset.select(&range)?;
        let z = model.forward_logits(&batch.inputs)?;
        let preds = argmax_rows(&z);
        for (offset, pred) in preds.iter().enumerate() {
            if *pred == batch.labels[offset] {
                let row = &z.data()[offset * classes..(offset + 1) * classes];
                candidates.push(SeedRecord {
                    index: index + offset,
                    ld: logit_difference(row)?.d,
                });
            }
        }
        index = end;
    }

    let mut partition = SeedPartition {
        seeds: Vec::new(),
        non_seeds: Vec::new(),
        attack: attack.clone(),
        epsilon: attack.epsilon,
        empty_candidates: candidates.is_empty(),
    };
    for chunk in candidates.chunks(PARTITION_BATCH) {
        let indices: Vec<usize> = chunk.iter().map(|r| r.index).collect();
        let subset = dataset.select(&indices)?;
        let attacked = attacks::perturb(model, &subset.inputs, &subset.labels, attack)?;
        for (record, flipped) in chunk.iter().zip(&attacked.success_mask) {
            if *flipped {
                partition.seeds.push(*record);
            } else {
                partition.non_seeds.push(*record);
            }
        }
    }
    Ok(partition)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HistBin {
    pub lower: f64,
    pub count: usize,
}

/// Mean, standard deviation (population), and fixed-width histogram of a
/// set of logit differences.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LdStats {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
    pub bin_width: f64,
    pub histogram: Vec<HistBin>,
}

impl LdStats {
    /// Histogram as CSV (`bin_lower,count`) for external plotting.
    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("bin_lower,count\n");
        for bin in &self.histogram {
            out.push_str(&format!("{:.6},{}\n", bin.lower, bin.count));
        }
        out
    }
}

pub const DEFAULT_BIN_WIDTH: f64 = 0.5;

pub fn ld_stats(values: &[f64]) -> Result<LdStats> {
    ld_stats_with_width(values, DEFAULT_BIN_WIDTH)
}

pub fn ld_stats_with_width(values: &[f64], bin_width: f64) -> Result<LdStats> {
    if values.is_empty() {
        return Err(Error::Contract("ld_stats needs at least one value".into()));
    }
    if bin_width <= 0.0 || bin_width.is_nan() {
        return Err(Error::Contract("bin width must be positive".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let first_bin = (values.iter().cloned().fold(f64::INFINITY, f64::min) / bin_width).floor();
    let last_bin = (values.iter().cloned().fold(f64::NEG_INFINITY, f64::max) / bin_width).floor();
    let bins = (last_bin - first_bin) as usize + 1;
    let mut histogram: Vec<HistBin> = (0..bins)
        .map(|b| HistBin {
            lower: (first_bin + b as f64) * bin_width,
            count: 0,
        })
        .collect();
    for v in values {
        let b = ((v / bin_width).floor() - first_bin) as usize;
        histogram[b.min(bins - 1)].count += 1;
    }
    Ok(LdStats {
        mean,
        std: var.sqrt(),
        count: values.len(),
        bin_width,
        histogram,
    })
}

/// The data-driven threshold: the mean logit difference over the seed set.
pub fn threshold_from_partition(partition: &SeedPartition) -> Result<f64> {
    if partition.seeds.is_empty() {
        return Err(Error::Contract(
            "seed set is empty: raise the attack epsilon, or fall back to a \
             threshold in the [2, 4] range"
                .into(),
        ));
    }
    Ok(partition.seeds.iter().map(|r| r.ld).sum::<f64>() / partition.seeds.len() as f64)
}
