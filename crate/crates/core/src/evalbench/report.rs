//! Run reports and their JSON/CSV serialization. Emission is
//! byte-deterministic: identical inputs produce identical files.

use crate::counters::PassCounts;
use crate::error::{Error, Result};
use crate::train::{Instrumentation, TrainSpec};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub mean_loss: f64,
    pub wall_sec: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbedAcc {
    pub attack: String,
    pub epsilon: f64,
    pub accuracy: f64,
}

/// Everything a single run produced: per-epoch metrics, pass counters,
/// accuracies, and a config echo sufficient to reproduce the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: String,
    pub seed: u64,
    pub threads: usize,
    pub epochs: Vec<EpochRow>,
    pub passes: PassCounts,
    pub sec_per_epoch: f64,
    pub clean_acc: Option<f64>,
    pub perturbed_acc: Vec<PerturbedAcc>,
    pub config_echo: serde_json::Value,
    pub timing_note: String,
}

impl RunReport {
    pub fn from_training(
        spec: &TrainSpec,
        instrumentation: &Instrumentation,
        epochs: Vec<EpochRow>,
    ) -> RunReport {
        RunReport {
            method: spec.method.name().to_string(),
            seed: spec.seed,
            threads: instrumentation.threads,
            epochs,
            passes: instrumentation.passes,
            sec_per_epoch: instrumentation.sec_per_epoch(),
            clean_acc: None,
            perturbed_acc: Vec::new(),
            config_echo: serde_json::to_value(spec).unwrap_or(serde_json::Value::Null),
            timing_note: "wall times cover the training loop only (dataset load excluded); \
                          sec_per_epoch is the median with the first epoch dropped as warm-up"
                .to_string(),
        }
    }

    /// The deterministic subset of the report: everything except wall
    /// times. Two runs of the same config and seed must agree on this.
    pub fn metrics_fingerprint(&self) -> serde_json::Value {
        serde_json::json!({
            "method": self.method,
            "seed": self.seed,
            "threads": self.threads,
            "losses": self.epochs.iter().map(|e| e.mean_loss).collect::<Vec<f64>>(),
            "passes": self.passes,
            "clean_acc": self.clean_acc,
            "perturbed_acc": self.perturbed_acc,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

pub const CSV_HEADER: &str =
    "method,attack,epsilon,clean_acc,perturbed_acc,sec_per_epoch,param_bwd,input_grad_bwd,seed";

/// Writes `reports` to `path` in the chosen format. An empty report list
/// yields a valid empty JSON array or a header-only CSV.
pub fn emit_report(reports: &[RunReport], format: ReportFormat, path: &Path) -> Result<()> {
    let body = match format {
        ReportFormat::Json => {
            let mut json = serde_json::to_string_pretty(reports)
                .map_err(|e| Error::Format(format!("report encode: {e}")))?;
            json.push('\n');
            json
        }
        ReportFormat::Csv => {
            let mut out = String::from(CSV_HEADER);
            out.push('\n');
            for report in reports {
                let clean = report
                    .clean_acc
                    .map(|a| format!("{a:.6}"))
                    .unwrap_or_default();
                if report.perturbed_acc.is_empty() {
                    out.push_str(&format!(
                        "{},,,{},,{:.6},{},{},{}\n",
                        report.method,
                        clean,
                        report.sec_per_epoch,
                        report.passes.param_backward,
                        report.passes.input_grad,
                        report.seed
                    ));
                } else {
                    for pa in &report.perturbed_acc {
                        out.push_str(&format!(
                            "{},{},{:.6},{},{:.6},{:.6},{},{},{}\n",
                            report.method,
                            pa.attack,
                            pa.epsilon,
                            clean,
                            pa.accuracy,
                            report.sec_per_epoch,
                            report.passes.param_backward,
                            report.passes.input_grad,
                            report.seed
                        ));
                    }
                }
            }
            out
        }
    };
    std::fs::write(path, body)?;
    Ok(())
}
