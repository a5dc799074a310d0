//! Python bindings: the main types and operations of the toolkit exposed
//! as the `eae_py` extension module. Vector-based interfaces keep the
//! dependency surface minimal; heavy lifting stays in Rust.

use eae_core::attacks::{self, AttackKind, AttackSpec};
use eae_core::counters;
use eae_core::data::{make_synthetic, make_template_images, SyntheticKind, SyntheticSpec, TemplateImageSpec};
use eae_core::eae;
use eae_core::evalbench::accuracy_on;
use eae_core::nn::{load_checkpoint, save_checkpoint, softmax as softmax_rows, Model as CoreModel};
use eae_core::tensor::Tensor;
use eae_core::train::{train as train_run, TrainMethod, TrainSpec};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use std::path::PathBuf;

fn err(e: eae_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A labeled dataset with inputs in [0, 1].
#[pyclass(unsendable)]
struct Dataset {
    inner: eae_core::data::Dataset,
}

#[pymethods]
impl Dataset {
    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes
    }

    #[getter]
    fn example_shape(&self) -> Vec<usize> {
        self.inner.example_shape().to_vec()
    }

    fn labels(&self) -> Vec<usize> {
        self.inner.labels.clone()
    }

    /// Rows [start, end) as a new dataset.
    fn slice(&self, start: usize, end: usize) -> PyResult<Dataset> {
        let indices: Vec<usize> = (start..end).collect();
        Ok(Dataset { inner: self.inner.select(&indices).map_err(err)? })
    }
}

/// A classifier with penultimate-logit access.
#[pyclass(unsendable)]
struct Model {
    inner: CoreModel,
}

#[pymethods]
impl Model {
    /// Builds an architecture preset: "mlp-small" or "cnn-small".
    #[staticmethod]
    fn preset(name: &str, input_shape: Vec<usize>, num_classes: usize, seed: u64) -> PyResult<Model> {
        Ok(Model {
            inner: CoreModel::preset(name, &input_shape, num_classes, seed).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Model> {
        Ok(Model { inner: load_checkpoint(&path).map_err(err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_checkpoint(&self.inner, &path).map_err(err)
    }

    #[getter]
    fn preset_name(&self) -> String {
        self.inner.preset_name().to_string()
    }

    /// Logits for a flat row-major batch.
    fn logits(&self, batch: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let x = rows_to_tensor(&batch)?;
        let z = self.inner.forward_logits(&x).map_err(err)?;
        let c = self.inner.num_classes();
        Ok(z.data().chunks(c).map(|r| r.to_vec()).collect())
    }

    fn predict(&self, batch: Vec<Vec<f64>>) -> PyResult<Vec<usize>> {
        let x = rows_to_tensor(&batch)?;
        self.inner.predict(&x).map_err(err)
    }
}

fn rows_to_tensor(rows: &[Vec<f64>]) -> PyResult<Tensor> {
    if rows.is_empty() {
        return Err(PyValueError::new_err("batch must not be empty"));
    }
    let width = rows[0].len();
    if rows.iter().any(|r| r.len() != width) {
        return Err(PyValueError::new_err("ragged batch rows"));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Tensor::new(&[rows.len(), width], flat).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (kind, classes, n, dim, noise, seed))]
fn make_dataset(kind: &str, classes: usize, n: usize, dim: usize, noise: f64, seed: u64) -> PyResult<Dataset> {
    let kind = match kind {
        "blobs" => SyntheticKind::GaussianBlobs,
        "rings" => SyntheticKind::Rings,
        other => return Err(PyValueError::new_err(format!("unknown dataset kind '{other}'"))),
    };
    let inner = make_synthetic(&SyntheticSpec { kind, classes, n, dim, noise, seed }).map_err(err)?;
    Ok(Dataset { inner })
}

#[pyfunction]
#[pyo3(signature = (classes, per_class, noise=0.15, blend=0.45, seed=0))]
fn make_images(classes: usize, per_class: usize, noise: f64, blend: f64, seed: u64) -> PyResult<Dataset> {
    let inner = make_template_images(&TemplateImageSpec { classes, per_class, noise, blend, seed })
        .map_err(err)?;
    Ok(Dataset { inner })
}

fn attack_spec(kind: &str, epsilon: f64, alpha: f64, iterations: usize, seed: u64) -> PyResult<AttackSpec> {
    let kind = match kind {
        "fgsm" => AttackKind::Fgsm,
        "rfgsm" => AttackKind::Rfgsm,
        "bim" => AttackKind::Bim,
        "pgd" => AttackKind::Pgd,
        "fast-step" => AttackKind::FastStep,
        other => return Err(PyValueError::new_err(format!("unknown attack kind '{other}'"))),
    };
    let spec = AttackSpec {
        kind,
        epsilon,
        alpha,
        iterations: match kind {
            AttackKind::Bim | AttackKind::Pgd => iterations,
            _ => 1,
        },
        random_start: matches!(kind, AttackKind::Pgd),
        seed,
    };
    spec.validate().map_err(err)?;
    Ok(spec)
}

/// Trains `model` in place and returns a report dict with per-epoch
/// losses, wall times, and the exact pass counts of the loop.
#[pyfunction]
#[pyo3(signature = (model, dataset, method, epochs, batch_size, clr_max, clr_min=0.0,
                    gamma=None, epsilon=None, alpha=None, iterations=None, seed=0))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    model: &mut Model,
    dataset: &Dataset,
    method: &str,
    epochs: usize,
    batch_size: usize,
    clr_max: f64,
    clr_min: f64,
    gamma: Option<f64>,
    epsilon: Option<f64>,
    alpha: Option<f64>,
    iterations: Option<usize>,
    seed: u64,
) -> PyResult<Py<PyDict>> {
    let method = match method {
        "normal" => TrainMethod::Normal,
        "eae" => TrainMethod::Eae,
        "fgsm-at" => TrainMethod::FgsmAt,
        "fast-at" => TrainMethod::FastAt,
        "pgd-at" => TrainMethod::PgdAt,
        other => return Err(PyValueError::new_err(format!("unknown method '{other}'"))),
    };
    let attack = match method {
        TrainMethod::FgsmAt | TrainMethod::FastAt | TrainMethod::PgdAt => {
            let eps = epsilon.ok_or_else(|| PyValueError::new_err("attack methods need epsilon"))?;
            Some(match method {
                TrainMethod::FgsmAt => AttackSpec::fgsm(eps),
                TrainMethod::FastAt => AttackSpec::fast_step(eps, alpha.unwrap_or(eps * 1.25), seed),
                _ => AttackSpec::pgd(eps, alpha.unwrap_or(eps / 2.0), iterations.unwrap_or(7), seed),
            })
        }
        _ => None,
    };
    let spec = TrainSpec {
        method,
        epochs,
        batch_size,
        clr_min,
        clr_max,
        gamma,
        attack,
        seed,
    };
    let trained = {
        let model_in = model.inner.clone();
        train_run(model_in, &dataset.inner, &spec).map_err(err)?
    };
    let (trained_model, instrumentation, report) = trained;
    model.inner = trained_model;

    let out = PyDict::new(py);
    out.set_item("method", report.method)?;
    out.set_item(
        "losses",
        report.epochs.iter().map(|e| e.mean_loss).collect::<Vec<f64>>(),
    )?;
    out.set_item("sec_per_epoch", report.sec_per_epoch)?;
    let passes = PyDict::new(py);
    passes.set_item("forward", instrumentation.passes.forward)?;
    passes.set_item("param_backward", instrumentation.passes.param_backward)?;
    passes.set_item("input_grad", instrumentation.passes.input_grad)?;
    out.set_item("passes", passes)?;
    Ok(out.into())
}

#[pyfunction]
fn accuracy(model: &Model, dataset: &Dataset) -> PyResult<f64> {
    accuracy_on(&model.inner, &dataset.inner).map_err(err)
}

/// Attacks `dataset` against `model`; returns (success_rate, max_deviation).
#[pyfunction]
#[pyo3(signature = (model, dataset, kind, epsilon, alpha=0.0, iterations=1, seed=0))]
fn attack(
    model: &Model,
    dataset: &Dataset,
    kind: &str,
    epsilon: f64,
    alpha: f64,
    iterations: usize,
    seed: u64,
) -> PyResult<(f64, f64)> {
    let spec = attack_spec(kind, epsilon, alpha, iterations, seed)?;
    let batch = attacks::perturb(&model.inner, &dataset.inner.inputs, &dataset.inner.labels, &spec)
        .map_err(err)?;
    attacks::verify_budget(&dataset.inner.inputs, &batch.x_adv, spec.epsilon).map_err(err)?;
    let max_dev = dataset
        .inner
        .inputs
        .data()
        .iter()
        .zip(batch.x_adv.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok((batch.success_count() as f64 / dataset.inner.len() as f64, max_dev))
}

/// Top-1 index, top-2 index, and their gap d = z_top1 - z_top2.
#[pyfunction]
fn logit_difference(z: Vec<f64>) -> PyResult<(usize, usize, f64)> {
    let ld = eae::logit_difference(&z).map_err(err)?;
    Ok((ld.top1, ld.top2, ld.d))
}

/// The closed-form minimal perturbation equalizing the top-2 logits.
#[pyfunction]
fn eae_delta(z: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(eae::eae_delta(&z).map_err(err)?.delta)
}

/// Gate-and-perturb a batch of logit rows at threshold gamma.
#[pyfunction]
fn eae_perturb(rows: Vec<Vec<f64>>, gamma: f64) -> PyResult<Vec<Vec<f64>>> {
    let z = rows_to_tensor(&rows)?;
    let out = eae::eae_perturb_batch(&z, gamma).map_err(err)?;
    let width = rows[0].len();
    Ok(out.data().chunks(width).map(|r| r.to_vec()).collect())
}

#[pyfunction]
fn softmax(z: Vec<f64>) -> PyResult<Vec<f64>> {
    let width = z.len();
    let t = Tensor::new(&[1, width], z).map_err(err)?;
    Ok(softmax_rows(&t).map_err(err)?.data().to_vec())
}

#[pyfunction]
#[pyo3(signature = (values, bin_width=0.5))]
fn ld_stats(py: Python<'_>, values: Vec<f64>, bin_width: f64) -> PyResult<Py<PyDict>> {
    let stats = eae::ld_stats_with_width(&values, bin_width).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("mean", stats.mean)?;
    out.set_item("std", stats.std)?;
    out.set_item("count", stats.count)?;
    out.set_item(
        "histogram",
        stats
            .histogram
            .iter()
            .map(|b| (b.lower, b.count))
            .collect::<Vec<(f64, usize)>>(),
    )?;
    Ok(out.into())
}

/// Current global pass counters (monotone; difference two snapshots).
#[pyfunction]
fn pass_counters(py: Python<'_>) -> PyResult<Py<PyDict>> {
    let counts = counters::snapshot();
    let out = PyDict::new(py);
    out.set_item("forward", counts.forward)?;
    out.set_item("param_backward", counts.param_backward)?;
    out.set_item("input_grad", counts.input_grad)?;
    Ok(out.into())
}

#[pymodule]
fn eae_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(make_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(make_images, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(attack, m)?)?;
    m.add_function(wrap_pyfunction!(logit_difference, m)?)?;
    m.add_function(wrap_pyfunction!(eae_delta, m)?)?;
    m.add_function(wrap_pyfunction!(eae_perturb, m)?)?;
    m.add_function(wrap_pyfunction!(softmax, m)?)?;
    m.add_function(wrap_pyfunction!(ld_stats, m)?)?;
    m.add_function(wrap_pyfunction!(pass_counters, m)?)?;
    Ok(())
}
