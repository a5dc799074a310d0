//! Input-space adversarial example generation: FGSM, RFGSM, BIM, PGD, and
//! the random-init single step used by fast adversarial training.
//!
//! All attacks use the L-infinity convention: every returned example
//! satisfies max|x_adv - x| <= epsilon and stays inside the [0, 1] pixel
//! domain. Attacks differentiate through a detached parameter snapshot,
//! so they never touch the model's own gradient slots; each gradient they
//! take is counted as an input-gradient pass.

use crate::error::{Error, Result};
use crate::nn::{cross_entropy, Model};
use crate::rng::Rng;
use crate::tensor::tape::{backward, with_tape};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

pub const BUDGET_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    Fgsm,
    Rfgsm,
    Bim,
    Pgd,
    FastStep,
}

impl AttackKind {
    pub fn name(&self) -> &'static str {
        match self {
            AttackKind::Fgsm => "fgsm",
            AttackKind::Rfgsm => "rfgsm",
            AttackKind::Bim => "bim",
            AttackKind::Pgd => "pgd",
            AttackKind::FastStep => "fast-step",
        }
    }
}

/// A fully specified attack configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    pub kind: AttackKind,
    /// L-infinity budget in pixel units, in [0, 1].
    pub epsilon: f64,
    /// Step size for iterative and fast attacks; FGSM ignores it.
    #[serde(default)]
    pub alpha: f64,
    /// Iteration count for BIM/PGD; single-step attacks use 1.
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    /// PGD only: start from a uniform point inside the budget ball.
    #[serde(default = "default_true")]
    pub random_start: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_iterations() -> usize {
    1
}

fn default_true() -> bool {
    true
}

impl AttackSpec {
    pub fn fgsm(epsilon: f64) -> AttackSpec {
        AttackSpec {
            kind: AttackKind::Fgsm,
            epsilon,
            alpha: 0.0,
            iterations: 1,
            random_start: false,
            seed: 0,
        }
    }

    pub fn rfgsm(epsilon: f64, seed: u64) -> AttackSpec {
        AttackSpec {
            kind: AttackKind::Rfgsm,
            epsilon,
            alpha: 0.0,
            iterations: 1,
            random_start: true,
            seed,
        }
    }

    pub fn bim(epsilon: f64, alpha: f64, iterations: usize) -> AttackSpec {
        AttackSpec {
            kind: AttackKind::Bim,
            epsilon,
            alpha,
            iterations,
            random_start: false,
            seed: 0,
        }
    }

    pub fn pgd(epsilon: f64, alpha: f64, iterations: usize, seed: u64) -> AttackSpec {
        AttackSpec {
            kind: AttackKind::Pgd,
            epsilon,
            alpha,
            iterations,
            random_start: true,
            seed,
        }
    }

    pub fn fast_step(epsilon: f64, alpha: f64, seed: u64) -> AttackSpec {
        AttackSpec {
            kind: AttackKind::FastStep,
            epsilon,
            alpha,
            iterations: 1,
            random_start: true,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Config(format!(
                "attack epsilon must lie in [0, 1], got {}",
                self.epsilon
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!(
                "attack alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        match self.kind {
            AttackKind::Bim | AttackKind::Pgd => {
                if self.iterations == 0 {
                    return Err(Error::Config("iterative attacks need iterations >= 1".into()));
                }
            }
            _ => {
                if self.iterations != 1 {
                    return Err(Error::Config(format!(
                        "{} is a single-step attack; iterations must be 1",
                        self.kind.name()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Deterministic identifier used as a map key in reports and CSV.
    pub fn label(&self) -> String {
        match self.kind {
            AttackKind::Fgsm | AttackKind::Rfgsm => {
                format!("{}_eps{:.4}", self.kind.name(), self.epsilon)
            }
            AttackKind::FastStep => format!(
                "{}_eps{:.4}_a{:.4}",
                self.kind.name(),
                self.epsilon,
                self.alpha
            ),
            AttackKind::Bim | AttackKind::Pgd => format!(
                "{}_eps{:.4}_a{:.4}_k{}",
                self.kind.name(),
                self.epsilon,
                self.alpha,
                self.iterations
            ),
        }
    }
}

/// An attacked batch plus its per-example success flags (prediction
/// differs from the ground-truth label).
#[derive(Debug, Clone)]
pub struct PerturbedBatch {
    pub x_adv: Tensor,
    pub success_mask: Vec<bool>,
}

impl PerturbedBatch {
    pub fn success_count(&self) -> usize {
        self.success_mask.iter().filter(|s| **s).count()
    }
}

/// Re-checks the budget and pixel-domain invariants of a crafted batch.
pub fn verify_budget(x: &Tensor, x_adv: &Tensor, epsilon: f64) -> Result<()> {
    if x.shape() != x_adv.shape() {
        return Err(Error::Invariant("perturbed batch changed shape".into()));
    }
    for (i, (a, b)) in x.data().iter().zip(x_adv.data()).enumerate() {
        if (a - b).abs() > epsilon + BUDGET_SLACK {
            return Err(Error::Invariant(format!(
                "element {i} deviates by {} > epsilon {epsilon}",
                (a - b).abs()
            )));
        }
        if !(0.0..=1.0).contains(b) {
            return Err(Error::Invariant(format!(
                "element {i} left the pixel domain: {b}"
            )));
        }
    }
    Ok(())
}

/// Gradient of the batch cross-entropy with respect to the inputs,
/// taken against a detached parameter snapshot. One input-gradient pass.
fn input_gradient(
    snapshot: &Model,
    x: &[f64],
    shape: &[usize],
    labels: &[usize],
) -> Result<Vec<f64>> {
    with_tape(|| {
        let leaf = Tensor::input_leaf(shape, x.to_vec())?;
        let z = snapshot.forward_logits(&leaf)?;
        let loss = cross_entropy(&z, labels)?;
        backward(&loss)?;
        Ok(leaf.grad().expect("input leaf receives gradient"))
    })
}

fn sign(g: f64) -> f64 {
    if g > 0.0 {
        1.0
    } else if g < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn step_project_clip(current: &mut [f64], origin: &[f64], grad: &[f64], step: f64, epsilon: f64) {
    for ((v, &o), &g) in current.iter_mut().zip(origin).zip(grad) {
        let moved = *v + step * sign(g);
        *v = (o + (moved - o).clamp(-epsilon, epsilon)).clamp(0.0, 1.0);
    }
}

/// Crafts x_adv without evaluating success — the form the training loops
/// use, so their pass counts stay exactly at the attack's gradient cost.
/// `seed` drives any noise; pass `spec.seed` for standalone use.
pub fn craft_seeded(
    model: &Model,
    x: &Tensor,
    labels: &[usize],
    spec: &AttackSpec,
    seed: u64,
) -> Result<Tensor> {
    spec.validate()?;
    if x.shape()[0] != labels.len() {
        return Err(Error::Contract(format!(
            "batch of {} rows with {} labels",
            x.shape()[0],
            labels.len()
        )));
    }
    let snapshot = model.detached();
    let origin = x.data();
    let shape = x.shape();
    let eps = spec.epsilon;
    let mut rng = Rng::new(seed);

    let adv: Vec<f64> = match spec.kind {
        AttackKind::Fgsm => {
            let grad = input_gradient(&snapshot, origin, shape, labels)?;
            let mut v = origin.to_vec();
            step_project_clip(&mut v, origin, &grad, eps, eps);
            v
        }
        AttackKind::Rfgsm => {
            // uniform half-budget noise, then a half-budget sign step
            let mut v: Vec<f64> = origin
                .iter()
                .map(|&o| (o + rng.uniform_in(-eps / 2.0, eps / 2.0)).clamp(0.0, 1.0))
                .collect();
            let grad = input_gradient(&snapshot, &v, shape, labels)?;
            step_project_clip(&mut v, origin, &grad, eps / 2.0, eps);
            v
        }
        AttackKind::Bim | AttackKind::Pgd => {
            let mut v: Vec<f64> = if spec.kind == AttackKind::Pgd && spec.random_start {
                origin
                    .iter()
                    .map(|&o| (o + rng.uniform_in(-eps, eps)).clamp(0.0, 1.0))
                    .collect()
            } else {
                origin.to_vec()
            };
            for _ in 0..spec.iterations {
                let grad = input_gradient(&snapshot, &v, shape, labels)?;
                step_project_clip(&mut v, origin, &grad, spec.alpha, eps);
            }
            v
        }
        AttackKind::FastStep => {
            let mut v: Vec<f64> = origin
                .iter()
                .map(|&o| (o + rng.uniform_in(-eps, eps)).clamp(0.0, 1.0))
                .collect();
            let grad = input_gradient(&snapshot, &v, shape, labels)?;
            step_project_clip(&mut v, origin, &grad, spec.alpha, eps);
            v
        }
    };
    let x_adv = Tensor::new(shape, adv)?;
    verify_budget(x, &x_adv, eps)?;
    Ok(x_adv)
}

/// Crafts x_adv and evaluates which examples flipped (costs one extra
/// forward pass for the predictions).
pub fn perturb(
    model: &Model,
    x: &Tensor,
    labels: &[usize],
    spec: &AttackSpec,
) -> Result<PerturbedBatch> {
    let x_adv = craft_seeded(model, x, labels, spec, spec.seed)?;
    let preds = model.predict(&x_adv)?;
    let success_mask = preds
        .iter()
        .zip(labels)
        .map(|(pred, truth)| pred != truth)
        .collect();
    Ok(PerturbedBatch { x_adv, success_mask })
}

pub fn fgsm(model: &Model, x: &Tensor, labels: &[usize], spec: &AttackSpec) -> Result<PerturbedBatch> {
    expect_kind(spec, AttackKind::Fgsm)?;
    perturb(model, x, labels, spec)
}

pub fn rfgsm(model: &Model, x: &Tensor, labels: &[usize], spec: &AttackSpec) -> Result<PerturbedBatch> {
    expect_kind(spec, AttackKind::Rfgsm)?;
    perturb(model, x, labels, spec)
}

pub fn bim(model: &Model, x: &Tensor, labels: &[usize], spec: &AttackSpec) -> Result<PerturbedBatch> {
    expect_kind(spec, AttackKind::Bim)?;
    perturb(model, x, labels, spec)
}

pub fn pgd(model: &Model, x: &Tensor, labels: &[usize], spec: &AttackSpec) -> Result<PerturbedBatch> {
    expect_kind(spec, AttackKind::Pgd)?;
    perturb(model, x, labels, spec)
}

pub fn fast_step(model: &Model, x: &Tensor, labels: &[usize], spec: &AttackSpec) -> Result<PerturbedBatch> {
    expect_kind(spec, AttackKind::FastStep)?;
    perturb(model, x, labels, spec)
}

fn expect_kind(spec: &AttackSpec, kind: AttackKind) -> Result<()> {
    if spec.kind != kind {
        return Err(Error::Contract(format!(
            "attack spec is {}, expected {}",
            spec.kind.name(),
            kind.name()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counters;
    use crate::nn::Layer;

    /// z = [w . x, 0] with w = (1, -1): the textbook linear 2-class probe.
    fn linear_probe() -> Model {
        let weight = Tensor::param(&[2, 2], vec![1.0, 0.0, -1.0, 0.0]).unwrap();
        let bias = Tensor::param(&[2], vec![0.0, 0.0]).unwrap();
        Model::from_layers("custom", vec![Layer::Dense { weight, bias }], &[2], 2)
    }

    fn fd_input_gradient(model: &Model, x: &[f64], labels: &[usize]) -> Vec<f64> {
        let h = 1e-6;
        let loss_of = |v: &[f64]| {
            let t = Tensor::new(&[labels.len(), v.len() / labels.len()], v.to_vec()).unwrap();
            cross_entropy(&model.forward_logits(&t).unwrap(), labels)
                .unwrap()
                .item()
                .unwrap()
        };
        let mut probe = x.to_vec();
        let mut grad = vec![0.0; x.len()];
        for i in 0..x.len() {
            let orig = probe[i];
            probe[i] = orig + h;
            let fp = loss_of(&probe);
            probe[i] = orig - h;
            let fm = loss_of(&probe);
            probe[i] = orig;
            grad[i] = (fp - fm) / (2.0 * h);
        }
        grad
    }

    #[test]
    fn fgsm_on_linear_probe_matches_hand_derivation() {
        let model = linear_probe();
        let x = Tensor::new(&[1, 2], vec![0.5, 0.5]).unwrap();
        // independent finite-difference check of the gradient sign
        let fd = fd_input_gradient(&model, &[0.5, 0.5], &[0]);
        assert!(fd[0] < 0.0 && fd[1] > 0.0, "fd grad {fd:?}");
        let out = fgsm(&model, &x, &[0], &AttackSpec::fgsm(0.1)).unwrap();
        assert!((out.x_adv.data()[0] - 0.4).abs() < 1e-12);
        assert!((out.x_adv.data()[1] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn fgsm_zero_budget_is_identity() {
        let model = linear_probe();
        let x = Tensor::new(&[1, 2], vec![0.3, 0.8]).unwrap();
        let out = fgsm(&model, &x, &[0], &AttackSpec::fgsm(0.0)).unwrap();
        assert_eq!(out.x_adv.data(), x.data());
    }

    #[test]
    fn fgsm_moves_exactly_epsilon_where_gradient_is_nonzero() {
        let model = linear_probe();
        let x = Tensor::new(&[1, 2], vec![0.5, 0.5]).unwrap();
        let eps = 0.07;
        let out = fgsm(&model, &x, &[0], &AttackSpec::fgsm(eps)).unwrap();
        for (a, b) in x.data().iter().zip(out.x_adv.data()) {
            assert!(((a - b).abs() - eps).abs() < 1e-12);
        }
    }

    #[test]
    fn fgsm_counts_one_input_gradient_pass() {
        let model = linear_probe();
        let x = Tensor::new(&[1, 2], vec![0.5, 0.5]).unwrap();
        let before = counters::snapshot();
        craft_seeded(&model, &x, &[0], &AttackSpec::fgsm(0.1), 0).unwrap();
        let delta = counters::snapshot().since(&before);
        assert_eq!(delta.input_grad, 1);
        assert_eq!(delta.param_backward, 0);
    }

    #[test]
    fn attacks_leave_model_gradients_untouched() {
        let model = linear_probe();
        let x = Tensor::new(&[1, 2], vec![0.5, 0.5]).unwrap();
        craft_seeded(&model, &x, &[0], &AttackSpec::pgd(0.1, 0.05, 3, 7), 7).unwrap();
        assert!(model.parameters().iter().all(|p| p.grad().is_none()));
    }

    #[test]
    fn bim_single_step_equals_fgsm() {
        let model = linear_probe();
        let x = Tensor::new(&[2, 2], vec![0.5, 0.5, 0.2, 0.7]).unwrap();
        let eps = 0.05;
        let via_bim = bim(&model, &x, &[0, 1], &AttackSpec::bim(eps, eps, 1)).unwrap();
        let via_fgsm = fgsm(&model, &x, &[0, 1], &AttackSpec::fgsm(eps)).unwrap();
        assert_eq!(via_bim.x_adv.data(), via_fgsm.x_adv.data());
    }

    #[test]
    fn bim_stays_inside_the_ball_for_many_iterations() {
        let model = linear_probe();
        let x = Tensor::new(&[1, 2], vec![0.5, 0.5]).unwrap();
        let spec = AttackSpec::bim(0.08, 0.05, 10);
        let out = bim(&model, &x, &[0], &spec).unwrap();
        verify_budget(&x, &out.x_adv, spec.epsilon).unwrap();
    }

    #[test]
    fn bim_on_linear_model_is_step_count_invariant() {
        // gradient sign is constant for a linear model, so K steps of
        // size epsilon land on the same point as one
        let model = linear_probe();
        let x = Tensor::new(&[1, 2], vec![0.5, 0.5]).unwrap();
        let eps = 0.06;
        let one = bim(&model, &x, &[0], &AttackSpec::bim(eps, eps, 1)).unwrap();
        let three = bim(&model, &x, &[0], &AttackSpec::bim(eps, eps, 3)).unwrap();
        assert_eq!(one.x_adv.data(), three.x_adv.data());
    }

    #[test]
    fn pgd_without_random_start_equals_bim() {
        let model = linear_probe();
        let x = Tensor::new(&[1, 2], vec![0.4, 0.6]).unwrap();
        let mut spec = AttackSpec::pgd(0.1, 0.04, 4, 9);
        spec.random_start = false;
        let via_pgd = pgd(&model, &x, &[0], &spec).unwrap();
        let via_bim = bim(&model, &x, &[0], &AttackSpec::bim(0.1, 0.04, 4)).unwrap();
        assert_eq!(via_pgd.x_adv.data(), via_bim.x_adv.data());
    }

    #[test]
    fn pgd_is_deterministic_per_seed() {
        let model = linear_probe();
        let x = Tensor::new(&[2, 2], vec![0.5, 0.5, 0.3, 0.6]).unwrap();
        let spec = AttackSpec::pgd(0.1, 0.03, 5, 42);
        let a = pgd(&model, &x, &[0, 1], &spec).unwrap();
        let b = pgd(&model, &x, &[0, 1], &spec).unwrap();
        assert_eq!(a.x_adv.data(), b.x_adv.data());
        let other = AttackSpec::pgd(0.1, 0.03, 5, 43);
        let c = pgd(&model, &x, &[0, 1], &other).unwrap();
        assert_ne!(a.x_adv.data(), c.x_adv.data());
    }

    #[test]
    fn rfgsm_with_zero_noise_matches_half_budget_fgsm() {
        // seed the noise away by using epsilon = 0 for the noise phase:
        // an rfgsm with budget e and zero noise is fgsm with step e/2
        let model = linear_probe();
        let x = Tensor::new(&[1, 2], vec![0.5, 0.5]).unwrap();
        let eps = 0.08;
        // construct the zero-noise variant manually
        let grad_based = fgsm(&model, &x, &[0], &AttackSpec::fgsm(eps / 2.0)).unwrap();
        let mut spec = AttackSpec::rfgsm(eps, 3);
        // with epsilon 0 noise the uniform draw collapses to the origin
        spec.epsilon = eps;
        let noiseless = {
            let snapshot = model.detached();
            let grad = input_gradient(&snapshot, x.data(), x.shape(), &[0]).unwrap();
            let mut v = x.data().to_vec();
            step_project_clip(&mut v, x.data(), &grad, eps / 2.0, eps);
            v
        };
        assert_eq!(grad_based.x_adv.data(), noiseless.as_slice());
        // and the seeded variant stays within budget and is deterministic
        let a = rfgsm(&model, &x, &[0], &spec).unwrap();
        let b = rfgsm(&model, &x, &[0], &spec).unwrap();
        assert_eq!(a.x_adv.data(), b.x_adv.data());
        verify_budget(&x, &a.x_adv, eps).unwrap();
    }

    #[test]
    fn fast_step_zero_alpha_is_pure_random_noise_in_ball() {
        let model = linear_probe();
        let x = Tensor::new(&[1, 2], vec![0.5, 0.5]).unwrap();
        let spec = AttackSpec::fast_step(0.1, 0.0, 5);
        let out = fast_step(&model, &x, &[0], &spec).unwrap();
        verify_budget(&x, &out.x_adv, 0.1).unwrap();
        assert_ne!(out.x_adv.data(), x.data());
    }

    #[test]
    fn fast_step_counts_one_input_gradient_pass() {
        let model = linear_probe();
        let x = Tensor::new(&[1, 2], vec![0.5, 0.5]).unwrap();
        let before = counters::snapshot();
        craft_seeded(&model, &x, &[0], &AttackSpec::fast_step(0.1, 0.05, 1), 1).unwrap();
        let delta = counters::snapshot().since(&before);
        assert_eq!(delta.input_grad, 1);
    }

    #[test]
    fn fast_step_accepts_alpha_larger_than_epsilon() {
        // e.g. epsilon 16/255 with step 20/255: projection binds
        let model = linear_probe();
        let x = Tensor::new(&[1, 2], vec![0.5, 0.5]).unwrap();
        let eps = 16.0 / 255.0;
        let spec = AttackSpec::fast_step(eps, 20.0 / 255.0, 2);
        let out = fast_step(&model, &x, &[0], &spec).unwrap();
        verify_budget(&x, &out.x_adv, eps).unwrap();
    }

    #[test]
    fn iterative_attack_pass_accounting_is_exact() {
        let model = linear_probe();
        let x = Tensor::new(&[1, 2], vec![0.5, 0.5]).unwrap();
        for k in [1usize, 3, 7] {
            let before = counters::snapshot();
            craft_seeded(&model, &x, &[0], &AttackSpec::pgd(0.1, 0.02, k, 4), 4).unwrap();
            let delta = counters::snapshot().since(&before);
            assert_eq!(delta.input_grad, k as u64);
            assert_eq!(delta.param_backward, 0);
        }
    }

    #[test]
    fn spec_validation_rejects_bad_parameters() {
        assert!(AttackSpec::fgsm(1.5).validate().is_err());
        assert!(AttackSpec::bim(0.1, 0.05, 0).validate().is_err());
        let mut spec = AttackSpec::fgsm(0.1);
        spec.iterations = 2;
        assert!(spec.validate().is_err());
        assert!(AttackSpec::fgsm(0.0).validate().is_ok());
    }
}
