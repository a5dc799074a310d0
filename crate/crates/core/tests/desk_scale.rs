//! Desk-scale empirical checks that need trained models: attack strength
//! orderings, logit-difference separation, transfer trends, and the
//! gamma = 0 gate identity.

use eae_core::attacks::AttackSpec;
use eae_core::data::{make_synthetic, Dataset, SyntheticKind, SyntheticSpec};
use eae_core::eae::{ld_stats, partition_seeds};
use eae_core::evalbench::{accuracy, build_transfer_suite, threshold_sweep};
use eae_core::nn::Model;
use eae_core::train::{train, TrainSpec};

fn blob_split(classes: usize, dim: usize, noise: f64, seed: u64) -> (Dataset, Dataset) {
    let pool = make_synthetic(&SyntheticSpec {
        kind: SyntheticKind::GaussianBlobs,
        classes,
        n: 700,
        dim,
        noise,
        seed,
    })
    .unwrap();
    let train_idx: Vec<usize> = (0..500).collect();
    let test_idx: Vec<usize> = (500..700).collect();
    (pool.select(&train_idx).unwrap(), pool.select(&test_idx).unwrap())
}

fn trained_mlp(train_set: &Dataset, seed: u64) -> Model {
    let model = Model::preset("mlp-small", train_set.example_shape(), train_set.num_classes, seed)
        .unwrap();
    let spec = TrainSpec::normal(6, 32, 0.3, seed);
    let (model, _, _) = train(model, train_set, &spec).unwrap();
    model
}

#[test]
fn pgd_is_at_least_as_successful_as_fgsm() {
    let (train_set, test_set) = blob_split(2, 8, 0.16, 101);
    let model = trained_mlp(&train_set, 101);
    let clean_acc = accuracy(&model, &test_set.inputs, &test_set.labels).unwrap();
    assert!(clean_acc > 0.8, "probe model too weak: {clean_acc}");

    let fgsm_out =
        eae_core::attacks::fgsm(&model, &test_set.inputs, &test_set.labels, &AttackSpec::fgsm(0.1))
            .unwrap();
    let pgd_out = eae_core::attacks::pgd(
        &model,
        &test_set.inputs,
        &test_set.labels,
        &AttackSpec::pgd(0.1, 0.03, 7, 5),
    )
    .unwrap();
    assert!(
        pgd_out.success_count() >= fgsm_out.success_count(),
        "pgd {} < fgsm {}",
        pgd_out.success_count(),
        fgsm_out.success_count()
    );
}

#[test]
fn source_accuracy_on_its_own_fgsm_sets_decays_with_epsilon() {
    let (train_set, test_set) = blob_split(3, 8, 0.14, 303);
    let model = trained_mlp(&train_set, 303);
    let grid: Vec<AttackSpec> = [0.0, 0.05, 0.1, 0.2]
        .iter()
        .map(|&eps| AttackSpec::fgsm(eps))
        .collect();
    let suite = build_transfer_suite(&model, &test_set, &grid).unwrap();
    let accs: Vec<f64> = (0..grid.len())
        .map(|i| suite.evaluate(&model, i).unwrap())
        .collect();
    for pair in accs.windows(2) {
        assert!(
            pair[1] <= pair[0] + 0.02,
            "accuracy failed to decay within noise: {accs:?}"
        );
    }
    assert!(accs[0] > *accs.last().unwrap(), "attack had no effect: {accs:?}");
}

#[test]
fn mld_of_seeds_is_below_mld_of_non_seeds() {
    let (train_set, _) = blob_split(3, 8, 0.15, 404);
    let model = trained_mlp(&train_set, 404);
    let partition = partition_seeds(&model, &train_set, &AttackSpec::fgsm(0.08)).unwrap();
    assert!(
        partition.seeds.len() >= 5 && partition.non_seeds.len() >= 5,
        "degenerate partition: {} seeds, {} non-seeds",
        partition.seeds.len(),
        partition.non_seeds.len()
    );
    let mld_seed = ld_stats(&partition.seed_lds()).unwrap().mean;
    let mld_non_seed = ld_stats(&partition.non_seed_lds()).unwrap().mean;
    assert!(
        mld_seed < mld_non_seed,
        "expected seed MLD {mld_seed} below non-seed MLD {mld_non_seed}"
    );
}

#[test]
fn zero_gamma_sweep_row_reproduces_normal_training_exactly() {
    // with gamma = 0 the gate never fires, so the run is operation-for-
    // operation identical to normal training with the same seeds
    let (train_set, test_set) = blob_split(3, 8, 0.12, 505);
    let base = TrainSpec::eae(3, 32, 0.2, 0.0, 42);
    let rows = threshold_sweep(
        &train_set,
        &test_set,
        &[0.0, 4.0],
        &base,
        "mlp-small",
        7,
        None,
    )
    .unwrap();

    let normal_model = Model::preset("mlp-small", train_set.example_shape(), 3, 7).unwrap();
    let mut normal_spec = TrainSpec::normal(3, 32, 0.2, 42);
    normal_spec.clr_min = base.clr_min;
    let (normal_model, _, _) = train(normal_model, &train_set, &normal_spec).unwrap();
    let normal_acc = accuracy(&normal_model, &test_set.inputs, &test_set.labels).unwrap();
    assert_eq!(rows[0].clean_acc, normal_acc);
}

#[test]
fn large_gamma_actually_changes_training() {
    let (train_set, _) = blob_split(3, 8, 0.12, 606);
    let run_losses = |spec: &TrainSpec| {
        let model = Model::preset("mlp-small", train_set.example_shape(), 3, 9).unwrap();
        let (_, _, report) = train(model, &train_set, spec).unwrap();
        report.epochs.iter().map(|e| e.mean_loss).collect::<Vec<f64>>()
    };
    let normal = run_losses(&TrainSpec::normal(2, 32, 0.2, 11));
    let gated = run_losses(&TrainSpec::eae(2, 32, 0.2, 50.0, 11));
    assert_ne!(normal, gated, "a saturating gate must alter the loss stream");
}

#[test]
fn identical_methods_time_within_twenty_percent() {
    // timing-noise calibration: the same spec timed twice should produce
    // close per-epoch estimates. Serialize against the other tests in
    // this binary and take minima over interleaved repetitions so load
    // spikes cannot land on one side only.
    static TIMING: std::sync::Mutex<()> = std::sync::Mutex::new(());
    let _guard = TIMING.lock().unwrap_or_else(|e| e.into_inner());
    let pool = make_synthetic(&SyntheticSpec {
        kind: SyntheticKind::GaussianBlobs,
        classes: 3,
        n: 8000,
        dim: 256,
        noise: 0.1,
        seed: 77,
    })
    .unwrap();
    let spec = TrainSpec::normal(4, 64, 0.2, 5);
    let run_time = || {
        let model = Model::preset("mlp-small", pool.example_shape(), 3, 5).unwrap();
        let (_, instrumentation, _) = train(model, &pool, &spec).unwrap();
        instrumentation.sec_per_epoch()
    };
    run_time(); // warm-up
    let (mut a, mut b) = (f64::INFINITY, f64::INFINITY);
    for _ in 0..3 {
        a = a.min(run_time());
        b = b.min(run_time());
    }
    let ratio = (a - b).abs() / a.max(b);
    assert!(
        ratio < 0.2,
        "identical runs diverged by {:.0}% ({a:.4}s vs {b:.4}s)",
        ratio * 100.0
    );
}
