use super::*;
use crate::data::{make_synthetic, SyntheticKind, SyntheticSpec};
use crate::evalbench::accuracy_on;
use crate::nn::Model;

fn blobs(n: usize, noise: f64, seed: u64) -> Dataset {
    make_synthetic(&SyntheticSpec {
        kind: SyntheticKind::GaussianBlobs,
        classes: 3,
        n,
        dim: 6,
        noise,
        seed,
    })
    .unwrap()
}

fn fresh_model(dataset: &Dataset, seed: u64) -> Model {
    Model::preset("mlp-small", dataset.example_shape(), dataset.num_classes, seed).unwrap()
}

#[test]
fn eae_pass_accounting_is_exact() {
    let dataset = blobs(30, 0.05, 1);
    let spec = TrainSpec::eae(3, 8, 0.1, 3.0, 7);
    let plan = BatchPlan::new(8, 0).unwrap();
    let k = plan.batch_count(30) as u64; // 4 minibatches
    let (_, instr, _) = train(fresh_model(&dataset, 1), &dataset, &spec).unwrap();
    assert_eq!(instr.passes.param_backward, 3 * k);
    assert_eq!(instr.passes.input_grad, 0);
    assert_eq!(instr.passes.forward, 3 * k);
}

#[test]
fn pgd_at_pass_accounting_is_exact() {
    let dataset = blobs(20, 0.05, 2);
    let attack = AttackSpec::pgd(0.1, 0.03, 7, 5);
    let spec = TrainSpec::adversarial(TrainMethod::PgdAt, 1, 8, 0.1, attack, 5);
    let k_b = 3u64; // ceil(20/8)
    let (_, instr, _) = train(fresh_model(&dataset, 2), &dataset, &spec).unwrap();
    assert_eq!(instr.passes.input_grad, 7 * k_b);
    assert_eq!(instr.passes.param_backward, k_b);
    assert_eq!(instr.passes.forward, (7 + 1) * k_b);
}

#[test]
fn fgsm_at_and_fast_at_pass_accounting() {
    let dataset = blobs(16, 0.05, 3);
    let k_b = 2u64; // ceil(16/8)
    for (method, attack) in [
        (TrainMethod::FgsmAt, AttackSpec::fgsm(0.1)),
        (TrainMethod::FastAt, AttackSpec::fast_step(0.1, 0.12, 3)),
    ] {
        let spec = TrainSpec::adversarial(method, 2, 8, 0.1, attack, 9);
        let (_, instr, _) = train(fresh_model(&dataset, 3), &dataset, &spec).unwrap();
        assert_eq!(instr.passes.input_grad, 2 * k_b, "{}", method.name());
        assert_eq!(instr.passes.param_backward, 2 * k_b, "{}", method.name());
        assert_eq!(instr.passes.forward, 2 * 2 * k_b, "{}", method.name());
    }
}

#[test]
fn normal_training_separates_clean_blobs() {
    let dataset = blobs(90, 0.0, 4);
    let spec = TrainSpec::normal(20, 16, 0.5, 11);
    let (model, _, _) = train(fresh_model(&dataset, 4), &dataset, &spec).unwrap();
    let acc = accuracy_on(&model, &dataset).unwrap();
    assert_eq!(acc, 1.0, "zero-noise blobs must reach 100% train accuracy");
}

#[test]
fn training_is_bitwise_deterministic() {
    let dataset = blobs(40, 0.08, 5);
    let spec = TrainSpec::eae(3, 8, 0.2, 3.0, 21);
    let run = || {
        let (model, _, report) = train(fresh_model(&dataset, 5), &dataset, &spec).unwrap();
        let params: Vec<u64> = model
            .parameters()
            .iter()
            .flat_map(|p| p.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
            .collect();
        (params, report.metrics_fingerprint())
    };
    let (params_a, metrics_a) = run();
    let (params_b, metrics_b) = run();
    assert_eq!(params_a, params_b);
    assert_eq!(metrics_a, metrics_b);
}

#[test]
fn divergent_lr_aborts_with_numeric_error() {
    let dataset = blobs(30, 0.05, 6);
    // first step overflows the weights to +-inf, the next minibatch's
    // forward then yields a NaN loss
    let mut spec = TrainSpec::normal(5, 8, 1.7e308, 2);
    spec.clr_min = 1e308;
    match train(fresh_model(&dataset, 6), &dataset, &spec) {
        Err(Error::Numeric(msg)) => assert!(msg.contains("learning rate"), "{msg}"),
        other => panic!("expected numeric abort, got {:?}", other.map(|_| ())),
    }
}

#[test]
fn epoch_losses_trend_downward_early() {
    let dataset = blobs(120, 0.05, 7);
    let spec = TrainSpec::normal(8, 16, 0.3, 13);
    let (_, _, report) = train(fresh_model(&dataset, 7), &dataset, &spec).unwrap();
    let losses: Vec<f64> = report.epochs.iter().map(|e| e.mean_loss).collect();
    for pair in losses[..losses.len() / 2].windows(2) {
        assert!(
            pair[1] <= pair[0] * 1.05,
            "early-epoch loss rose more than 5%: {losses:?}"
        );
    }
}

#[test]
fn spec_validation_enforces_method_fields() {
    // eae without gamma
    let mut spec = TrainSpec::eae(1, 8, 0.1, 3.0, 0);
    spec.gamma = None;
    let err = spec.validate().unwrap_err();
    assert!(matches!(&err, Error::Config(msg) if msg.contains("gamma")), "{err}");

    // normal with stray gamma
    let mut spec = TrainSpec::normal(1, 8, 0.1, 0);
    spec.gamma = Some(1.0);
    assert!(spec.validate().is_err());

    // attack method without attack
    let mut spec = TrainSpec::adversarial(TrainMethod::FgsmAt, 1, 8, 0.1, AttackSpec::fgsm(0.1), 0);
    spec.attack = None;
    let err = spec.validate().unwrap_err();
    assert!(matches!(&err, Error::Config(msg) if msg.contains("attack")), "{err}");

    // attack kind mismatched with method
    let spec = TrainSpec::adversarial(TrainMethod::FgsmAt, 1, 8, 0.1, AttackSpec::pgd(0.1, 0.05, 7, 0), 0);
    assert!(spec.validate().is_err());
}

#[test]
fn bench_rows_cover_all_methods() {
    let dataset = blobs(24, 0.05, 8);
    let methods = vec![
        TrainSpec::normal(2, 8, 0.1, 3),
        TrainSpec::eae(2, 8, 0.1, 3.0, 3),
    ];
    let rows = train_time_benchmark(&methods, &dataset, "mlp-small", 3).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].method, "normal");
    assert_eq!(rows[1].method, "eae");
    assert!(rows.iter().all(|r| r.sec_per_epoch >= 0.0));
}

#[test]
fn median_helper() {
    assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    assert_eq!(median(&[]), 0.0);
}
