//! End-to-end command tests: configs in temp directories, library-level
//! command invocations, exit-code and artifact checks.

use eae_core::attacks::verify_budget;
use eae_core::cli::{cmd_attack, cmd_bench, cmd_seed_stats, cmd_train, run};
use eae_core::config::RunConfig;
use eae_core::error::Error;
use eae_core::evalbench::{read_perturbed_set, RunReport};
use std::path::Path;

fn blobs_config(out_dir: &Path, method: &str, extra_train: &str) -> String {
    format!(
        r#"{{
        "seed": 40,
        "out_dir": "{}",
        "dataset": {{"kind": "blobs", "classes": 3, "train_n": 120, "test_n": 60,
                     "dim": 8, "noise": 0.12}},
        "model": {{"preset": "mlp-small"}},
        "train": {{"method": "{method}", "epochs": 3, "batch_size": 16, "clr_max": 0.2{extra_train}}}
    }}"#,
        out_dir.display()
    )
}

fn load(json: &str) -> RunConfig {
    serde_json::from_str(json).expect("test config parses")
}

#[test]
fn train_writes_report_checkpoint_and_epoch_log() {
    let dir = tempfile::tempdir().unwrap();
    let config = load(&blobs_config(dir.path(), "normal", ""));
    cmd_train(&config).unwrap();
    for artifact in ["report.json", "model.ckpt", "epochs.csv"] {
        assert!(dir.path().join(artifact).exists(), "missing {artifact}");
    }
    let reports: Vec<RunReport> =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(reports.len(), 1);
    let clean = reports[0].clean_acc.unwrap();
    assert!((0.0..=1.0).contains(&clean));
    assert_eq!(reports[0].passes.input_grad, 0);
    let csv = std::fs::read_to_string(dir.path().join("epochs.csv")).unwrap();
    assert!(csv.starts_with("epoch,mean_loss,wall_sec"));
    assert_eq!(csv.lines().count(), 1 + 3);
}

#[test]
fn eae_without_gamma_is_a_config_error_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let config = load(&blobs_config(dir.path(), "eae", ""));
    let err = cmd_train(&config).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(matches!(&err, Error::Config(msg) if msg.contains("gamma")), "{err}");
}

#[test]
fn same_config_and_seed_reproduce_the_metrics() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let config_a = load(&blobs_config(dir_a.path(), "eae", r#", "gamma": 3.0"#));
    let config_b = load(&blobs_config(dir_b.path(), "eae", r#", "gamma": 3.0"#));
    cmd_train(&config_a).unwrap();
    cmd_train(&config_b).unwrap();
    let fingerprint = |dir: &Path| {
        let reports: Vec<RunReport> =
            serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap())
                .unwrap();
        reports[0].metrics_fingerprint()
    };
    assert_eq!(fingerprint(dir_a.path()), fingerprint(dir_b.path()));
}

#[test]
fn run_maps_missing_config_file_to_exit_2() {
    let code = run(&[
        "train".into(),
        "--config".into(),
        "/nonexistent/nowhere.json".into(),
    ]);
    assert_eq!(code, 2);
}

#[test]
fn run_maps_missing_dataset_path_to_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("cfg.json");
    std::fs::write(
        &config_path,
        format!(
            r#"{{
            "seed": 1,
            "out_dir": "{}",
            "dataset": {{"kind": "cifar10", "train_path": "/no/such/file.bin",
                         "test_path": "/no/such/file2.bin"}},
            "model": {{"preset": "cnn-small"}},
            "train": {{"method": "normal", "epochs": 1, "batch_size": 8, "clr_max": 0.1}}
        }}"#,
            dir.path().display()
        ),
    )
    .unwrap();
    let code = run(&[
        "train".into(),
        "--config".into(),
        config_path.to_string_lossy().into_owned(),
    ]);
    assert_eq!(code, 2);
}

#[test]
fn seed_stats_emits_one_record_per_epsilon() {
    let dir = tempfile::tempdir().unwrap();
    let config_json = format!(
        r#"{{
        "seed": 50,
        "out_dir": "{}",
        "dataset": {{"kind": "blobs", "classes": 3, "train_n": 150, "test_n": 30,
                     "dim": 8, "noise": 0.14}},
        "model": {{"preset": "mlp-small"}},
        "train": {{"method": "normal", "epochs": 4, "batch_size": 16, "clr_max": 0.25}},
        "attack_grid": [
            {{"kind": "fgsm", "epsilon": 0.0}},
            {{"kind": "fgsm", "epsilon": 0.2}}
        ]
    }}"#,
        dir.path().display()
    );
    let config = load(&config_json);
    cmd_seed_stats(&config).unwrap();
    let records: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("seed_stats.json")).unwrap())
            .unwrap();
    let records = records.as_array().unwrap();
    assert_eq!(records.len(), 2);
    // zero budget flips nothing: no seeds, no derived gamma
    assert_eq!(records[0]["n_seed"], 0);
    assert!(records[0]["gamma"].is_null());
    assert!(dir.path().join("ld_hist.svg").exists());
    let hist_csv = std::fs::read_to_string(dir.path().join("ld_hist_seed.csv")).unwrap();
    assert!(hist_csv.starts_with("bin_lower,count"));
    assert!(dir.path().join("ld_hist_non_seed.csv").exists());
    // every record reports a gamma field (possibly null) per the contract
    for record in records {
        assert!(record.get("gamma").is_some());
        assert!(record.get("epsilon").is_some());
    }
}

#[test]
fn bench_emits_one_row_per_method_with_pass_columns() {
    let dir = tempfile::tempdir().unwrap();
    let config_json = format!(
        r#"{{
        "seed": 60,
        "out_dir": "{}",
        "dataset": {{"kind": "blobs", "classes": 3, "train_n": 90, "test_n": 45,
                     "dim": 16, "noise": 0.12}},
        "model": {{"preset": "mlp-small"}},
        "bench": {{
            "methods": [
                {{"method": "normal", "epochs": 2, "batch_size": 16, "clr_max": 0.2}},
                {{"method": "eae", "epochs": 2, "batch_size": 16, "clr_max": 0.2, "gamma": 3.0}},
                {{"method": "fgsm-at", "epochs": 2, "batch_size": 16, "clr_max": 0.2,
                  "attack": {{"kind": "fgsm", "epsilon": 0.1}}}},
                {{"method": "pgd-at", "epochs": 2, "batch_size": 16, "clr_max": 0.2,
                  "attack": {{"kind": "pgd", "epsilon": 0.1, "alpha": 0.05, "iterations": 7}}}}
            ],
            "source_train": {{"method": "normal", "epochs": 2, "batch_size": 16, "clr_max": 0.2}},
            "eval_attacks": [{{"kind": "fgsm", "epsilon": 0.1}}]
        }}
    }}"#,
        dir.path().display()
    );
    let config = load(&config_json);
    cmd_bench(&config).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].contains("param_bwd,input_grad_bwd"));
    assert_eq!(lines.len(), 1 + 4, "one row per method: {csv}");
    // the eae row proves zero input-gradient passes
    let eae_row = lines.iter().find(|l| l.starts_with("eae,")).unwrap();
    let cols: Vec<&str> = eae_row.split(',').collect();
    assert_eq!(cols[7], "0", "input_grad_bwd column for eae: {eae_row}");
    assert!(dir.path().join("bench.svg").exists());
    assert!(dir.path().join("bench.json").exists());
}

#[test]
fn attack_command_writes_a_verifiable_artifact() {
    let dir = tempfile::tempdir().unwrap();
    // train a checkpoint first
    let train_config = load(&blobs_config(dir.path(), "normal", ""));
    cmd_train(&train_config).unwrap();
    let ckpt = dir.path().join("model.ckpt");

    let attack_out = dir.path().join("attack_out");
    let attack_json = format!(
        r#"{{
        "seed": 40,
        "out_dir": "{}",
        "dataset": {{"kind": "blobs", "classes": 3, "train_n": 120, "test_n": 60,
                     "dim": 8, "noise": 0.12}},
        "model": {{"preset": "mlp-small"}},
        "attack": {{"checkpoint": "{}", "attack": {{"kind": "fgsm", "epsilon": 0.05}}}}
    }}"#,
        attack_out.display(),
        ckpt.display()
    );
    let config = load(&attack_json);
    cmd_attack(&config, true).unwrap();
    let set_path = attack_out.join("perturbed_set.bin");
    let stored = read_perturbed_set(&set_path).unwrap();
    assert_eq!(stored.labels.len(), 60);
    assert_eq!(stored.attack.epsilon, 0.05);

    // deterministic by seed: regenerate and compare bytes
    let before = std::fs::read(&set_path).unwrap();
    cmd_attack(&config, false).unwrap();
    assert_eq!(before, std::fs::read(&set_path).unwrap());

    // a tampered payload fails the budget re-check with exit code 4
    let (train_set, test_set) = config.dataset.load(config.seed).unwrap();
    let _ = train_set;
    let mut tampered = stored.batch.x_adv.data().to_vec();
    tampered[0] = (tampered[0] + 0.5).min(1.0);
    let bad = eae_core::tensor::Tensor::new(stored.batch.x_adv.shape(), tampered).unwrap();
    let err = verify_budget(&test_set.inputs, &bad, stored.attack.epsilon).unwrap_err();
    assert_eq!(err.exit_code(), 4);
}

#[test]
fn rerunning_a_command_overwrites_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let config = load(&blobs_config(dir.path(), "normal", ""));
    cmd_train(&config).unwrap();
    let first = std::fs::read(dir.path().join("model.ckpt")).unwrap();
    cmd_train(&config).unwrap();
    let second = std::fs::read(dir.path().join("model.ckpt")).unwrap();
    assert_eq!(first, second);
}
