//! The `eae` command-line front-end: four batch subcommands bound to one
//! declarative config file.
//!
//! Exit codes: 0 success, 2 config error, 3 numeric abort, 4 invariant
//! violation, 1 anything else.

use crate::attacks::verify_budget;
use crate::config::RunConfig;
use crate::eae::{ld_stats, partition_seeds, threshold_from_partition, LdStats};
use crate::error::{Error, Result};
use crate::evalbench::{
    accuracy_on, build_transfer_suite, emit_bench_svg, emit_histogram_svg, emit_report,
    read_perturbed_set, write_perturbed_set, BenchSummaryRow, PerturbedAcc, ReportFormat,
    RunReport,
};
use crate::nn::{load_checkpoint, save_checkpoint, Model};
use crate::train::{bench_runs, train, TrainMethod};
use serde::Serialize;
use std::path::{Path, PathBuf};

const USAGE: &str = "usage: eae <train|seed-stats|bench|attack> --config PATH \
                     [--seed N] [--out DIR] [--verify]";

#[derive(Debug)]
pub struct CliArgs {
    pub command: String,
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub verify: bool,
}

pub fn parse_args(args: &[String]) -> Result<CliArgs> {
    let mut it = args.iter();
    let command = it
        .next()
        .ok_or_else(|| Error::Config(USAGE.into()))?
        .clone();
    if !matches!(command.as_str(), "train" | "seed-stats" | "bench" | "attack") {
        return Err(Error::Config(format!(
            "unknown command '{command}'\n{USAGE}"
        )));
    }
    let mut config = None;
    let mut seed = None;
    let mut out = None;
    let mut verify = false;
    while let Some(flag) = it.next() {
        match flag.as_str() {
            "--config" => {
                config = Some(PathBuf::from(it.next().ok_or_else(|| {
                    Error::Config("--config needs a path".into())
                })?));
            }
            "--seed" => {
                let raw = it
                    .next()
                    .ok_or_else(|| Error::Config("--seed needs a number".into()))?;
                seed = Some(raw.parse().map_err(|_| {
                    Error::Config(format!("--seed expects an integer, got '{raw}'"))
                })?);
            }
            "--out" => {
                out = Some(PathBuf::from(it.next().ok_or_else(|| {
                    Error::Config("--out needs a directory".into())
                })?));
            }
            "--verify" => verify = true,
            other => {
                return Err(Error::Config(format!("unknown flag '{other}'\n{USAGE}")));
            }
        }
    }
    Ok(CliArgs {
        command,
        config: config.ok_or_else(|| Error::Config(format!("--config is required\n{USAGE}")))?,
        seed,
        out,
        verify,
    })
}

/// Parses arguments, loads the config, applies overrides, dispatches.
/// Returns the process exit code.
pub fn run(args: &[String]) -> i32 {
    match dispatch(args) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

fn dispatch(args: &[String]) -> Result<()> {
    let parsed = parse_args(args)?;
    let mut config = RunConfig::load(&parsed.config)?;
    if let Some(seed) = parsed.seed {
        config.seed = seed;
    }
    if let Some(out) = parsed.out {
        config.out_dir = out;
    }
    match parsed.command.as_str() {
        "train" => cmd_train(&config),
        "seed-stats" => cmd_seed_stats(&config),
        "bench" => cmd_bench(&config),
        "attack" => cmd_attack(&config, parsed.verify),
        _ => unreachable!("command validated in parse_args"),
    }
}

fn prepare_out_dir(config: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&config.out_dir)?;
    Ok(())
}

fn write_epoch_csv(report: &RunReport, path: &Path) -> Result<()> {
    let mut csv = String::from("epoch,mean_loss,wall_sec\n");
    for row in &report.epochs {
        csv.push_str(&format!("{},{:.9},{:.6}\n", row.epoch, row.mean_loss, row.wall_sec));
    }
    std::fs::write(path, csv)?;
    Ok(())
}

/// Trains per the config's `train` section; writes `model.ckpt`,
/// `report.json`, and `epochs.csv` into the output directory.
pub fn cmd_train(config: &RunConfig) -> Result<()> {
    let train_cfg = config.train.as_ref().ok_or_else(|| {
        Error::Config("command 'train' requires the 'train' section".into())
    })?;
    let spec = train_cfg.to_spec(config.seed);
    spec.validate()?;
    let (train_set, test_set) = config.dataset.load(config.seed)?;
    let model = Model::preset(
        &config.model.preset,
        train_set.example_shape(),
        train_set.num_classes,
        config.model_seed(),
    )?;
    let (model, _, mut report) = train(model, &train_set, &spec)?;
    report.clean_acc = Some(accuracy_on(&model, &test_set)?);
    if let Some(grid) = &config.attack_grid {
        // white-box self-evaluation on the freshly trained model
        let suite = build_transfer_suite(&model, &test_set, grid)?;
        for (i, (attack, _)) in suite.sets.iter().enumerate() {
            report.perturbed_acc.push(PerturbedAcc {
                attack: attack.label(),
                epsilon: attack.epsilon,
                accuracy: suite.evaluate(&model, i)?,
            });
        }
    }
    report.config_echo =
        serde_json::to_value(config).unwrap_or(serde_json::Value::Null);

    prepare_out_dir(config)?;
    save_checkpoint(&model, &config.out_dir.join("model.ckpt"))?;
    emit_report(
        std::slice::from_ref(&report),
        ReportFormat::Json,
        &config.out_dir.join("report.json"),
    )?;
    write_epoch_csv(&report, &config.out_dir.join("epochs.csv"))?;
    println!(
        "train: method={} clean_acc={:.4} sec/epoch={:.4} out={}",
        report.method,
        report.clean_acc.unwrap_or(0.0),
        report.sec_per_epoch,
        config.out_dir.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct SeedStatsRecord {
    attack: String,
    epsilon: f64,
    n_seed: usize,
    mld_seed: Option<f64>,
    n_non_seed: usize,
    mld_non_seed: Option<f64>,
    gamma: Option<f64>,
    empty_candidates: bool,
}

/// Trains a model, partitions the training examples per attack-grid
/// entry, and writes `seed_stats.json` plus `ld_hist.svg`.
pub fn cmd_seed_stats(config: &RunConfig) -> Result<()> {
    let train_cfg = config.train.as_ref().ok_or_else(|| {
        Error::Config("command 'seed-stats' requires the 'train' section".into())
    })?;
    let grid = config.attack_grid.as_ref().ok_or_else(|| {
        Error::Config("command 'seed-stats' requires the 'attack_grid' section".into())
    })?;
    if grid.is_empty() {
        return Err(Error::Config("'attack_grid' must not be empty".into()));
    }
    let spec = train_cfg.to_spec(config.seed);
    let (train_set, _) = config.dataset.load(config.seed)?;
    let model = Model::preset(
        &config.model.preset,
        train_set.example_shape(),
        train_set.num_classes,
        config.model_seed(),
    )?;
    let (model, _, _) = train(model, &train_set, &spec)?;

    let mut records = Vec::with_capacity(grid.len());
    let mut histogram_pair: Option<(LdStats, LdStats)> = None;
    for attack in grid {
        let partition = partition_seeds(&model, &train_set, attack)?;
        let seed_lds = partition.seed_lds();
        let non_seed_lds = partition.non_seed_lds();
        let mld_seed = ld_stats(&seed_lds).ok();
        let mld_non_seed = ld_stats(&non_seed_lds).ok();
        if histogram_pair.is_none() {
            if let (Some(s), Some(ns)) = (&mld_seed, &mld_non_seed) {
                histogram_pair = Some((s.clone(), ns.clone()));
            }
        }
        records.push(SeedStatsRecord {
            attack: attack.label(),
            epsilon: attack.epsilon,
            n_seed: partition.seeds.len(),
            mld_seed: mld_seed.as_ref().map(|s| s.mean),
            n_non_seed: partition.non_seeds.len(),
            mld_non_seed: mld_non_seed.as_ref().map(|s| s.mean),
            gamma: threshold_from_partition(&partition).ok(),
            empty_candidates: partition.empty_candidates,
        });
        if partition.empty_candidates {
            eprintln!(
                "warning: {} left no candidate seed examples",
                attack.label()
            );
        }
    }

    prepare_out_dir(config)?;
    let mut json = serde_json::to_string_pretty(&records)
        .map_err(|e| Error::Format(format!("seed stats encode: {e}")))?;
    json.push('\n');
    std::fs::write(config.out_dir.join("seed_stats.json"), json)?;
    let svg_path = config.out_dir.join("ld_hist.svg");
    match histogram_pair {
        Some((seed_stats, non_seed_stats)) => {
            emit_histogram_svg(&seed_stats, &non_seed_stats, &svg_path)?;
            std::fs::write(
                config.out_dir.join("ld_hist_seed.csv"),
                seed_stats.histogram_csv(),
            )?;
            std::fs::write(
                config.out_dir.join("ld_hist_non_seed.csv"),
                non_seed_stats.histogram_csv(),
            )?;
        }
        None => {
            std::fs::write(
                &svg_path,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"60\">\
                 <text x=\"10\" y=\"30\">no attack in the grid produced both seeds \
                 and non-seeds</text></svg>\n",
            )?;
        }
    }
    for record in &records {
        println!(
            "seed-stats: {} seeds={} mld_seed={} non_seeds={} mld_non_seed={} gamma={}",
            record.attack,
            record.n_seed,
            record.mld_seed.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into()),
            record.n_non_seed,
            record.mld_non_seed.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into()),
            record.gamma.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into()),
        );
    }
    Ok(())
}

/// Races the configured methods on identical data and model seeds, then
/// evaluates every trained model on byte-identical black-box transfer
/// sets. Writes `bench.json`, `bench.csv`, and `bench.svg`.
pub fn cmd_bench(config: &RunConfig) -> Result<()> {
    let bench = config.bench.as_ref().ok_or_else(|| {
        Error::Config("command 'bench' requires the 'bench' section".into())
    })?;
    if bench.methods.is_empty() {
        return Err(Error::Config("'bench.methods' must not be empty".into()));
    }
    if bench.source_train.method != TrainMethod::Normal {
        return Err(Error::Config(
            "'bench.source_train' must use method 'normal' (black-box source)".into(),
        ));
    }
    let (train_set, test_set) = config.dataset.load(config.seed)?;
    let specs: Vec<_> = bench
        .methods
        .iter()
        .map(|m| m.to_spec(config.seed))
        .collect();
    for spec in &specs {
        spec.validate()?;
    }
    let runs = bench_runs(&specs, &train_set, &config.model.preset, config.model_seed())?;

    // black-box transfer sets come from the cross-architecture source
    let source_preset = config.model.source_preset();
    let source = Model::preset(
        source_preset,
        train_set.example_shape(),
        train_set.num_classes,
        config.source_model_seed(),
    )?;
    let (source, _, _) = train(source, &train_set, &bench.source_train.to_spec(config.seed))?;
    let suite = build_transfer_suite(&source, &test_set, &bench.eval_attacks)?;

    let mut reports = Vec::with_capacity(runs.len());
    let mut summary_rows = Vec::with_capacity(runs.len());
    for run in &runs {
        let mut report = run.report.clone();
        report.clean_acc = Some(accuracy_on(&run.model, &test_set)?);
        for (i, (attack, _)) in suite.sets.iter().enumerate() {
            report.perturbed_acc.push(PerturbedAcc {
                attack: attack.label(),
                epsilon: attack.epsilon,
                accuracy: suite.evaluate(&run.model, i)?,
            });
        }
        report.config_echo =
            serde_json::to_value(config).unwrap_or(serde_json::Value::Null);
        summary_rows.push(BenchSummaryRow {
            method: report.method.clone(),
            sec_per_epoch: report.sec_per_epoch,
            clean_acc: report.clean_acc.unwrap_or(0.0),
            perturbed_acc: report.perturbed_acc.first().map(|p| p.accuracy),
            param_backward: report.passes.param_backward,
            input_grad: report.passes.input_grad,
        });
        reports.push(report);
    }

    prepare_out_dir(config)?;
    emit_report(&reports, ReportFormat::Json, &config.out_dir.join("bench.json"))?;
    emit_report(&reports, ReportFormat::Csv, &config.out_dir.join("bench.csv"))?;
    emit_bench_svg(&summary_rows, &config.out_dir.join("bench.svg"))?;
    for row in &summary_rows {
        println!(
            "bench: method={} sec/epoch={:.4} clean={:.4} perturbed={} param_bwd={} input_grad_bwd={}",
            row.method,
            row.sec_per_epoch,
            row.clean_acc,
            row.perturbed_acc
                .map(|v| format!("{v:.4}"))
                .unwrap_or_else(|| "-".into()),
            row.param_backward,
            row.input_grad
        );
    }
    Ok(())
}

/// Crafts a perturbed copy of the test set against a checkpoint and
/// writes it as a `perturbed_set.bin` transfer artifact. With `verify`,
/// re-reads the artifact and re-checks the budget invariant (exit 4 on
/// violation).
pub fn cmd_attack(config: &RunConfig, verify: bool) -> Result<()> {
    let section = config.attack.as_ref().ok_or_else(|| {
        Error::Config("command 'attack' requires the 'attack' section".into())
    })?;
    section.attack.validate()?;
    let (_, test_set) = config.dataset.load(config.seed)?;
    let model = load_checkpoint(&section.checkpoint)?;
    let suite = build_transfer_suite(&model, &test_set, std::slice::from_ref(&section.attack))?;
    let (attack, batch) = &suite.sets[0];

    prepare_out_dir(config)?;
    let path = config.out_dir.join("perturbed_set.bin");
    write_perturbed_set(&path, attack, &test_set.labels, batch)?;
    println!(
        "attack: {} success={}/{} ({:.1}%) out={}",
        attack.label(),
        batch.success_count(),
        test_set.len(),
        100.0 * batch.success_count() as f64 / test_set.len().max(1) as f64,
        path.display()
    );

    if verify {
        let stored = read_perturbed_set(&path)?;
        verify_budget(&test_set.inputs, &stored.batch.x_adv, stored.attack.epsilon)?;
        println!("attack: verify ok (budget and pixel-domain invariants hold)");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_requires_command_and_config() {
        assert!(parse_args(&[]).is_err());
        assert!(parse_args(&["train".into()]).is_err());
        let args = parse_args(&[
            "train".into(),
            "--config".into(),
            "cfg.json".into(),
            "--seed".into(),
            "9".into(),
        ])
        .unwrap();
        assert_eq!(args.command, "train");
        assert_eq!(args.seed, Some(9));
        assert!(!args.verify);
    }

    #[test]
    fn parse_rejects_unknown_command_and_flags() {
        let err = parse_args(&["explode".into()]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let err = parse_args(&[
            "attack".into(),
            "--config".into(),
            "c".into(),
            "--wat".into(),
        ])
        .unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn verify_flag_parses() {
        let args = parse_args(&[
            "attack".into(),
            "--config".into(),
            "c.json".into(),
            "--verify".into(),
        ])
        .unwrap();
        assert!(args.verify);
    }
}
