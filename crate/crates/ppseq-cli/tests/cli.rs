//! End-to-end runs of the `ppseq` binary: generate -> fit -> evaluate,
//! masked fits, sweeps, and determinism of the written artifacts.

use std::path::{Path, PathBuf};
use std::process::Command;

use ppseq::driver::{AnnealSchedule, RunConfig};
use ppseq::gibbs::SweepOrder;
use ppseq::io::{write_fit_config, FitConfig};
use ppseq::Hyperparams;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ppseq"))
}

fn small_config(dir: &Path, seed: u64) -> PathBuf {
    let hyper = Hyperparams {
        seq_rate: 0.15,
        amp_shape: 20.0,
        amp_rate: 1.0,
        type_conc: 1.0,
        bg_conc: 1.0,
        weight_conc: 1.0,
        width_df: 4.0,
        width_scale: 0.02,
        delay_precision: 1.0,
        bg_shape: 2.0,
        bg_rate: 4.0,
        n_warps: 1,
        max_warp: 1.0,
        warp_variance: 1.0,
        merge_window: 2.0,
        n_types: 1,
        n_neurons: 6,
        duration: 40.0,
    };
    let config = FitConfig {
        hyper,
        run: RunConfig {
            schedule: AnnealSchedule {
                initial_temp: 50.0,
                n_stages: 2,
                sweeps_per_stage: 5,
            },
            final_sweeps: 10,
            keep_last: 5,
            sm_moves_anneal: 2,
            sm_moves_final: 5,
            order: SweepOrder::Ascending,
        },
        mask_fraction: None,
        block_length: 1.0,
        seed,
        n_shards: 1,
    };
    let path = dir.join("config.json");
    write_fit_config(&path, &config).unwrap();
    path
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn generate_fit_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), 21);

    let stdout = run_ok(bin().args([
        "generate",
        "--config",
        config.to_str().unwrap(),
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]));
    assert!(stdout.contains("generated"));
    for name in ["spikes.csv", "events.csv", "params.json"] {
        assert!(dir.path().join(name).exists(), "missing {name}");
    }

    run_ok(bin().args([
        "fit",
        "--config",
        config.to_str().unwrap(),
        "--spikes",
        dir.path().join("spikes.csv").to_str().unwrap(),
        "--output-dir",
        dir.path().to_str().unwrap(),
        "--co-occupancy",
        "0",
        "40",
    ]));
    for name in [
        "posterior-chain0.jsonl",
        "trace-chain0.csv",
        "k-hist-chain0.csv",
        "co-occupancy-chain0.csv",
    ] {
        assert!(dir.path().join(name).exists(), "missing {name}");
    }
    let trace = std::fs::read_to_string(dir.path().join("trace-chain0.csv")).unwrap();
    // 3 annealing stages (0..=2) x 5 sweeps + 10 final sweeps + header.
    assert_eq!(trace.lines().count(), 1 + 3 * 5 + 10);

    let stdout = run_ok(bin().args([
        "evaluate",
        "--posterior",
        dir.path().join("posterior-chain0.jsonl").to_str().unwrap(),
        "--events",
        dir.path().join("events.csv").to_str().unwrap(),
        "--bin-width",
        "0.25",
        "--max-shift",
        "8",
    ]));
    assert!(stdout.contains("auc:"), "no AUC in: {stdout}");
}

#[test]
fn fit_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), 5);
    run_ok(bin().args([
        "generate",
        "--config",
        config.to_str().unwrap(),
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]));
    let spikes = dir.path().join("spikes.csv");

    let fit_to = |out: &Path| {
        run_ok(bin().args([
            "fit",
            "--config",
            config.to_str().unwrap(),
            "--spikes",
            spikes.to_str().unwrap(),
            "--output-dir",
            out.to_str().unwrap(),
        ]));
        std::fs::read(out.join("posterior-chain0.jsonl")).unwrap()
    };
    let a = fit_to(&dir.path().join("run-a"));
    let b = fit_to(&dir.path().join("run-b"));
    assert_eq!(a, b, "same seed must reproduce the posterior byte-for-byte");
}

#[test]
fn masked_fit_writes_heldout_score() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), 33);
    run_ok(bin().args([
        "generate",
        "--config",
        config.to_str().unwrap(),
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]));

    let stdout = run_ok(bin().args([
        "fit",
        "--config",
        config.to_str().unwrap(),
        "--spikes",
        dir.path().join("spikes.csv").to_str().unwrap(),
        "--output-dir",
        dir.path().to_str().unwrap(),
        "--mask-fraction",
        "0.1",
    ]));
    assert!(stdout.contains("heldout"));
    assert!(dir.path().join("mask-chain0.json").exists());
    assert!(dir.path().join("heldout-chain0.json").exists());

    let stdout = run_ok(bin().args([
        "evaluate",
        "--posterior",
        dir.path().join("posterior-chain0.jsonl").to_str().unwrap(),
        "--spikes",
        dir.path().join("spikes.csv").to_str().unwrap(),
        "--mask",
        dir.path().join("mask-chain0.json").to_str().unwrap(),
    ]));
    assert!(stdout.contains("heldout:"), "no heldout score in: {stdout}");
}

#[test]
fn masked_fit_rejects_multiple_shards() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), 1);
    run_ok(bin().args([
        "generate",
        "--config",
        config.to_str().unwrap(),
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]));
    let out = bin()
        .args([
            "fit",
            "--config",
            config.to_str().unwrap(),
            "--spikes",
            dir.path().join("spikes.csv").to_str().unwrap(),
            "--output-dir",
            dir.path().to_str().unwrap(),
            "--mask-fraction",
            "0.1",
            "--threads",
            "2",
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("single shard"));
}

#[test]
fn parallel_fit_writes_posterior() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), 8);
    run_ok(bin().args([
        "generate",
        "--config",
        config.to_str().unwrap(),
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]));
    run_ok(bin().args([
        "fit",
        "--config",
        config.to_str().unwrap(),
        "--spikes",
        dir.path().join("spikes.csv").to_str().unwrap(),
        "--output-dir",
        dir.path().to_str().unwrap(),
        "--threads",
        "2",
    ]));
    let (_, samples) =
        ppseq::io::read_posterior_jsonl(dir.path().join("posterior-chain0.jsonl")).unwrap();
    assert_eq!(samples.len(), 5);
}

#[test]
fn sweep_writes_results_table() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), 2);
    run_ok(bin().args([
        "generate",
        "--config",
        config.to_str().unwrap(),
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]));
    run_ok(bin().args([
        "sweep",
        "--config",
        config.to_str().unwrap(),
        "--spikes",
        dir.path().join("spikes.csv").to_str().unwrap(),
        "--output-dir",
        dir.path().to_str().unwrap(),
        "--n-configs",
        "2",
    ]));
    let table = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 3, "header + 2 rows: {table}");
    assert!(table.starts_with("index,seed,"));
}
