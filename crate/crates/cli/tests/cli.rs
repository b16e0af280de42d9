//! End-to-end tests of the `aanet` binary: exit codes, artifact closure,
//! and the documented subcommand behaviors.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_aanet")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(bin())
        .args(args)
        .env(key, value)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(
        out.status.success(),
        "command failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn small_config(dir: &Path) -> PathBuf {
    let cfg = serde_json::json!({
        "arch": {
            "input": [1, 16, 16],
            "classes": 4,
            "stages": [{"channels": 4, "blocks": 1}, {"channels": 8, "blocks": 1}],
            "with_maxpool": true,
            "conv_padding": "zero"
        },
        "placement": {
            "initial_conv": {"variant": "none", "blur": {"k": 3, "padding": "reflect"}},
            "block_conv_unstrided": {"variant": "none", "blur": {"k": 3, "padding": "reflect"}},
            "block_conv_strided": {"variant": "none", "blur": {"k": 3, "padding": "reflect"}},
            "skip_strided": {"variant": "none", "blur": {"k": 3, "padding": "reflect"}},
            "maxpool_blur": false,
            "activation": "relu",
            "conv1_stride": 1
        },
        "train": {"lr": 0.05, "momentum": 0.9, "epochs": 2, "batch": 16, "seed": 9},
        "data": {"synthetic": {"generator": "stripes", "size": 64, "classes": 4,
                               "height": 16, "width": 16, "seed": 5}},
        "eval": {"holdout": 48, "corruptions": ["gaussian_noise", "brightness"],
                 "shift_max": 2, "shift_padding": "circular",
                 "episode": {"way": 3, "shots": 3, "query": 3, "count": 8}}
    });
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn help_and_unknown_commands() {
    assert!(run(&["help"]).status.success());
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&[]).status.code(), Some(2));
    assert_eq!(
        run(&["train"]).status.code(),
        Some(2),
        "train without --config"
    );
}

#[test]
fn config_errors_exit_2_and_data_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = small_config(dir.path());

    // Unknown key in the config.
    let mut broken: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&cfg_path).unwrap()).unwrap();
    broken["typo_field"] = serde_json::json!(true);
    let broken_path = dir.path().join("broken.json");
    std::fs::write(&broken_path, broken.to_string()).unwrap();
    let out = run(&["train", "--config", broken_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    // Missing IDX file is a data error.
    let mut idx_cfg: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&cfg_path).unwrap()).unwrap();
    idx_cfg["data"] =
        serde_json::json!({"idx": {"images": "no/such.idx", "labels": "no/such.idx"}});
    let idx_path = dir.path().join("idx.json");
    std::fs::write(&idx_path, idx_cfg.to_string()).unwrap();
    let out = run(&[
        "train",
        "--config",
        idx_path.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn train_is_reproducible_and_artifacts_close() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out1 = dir.path().join("run1");
    let out2 = dir.path().join("run2");
    for out in [&out1, &out2] {
        let o = run(&[
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let c1 = std::fs::read(out1.join("checkpoint.bin")).unwrap();
    let c2 = std::fs::read(out2.join("checkpoint.bin")).unwrap();
    assert_eq!(c1, c2, "checkpoints must be byte-identical");

    // The echoed config is itself a valid --config input.
    let echoed = out1.join("config.json");
    let out3 = dir.path().join("run3");
    let o = run(&[
        "train",
        "--config",
        echoed.to_str().unwrap(),
        "--out",
        out3.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert_eq!(c1, std::fs::read(out3.join("checkpoint.bin")).unwrap());

    // eval consumes the checkpoint written by train.
    let o = run(&[
        "eval",
        "--config",
        cfg.to_str().unwrap(),
        "--checkpoint",
        out1.join("checkpoint.bin").to_str().unwrap(),
        "--out",
        out1.to_str().unwrap(),
    ]);
    let report = stdout_json(&o);
    let acc = report["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));

    // plot consumes the training log written by train.
    let o = run(&[
        "plot",
        "--input",
        out1.join("train_log.csv").to_str().unwrap(),
        "--kind",
        "line",
        "--out",
        out1.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let svg = std::fs::read_to_string(out1.join("train_log.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out1 = dir.path().join("a");
    let out2 = dir.path().join("b");
    run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out1.to_str().unwrap(),
    ]);
    run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "1234",
        "--out",
        out2.to_str().unwrap(),
    ]);
    let c1 = std::fs::read(out1.join("checkpoint.bin")).unwrap();
    let c2 = std::fs::read(out2.join("checkpoint.bin")).unwrap();
    assert_ne!(c1, c2, "different seeds must give different parameters");
}

#[test]
fn corrupt_eval_grid_is_thread_invariant_and_mce_closes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("train");
    run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let ckpt = out.join("checkpoint.bin");

    let g1 = dir.path().join("grid1");
    let g2 = dir.path().join("grid2");
    for (g, threads) in [(&g1, "1"), (&g2, "5")] {
        let o = run_env(
            &[
                "corrupt-eval",
                "--config",
                cfg.to_str().unwrap(),
                "--checkpoint",
                ckpt.to_str().unwrap(),
                "--out",
                g.to_str().unwrap(),
            ],
            "AANET_THREADS",
            threads,
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let t1 = std::fs::read_to_string(g1.join("error_table.json")).unwrap();
    let t2 = std::fs::read_to_string(g2.join("error_table.json")).unwrap();
    assert_eq!(t1, t2, "grid must not depend on the worker count");

    // CSV export exists with the documented header.
    let csv = std::fs::read_to_string(g1.join("error_table.csv")).unwrap();
    assert!(csv.starts_with("corruption,severity,error\n"));

    // mce of a table against itself is exactly 100.
    let o = run(&[
        "mce",
        "--table",
        g1.join("error_table.json").to_str().unwrap(),
        "--baseline",
        g1.join("error_table.json").to_str().unwrap(),
        "--out",
        dir.path().join("mce").to_str().unwrap(),
    ]);
    let report = stdout_json(&o);
    assert!((report["mce"].as_f64().unwrap() - 100.0).abs() < 1e-9);

    // Missing table file is a data error.
    let o = run(&["mce", "--table", "nope.json", "--baseline", "nope.json"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn spectrum_sees_aliasing_on_stripes_through_a_baseline_net() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("spec");
    let o = run(&[
        "spectrum",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let rows = stdout_json(&o);
    let rows = rows.as_array().unwrap();
    assert!(!rows.is_empty(), "baseline net has subsampling layers");
    let first = &rows[0];
    assert_eq!(first["layer"], "stem.maxpool.subsample");
    assert!(
        first["fraction"].as_f64().unwrap() > 0.0,
        "stripes guarantee aliased energy at the first subsampling"
    );
}

#[test]
fn consistency_and_episode_eval_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("train");
    run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let ckpt = out.join("checkpoint.bin");

    let o = run(&[
        "consistency",
        "--config",
        cfg.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--out",
        dir.path().join("cons").to_str().unwrap(),
    ]);
    let report = stdout_json(&o);
    let rate = report["agreement_rate"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&rate));
    assert!(report["pairs_evaluated"].as_u64().unwrap() > 0);

    let o = run(&[
        "episode-eval",
        "--config",
        cfg.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--out",
        dir.path().join("ep").to_str().unwrap(),
    ]);
    let report = stdout_json(&o);
    let mean = report["mean_accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&mean));
    assert!(report["ci95"].as_f64().unwrap() >= 0.0);
}
