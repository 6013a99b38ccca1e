//! End-to-end tests of the `awd` binary: exit codes, run-directory layout,
//! determinism, and the augment/eval flows.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use awd::corpus::synthetic;
use sha2::{Digest, Sha256};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_awd"))
}

fn write_jsonl(path: &Path, pairs: &[(String, String)]) {
    let mut f = std::fs::File::create(path).unwrap();
    for (text, label) in pairs {
        writeln!(f, "{}", serde_json::json!({"text": text, "label": label})).unwrap();
    }
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    train: PathBuf,
    val: PathBuf,
    test: PathBuf,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let train = root.join("train.jsonl");
    let val = root.join("val.jsonl");
    let test = root.join("test.jsonl");
    write_jsonl(&train, &synthetic::separable(12, 81));
    write_jsonl(&val, &synthetic::separable(8, 82));
    write_jsonl(&test, &synthetic::separable(8, 83));
    Fixture {
        _dir: dir,
        root,
        train,
        val,
        test,
    }
}

fn train_args(f: &Fixture, out: &Path, mode: &str) -> Vec<String> {
    [
        "train",
        "--mode",
        mode,
        "--train",
        f.train.to_str().unwrap(),
        "--val",
        f.val.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--epochs",
        "5",
        "--embedding-dim",
        "8",
        "--hidden-dim",
        "12",
        "--outer-lr",
        "0.05",
        "--seed",
        "3",
    ]
    .iter()
    .map(ToString::to_string)
    .collect()
}

fn run_ok(args: &[String]) -> Output {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "command failed: {:?}\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn baseline_training_writes_a_complete_run() {
    let f = fixture();
    let out_dir = f.root.join("run");
    run_ok(&train_args(&f, &out_dir, "baseline"));
    for name in [
        "checkpoint.json",
        "config.json",
        "epochs.jsonl",
        "vocab.json",
        "classes.json",
        "metrics.json",
        "manifest.json",
    ] {
        assert!(out_dir.join(name).exists(), "{name} missing");
    }

    // The manifest's hashes match the emitted artifacts.
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap())
            .unwrap();
    let artifacts = manifest["artifacts"].as_object().unwrap();
    assert!(!artifacts.is_empty());
    for (name, hash) in artifacts {
        let bytes = std::fs::read(out_dir.join(name)).unwrap();
        let digest: String = Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        assert_eq!(&digest, hash.as_str().unwrap(), "hash mismatch for {name}");
    }
}

#[test]
fn strict_mode_flags_reach_the_config_echo() {
    let f = fixture();
    let out_dir = f.root.join("run");
    let mut args = train_args(&f, &out_dir, "awd-strict");
    args.extend(["--rho", "0.3", "--lambda", "1.0"].iter().map(ToString::to_string));
    run_ok(&args);
    let config = std::fs::read_to_string(out_dir.join("config.json")).unwrap();
    let value: serde_json::Value = serde_json::from_str(&config).unwrap();
    assert_eq!(value["config"]["penalty"]["mode"], "strict");
    assert_eq!(value["config"]["penalty"]["rho"], 0.3);
    assert_eq!(value["config"]["penalty"]["lambda"], 1.0);
}

#[test]
fn missing_dataset_exits_2() {
    let f = fixture();
    let out_dir = f.root.join("run");
    let mut args = train_args(&f, &out_dir, "baseline");
    let idx = args.iter().position(|a| a == "--train").unwrap();
    args[idx + 1] = f.root.join("nope.jsonl").to_str().unwrap().to_string();
    let out = bin().args(&args).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_config_key_exits_2() {
    let f = fixture();
    let config_path = f.root.join("config.json");
    std::fs::write(&config_path, r#"{"epocs": 3}"#).unwrap();
    let out = bin()
        .args([
            "train",
            "--config",
            config_path.to_str().unwrap(),
            "--mode",
            "baseline",
            "--train",
            f.train.to_str().unwrap(),
            "--val",
            f.val.to_str().unwrap(),
            "--out",
            f.root.join("run").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epocs"));
}

#[test]
fn flag_overrides_config_file() {
    let f = fixture();
    let config_path = f.root.join("config.json");
    std::fs::write(
        &config_path,
        serde_json::json!({
            "mode": "baseline",
            "train": f.train,
            "val": f.val,
            "epochs": 5,
            "embedding_dim": 8,
            "hidden_dim": 12,
            "seed": 9
        })
        .to_string(),
    )
    .unwrap();
    let out_dir = f.root.join("run");
    run_ok(
        &[
            "train",
            "--config",
            config_path.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--epochs",
            "2",
        ]
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>(),
    );
    let config = std::fs::read_to_string(out_dir.join("config.json")).unwrap();
    let value: serde_json::Value = serde_json::from_str(&config).unwrap();
    assert_eq!(value["config"]["epochs"], 2);
    let epochs = std::fs::read_to_string(out_dir.join("epochs.jsonl")).unwrap();
    assert_eq!(epochs.lines().count(), 2);
}

#[test]
fn numerical_divergence_exits_3() {
    let f = fixture();
    let out_dir = f.root.join("run");
    let mut args = train_args(&f, &out_dir, "awd-loose");
    let idx = args.iter().position(|a| a == "--outer-lr").unwrap();
    args[idx + 1] = "1e200".to_string();
    let out = bin().args(&args).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epoch"));
}

#[test]
fn identical_runs_are_byte_identical() {
    let f = fixture();
    let run_a = f.root.join("a");
    let run_b = f.root.join("b");
    let mut args_a = train_args(&f, &run_a, "awd-strict");
    args_a.extend(["--test", f.test.to_str().unwrap()].iter().map(ToString::to_string));
    let mut args_b = train_args(&f, &run_b, "awd-strict");
    args_b.extend(["--test", f.test.to_str().unwrap()].iter().map(ToString::to_string));
    run_ok(&args_a);
    run_ok(&args_b);
    for name in ["epochs.jsonl", "metrics.json", "checkpoint.json"] {
        let a = std::fs::read(run_a.join(name)).unwrap();
        let b = std::fs::read(run_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn seed_sweep_aggregates_mean_and_sd() {
    let f = fixture();
    let out_dir = f.root.join("sweep");
    let mut args = train_args(&f, &out_dir, "baseline");
    args.extend(
        ["--seeds", "3", "--test", f.test.to_str().unwrap()]
            .iter()
            .map(ToString::to_string),
    );
    let out = run_ok(&args);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("mean"), "no aggregate line in: {stdout}");
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["seeds"].as_array().unwrap().len(), 3);
    assert!(summary["val_accuracy"]["mean"].is_number());
    assert!(summary["val_accuracy"]["sd"].is_number());
    for seed in 3..6 {
        assert!(out_dir.join(format!("seed_{seed}/checkpoint.json")).exists());
    }

    // Sweep evaluation aggregates across the per-seed checkpoints.
    let eval_out = bin()
        .args([
            "eval",
            "--checkpoint",
            out_dir.to_str().unwrap(),
            "--data",
            f.test.to_str().unwrap(),
            "--seeds",
            "3",
        ])
        .output()
        .unwrap();
    assert!(eval_out.status.success());
    let text = String::from_utf8_lossy(&eval_out.stdout);
    assert!(text.contains("mean"), "eval output: {text}");
}

fn trained_run(f: &Fixture) -> PathBuf {
    let out_dir = f.root.join("model");
    if !out_dir.exists() {
        run_ok(&train_args(f, &out_dir, "awd-loose"));
    }
    out_dir
}

#[test]
fn augment_outputs_are_pure_and_complete() {
    let f = fixture();
    let run = trained_run(&f);
    let new_data = f.root.join("new.jsonl");
    write_jsonl(&new_data, &synthetic::separable(5, 99));

    let aug_a = f.root.join("aug_a");
    let aug_b = f.root.join("aug_b");
    for out in [&aug_a, &aug_b] {
        run_ok(
            &[
                "augment",
                "--checkpoint",
                run.join("checkpoint.json").to_str().unwrap(),
                "--data",
                new_data.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
            ]
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>(),
        );
    }
    let weights: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(aug_a.join("weights.json")).unwrap())
            .unwrap();
    assert_eq!(weights.as_array().unwrap().len(), 10);
    // Repeated invocation is byte-identical.
    assert_eq!(
        std::fs::read(aug_a.join("weights.json")).unwrap(),
        std::fs::read(aug_b.join("weights.json")).unwrap()
    );
    assert_eq!(
        std::fs::read(aug_a.join("augmentations.json")).unwrap(),
        std::fs::read(aug_b.join("augmentations.json")).unwrap()
    );
}

#[test]
fn augment_unknown_class_exits_2_naming_it() {
    let f = fixture();
    let run = trained_run(&f);
    let new_data = f.root.join("odd.jsonl");
    write_jsonl(
        &new_data,
        &[("strange words here".to_string(), "mystery".to_string())],
    );
    let out = bin()
        .args([
            "augment",
            "--checkpoint",
            run.join("checkpoint.json").to_str().unwrap(),
            "--data",
            new_data.to_str().unwrap(),
            "--out",
            f.root.join("aug").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mystery"));
}

#[test]
fn augment_version_mismatch_exits_2() {
    let f = fixture();
    let run = trained_run(&f);
    let tampered = f.root.join("tampered");
    std::fs::create_dir_all(&tampered).unwrap();
    for name in ["vocab.json", "classes.json"] {
        std::fs::copy(run.join(name), tampered.join(name)).unwrap();
    }
    let ckpt = std::fs::read_to_string(run.join("checkpoint.json")).unwrap();
    std::fs::write(
        tampered.join("checkpoint.json"),
        ckpt.replace("awd-ckpt-1", "awd-ckpt-0"),
    )
    .unwrap();
    let out = bin()
        .args([
            "augment",
            "--checkpoint",
            tampered.join("checkpoint.json").to_str().unwrap(),
            "--data",
            f.test.to_str().unwrap(),
            "--out",
            f.root.join("aug").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("awd-ckpt-0"));
}

#[test]
fn weight_report_caps_strong_words() {
    let f = fixture();
    let run = trained_run(&f);
    let out_dir = f.root.join("weights");
    run_ok(
        &[
            "eval",
            "--checkpoint",
            run.join("checkpoint.json").to_str().unwrap(),
            "--data",
            f.test.to_str().unwrap(),
            "--report",
            "weights",
            "--top",
            "5",
            "--out",
            out_dir.to_str().unwrap(),
        ]
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>(),
    );
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out_dir.join("weights_report.json")).unwrap(),
    )
    .unwrap();
    for entry in report["entries"].as_array().unwrap() {
        assert!(entry["strong_words"].as_array().unwrap().len() <= 5);
        assert_eq!(
            entry["tokens"].as_array().unwrap().len(),
            entry["alphas"].as_array().unwrap().len()
        );
    }
    assert!(out_dir.join("heatmap.txt").exists());
}

#[test]
fn hardness_pipeline_runs_end_to_end() {
    let f = fixture();
    let run = trained_run(&f);
    // Discriminator: classifier-only training on the frozen table.
    let disc_dir = f.root.join("disc");
    run_ok(
        &[
            "train",
            "--mode",
            "baseline",
            "--frozen-table",
            run.join("checkpoint.json").to_str().unwrap(),
            "--train",
            f.train.to_str().unwrap(),
            "--val",
            f.val.to_str().unwrap(),
            "--out",
            disc_dir.to_str().unwrap(),
            "--epochs",
            "5",
            "--embedding-dim",
            "8",
            "--hidden-dim",
            "12",
            "--outer-lr",
            "0.05",
        ]
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>(),
    );
    let hard_dir = f.root.join("hardness");
    let out = run_ok(
        &[
            "eval",
            "--checkpoint",
            run.join("checkpoint.json").to_str().unwrap(),
            "--data",
            f.test.to_str().unwrap(),
            "--report",
            "hardness",
            "--discriminator",
            disc_dir.join("checkpoint.json").to_str().unwrap(),
            "--augment-data",
            f.train.to_str().unwrap(),
            "--out",
            hard_dir.to_str().unwrap(),
        ]
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>(),
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("hm"), "hardness output: {stdout}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(hard_dir.join("hardness.json")).unwrap())
            .unwrap();
    for key in ["acc", "err", "hm"] {
        let v = report[key].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&v), "{key} = {v}");
    }
}

#[test]
fn augmented_retraining_accepts_augment_output() {
    let f = fixture();
    let run = trained_run(&f);
    let aug_dir = f.root.join("aug_for_retrain");
    run_ok(
        &[
            "augment",
            "--checkpoint",
            run.join("checkpoint.json").to_str().unwrap(),
            "--data",
            f.train.to_str().unwrap(),
            "--out",
            aug_dir.to_str().unwrap(),
        ]
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>(),
    );
    let retrain_dir = f.root.join("retrain");
    run_ok(
        &[
            "train",
            "--mode",
            "baseline",
            "--train",
            f.train.to_str().unwrap(),
            "--val",
            f.val.to_str().unwrap(),
            "--out",
            retrain_dir.to_str().unwrap(),
            "--augmentations",
            aug_dir.join("augmentations.json").to_str().unwrap(),
            "--init-table",
            run.join("checkpoint.json").to_str().unwrap(),
            "--epochs",
            "5",
            "--embedding-dim",
            "8",
            "--hidden-dim",
            "12",
            "--outer-lr",
            "0.05",
        ]
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>(),
    );
    assert!(retrain_dir.join("checkpoint.json").exists());
}
