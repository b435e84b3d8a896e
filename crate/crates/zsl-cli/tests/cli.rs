//! End-to-end tests of the `zsl` binary: artifact layout, exit codes,
//! determinism and the train/eval round trip.

use std::path::Path;
use std::process::{Command, Output};

use zsl_core::checkpoint::{save_checkpoint, CheckpointMeta};
use zsl_core::data::{generate_toy, save_attributes, save_features, ToyConfig};
use zsl_core::model::{HeadDims, HeadParams, Model};

fn zsl() -> Command {
    Command::new(env!("CARGO_BIN_EXE_zsl"))
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn assert_code(output: &Output, expected: i32) {
    assert_eq!(
        output.status.code(),
        Some(expected),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

#[test]
fn toy_writes_artifacts_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let output = run(zsl()
            .args(["toy", "--seed", "3", "--samples-per-class", "20"])
            .args(["--epochs", "8", "--resolution", "31", "--grid", "41"])
            .arg("--out")
            .arg(out));
        assert_code(&output, 0);
    }
    for name in [
        "vanilla_metrics.json",
        "vanilla_boundary.csv",
        "regular_dropout_metrics.json",
        "fictitious_metrics.json",
        "fictitious_boundary.csv",
        "toy_summary.json",
    ] {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "artifact {name} differs between identical runs");
    }
    let boundary = std::fs::read_to_string(out_a.join("vanilla_boundary.csv")).unwrap();
    assert_eq!(boundary.lines().count(), 31 * 31 + 1);
    assert!(boundary.starts_with("x,y,predicted_class\n"));
}

fn write_toy_dataset(dir: &Path) -> serde_json::Value {
    let data = generate_toy(&ToyConfig {
        samples_per_class: 25,
        ..ToyConfig::default()
    })
    .unwrap();
    let attrs = dir.join("attrs.csv");
    let splits = dir.join("split.json");
    save_attributes(&data.catalog, &attrs, &splits).unwrap();
    let shards = [
        ("train", &data.train),
        ("val_seen", &data.test_seen),
        ("val_unseen", &data.test_unseen),
    ];
    let mut paths = serde_json::Map::new();
    paths.insert("attributes".into(), attrs.to_str().unwrap().into());
    paths.insert("splits".into(), splits.to_str().unwrap().into());
    for (name, set) in shards {
        let features = dir.join(format!("{name}.zslf"));
        let labels = dir.join(format!("{name}_labels.csv"));
        save_features(set, &features, &labels, &data.catalog).unwrap();
        paths.insert(format!("{name}_features"), features.to_str().unwrap().into());
        paths.insert(format!("{name}_labels"), labels.to_str().unwrap().into());
    }
    serde_json::Value::Object(paths)
}

#[test]
fn train_eval_round_trip_reproduces_final_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let data_paths = write_toy_dataset(dir.path());
    let out = dir.path().join("run");
    let config = serde_json::json!({
        "data": data_paths,
        "model": { "embed_dim": 4 },
        "train": {
            "epochs_frozen": 2,
            "epochs_finetune": 1,
            "lr_frozen": 1e-3,
            "lr_finetune": 1e-4,
            "batch_size": 16,
            "optimizer": { "adam": { "beta1": 0.9, "beta2": 0.999, "eps": 1e-8 } },
            "augment": {
                "strategy": "fictitious_dropout",
                "m": 3,
                "p": 0.5,
                "mix_alpha": 1.0,
                "seed": 5
            },
            "seed": 5
        },
        "grid": { "count": 31 },
        "out": out.to_str().unwrap()
    });
    let config_path = dir.path().join("config.json");
    std::fs::write(&config_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();

    let output = run(zsl().arg("train").arg("--config").arg(&config_path));
    assert_code(&output, 0);
    assert!(out.join("checkpoint.ckpt").exists());
    assert!(out.join("curves.csv").exists());

    // Final epoch record from the curves.
    let curves = std::fs::read_to_string(out.join("curves.csv")).unwrap();
    let last = curves.lines().last().unwrap();
    let cells: Vec<&str> = last.split(',').collect();
    let val_hm: f64 = cells[4].parse().unwrap();
    let best_gamma: f64 = cells[5].parse().unwrap();

    let eval_out = dir.path().join("eval");
    let output = run(zsl()
        .arg("eval")
        .arg("--config")
        .arg(&config_path)
        .arg("--checkpoint")
        .arg(out.join("checkpoint.ckpt"))
        .arg("--gamma")
        .arg(best_gamma.to_string())
        .arg("--out")
        .arg(&eval_out));
    assert_code(&output, 0);
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(eval_out.join("eval_metrics.json")).unwrap())
            .unwrap();
    let eval_hm = metrics["hm"].as_f64().unwrap();
    assert!(
        (eval_hm - val_hm).abs() < 1e-9,
        "train reported hm {val_hm}, eval reproduced {eval_hm}"
    );

    // The final training metrics file agrees too.
    let final_metrics: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out.join("final_metrics.json")).unwrap(),
    )
    .unwrap();
    assert!((final_metrics["hm"].as_f64().unwrap() - val_hm).abs() < 1e-9);
}

#[test]
fn sweep_gamma_emits_curve() {
    let dir = tempfile::tempdir().unwrap();
    let data_paths = write_toy_dataset(dir.path());
    let out = dir.path().join("run");
    let config = serde_json::json!({
        "data": data_paths,
        "model": { "embed_dim": 4 },
        "train": { "epochs_frozen": 1, "epochs_finetune": 0, "batch_size": 16, "seed": 2 },
        "grid": { "count": 21 },
        "out": out.to_str().unwrap()
    });
    let config_path = dir.path().join("config.json");
    std::fs::write(&config_path, serde_json::to_string(&config).unwrap()).unwrap();
    assert_code(&run(zsl().arg("train").arg("--config").arg(&config_path)), 0);

    let sweep_out = dir.path().join("sweep");
    let output = run(zsl()
        .arg("sweep-gamma")
        .arg("--config")
        .arg(&config_path)
        .arg("--checkpoint")
        .arg(out.join("checkpoint.ckpt"))
        .arg("--out")
        .arg(&sweep_out)
        .args(["--grid", "31"]));
    assert_code(&output, 0);
    let csv = std::fs::read_to_string(sweep_out.join("gamma_sweep.csv")).unwrap();
    assert!(csv.starts_with("gamma,hm,acc_u,acc_s\n"));
    assert_eq!(csv.lines().count(), 32);
}

#[test]
fn malformed_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("bad.json");
    std::fs::write(&config_path, "{ not json").unwrap();
    let output = run(zsl().arg("train").arg("--config").arg(&config_path));
    assert_code(&output, 2);

    // Structurally valid JSON but missing required data fields.
    std::fs::write(&config_path, "{}").unwrap();
    let output = run(zsl().arg("train").arg("--config").arg(&config_path));
    assert_code(&output, 2);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("data."), "stderr: {stderr}");
}

#[test]
fn eval_with_mismatched_dims_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let data_paths = write_toy_dataset(dir.path());
    // Checkpoint whose attribute dimension disagrees with the 2-D catalog.
    let params = HeadParams::init(
        HeadDims {
            n_attrs: 5,
            feat_dim: 2,
            embed_dim: 3,
        },
        1,
    )
    .unwrap();
    let ckpt = dir.path().join("wrong.ckpt");
    save_checkpoint(&Model::Head(params), &CheckpointMeta::default(), &ckpt).unwrap();
    let config = serde_json::json!({
        "data": data_paths,
        "out": dir.path().join("eval").to_str().unwrap()
    });
    let config_path = dir.path().join("config.json");
    std::fs::write(&config_path, serde_json::to_string(&config).unwrap()).unwrap();
    let output = run(zsl()
        .arg("eval")
        .arg("--config")
        .arg(&config_path)
        .arg("--checkpoint")
        .arg(&ckpt));
    assert_code(&output, 2);
}

#[test]
fn gradcheck_fresh_seed_exits_zero() {
    let output = run(zsl().args(["gradcheck", "--seed", "11", "--instances", "3"]));
    assert_code(&output, 0);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("all gradient checks passed"), "{stdout}");
}

#[test]
fn unknown_preset_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("config.json");
    std::fs::write(&config_path, "{}").unwrap();
    let output = run(zsl()
        .arg("train")
        .arg("--config")
        .arg(&config_path)
        .args(["--preset", "imaginary"]));
    assert_code(&output, 2);
}
