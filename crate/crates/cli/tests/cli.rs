use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn crossbar(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crossbar")).current_dir(dir).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = r#"{
  "transfers": 40,
  "training": { "epochs": 30 },
  "heatmap": { "repetitions": 8, "grid": { "nx": 8, "ny": 6 } }
}"#;

#[test]
fn missing_model_exits_2_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cfg.json"), r#"{"model_path": "models/absent.json"}"#).unwrap();
    let out = crossbar(dir.path(), &["run", "--config", "cfg.json", "--out", "o"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("models/absent.json"), "{}", stderr(&out));
}

#[test]
fn missing_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = crossbar(dir.path(), &["evaluate", "--config", "nope.json", "--checkpoint", "c.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("nope.json"));
}

#[test]
fn invalid_config_is_rejected_with_a_reason() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cfg.json"), r#"{"training": {"batch_size": 0}}"#).unwrap();
    let out = crossbar(dir.path(), &["run", "--config", "cfg.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("batch_size"), "{}", stderr(&out));
}

#[test]
fn conflicting_training_modes_are_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = crossbar(dir.path(), &["train", "--hardware-aware", "--regular"]);
    assert!(!out.status.success());
}

#[test]
fn run_twice_gives_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cfg.json"), SMALL).unwrap();
    for o in ["a", "b"] {
        let out = crossbar(dir.path(), &["run", "--config", "cfg.json", "--seed", "5", "--threads", "2", "--out", o]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    for f in ["report.json", "manifest.json", "hann/table.csv", "nn/curve.csv", "nn/heatmap.csv", "test.csv"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("a/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
}

#[test]
fn stepwise_commands_share_a_model_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = SMALL.replacen('{', r#"{ "model_path": "model.json","#, 1);
    fs::write(d.join("cfg.json"), cfg).unwrap();

    let steps: [&[&str]; 4] = [
        &["gen-synthetic-model", "--out", "model.json"],
        &["train", "--config", "cfg.json", "--hardware-aware", "--out", "hann"],
        &[
            "evaluate",
            "--config",
            "cfg.json",
            "--checkpoint",
            "hann/checkpoint.json",
            "--transfers",
            "25",
            "--out",
            "eval",
        ],
        &[
            "heatmap",
            "--config",
            "cfg.json",
            "--checkpoint",
            "hann/checkpoint.json",
            "--resolution",
            "5",
            "--out",
            "map",
        ],
    ];
    for args in steps {
        let out = crossbar(d, args);
        assert!(out.status.success(), "{args:?}: {}", stderr(&out));
    }
    let report: serde_json::Value = serde_json::from_slice(&fs::read(d.join("eval/report.json")).unwrap()).unwrap();
    assert_eq!(report["n_transfers"], 25);
    assert_eq!(report["correct"].as_array().unwrap().len(), 200);
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(d.join("hann/training.json")).unwrap()).unwrap();
    assert_eq!(summary["hardware_aware"], true);
    let heat = fs::read_to_string(d.join("map/heatmap.csv")).unwrap();
    assert_eq!(heat.lines().count(), 26);
}

#[test]
fn fit_model_from_raw_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut tuning = String::from("device_id,g_target_uS,read_uS\n");
    for (dev, g, reads) in
        [("a", 100.0, [99.0, 101.0, 100.5]), ("a", 300.0, [297.0, 303.0, 301.0]), ("b", 200.0, [198.0, 202.5, 199.0])]
    {
        for r in reads {
            tuning.push_str(&format!("{dev},{g},{r}\n"));
        }
    }
    fs::write(d.join("tuning.csv"), tuning).unwrap();
    let bias: String = std::iter::once("n_d,delta_g_uS\n".to_string())
        .chain((0..30).map(|i| format!("{},{}\n", 1 + i % 3, -1.0 - 0.1 * i as f64)))
        .collect();
    fs::write(d.join("bias.csv"), bias).unwrap();
    fs::write(d.join("stuck.csv"), "kind,g_uS\nHRS,20\nHRS,55\nHRS,80\nLRS,650\nLRS,900\n").unwrap();

    let out = crossbar(
        d,
        &["fit-model", "--tuning", "tuning.csv", "--bias", "bias.csv", "--stuck", "stuck.csv", "--out", "fitted.json"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let model: serde_json::Value = serde_json::from_slice(&fs::read(d.join("fitted.json")).unwrap()).unwrap();
    assert_eq!(model["stuck_model"]["lrs_samples"].as_array().unwrap().len(), 2);
    assert!(d.join("fitted.fit.json").exists());

    let missing = crossbar(d, &["fit-model", "--tuning", "t.csv", "--bias", "bias.csv", "--stuck", "stuck.csv"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(stderr(&missing).contains("t.csv"));
}
