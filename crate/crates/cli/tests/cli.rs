use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_aqa");

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tiny.json")
}

fn aqa(run_dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .arg("--config")
        .arg(fixture())
        .arg("--run-dir")
        .arg(run_dir)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(run_dir: &Path, args: &[&str]) {
    let out = aqa(run_dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn full_pipeline(run_dir: &Path) {
    for step in ["gen-synthetic", "train-dml", "train-score", "evaluate", "feedback"] {
        ok(run_dir, &[step]);
    }
}

#[test]
fn pipeline_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path();
    full_pipeline(run);
    for f in [
        "config.echo.json",
        "data/manifest.csv",
        "data/faults.csv",
        "data/gen_config.json",
        "checkpoints/dml.aqac",
        "checkpoints/score.aqac",
        "dml_history.csv",
        "score_history.csv",
        "predictions.csv",
        "report.json",
        "report.csv",
        "dml_eval.json",
        "feedback/index.json",
    ] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    assert!(report["rho"].is_number() && report["mse"].is_number());
    let index: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("feedback/index.json")).unwrap()).unwrap();
    let first = index["entries"][0]["video_id"].as_str().unwrap().to_string();
    assert!(run.join(format!("feedback/{first}.csv")).is_file());
    assert!(run.join(format!("feedback/{first}.svg")).is_file());
    let echo: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("config.echo.json")).unwrap()).unwrap();
    assert_eq!(echo["seed"], 5);
    assert_eq!(echo["dml"]["seed"], 5);
}

#[test]
fn report_regenerates_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path();
    full_pipeline(run);
    let index: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("feedback/index.json")).unwrap()).unwrap();
    let ids: Vec<String> = index["entries"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["video_id"].as_str().unwrap().to_string())
        .collect();
    let mut files = vec!["report.json".to_string(), "report.csv".to_string()];
    files.extend(ids.iter().map(|id| format!("feedback/{id}.svg")));
    let before: Vec<Vec<u8>> = files.iter().map(|f| fs::read(run.join(f)).unwrap()).collect();
    for f in &files {
        fs::remove_file(run.join(f)).unwrap();
    }
    ok(run, &["report"]);
    for (f, b) in files.iter().zip(&before) {
        assert_eq!(&fs::read(run.join(f)).unwrap(), b, "{f}");
    }
}

#[test]
fn score_phase_keeps_frozen_blocks() {
    use aqa_core::checkpoint::Checkpoint;
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path();
    for step in ["gen-synthetic", "train-dml", "train-score"] {
        ok(run, &[step]);
    }
    let dml = Checkpoint::load(&run.join("checkpoints/dml.aqac")).unwrap();
    let score = Checkpoint::load(&run.join("checkpoints/score.aqac")).unwrap();
    for b in dml.blocks.blocks() {
        let after = score.blocks.get(&b.name).unwrap();
        let bytes = |v: &[f64]| v.iter().flat_map(|x| x.to_le_bytes()).collect::<Vec<u8>>();
        assert_eq!(bytes(&after.values), bytes(&b.values), "{}", b.name);
    }
    let head: Vec<&str> = score
        .blocks
        .blocks()
        .iter()
        .map(|b| b.name.as_str())
        .filter(|n| dml.blocks.get(n).is_none())
        .collect();
    assert_eq!(head, ["head.weight", "head.bias"]);
}

#[test]
fn missing_prerequisites_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path();
    assert_eq!(code(&aqa(run, &["train-dml"])), 3);
    ok(run, &["gen-synthetic"]);
    assert_eq!(code(&aqa(run, &["train-score"])), 3);
    assert_eq!(code(&aqa(run, &["evaluate"])), 3);
    assert_eq!(code(&aqa(run, &["feedback"])), 3);
    assert_eq!(code(&aqa(run, &["report"])), 3);
}

#[test]
fn corrupt_checkpoint_exits_6() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path();
    ok(run, &["gen-synthetic"]);
    ok(run, &["train-dml"]);
    let path = run.join("checkpoints/dml.aqac");
    let mut bytes = fs::read(&path).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0xff;
    fs::write(&path, bytes).unwrap();
    let out = aqa(run, &["train-score"]);
    assert_eq!(code(&out), 6);
    assert!(String::from_utf8_lossy(&out.stderr).contains("checksum"));
}

#[test]
fn config_mismatch_exits_6() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path();
    ok(run, &["gen-synthetic"]);
    ok(run, &["train-dml"]);
    let mut cfg: serde_json::Value = serde_json::from_str(&fs::read_to_string(fixture()).unwrap()).unwrap();
    cfg["model"]["hidden"] = 5.into();
    let other = run.join("other.json");
    fs::write(&other, cfg.to_string()).unwrap();
    let out = Command::new(BIN)
        .args(["--config", other.to_str().unwrap(), "--run-dir", run.to_str().unwrap(), "train-score"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 6, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn malformed_manifest_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path();
    ok(run, &["gen-synthetic"]);
    let manifest = run.join("data/manifest.csv");
    let text = fs::read_to_string(&manifest).unwrap();
    fs::write(&manifest, text.replacen(",train_dml,", ",train_dmx,", 1)).unwrap();
    let out = aqa(run, &["train-dml"]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row"));
}

#[test]
fn bad_configuration_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"modle": {}}"#).unwrap();
    let out = Command::new(BIN)
        .args(["--config", cfg.to_str().unwrap(), "--run-dir", dir.path().to_str().unwrap(), "gen-synthetic"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
    let out = Command::new(BIN).args(["--expert-mode", "median", "evaluate"]).output().unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn expert_mode_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path();
    ok(run, &["gen-synthetic"]);
    ok(run, &["train-dml"]);
    ok(run, &["--expert-mode", "constant", "train-score"]);
    let echo: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("config.echo.json")).unwrap()).unwrap();
    assert_eq!(echo["expert_mode"], "constant");
    let score = aqa_core::checkpoint::Checkpoint::load(&run.join("checkpoints/score.aqac")).unwrap();
    assert_eq!(score.meta("expert_mode"), Some("constant"));
}
