use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn adlab() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_adlab"));
    c.env_remove("ADLAB_CONFIG").env("RUST_LOG", "warn");
    c
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("process exited normally")
}

/// A small run config inside `dir`, with outputs under `dir/out`.
fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("run.toml");
    let text = format!(
        "seed = 3\nout_dir = {:?}\n\n[synth]\nitems = 20\neval_items = 10\n\n[generator]\nk = 5\n",
        dir.join("out")
    );
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&adlab().arg("--help").output().unwrap()), 0);
    assert_eq!(code(&adlab().arg("--version").output().unwrap()), 0);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&adlab().arg("frobnicate").output().unwrap()), 1);
    assert_eq!(code(&adlab().output().unwrap()), 1);
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path());
    let bad_mode = adlab().args(["--config", cfg.to_str().unwrap(), "--weight-mode", "bogus", "train"]).output().unwrap();
    assert_eq!(code(&bad_mode), 1);
}

#[test]
fn config_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let missing = adlab().args(["--config", "/nonexistent/run.toml", "gen-data"]).output().unwrap();
    assert_eq!(code(&missing), 1);
    let unknown = dir.path().join("bad.toml");
    fs::write(&unknown, "seed = 1\nno_such_key = 2\n").unwrap();
    let out = adlab().args(["--config", unknown.to_str().unwrap(), "gen-data"]).output().unwrap();
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_key"));
    let zero_k = dir.path().join("zero.toml");
    fs::write(&zero_k, "[generator]\nk = 0\n").unwrap();
    assert_eq!(code(&adlab().args(["--config", zero_k.to_str().unwrap(), "gen-data"]).output().unwrap()), 1);
}

#[test]
fn missing_input_exits_two() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path());
    let out = adlab().args(["--config", cfg.to_str().unwrap(), "sample"]).output().unwrap();
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("items.jsonl"));
}

#[test]
fn run_all_with_every_mode() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path());
    let out = adlab().args(["--config", cfg.to_str().unwrap(), "--weight-mode", "all", "run-all"]).output().unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out_dir = dir.path().join("out");
    for name in [
        "items.jsonl",
        "eval_items.jsonl",
        "exemplars.jsonl",
        "candidates.jsonl",
        "armstats.jsonl",
        "pairs.jsonl",
        "reference.json",
        "policy.json",
        "policy-ctrpo.json",
        "policy-dpo_unweighted.json",
        "policy-confidence_only.json",
        "train_log.jsonl",
        "report.json",
        "report.json.meta.json",
    ] {
        assert!(out_dir.join(name).exists(), "missing {name}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["results"].as_object().unwrap().len(), 3);
    assert_eq!(fs::read_to_string(out_dir.join("candidates.jsonl")).unwrap().lines().count(), 100);
}

#[test]
fn config_from_environment_and_flag_overrides() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path());
    let other = dir.path().join("elsewhere");
    let out = adlab()
        .env("ADLAB_CONFIG", &cfg)
        .args(["--out-dir", other.to_str().unwrap(), "gen-data"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let items = fs::read_to_string(other.join("items.jsonl")).unwrap();
    assert_eq!(items.lines().count(), 20);
    assert!(!dir.path().join("out").exists());
}

#[test]
fn stale_inputs_exit_two_unless_forced() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path());
    let c = cfg.to_str().unwrap();
    assert_eq!(code(&adlab().args(["--config", c, "gen-data"]).output().unwrap()), 0);
    let stale = adlab().args(["--config", c, "--seed", "4", "sample"]).output().unwrap();
    assert_eq!(code(&stale), 2);
    assert!(String::from_utf8_lossy(&stale.stderr).contains("stale input"));
    let forced = adlab().args(["--config", c, "--seed", "4", "--force", "sample"]).output().unwrap();
    assert_eq!(code(&forced), 0);
}
