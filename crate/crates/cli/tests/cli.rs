use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_snakesim"))
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).env_remove("SNAKESIM_WORKERS").output().unwrap()
}

fn only_run_dir(root: &Path, id: &str) -> PathBuf {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root.join(id)).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs.pop().unwrap()
}

#[test]
fn help_lists_every_experiment() {
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for id in ["survival", "branching-mp", "snake", "reversal", "occupation", "functional", "brox", "theorem1", "all"] {
        assert!(text.contains(id), "{id} missing from help");
    }
    let out = bin().args(["snake", "--help"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8(out.stdout).unwrap().contains("SNAKESIM_WORKERS"));
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(bin().arg("warp").output().unwrap().status.code(), Some(2));
    assert_eq!(bin().output().unwrap().status.code(), Some(2));
    assert_eq!(run(&["snake", "--replicates", "0"], tmp.path()).status.code(), Some(2));
    assert_eq!(run(&["snake", "--n", "ten"], tmp.path()).status.code(), Some(2));
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "replicatez = 4\n").unwrap();
    assert_eq!(run(&["snake", "--config", bad.to_str().unwrap()], tmp.path()).status.code(), Some(2));
    fs::write(&bad, "experiment = \"brox\"\n").unwrap();
    assert_eq!(run(&["snake", "--config", bad.to_str().unwrap()], tmp.path()).status.code(), Some(2));
    let missing = tmp.path().join("missing.toml");
    assert_eq!(run(&["snake", "--config", missing.to_str().unwrap()], tmp.path()).status.code(), Some(2));
}

#[test]
fn run_writes_a_complete_bundle() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["snake", "--n", "10", "--replicates", "40", "--seed", "3"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = only_run_dir(tmp.path(), "snake");
    for f in ["manifest.json", "summary.json", "config.toml", "contour_n10.csv", "ledger_n10.csv"] {
        assert!(dir.join(f).is_file(), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["replicates"], 40);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert!(manifest["wall_time_seconds"].as_f64().unwrap() >= 0.0);
    assert!(manifest["snakesim_version"].is_string());
}

#[test]
fn summary_is_deterministic_across_worker_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["theorem1", "--n", "10", "--replicates", "80", "--seed", "7"];
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let one = bin().args(args).arg("--out").arg(&a).env("SNAKESIM_WORKERS", "1").output().unwrap();
    let four = bin().args(args).arg("--out").arg(&b).env("SNAKESIM_WORKERS", "4").output().unwrap();
    assert!(one.status.success() || one.status.code() == Some(1));
    assert_eq!(one.status.code(), four.status.code());
    let sa = fs::read_to_string(only_run_dir(&a, "theorem1").join("summary.json")).unwrap();
    let sb = fs::read_to_string(only_run_dir(&b, "theorem1").join("summary.json")).unwrap();
    assert_eq!(sa, sb);
}

#[test]
fn saved_config_replays_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("first");
    let out = run(&["reversal", "--n", "10", "--replicates", "60", "--seed", "11"], &first);
    assert!(out.status.code() == Some(0) || out.status.code() == Some(1));
    let dir = only_run_dir(&first, "reversal");
    let second = tmp.path().join("second");
    let cfg = dir.join("config.toml");
    let replay = run(&["reversal", "--config", cfg.to_str().unwrap()], &second);
    assert_eq!(replay.status.code(), out.status.code());
    let again = only_run_dir(&second, "reversal");
    for f in ["summary.json", "config.toml"] {
        assert_eq!(fs::read_to_string(dir.join(f)).unwrap(), fs::read_to_string(again.join(f)).unwrap(), "{f}");
    }
    let m1: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    let m2: serde_json::Value = serde_json::from_str(&fs::read_to_string(again.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m1["config_sha256"], m2["config_sha256"]);
}

#[test]
fn config_overrides_apply_over_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, "seed = 5\nreplicates = 30\nn = [10]\n").unwrap();
    let out = run(&["snake", "--config", cfg.to_str().unwrap(), "--seed", "6"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let dir = only_run_dir(tmp.path(), "snake");
    let saved = fs::read_to_string(dir.join("config.toml")).unwrap();
    assert!(saved.contains("seed = 6"));
    assert!(saved.contains("replicates = 30"));
}
