use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"{
  "name": "small",
  "interval_slots": 20000,
  "intervals": 30,
  "warmup": 10,
  "replications": 2,
  "stations": [
    {"count": 2, "channel": {"kind": "iid-rayleigh", "W": 1e7, "rho": 1.0}},
    {"count": 1, "channel": {"kind": "iid-rayleigh", "W": 1e7, "rho": 4.0}}
  ],
  "experiment": {"kind": "fairness"}
}
"#;

fn docsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_docsim"))
        .args(args)
        .env("DOC_SIM_THREADS", "2")
        .output()
        .unwrap()
}

fn scenario(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("scenario.json");
    fs::write(&path, text).unwrap();
    path
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p);
            }
        }
    }
    out
}

fn only_run_dir(root: &Path) -> PathBuf {
    let runs: Vec<_> = fs::read_dir(root.join("small")).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(runs.len(), 1);
    runs[0].clone()
}

#[test]
fn unknown_override_lists_valid_keys() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario(dir.path(), SMALL);
    let out = docsim(&["validate", "--scenario", path.to_str().unwrap(), "--set", "bogus.key=1"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bogus.key"), "{err}");
    assert!(err.contains("stations.0.channel.rho"), "{err}");
    assert!(err.contains("controller.gain_scale"), "{err}");
}

#[test]
fn malformed_json_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario(dir.path(), "{\n  \"name\": \"x\",\n  \"intervals\": ,\n}\n");
    let out = docsim(&["validate", "--scenario", path.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
    assert!(err.contains("column 16"), "{err}");
}

#[test]
fn validate_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario(dir.path(), SMALL);
    let out_dir = dir.path().join("out");
    let out = docsim(&[
        "validate",
        "--scenario",
        path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--set",
        "stations.1.channel.rho=7",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!out_dir.exists());
    assert_eq!(files_under(dir.path()), vec![path]);
}

#[test]
fn solve_writes_config() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario(dir.path(), SMALL);
    let out_dir = dir.path().join("out");
    let out = docsim(&["solve", "--scenario", path.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let config: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(only_run_dir(&out_dir).join("config.json")).unwrap()).unwrap();
    assert_eq!(config["stations"].as_array().unwrap().len(), 3);
    assert!(config["stable"].as_bool().unwrap());
}

#[test]
fn run_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario(dir.path(), SMALL);
    let mut summaries = Vec::new();
    for k in 0..2 {
        let out_dir = dir.path().join(format!("out{k}"));
        let out = docsim(&[
            "run",
            "--scenario",
            path.to_str().unwrap(),
            "--seed",
            "9",
            "--out",
            out_dir.to_str().unwrap(),
            "--set",
            "controller.gain_scale=2",
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let run = only_run_dir(&out_dir);
        let summary = fs::read(run.join("summary.csv")).unwrap();
        assert!(summary.starts_with(b"param,station,throughput_bps,ci_halfwidth\n"));
        assert!(run.join("metrics.csv").exists());
        summaries.push(summary);
    }
    assert_eq!(summaries[0], summaries[1]);
}

#[test]
fn sweep_adds_one_point_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario(dir.path(), SMALL);
    let out_dir = dir.path().join("out");
    let out = docsim(&[
        "sweep",
        "--scenario",
        path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--param",
        "stations.1.channel.rho",
        "--values",
        "2,7",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = fs::read_to_string(only_run_dir(&out_dir).join("summary.csv")).unwrap();
    assert!(summary.contains("stations.1.channel.rho=2|doc,"), "{summary}");
    assert!(summary.contains("stations.1.channel.rho=7|doc,"), "{summary}");
}

#[test]
fn episode_run_writes_traces() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario(dir.path(), &SMALL.replace("fairness", "episode"));
    let out_dir = dir.path().join("out");
    let out = docsim(&["run", "--scenario", path.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let traces = only_run_dir(&out_dir).join("traces");
    let first = fs::read_dir(&traces).unwrap().next().unwrap().unwrap().path();
    let text = fs::read_to_string(first).unwrap();
    assert!(text.starts_with("interval,station,p,P,E,F,t,bits,successes\n"));
    assert_eq!(text.lines().count(), 1 + 30 * 3);
}
