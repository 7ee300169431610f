use sha2::{Digest, Sha256};
use std::path::Path;
use std::process::{Command, Output};

fn roadform(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roadform"))
        .args(args)
        .env_remove("ROADFORM_OUT")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn digest(path: &Path) -> Vec<u8> {
    Sha256::digest(std::fs::read(path).unwrap()).to_vec()
}

#[test]
fn validate_bundled_scenarios() {
    for name in ["scenario1", "scenario2"] {
        let out = roadform(&["validate", name]);
        assert!(out.status.success(), "{name}: {}", stderr(&out));
        assert!(stdout(&out).contains("ok"));
    }
}

#[test]
fn run_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().to_str().unwrap();
    let out = roadform(&["run", "scenario1", "--out", target]);
    assert!(out.status.success(), "{}", stderr(&out));
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 3 * 625);
    assert!(trace.lines().next().unwrap().starts_with("format_version,"));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["completed"], true);
    assert_eq!(summary["format_version"], 1);
    assert!(dir.path().join("timing.csv").exists());

    let audit = roadform(&["audit", &format!("{target}/trace.csv"), "--scenario", "scenario1"]);
    assert!(audit.status.success(), "{}", stderr(&audit));
    assert!(stdout(&audit).contains("1875 records"));
}

#[test]
fn seeded_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = roadform(&[
            "run",
            "scenario1",
            "--duration",
            "6",
            "--seed",
            "7",
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    assert_eq!(digest(&a.path().join("trace.csv")), digest(&b.path().join("trace.csv")));
    // Summaries agree except for wall-clock solve times.
    let summary = |dir: &Path| {
        let mut v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
        let solver = v["solver"].as_object_mut().unwrap();
        for key in ["median_ms", "p99_ms", "max_ms"] {
            solver.remove(key).expect("timing field present");
        }
        v
    };
    assert_eq!(summary(a.path()), summary(b.path()));
}

#[test]
fn invalid_scenario_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    let text = roadform::scenario::SCENARIO1.replace("duration = 40.0", "duration = -1.0");
    assert_ne!(text, roadform::scenario::SCENARIO1);
    std::fs::write(&path, text).unwrap();
    let out = roadform(&["validate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.lines().all(|l| l.starts_with("roadform: ")), "{err}");
    assert!(err.contains("sim.duration"), "{err}");

    let missing = roadform(&["run", "no-such-scenario", "--out", dir.path().to_str().unwrap()]);
    assert!(!missing.status.success());
}

#[test]
fn audit_reports_unreadable_trace() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    std::fs::write(&path, "time,vehicle\n0,0\n").unwrap();
    let out = roadform(&["audit", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("roadform: "));
}

#[test]
fn oracle_matches_grid() {
    let out = roadform(&["oracle", "scenario1", "--points", "41"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("gap"));
}
