use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ipm-lab"))
        .args(args)
        .output()
        .unwrap()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn build_then_evolve_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let field = dir.path().join("hole.ipmf");
    let out = lab(&[
        "build-data",
        "--kind",
        "hole",
        "--K",
        "1",
        "--grid-n",
        "64",
        "--grid-l",
        "2",
        "--out",
        arg(&field),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    fs::write(
        dir.path().join("run.cfg"),
        "initial = hole.ipmf\nT = 0.01\ndt = 0.005\nstable = true\n",
    )
    .unwrap();
    let trace = dir.path().join("trace.csv");
    let manifest = dir.path().join("manifest.json");
    let snaps = dir.path().join("snaps");
    let out = lab(&[
        "evolve",
        "--config",
        arg(&dir.path().join("run.cfg")),
        "--every",
        "0.005",
        "--snapshots",
        arg(&snaps),
        "--out",
        arg(&trace),
        "--manifest",
        arg(&manifest),
        "--quiet",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&trace).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,k,M,H2,H3,C1,S_inf,S_sup"));
    assert_eq!(lines.count(), 3);
    assert!(snaps.join("snap_0002.ipmf").exists());
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(&manifest).unwrap()).unwrap();
    assert_eq!(m["status"], "ok");
    assert_eq!(m["command"], "evolve");
    assert_eq!(m["inputs"].as_array().unwrap().len(), 2);
    assert_eq!(m["outputs"].as_array().unwrap().len(), 4);
}

#[test]
fn bad_config_reports_error_code_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "T = 1\ngrid_n = 100\n").unwrap();
    let manifest = dir.path().join("m.json");
    let out = lab(&[
        "evolve",
        "--config",
        arg(&cfg),
        "--out",
        arg(&dir.path().join("t.csv")),
        "--manifest",
        arg(&manifest),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("ERROR:CONFIG:"), "{err}");
    assert!(err.contains("line 2") && err.contains("power of two"), "{err}");
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(&manifest).unwrap()).unwrap();
    assert_eq!(m["status"], "failed");
}

#[test]
fn threads_other_than_one_rejected() {
    let out = lab(&["--threads", "4", "verify", "lemma23", "--count", "1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("ERROR:PARAM:"));
}

#[test]
fn verify_lemma23_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let out = lab(&[
        "verify",
        "lemma23",
        "--count",
        "2",
        "--seed",
        "3",
        "--out",
        arg(&report),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().all(|l| l.starts_with("PASS ")), "{stdout}");
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["checks"].as_array().unwrap().len(), 6);
}

#[test]
fn verify_lemma23_on_schedule_file() {
    let dir = tempfile::tempdir().unwrap();
    let sched = dir.path().join("k.csv");
    let rows: String = (0..=20).map(|i| format!("{},-0.5\n", i as f64 / 20.0)).collect();
    fs::write(&sched, format!("t,k\n{rows}")).unwrap();
    let out = lab(&[
        "verify",
        "lemma23",
        "--cone-constant",
        "4",
        "--M",
        "0.5",
        "--schedule",
        arg(&sched),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        String::from_utf8_lossy(&out.stdout)
            .lines()
            .filter(|l| l.starts_with("PASS "))
            .count(),
        3
    );

    let narrow = lab(&[
        "verify",
        "lemma23",
        "--cone-constant",
        "1.2",
        "--M",
        "0.5",
        "--T",
        "1",
    ]);
    assert!(!narrow.status.success());
    assert!(String::from_utf8_lossy(&narrow.stderr).starts_with("ERROR:"));
}
