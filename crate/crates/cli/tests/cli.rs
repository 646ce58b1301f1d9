use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ste(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ste"))
        .args(args)
        .output()
        .expect("run ste")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn design_writes_protocol_and_flags_markov_check() {
    let dir = tempfile::tempdir().unwrap();
    let out = ste(&["design", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let proto = read_json(&dir.path().join("protocol.json"));
    assert_eq!(proto["format"], "ste-protocol-v1");
    assert!(proto["design"]["predicted_fidelity"].as_f64().unwrap() >= 0.999);
    assert_eq!(proto["config"]["protocol"]["duration"], 16.0);
    assert_eq!(proto["timescales"]["markov"], "warn");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("a6 = ") && stdout.contains("max omega"));
}

#[test]
fn identity_design_is_clean() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"model": {"omega0": 1, "omegaf": 1, "temperature": 1}}"#);
    let out = ste(&["design", "--config", &cfg, "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(0));
    let proto = read_json(&dir.path().join("protocol.json"));
    assert!(proto["design"]["a6_opt"].as_f64().unwrap().abs() < 1e-6);
    assert!((proto["design"]["predicted_fidelity"].as_f64().unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn bad_configs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    for (i, text) in [
        r#"{"modle": {}}"#,
        r#"{"integrator": {"dt": 0.001, "step": 2}}"#,
        r#"{"model": {"omega0": -1, "omegaf": 3, "temperature": 1}}"#,
        r#"{"protocol": {"kind": "ste", "duration": 0}}"#,
        r#"{"protocol": {"kind": "ramp", "duration": 5, "omega": 2}}"#,
    ]
    .iter()
    .enumerate()
    {
        let cfg = write(dir.path(), &format!("bad{i}.json"), text);
        let out = ste(&["design", "--config", &cfg, "--out", s(dir.path())]);
        assert_eq!(out.status.code(), Some(1), "{text}");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    }
}

#[test]
fn simulate_designed_protocol_with_both_methods() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ste(&["design", "--out", s(d)]);
    let proto = d.join("protocol.json");
    let out = ste(&["simulate", "--protocol", s(&proto), "--method", "both", "--out", s(d)]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let sum = read_json(&d.join("summary.json"));
    let fm = sum["master"]["fidelity"].as_f64().unwrap();
    let fe = sum["exact"]["fidelity"].as_f64().unwrap();
    assert!((fm - fe).abs() <= 0.005, "{fm} vs {fe}");

    let traj = std::fs::read_to_string(d.join("trajectory.csv")).unwrap();
    let mut lines = traj.lines();
    let header: Value = serde_json::from_str(lines.next().unwrap().strip_prefix("# ").unwrap()).unwrap();
    assert_eq!(header["config"]["bath"]["n_modes"], 600);
    assert_eq!(
        lines.next().unwrap(),
        "t,omega,b,bdot,omega_tilde,n_occ,re_a2,im_a2,gamma_plus,gamma_minus"
    );
    assert_eq!(lines.count(), 401);
    let exact = std::fs::read_to_string(d.join("exact.csv")).unwrap();
    assert_eq!(exact.lines().nth(1).unwrap(), "t,sxx,sxp,spp,fidelity_to_target,purity");
    let obs = std::fs::read_to_string(d.join("observables.csv")).unwrap();
    assert_eq!(obs.lines().nth(1).unwrap(), "t,omega,n_occ,epsilon,t_eff,coherence");
}

#[test]
fn quench_is_worse_than_designed_protocol() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write(d, "q.json", r#"{"protocol": {"kind": "quench", "duration": 16}}"#);
    let out = ste(&["simulate", "--config", &cfg, "--method", "exact", "--out", s(d)]);
    assert_eq!(out.status.code(), Some(0));
    let fq = read_json(&d.join("summary.json"))["exact"]["fidelity"].as_f64().unwrap();
    assert!(fq < 0.99, "{fq}");
}

#[test]
fn static_protocol_stays_near_initial_state() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write(d, "st.json", r#"{"protocol": {"kind": "static", "duration": 10}, "integrator": {"exact_samples": 3}}"#);
    let out = ste(&["simulate", "--config", &cfg, "--out", s(d)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let sum = read_json(&d.join("summary.json"));
    assert!(sum["exact"]["fidelity_to_initial"].as_f64().unwrap() >= 0.9999);
    assert!((sum["master"]["fidelity_to_initial"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let st = write(d, "st.json", r#"{"protocol": {"kind": "static", "duration": 10}}"#);
    assert_eq!(ste(&["validate", "--config", &st, "--out", s(d)]).status.code(), Some(0));
    let fast = write(d, "fast.json", r#"{"protocol": {"kind": "ste", "duration": 1}}"#);
    assert_eq!(ste(&["validate", "--config", &fast, "--out", s(d)]).status.code(), Some(2));
    let rep = read_json(&d.join("timescales.json"));
    assert_eq!(rep["report"]["markov"], "warn");
}

#[test]
fn sweep_is_deterministic_and_records_failures() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write(
        d,
        "sw.json",
        r#"{"sweep": {"durations": [4, 80, 8], "method": "both"}, "bath": {"gamma": 0.002, "cutoff": 20, "n_modes": 200}}"#,
    );
    let a = d.join("a");
    let b = d.join("b");
    let ra = ste(&["sweep", "--config", &cfg, "--jobs", "1", "--out", s(&a)]);
    let rb = ste(&["sweep", "--config", &cfg, "--jobs", "3", "--out", s(&b)]);
    assert_eq!(ra.status.code(), Some(2));
    assert_eq!(rb.status.code(), Some(2));
    let ta = std::fs::read_to_string(a.join("sweep.csv")).unwrap();
    let tb = std::fs::read_to_string(b.join("sweep.csv")).unwrap();
    let body = |t: &str| t.lines().skip(1).collect::<Vec<_>>().join("\n");
    assert_eq!(body(&ta), body(&tb));
    let lines: Vec<&str> = ta.lines().collect();
    assert_eq!(
        lines[1],
        "t_f,ste_master,ste_exact,quench_master,quench_exact,ramp_master,ramp_exact,error"
    );
    assert!(lines[2].starts_with("4,") && lines[2].ends_with(",\"\""));
    assert!(lines[3].starts_with("80,NaN,NaN") && lines[3].contains("recurrence"));
    assert!(lines[4].starts_with("8,"));
}
