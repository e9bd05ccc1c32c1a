use std::path::PathBuf;
use std::process::{Command, Output};

fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name).display().to_string()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("rclab-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn rclab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rclab"))
        .args(args)
        .env_remove("RCLAB_SEED")
        .output()
        .unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn validate_builtin() {
    let out = rclab(&["validate", "central_force"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "central_force: ok");
}

#[test]
fn malformed_json_reports_position() {
    let out = rclab(&["validate", &data("malformed.json")]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("malformed JSON") && err.contains("line"), "{err}");
}

#[test]
fn degenerate_lagrangian_is_rejected() {
    let out = rclab(&["check", &data("degenerate.json")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hyperregularity failed"));
}

#[test]
fn simulate_writes_csv() {
    let path = scratch("ho.csv");
    let out = rclab(&[
        "simulate",
        "harmonic_oscillator",
        "--state",
        "1,0",
        "--t1",
        "6.283185307179586",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(&path).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("t,q,q_dot"), "{header}");
    let last: Vec<f64> = csv.lines().last().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert!((last[1] - 1.0).abs() < 1e-6 && last[2].abs() < 1e-6);
}

#[test]
fn blow_up_keeps_partial_trajectory() {
    let path = scratch("blowup.csv");
    let out = rclab(&["simulate", &data("quartic_blowup.json"), "--state", "1,0", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(std::fs::read_to_string(&path).unwrap().lines().count() > 10);
}

#[test]
fn seed_from_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_rclab"))
        .args(["check", "free_particle", "--suite", "legendre", "--samples", "20"])
        .env("RCLAB_SEED", "17")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["seed"], 17);
}

#[test]
fn failing_suite_exits_one_with_witness() {
    let out = rclab(&["check", &data("harmonic_oscillator_cyclic.json"), "--suite", "noether", "--samples", "50"]);
    assert_eq!(out.status.code(), Some(1));
    let report = json(&out);
    let failed: Vec<_> = report["checks"].as_array().unwrap().iter().filter(|c| c["status"] == "fail").collect();
    assert!(!failed.is_empty());
    assert!(failed.iter().all(|c| c["witness"].is_array()));
}

#[test]
fn inapplicable_suite_exits_four() {
    assert_eq!(rclab(&["check", "harmonic_oscillator", "--suite", "reduction"]).status.code(), Some(4));
}

#[test]
fn reduce_then_check_reduced_file() {
    let path = scratch("cf_reduced.json");
    let out = rclab(&["reduce", "central_force", "--mu", "1.2", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let file: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(file["reduced"]["mu"][0], 1.2);
    let out = rclab(&["check", path.to_str().unwrap(), "--samples", "40"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn reduce_controlled_system_warns_about_dropped_direction() {
    let out = rclab(&["reduce", &data("pendulum_cart_drag.json")]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
}

#[test]
fn force_leaving_level_set_is_irreducible() {
    let out = rclab(&["reduce", &data("central_force_forced.json")]);
    assert_eq!(out.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&out.stderr).contains("F^L does not preserve"));
}

#[test]
fn orbit_reduction_of_algebra_only_symmetry_is_unsupported() {
    let path = scratch("so3.json");
    std::fs::write(
        &path,
        r#"{
  "space": { "coords": ["q"], "box": { "q": [[-1, 1]], "q_dot": [[-1, 1]] } },
  "lagrangian": "q_dot^2/2",
  "symmetry": { "algebra": { "dim": 3, "structure_constants": [
    [[0,0,0],[0,0,1],[0,-1,0]],
    [[0,0,-1],[0,0,0],[1,0,0]],
    [[0,1,0],[-1,0,0],[0,0,0]]
  ] } },
  "mu": [1, 0, 0]
}"#,
    )
    .unwrap();
    let out = rclab(&["reduce", path.to_str().unwrap(), "--orbit"]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn equivalence_verdicts() {
    assert_eq!(rclab(&["equivalence", "ho_scaling_pair", "--kind", "rcl"]).status.code(), Some(0));
    assert_eq!(rclab(&["equivalence", "translation_pair", "--kind", "rocl"]).status.code(), Some(0));
    assert_eq!(rclab(&["equivalence", "translation_bad", "--kind", "rpcl"]).status.code(), Some(1));
    let out = rclab(&["equivalence", "translation_bad", "--kind", "thm54"]);
    assert_eq!(out.status.code(), Some(0));
    let report = json(&out);
    let agreement = report["checks"].as_array().unwrap().iter().find(|c| c["id"] == "agreement").unwrap();
    assert_eq!(agreement["status"], "pass");
}

#[test]
fn pair_without_inverse_is_invalid() {
    assert_eq!(rclab(&["equivalence", &data("pair_no_inverse.json")]).status.code(), Some(2));
}
