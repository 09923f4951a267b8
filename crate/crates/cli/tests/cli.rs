use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_team-align"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("team-align-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn export(dir: &Path, member: &str) -> String {
    let path = dir.join(format!("bundled-{member}.json"));
    let out = run(&["export-bundled", "--out", path.to_str().unwrap(), "--member", member]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    path.to_str().unwrap().to_owned()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("{e}: stdout {:?} stderr {:?}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr))
    })
}

#[test]
fn solve_ne_on_bundled_defaults() {
    let dir = scratch("ne");
    let p = export(&dir, "2,0.3,10");
    let out = run(&["solve-ne", "--problem", &p]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["kind"], "NE");
    assert!(v["residual"].as_f64().unwrap() <= 1e-10);
    assert_eq!(v["point"].as_array().unwrap().len(), 4 * 31);
}

#[test]
fn solve_team_writes_out_file() {
    let dir = scratch("team");
    let p = export(&dir, "2,0.3,10");
    let target = dir.join("opt.json");
    let out = run(&["solve-team", "--problem", &p, "--out", target.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(target).unwrap()).unwrap();
    assert_eq!(v["kind"], "TeamOpt");
}

#[test]
fn missing_file_exits_1() {
    let out = run(&["solve-ne", "--problem", "/nonexistent/problem.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn malformed_problem_exits_1_with_location() {
    let dir = scratch("malformed");
    let p = export(&dir, "2,0.3,10");
    let text = std::fs::read_to_string(&p).unwrap();
    let mut v: Value = serde_json::from_str(&text).unwrap();
    v["network"]["arcs"][3]["from"] = 0.into();
    std::fs::write(&p, v.to_string()).unwrap();
    let out = run(&["check", "--problem", &p]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("network.arcs[3].from"));
}

#[test]
fn tau_outside_window_warns_and_runs() {
    let dir = scratch("tau");
    let p = export(&dir, "2,0.3,10");
    let out = run(&["solve-ne", "--problem", &p, "--tau", "0.01"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).is_empty());
    let out = run(&["solve-ne", "--problem", &p, "--tau", "0.5", "--max-iter", "50"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning: tau"));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn check_aligned_members() {
    let dir = scratch("aligned");
    let p = export(&dir, "2,0.6,10");
    let v = json(&run(&["check", "--problem", &p]));
    assert_eq!(v["cr"], 1);
    assert_eq!(v["deviation"]["closeness_ratio"], 1.0);
}

#[test]
fn check_misaligned_gamma() {
    let dir = scratch("gamma5");
    let p = export(&dir, "2,0.3,5");
    let v = json(&run(&["check", "--problem", &p]));
    assert_eq!(v["cr"], 0);
    assert_eq!(v["verdict"], "Inconsistent");
    let d = &v["deviation"];
    let bound = d["bound"].as_f64().unwrap();
    assert!(d["actual_gap"].as_f64().unwrap() <= bound + 1e-8);
    let ratio = d["closeness_ratio"].as_f64().unwrap();
    assert!((ratio - 1.0 / (1.0 + bound)).abs() < 1e-15);
}

#[test]
fn mediate_all_closes_gap_and_exports_trace() {
    let dir = scratch("mediate");
    let p = export(&dir, "2,0.3,10");
    let trace = dir.join("trace.csv");
    let out = run(&["mediate", "--problem", &p, "--scenario", "all", "--trace", trace.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert!(v["final_gap"].as_f64().unwrap() <= 1e-4);
    let csv = std::fs::read_to_string(trace).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("iter,psi,grad_norm,inner_iters"));
    assert_eq!(lines.count(), v["psi_trace"].as_array().unwrap().len());
}

#[test]
fn mediate_rejects_bad_flags() {
    let dir = scratch("badflags");
    let p = export(&dir, "2,0.3,10");
    assert_eq!(run(&["mediate", "--problem", &p, "--scenario", "beta"]).status.code(), Some(1));
    assert_eq!(run(&["mediate", "--problem", &p, "--schedule", "linear:2"]).status.code(), Some(1));
}

#[test]
fn mediate_dimin_schedule_reports_non_convergence() {
    let dir = scratch("dimin");
    let p = export(&dir, "2,0.3,10");
    let out = run(&["mediate", "--problem", &p, "--schedule", "dimin:1", "--max-iter", "5"]);
    assert_eq!(out.status.code(), Some(2));
    let v = json(&out);
    assert_eq!(v["outer_iterations"], 5);
    assert_eq!(v["converged"], false);
}

#[test]
fn sweep_small_grid() {
    let dir = scratch("sweep");
    let p = export(&dir, "2,0.3,10");
    let grid = dir.join("grid.json");
    std::fs::write(
        &grid,
        r#"{"alpha_values": [2.0], "beta_values": [0.3, 0.6], "gamma_values": [10.0]}"#,
    )
    .unwrap();
    let csv = dir.join("rows.csv");
    let out = run(&[
        "sweep",
        "--problem",
        &p,
        "--grid",
        grid.to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "alpha_i,beta_i,gamma_i,cr,closeness_ratio,travel_time_diff,gap,verdict,status"
    );
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("2.0,0.3,10.0,0,"));
    assert!(lines[2].starts_with("2.0,0.6,10.0,1,"));
    assert!(lines[1..].iter().all(|l| l.ends_with(",ok")));
}

#[test]
fn output_is_deterministic() {
    let dir = scratch("determinism");
    let p = export(&dir, "3,0.45,15");
    let a = run(&["check", "--problem", &p]);
    let b = run(&["check", "--problem", &p]);
    assert_eq!(a.stdout, b.stdout);
}
