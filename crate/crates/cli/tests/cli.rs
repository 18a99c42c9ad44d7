use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const C2: &str = r#"{"labels": ["a", "b"], "kernel": [[0.7, 0.3], [0.2, 0.8]]}"#;
const PERIODIC: &str = r#"{"kernel": [[0, 1], [1, 0]]}"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ergobound"))
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json_of(out: &Output) -> Value {
    assert!(out.status.success(), "status {:?}, stderr: {}", out.status, String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json report")
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| panic!("not a number: {v}"))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn tv_profile_of_two_state_chain_halves() {
    let d = TempDir::new().unwrap();
    let c = write(&d, "c2.json", C2);
    let r = json_of(&run(&["tv-profile", "--chain", p(&c), "--n", "10"]));
    let tv = r["tv"].as_array().unwrap();
    assert_eq!(tv.len(), 11);
    for (n, v) in tv.iter().enumerate() {
        let want = 1.2 * 0.5f64.powi(n as i32);
        assert!(rel(f(v), want) < 1e-12, "n={n}: {v}");
    }
}

#[test]
fn hitmoment_example_values() {
    let d = TempDir::new().unwrap();
    let c = write(&d, "c2.json", C2);
    let r = json_of(&run(&["bound", "--name", "hitmoment", "--chain", p(&c), "--set", "1", "--lambda", "1.1"]));
    assert_eq!(r["feasibility"]["feasible"], Value::Bool(true));
    // 1.1 / (1 - (10/3) log 1.1)
    let m = 10.0 / 3.0;
    let want = 1.1 / (1.0 - m * 1.1f64.ln());
    assert!(rel(f(&r["M_bound"]), want) < 1e-12);
    assert!(rel(f(&r["M_bound"]), 1.61219) < 1e-5);
    // sup_x E_x[1.1^tau] is attained at x = 0, where u = 1.1 (0.3 + 0.7 u)
    assert!(rel(f(&r["exact_sup"]), 0.33 / 0.23) < 1e-12);
    assert!(f(&r["exact_sup"]) < f(&r["M_bound"]));
}

#[test]
fn reports_carry_the_reproducibility_header() {
    let d = TempDir::new().unwrap();
    let c = write(&d, "c2.json", C2);
    let r = json_of(&run(&["stationary", "--chain", p(&c)]));
    assert_eq!(r["tool"], "ergobound");
    assert_eq!(r["schema"], "ergobound-report/1");
    assert_eq!(r["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(r["command"], "stationary");
    assert_eq!(r["parameters"]["chain"], p(&c));
    assert!((f(&r["pi"][0]) - 0.4).abs() < 1e-12);
    assert_eq!(r["reversibility"]["reversible"], Value::Bool(true));
    assert!((f(&r["dobrushin"]) - 0.5).abs() < 1e-12);
    assert!(f(&r["power_iteration"]["l1_gap"]) < 1e-10);
}

#[test]
fn verify_example_passes() {
    let out =
        run(&["verify", "--bound", "atomic_rate", "--recipe", "lazy_reversible", "--trials", "20", "--seed", "7"]);
    let r = json_of(&out);
    assert_eq!(r["violations"], 0);
    assert_eq!(r["passed"], Value::Bool(true));
    assert!(r["sweeps"][0]["feasible"].as_u64().unwrap() > 0);
}

#[test]
fn verify_is_deterministic_across_thread_counts() {
    let args = ["verify", "--bound", "general_perturbation,dobrushin", "--trials", "12", "--seed", "3"];
    let one = run(&[&args[..], &["--threads", "1"]].concat());
    let many = run(&[&args[..], &["--threads", "4"]].concat());
    assert!(one.status.success() && many.status.success());
    assert_eq!(one.stdout, many.stdout);
}

#[test]
fn verify_runs_identity_and_audit_suites() {
    let r = json_of(&run(&["verify", "--bound", "hitmoment", "--trials", "5", "--identities", "5", "--audit", "50"]));
    assert_eq!(r["passed"], Value::Bool(true));
    assert_eq!(r["audit"]["dishonest"], 0);
    assert!(r["identities"].as_array().unwrap().iter().all(|i| i["complete"] == Value::Bool(true)));
}

#[test]
fn split_output_round_trips() {
    let d = TempDir::new().unwrap();
    let c = write(&d, "c2.json", C2);
    let out = d.path().join("split.json");
    let s = run(&["split", "--chain", p(&c), "--set", "0,1", "--out", p(&out)]);
    assert!(s.status.success(), "{}", String::from_utf8_lossy(&s.stderr));
    let side: Value = serde_json::from_str(&fs::read_to_string(d.path().join("split.sidecar.json")).unwrap()).unwrap();
    assert!((f(&side["delta"]) - 0.5).abs() < 1e-12);
    assert_eq!(side["atom"], serde_json::json!([2, 3]));
    let r = json_of(&run(&["stationary", "--chain", p(&out)]));
    assert_eq!(r["n_states"], 4);
    let pi: Vec<f64> = r["pi"].as_array().unwrap().iter().map(f).collect();
    let split_pi: Vec<f64> = side["split_pi"].as_array().unwrap().iter().map(f).collect();
    for (a, b) in pi.iter().zip(&split_pi) {
        assert!((a - b).abs() < 1e-12);
    }
    // the atom of the split chain is a genuine atom
    let b =
        json_of(&run(&["bound", "--name", "hitmoment", "--chain", p(&out), "--set", "a#1,b#1", "--lambda", "1.01"]));
    assert_eq!(b["feasibility"]["feasible"], Value::Bool(true));
}

#[test]
fn explicit_sidecar_path_is_used() {
    let d = TempDir::new().unwrap();
    let c = write(&d, "c3.json", r#"{"kernel": [[0.2,0.3,0.5],[0.3,0.4,0.3],[0.5,0.3,0.2]]}"#);
    let side = d.path().join("meta.json");
    let s = run(&["split", "--chain", p(&c), "--set", "0,1", "--sidecar", p(&side)]);
    assert!(s.status.success());
    let doc: Value = serde_json::from_slice(&s.stdout).unwrap();
    assert_eq!(doc["kernel"].as_array().unwrap().len(), 5);
    assert_eq!(doc["labels"][3], "0#1");
    let meta: Value = serde_json::from_str(&fs::read_to_string(side).unwrap()).unwrap();
    assert!((f(&meta["delta"]) - 0.8).abs() < 1e-12);
    assert_eq!(meta["dead_states_unreachable"], Value::Bool(true));
}

#[test]
fn input_errors_exit_with_two() {
    let d = TempDir::new().unwrap();
    let c = write(&d, "c2.json", C2);
    let bad = write(&d, "bad.json", r#"{"kernel": [[0.5, 0.6], [0.5, 0.5]]}"#);
    let garbage = write(&d, "garbage.json", "not json");
    let cases: Vec<Vec<&str>> = vec![
        vec!["stationary", "--chain", p(&bad)],
        vec!["stationary", "--chain", p(&garbage)],
        vec!["stationary", "--chain", "/nonexistent/chain.json"],
        vec!["hitting", "--chain", p(&c), "--set", "7"],
        vec!["hitting", "--chain", p(&c), "--set", "z"],
        vec!["bound", "--name", "nope", "--chain", p(&c), "--set", "1"],
        vec!["bound", "--name", "hitmoment", "--chain", p(&c), "--set", "1", "--lambda", "x"],
        vec![
            "bound",
            "--name",
            "nonatomic_rate",
            "--chain",
            p(&c),
            "--set",
            "0,1",
            "--delta",
            "0.9",
            "--nu",
            "0.5,0.5",
        ],
        vec!["split", "--chain", p(&c), "--set", "0", "--format", "csv"],
        vec!["verify", "--bound", "dobrushin", "--recipe", "unknown"],
        vec!["tv-profile", "--chain", p(&c), "--n", "-1"],
        vec!["frobnicate"],
    ];
    for args in cases {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(!out.stderr.is_empty());
        assert!(out.stdout.is_empty(), "{args:?}");
    }
}

#[test]
fn infeasible_bounds_are_data() {
    let d = TempDir::new().unwrap();
    let c = write(&d, "periodic.json", PERIODIC);
    let r = json_of(&run(&["bound", "--name", "dobrushin", "--chain", p(&c), "--set", "0"]));
    assert_eq!(r["feasibility"]["feasible"], Value::Bool(false));
    assert_eq!(r["feasibility"]["precondition"], Value::Bool(false));
    assert!(r["feasibility"]["reason"].as_str().unwrap().contains("Dobrushin"));
    let r = json_of(&run(&["bound", "--name", "atomic_rate", "--chain", p(&c), "--set", "0"]));
    assert_eq!(r["feasibility"]["feasible"], Value::Bool(false));
    assert_eq!(r["feasibility"]["precondition"], Value::Bool(true));
    let c2 = write(&d, "c2.json", C2);
    let r = json_of(&run(&["bound", "--name", "hitmoment", "--chain", p(&c2), "--set", "1", "--lambda", "2"]));
    assert_eq!(r["feasibility"]["feasible"], Value::Bool(false));
    assert!(r["points"][0]["reason"].as_str().unwrap().contains("window"));
}

#[test]
fn csv_curves_have_the_documented_header() {
    let d = TempDir::new().unwrap();
    let c = write(&d, "c2.json", C2);
    let base = ["bound", "--name", "atomic_rate", "--chain", p(&c), "--set", "1", "--n", "20", "--format", "csv"];
    let with = run(&[&base[..], &["--with-exact"]].concat());
    assert!(with.status.success());
    let text = String::from_utf8(with.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,bound,exact"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 21);
    for r in &rows {
        assert!(r[1] + 1e-9 >= r[2], "{r:?}");
    }
    let without = run(&base);
    assert!(String::from_utf8(without.stdout).unwrap().starts_with("n,bound\n"));
}

#[test]
fn perturb_against_a_file() {
    let d = TempDir::new().unwrap();
    let c = write(&d, "c2.json", C2);
    let t = write(&d, "tilde.json", r#"{"kernel": [[0.69, 0.31], [0.21, 0.79]]}"#);
    let r = json_of(&run(&["perturb", "--chain", p(&c), "--set", "1", "--perturbed", p(&t)]));
    assert!((f(&r["dp"]) - 0.02).abs() < 1e-12);
    // pi~ = (0.21/0.52, 0.31/0.52)
    let want = 2.0 * (0.21 / 0.52 - 0.4f64).abs();
    assert!((f(&r["exact"]["stationary"]) - want).abs() < 1e-12);
    assert_eq!(r["all_hold"], Value::Bool(true));
    let feasible = r["bounds"].as_array().unwrap().iter().filter(|b| b["status"] == "feasible").count();
    assert!(feasible >= 5);
}

#[test]
fn random_perturbation_is_seeded_and_saved() {
    let d = TempDir::new().unwrap();
    let c = write(&d, "c2.json", C2);
    let saved = d.path().join("tilde.json");
    let args = ["perturb", "--chain", p(&c), "--set", "0", "--epsilon", "0.05", "--seed", "11", "--bound", "dobrushin"];
    let a = run(&[&args[..], &["--write-perturbed", p(&saved)]].concat());
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let r =
        json_of(&run(&["perturb", "--chain", p(&c), "--set", "0", "--perturbed", p(&saved), "--bound", "dobrushin"]));
    let first: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert!((f(&r["dp"]) - f(&first["dp"])).abs() < 1e-15);
}

#[test]
fn moments_report_divergence_per_lambda() {
    let d = TempDir::new().unwrap();
    let c = write(&d, "c2.json", C2);
    let r = json_of(&run(&["moments", "--chain", p(&c), "--set", "1", "--lambda", "1.1,5"]));
    let m = r["moments"].as_array().unwrap();
    assert!(rel(f(&m[0]["tau_moment"][1]), 1.195652) < 1e-5);
    assert!(rel(f(&m[0]["L"]), 1.195652) < 1e-5);
    assert_eq!(m[1]["finite"], Value::Bool(false));
}

#[test]
fn hitting_and_squared_reports() {
    let d = TempDir::new().unwrap();
    let c = write(&d, "c2.json", C2);
    let r = json_of(&run(&["hitting", "--chain", p(&c), "--set", "b", "--law-horizon", "5"]));
    assert!(rel(f(&r["M"]), 10.0 / 3.0) < 1e-12);
    assert!((f(&r["kac_sum"]) - 1.0).abs() < 1e-12);
    assert_eq!(r["return_law"]["F"].as_array().unwrap().len(), 5);
    let s = json_of(&run(&["squared", "--chain", p(&c), "--set", "1"]));
    assert!((f(&s["delta_bar"]) - 0.8).abs() < 1e-12);
    assert!((f(&s["atom_measure"][0]) - 0.3).abs() < 1e-12);
}

#[test]
fn out_flag_writes_the_report_file() {
    let d = TempDir::new().unwrap();
    let c = write(&d, "c2.json", C2);
    let out = d.path().join("tv.csv");
    let o = run(&["tv-profile", "--chain", p(&c), "--n", "3", "--format", "csv", "--out", p(&out)]);
    assert!(o.status.success() && o.stdout.is_empty());
    assert_eq!(fs::read_to_string(out).unwrap().lines().next(), Some("n,tv"));
}

fn schema() -> Value {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/schemas/v1/report.schema.json");
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

/// Top-level and per-command `required` keys of the report schema.
fn assert_matches_schema(report: &Value) {
    let s = schema();
    let mut required: Vec<&str> = s["required"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    let command = report["command"].as_str().unwrap();
    let branch = s["allOf"]
        .as_array()
        .unwrap()
        .iter()
        .find(|b| b["if"]["properties"]["command"]["const"] == command)
        .unwrap_or_else(|| panic!("no schema branch for {command}"));
    required.extend(branch["then"]["required"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()));
    assert_eq!(report["schema"], s["properties"]["schema"]["const"]);
    for k in required {
        assert!(report.get(k).is_some(), "{command} report lacks {k}");
    }
}

#[test]
fn reports_match_the_documented_schema() {
    let d = TempDir::new().unwrap();
    let c = write(&d, "c2.json", C2);
    let c = p(&c);
    let out = d.path().join("split.json");
    let runs: Vec<Vec<&str>> = vec![
        vec!["stationary", "--chain", c],
        vec!["tv-profile", "--chain", c, "--n", "4"],
        vec!["hitting", "--chain", c, "--set", "1"],
        vec!["moments", "--chain", c, "--set", "1", "--lambda", "1.1"],
        vec!["squared", "--chain", c, "--set", "1"],
        vec!["bound", "--name", "atomic_rate", "--chain", c, "--set", "1", "--dp", "0.01"],
        vec!["perturb", "--chain", c, "--set", "1"],
        vec!["verify", "--bound", "dobrushin", "--trials", "2"],
    ];
    for args in runs {
        assert_matches_schema(&json_of(&run(&args)));
    }
    assert!(run(&["split", "--chain", c, "--set", "0,1", "--out", p(&out)]).status.success());
    let side: Value = serde_json::from_str(&fs::read_to_string(d.path().join("split.sidecar.json")).unwrap()).unwrap();
    assert_matches_schema(&side);
}
