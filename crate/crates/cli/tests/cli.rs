use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const THREE_SITE: &str = r#"{
  "n": 3, "active_site": 1,
  "selection": {"s": 0.8},
  "mutation": {"u": [0.1, 0.1, 0.1]},
  "recombination": {"mode": "single_crossover", "rates": [0.5, 0.25]},
  "initial": {"weights": [0.30, 0.02, 0.05, 0.13, 0.08, 0.12, 0.25, 0.05]},
  "t": 1.0
}"#;

const GENERAL: &str = r#"{
  "n": 3, "active_site": 1,
  "selection": {"s": 0.5},
  "recombination": {"mode": "general", "rates": [{"blocks": [[1, 3], [2]], "rate": 0.4}]},
  "initial": "uniform",
  "t": 1.0
}"#;

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        Self { dir: tempfile::tempdir().unwrap() }
    }

    fn file(&self, name: &str, text: &str) -> PathBuf {
        let p = self.dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn psireco(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_psireco")).args(args).output().unwrap()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stderr)))
}

#[test]
fn validate_passes_and_reports_every_route() {
    let fx = Fixture::new();
    let sc = fx.file("s.json", THREE_SITE);
    let out = psireco(&["validate", "--scenario", arg(&sc), "--seed", "9", "--replicates", "20000"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&out);
    assert_eq!(report["pass"], true);
    let routes: Vec<&str> = report["routes"].as_array().unwrap().iter().map(|r| r["route"].as_str().unwrap()).collect();
    assert_eq!(routes, ["ode", "recursion", "closedform", "glpp", "aig"]);
    assert_eq!(report["pairs"].as_array().unwrap().len(), 10);
    assert!(report["routes"][0].get("seconds").is_none());
}

#[test]
fn report_is_byte_identical_across_runs_and_thread_counts() {
    let fx = Fixture::new();
    let sc = fx.file("s.json", THREE_SITE);
    let run =
        |threads: &str| psireco(&["validate", "--scenario", arg(&sc), "--seed", "5", "--replicates", "5000", "--threads", threads]).stdout;
    let one = run("1");
    assert!(!one.is_empty());
    assert_eq!(one, run("1"));
    assert_eq!(one, run("3"));
}

#[test]
fn failing_comparison_exits_one() {
    let fx = Fixture::new();
    let sc = fx.file("s.json", THREE_SITE);
    let out = psireco(&[
        "validate",
        "--scenario",
        arg(&sc),
        "--routes",
        "ode,glpp",
        "--replicates",
        "200",
        "--mc-floor",
        "0",
        "--mc-sigmas",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["pass"], false);
}

#[test]
fn skipped_routes_fail_only_when_required() {
    let fx = Fixture::new();
    let sc = fx.file("g.json", GENERAL);
    let base = ["validate", "--scenario", arg(&sc), "--routes", "ode,recursion,glpp", "--replicates", "20000"];
    let out = psireco(&base);
    assert_eq!(out.status.code(), Some(0));
    let report = json(&out);
    assert_eq!(report["routes"][1]["status"], "skipped");

    let mut required = base.to_vec();
    required.extend(["--require", "recursion"]);
    assert_eq!(psireco(&required).status.code(), Some(1));
}

#[test]
fn full_mutation_without_envelope_is_skipped() {
    let fx = Fixture::new();
    let sc = fx.file("s.json", THREE_SITE);
    let out = psireco(&["validate", "--scenario", arg(&sc), "--routes", "ode,recursion", "--no-envelope"]);
    assert_eq!(out.status.code(), Some(0));
    let report = json(&out);
    assert_eq!(report["routes"][1]["status"], "skipped");
    assert!(report["routes"][1]["reason"].as_str().unwrap().contains("assumption"));

    let out = psireco(&["recursion", "--scenario", arg(&sc), "--no-envelope"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn configuration_errors_exit_two() {
    let fx = Fixture::new();
    let bad = fx.file(
        "bad.json",
        r#"{"n":2,"active_site":1,"recombination":{"mode":"single_crossover","rates":[1.0,2.0]},"initial":"uniform","t":1}"#,
    );
    let out = psireco(&["solve", "--scenario", arg(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/recombination/rates"));

    let sc = fx.file("s.json", THREE_SITE);
    assert_eq!(psireco(&["solve"]).status.code(), Some(2));
    assert_eq!(psireco(&["solve", "--scenario", arg(&fx.path("missing.json"))]).status.code(), Some(2));
    assert_eq!(psireco(&["validate", "--scenario", arg(&sc), "--routes", "bogus"]).status.code(), Some(2));
    assert_eq!(psireco(&["solve", "--scenario", arg(&sc), "--t", "-1"]).status.code(), Some(2));
    assert_eq!(psireco(&["glpp", "--scenario", arg(&sc), "--labels", "yule"]).status.code(), Some(2));
    assert_eq!(psireco(&["recursion", "--scenario", arg(&sc), "--ordering", "2,1,3"]).status.code(), Some(2));
}

#[test]
fn event_log_is_one_json_object_per_line() {
    let fx = Fixture::new();
    let sc = fx.file("s.json", THREE_SITE);
    let log = fx.path("events.jsonl");
    let out = psireco(&["glpp", "--scenario", arg(&sc), "--t", "6", "--replicates", "50", "--seed", "1", "--log-events", arg(&log)]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&log).unwrap();
    let events: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(!events.is_empty());
    let mut last = 0.0;
    for e in &events {
        let t = e["t"].as_f64().unwrap();
        assert!(t > last && t <= 6.0);
        last = t;
        assert!(!e["block"].as_array().unwrap().is_empty());
        assert_eq!(e["B"].as_array().unwrap().len(), 3);
    }
    let again = fx.path("again.jsonl");
    psireco(&["glpp", "--scenario", arg(&sc), "--t", "6", "--replicates", "50", "--seed", "1", "--log-events", arg(&again)]);
    assert_eq!(text, std::fs::read_to_string(&again).unwrap());
}

#[test]
fn deterministic_subcommands_agree() {
    let fx = Fixture::new();
    let sc = fx.file("s.json", THREE_SITE);
    let weights = |args: &[&str]| -> Vec<f64> {
        let out = psireco(args);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        serde_json::from_value(json(&out)["distribution"]["weights"].clone()).unwrap()
    };
    let ode = weights(&["solve", "--scenario", arg(&sc), "--t", "2"]);
    let rec = weights(&["recursion", "--scenario", arg(&sc), "--t", "2", "--ordering", "1,2,3"]);
    let cf = weights(&["closedform", "--scenario", arg(&sc), "--t", "2"]);
    for (a, (b, c)) in ode.iter().zip(rec.iter().zip(&cf)) {
        assert!((a - b).abs() < 1e-6 && (a - c).abs() < 1e-6);
    }
}

#[test]
fn csv_outputs() {
    let fx = Fixture::new();
    let sc = fx.file("s.json", THREE_SITE);
    let out_path = fx.path("traj.csv");
    let out = psireco(&["solve", "--scenario", arg(&sc), "--times", "0,0.5,1", "--format", "csv", "--out", arg(&out_path)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&out_path).unwrap();
    let mut rows = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(rows.headers().unwrap().len(), 9);
    assert_eq!(rows.records().count(), 3);

    let out = psireco(&["aig", "--scenario", arg(&sc), "--estimate", "--replicates", "1000", "--format", "csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("index,type,mean,stderr\n0,\"(0,0,0)\","));
    assert_eq!(text.lines().count(), 9);
}

#[test]
fn aig_exports_a_graph() {
    let fx = Fixture::new();
    let sc = fx.file("s.json", THREE_SITE);
    let dot = fx.path("g.dot");
    let out = psireco(&["aig", "--scenario", arg(&sc), "--t", "3", "--seed", "4", "--export-dot", arg(&dot)]);
    assert_eq!(out.status.code(), Some(0));
    let summary = json(&out);
    let lines = summary["lines"].as_array().unwrap().len();
    assert_eq!(lines, summary["events"].as_array().unwrap().len() + 1);
    let text = std::fs::read_to_string(&dot).unwrap();
    assert!(text.starts_with("digraph"));
    assert!(text.matches("leaf").count() >= lines);
}

#[test]
fn check_assumptions_separates_psi_from_bullet() {
    let fx = Fixture::new();
    let sc = fx.file("s.json", THREE_SITE);
    let v = json(&psireco(&["check-assumptions", "--scenario", arg(&sc)]));
    assert_eq!(v["psi_satisfied"], false);
    assert_eq!(v["psi_bullet_satisfied"], true);
    assert!(v["psi"]["multiplicativity"].as_f64().unwrap() > 0.01);
}
