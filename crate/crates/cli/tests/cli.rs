use std::io::Write;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn graphsee(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graphsee"))
        .args(args)
        .env_remove("GRAPHSEE_SEED")
        .output()
        .expect("binary runs")
}

fn summary(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).expect("stderr is one JSON object")
}

fn csv(out: &Output) -> Vec<Vec<String>> {
    String::from_utf8(out.stdout.clone())
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn graph_info_on_bundled_club() {
    let out = graphsee(&["graph-info", "zkc"]);
    assert!(out.status.success());
    let s = summary(&out);
    assert_eq!(s["summary"]["n_nodes"], 34);
    assert_eq!(s["summary"]["n_edges"], 78);
    let l0 = s["summary"]["lambda0"].as_f64().unwrap();
    assert!((l0 - 0.132).abs() < 5e-4);
    let rows = csv(&out);
    assert_eq!(rows[0], ["node_id", "y", "degree", "z0"]);
    assert_eq!(rows.len(), 35);
}

#[test]
fn graph_info_reads_stdin() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_graphsee"))
        .args(["graph-info", "-"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(b"1 2\n2 3\n1 3\n").unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let l0 = summary(&out)["summary"]["lambda0"].as_f64().unwrap();
    assert!((l0 - 1.5).abs() < 1e-12);
}

#[test]
fn exit_codes() {
    assert_eq!(graphsee(&["graph-info", "/no/such/file"]).status.code(), Some(3));
    assert_eq!(graphsee(&["enf"]).status.code(), Some(2));
    assert_eq!(graphsee(&["enf", "zkc", "--link", "probit"]).status.code(), Some(2));
    assert_eq!(
        graphsee(&["snle", "zkc", "--sample", "2", "--gamma", "0"]).status.code(),
        Some(2)
    );
    assert_eq!(graphsee(&["snle", "zkc", "--sweep", "0.1:0.2"]).status.code(), Some(2));
}

#[test]
fn enf_classifier_summary() {
    let out = graphsee(&["enf", "zkc"]);
    assert!(out.status.success());
    let s = summary(&out);
    let psi = &s["summary"]["psi0"];
    assert!((psi[0].as_f64().unwrap() + 4.631).abs() < 0.05);
    assert!((psi[1].as_f64().unwrap() - 15.747).abs() < 0.16);
    assert_eq!(s["summary"]["misclassified"], 4);

    let tanh = summary(&graphsee(&["enf", "zkc", "--link", "tanh"]));
    assert!((tanh["summary"]["psi0"][1].as_f64().unwrap() - 7.874).abs() < 0.08);
}

#[test]
fn snle_modes() {
    let full = graphsee(&["snle", "zkc", "--lambda", "0.1", "--gamma", "0"]);
    assert!(full.status.success());
    let corr = summary(&full)["summary"]["corr_x0_z0"].as_f64().unwrap();
    assert!(corr.abs() > 0.99);

    let sweep = graphsee(&[
        "snle", "zkc", "--sweep", "0.1:1.9:0.1", "--variant", "plain", "--gamma", "0.0001",
    ]);
    let rows = csv(&sweep);
    assert_eq!(rows[0], ["lambda", "rank", "correlation"]);
    assert_eq!(rows.len(), 20);
    assert_eq!(rows[1][1], "33");

    let sample = graphsee(&[
        "snle", "zkc", "--sample", "1", "--gamma", "0.1", "--lambda", "0.1", "--variant",
        "looped", "--replicates", "2000",
    ]);
    let s = summary(&sample);
    let margin = s["summary"]["margin_xhat_mean"].as_f64().unwrap();
    assert!(margin > s["summary"]["margin_x0"].as_f64().unwrap());
    assert_eq!(csv(&sample)[0][..5], ["node_id", "y", "x0", "xhat_mean", "inclusion_count"]);
}

#[test]
fn trw_identical_walks_have_zero_variance() {
    let out = graphsee(&["trw", "zkc", "--walks", "2", "--seed-stride", "0", "--states", "2000"]);
    assert!(out.status.success());
    assert_eq!(summary(&out)["summary"]["xi_hat_variance"], 0.0);
}

#[test]
fn output_is_byte_identical_across_runs_and_threads() {
    let args = ["enf", "zkc", "--sample", "5", "--replicates", "500", "--seed", "9"];
    let a = graphsee(&[&args[..], &["--threads", "1"]].concat());
    let b = graphsee(&[&args[..], &["--threads", "4"]].concat());
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stderr, b.stderr);
}

#[test]
fn seed_comes_from_environment() {
    let run = |env: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_graphsee"));
        cmd.args(["snle", "zkc", "--sample", "2", "--replicates", "50"]);
        match env {
            Some(v) => cmd.env("GRAPHSEE_SEED", v),
            None => cmd.env_remove("GRAPHSEE_SEED"),
        };
        cmd.output().unwrap()
    };
    let from_env = run(Some("77"));
    assert_eq!(summary(&from_env)["seed"], 77);
    assert_eq!(from_env.stdout, graphsee(&["snle", "zkc", "--sample", "2", "--replicates", "50", "--seed", "77"]).stdout);
    assert_ne!(from_env.stdout, run(None).stdout);
}

#[test]
fn out_and_summary_files() {
    let dir = std::env::temp_dir().join(format!("graphsee-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let csv_path = dir.join("x.csv");
    let json_path = dir.join("s.json");
    let out = graphsee(&[
        "graph-info",
        "zkc",
        "--out",
        csv_path.to_str().unwrap(),
        "--summary",
        json_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty() && out.stderr.is_empty());
    assert!(std::fs::read_to_string(&csv_path).unwrap().starts_with("node_id,"));
    let s: Value = serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
    assert_eq!(s["command"], "graph-info");
    std::fs::remove_dir_all(&dir).unwrap();
}
