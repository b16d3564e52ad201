use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use relay_placement::cli::{read_policy_file, SimulateRecord, SolveRecord};
use relay_placement::model::Instance;
use relay_placement::osla::solve_unconstrained;
use relay_placement::sim::{episode_rng, run_episode, Policy};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relay-placement"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn csv_rows(text: &str) -> (String, Vec<Vec<f64>>) {
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    let rows = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn solve_record_for_anchor_instance() {
    let out = stdout(&bin(&["solve", "--p", "0.02", "--q", "0.5", "--lambda", "41", "--eta", "3"]));
    let rec: SolveRecord = serde_json::from_str(&out).unwrap();
    assert!((120.0..=180.0).contains(&rec.g_star), "{}", rec.g_star);
    assert_eq!(rec.boundary.len(), rec.set.rows().len());
    let inst = Instance::power(0.02, 0.5, 41.0, 0.1, 0.01, 3.0).unwrap();
    assert_eq!(rec.set, solve_unconstrained(&inst).unwrap().optimal_set);
}

#[test]
fn solve_file_round_trips_through_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("solve.json");
    let file_s = file.to_str().unwrap();
    let common = ["--p", "0.02", "--q", "0.5", "--lambda", "41"];
    let mut args = vec!["solve", "--out", file_s];
    args.extend(common);
    stdout(&bin(&args));

    let policy = read_policy_file(Path::new(&file)).unwrap();
    let inst = Instance::power(0.02, 0.5, 41.0, 0.1, 0.01, 2.0).unwrap();
    assert_eq!(policy, Policy::from(solve_unconstrained(&inst).unwrap().optimal_set));

    let run = |policy: &str| -> SimulateRecord {
        let mut args = vec!["simulate", "--policy", policy, "--episodes", "2000", "--seed", "5"];
        args.extend(common);
        serde_json::from_str(&stdout(&bin(&args))).unwrap()
    };
    let from_file = run(&format!("file:{file_s}"));
    let optimal = run("optimal");
    assert_eq!(from_file.estimate, optimal.estimate);
    assert_eq!(from_file.first_episode, optimal.first_episode);
    let offline = run_episode(&policy, &inst.path, &inst.cost, &mut episode_rng(5, 0));
    assert_eq!(from_file.first_episode, offline);
}

#[test]
fn certain_termination_simulates_one_step() {
    let out = stdout(&bin(&[
        "simulate", "--policy", "optimal", "--episodes", "1", "--seed", "7", "--p", "1", "--q", "0.5", "--lambda", "1",
    ]));
    let rec: SimulateRecord = serde_json::from_str(&out).unwrap();
    assert_eq!(rec.first_episode.steps, 1);
    assert_eq!(rec.first_episode.relays, 0);
    assert_eq!(rec.estimate.episodes, 1);
    assert_eq!(rec.estimate.mean_relays.value, 0.0);
}

#[test]
fn simulate_accepts_heuristic_and_constrained_policies() {
    let common = ["--p", "0.5", "--q", "1", "--lambda", "0", "--episodes", "500"];
    let mut args = vec!["simulate", "--policy", "heuristic:3"];
    args.extend(common);
    let rec: SimulateRecord = serde_json::from_str(&stdout(&bin(&args))).unwrap();
    assert!(rec.analytic_g.is_some());
    let mut args = vec!["simulate", "--policy", "constrained:0.04"];
    args.extend(common);
    let rec: SimulateRecord = serde_json::from_str(&stdout(&bin(&args))).unwrap();
    assert!(rec.analytic_g.is_none());
    let mut args = vec!["simulate", "--policy", "bogus"];
    args.extend(common);
    assert_eq!(bin(&args).status.code(), Some(2));
}

#[test]
fn sweep_q_is_symmetric() {
    let (header, rows) = csv_rows(&stdout(&bin(&["sweep-q", "--p", "0.002", "--lambda", "100", "--points", "10"])));
    assert_eq!(header, "q,j");
    assert_eq!(rows.len(), 11);
    for i in 0..rows.len() {
        let (a, b) = (&rows[i], &rows[rows.len() - 1 - i]);
        assert!((a[0] + b[0] - 1.0).abs() < 1e-12);
        assert!((a[1] - b[1]).abs() <= 1e-9 * a[1], "{a:?} {b:?}");
    }
}

#[test]
fn csv_headers_and_shapes() {
    let (h, rows) = csv_rows(&stdout(&bin(&["scan-g", "--p", "0.02", "--q", "0.5", "--lambda", "41", "--points", "50"])));
    assert_eq!(h, "h,g_h");
    assert_eq!(rows.len(), 51);

    let (h, rows) = csv_rows(&stdout(&bin(&[
        "sweep-lambda", "--p", "0.02", "--q", "0.5", "--lambda-max", "60", "--points", "12",
    ])));
    assert_eq!(h, "lambda,en,ec,j");
    assert_eq!(rows.len(), 13);
    assert!(rows.windows(2).all(|w| w[1][1] <= w[0][1]));

    let (h, rows) = csv_rows(&stdout(&bin(&[
        "boundaries", "--p", "0.02", "--q", "0.5", "--lambda", "41", "--etas", "2,3",
    ])));
    assert_eq!(h, "eta,n,m_star");
    assert!(rows.iter().any(|r| r[0] == 2.0) && rows.iter().any(|r| r[0] == 3.0));

    let (h, rows) = csv_rows(&stdout(&bin(&[
        "heuristic", "--p", "0.02", "--q", "0.5", "--rhos", "0.5,1,2",
    ])));
    assert_eq!(h, "rho,cost_opt,cost_heur");
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r[2] >= r[1] - 1e-9));
}

#[test]
fn constrained_record_and_infeasible_status() {
    let out = stdout(&bin(&["constrained", "--p", "0.5", "--q", "1", "--rho", "0.04"]));
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["kind"], "mixed");
    assert!((v["achieved_relays"].as_f64().unwrap() - 0.04).abs() < 1e-12);

    let out = bin(&["constrained", "--p", "0.002", "--q", "0.5", "--rho", "1e-300"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("infeasible"));
}

#[test]
fn usage_errors() {
    let out = bin(&["solve", "--p", "1.5", "--q", "0.5", "--lambda", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`p`"));
    assert_eq!(bin(&["solve", "--q", "0.5"]).status.code(), Some(2));
    assert_eq!(bin(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn verify_single_instance() {
    let out = bin(&["verify", "--p", "0.5", "--q", "0.3", "--lambda", "1", "--eta", "3"]);
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["passed"], true);
    assert!(String::from_utf8_lossy(&out.stderr).contains("PASS"));
}
