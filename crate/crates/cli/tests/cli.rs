//! End-to-end runs of the `leh` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use leh::network::build_sir_named;

fn leh(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_leh")).args(args).output().expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const CELL_BETA: &str = "--beta=5.30,1.10,-0.11,-0.22,-0.22,-1.61";

#[test]
fn simulate_writes_trajectory_events_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    ok(&leh(&[
        "simulate", "--network", "builtin:cell-diff", CELL_BETA, "--y0", "50,100,100,200",
        "--jump", "10", "--n-intervals", "5", "--seed", "3", "--out", p(&out),
    ]));
    let traj = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert_eq!(traj.lines().count(), 7);
    assert!(traj.starts_with("time,A,B,C,D\n0,50,100,100,200\n"));
    let events = fs::read_to_string(out.join("events.csv")).unwrap();
    assert_eq!(events.lines().count(), 51);

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "simulate");
    assert_eq!(manifest["seed"], 3);
    use sha2::Digest;
    let digest = hex::encode(sha2::Sha256::digest(traj.as_bytes()));
    assert!(manifest["outputs"].as_array().unwrap().iter().any(|o| o["sha256"] == digest.as_str()));
}

#[test]
fn jump_one_keeps_every_event() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    ok(&leh(&[
        "simulate", "--network", "builtin:cell-diff", CELL_BETA, "--y0", "50,100,100,200",
        "--events", "40", "--jump", "1", "--out", p(&out),
    ]));
    let traj = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let events = fs::read_to_string(out.join("events.csv")).unwrap();
    let traj_times: Vec<&str> = traj.lines().skip(2).map(|l| l.split(',').next().unwrap()).collect();
    let event_times: Vec<&str> = events.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(traj_times, event_times);
}

#[test]
fn missing_beta_is_a_usage_error() {
    let out = leh(&["simulate", "--network", "builtin:cell-diff", "--y0", "1,2,3,4", "--horizon", "1", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--beta"));
}

#[test]
fn fit_runs_both_estimators_and_rejects_fractional_counts() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    ok(&leh(&[
        "simulate", "--network", "builtin:cell-diff", CELL_BETA, "--y0", "50,100,100,200",
        "--jump", "30", "--n-intervals", "20", "--seed", "5", "--out", p(&sim),
    ]));
    let data = sim.join("trajectory.csv");
    let lla = dir.path().join("lla.json");
    ok(&leh(&["fit", "--network", "builtin:cell-diff", "--data", p(&data), "--estimator", "lla", "--out", p(&lla)]));
    let em = dir.path().join("em.json");
    ok(&leh(&["fit", "--network", "builtin:cell-diff", "--data", p(&data), "--init", p(&lla), "--out", p(&em)]));
    let fit: serde_json::Value = serde_json::from_str(&fs::read_to_string(&em).unwrap()).unwrap();
    assert_eq!(fit["estimator"], "em");
    assert_eq!(fit["beta_hat"].as_array().unwrap().len(), 6);
    assert!(fit["bic"].is_number());
    assert!(dir.path().join("em.manifest.json").exists());

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "time,A,B,C,D\n0,1,2,3,4\n1,1.5,2,3,4\n").unwrap();
    let out = leh(&["fit", "--network", "builtin:cell-diff", "--data", p(&bad), "--out", p(&dir.path().join("f.json"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not a nonnegative integer"));
}

#[test]
fn select_prefers_tied_sir_on_tied_data() {
    let dir = tempfile::tempdir().unwrap();
    let regions: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let net_file = dir.path().join("tied.net");
    fs::write(&net_file, build_sir_named(&regions, true).unwrap().to_text()).unwrap();
    let sim = dir.path().join("sim");
    ok(&leh(&[
        // Parameters of the parsed file come in order of first use:
        // infect_a, recover, death, infect_b, infect_c.
        "simulate", "--network", p(&net_file), "--beta=-1.897,-2.303,-3.912,-1.966,-1.833",
        "--y0", "500,0,0,500,0,0,500,0,0", "--horizon", "30", "--dt", "1", "--seed", "2", "--out", p(&sim),
    ]));
    let sel = dir.path().join("select.json");
    let out = leh(&[
        "select", "--data", p(&sim.join("trajectory.csv")), "--network", "sir-tied", "--network", "sir-untied",
        "--out", p(&sel),
    ]);
    ok(&out);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "sir-tied");
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&sel).unwrap()).unwrap();
    assert_eq!(v["models"].as_array().unwrap().len(), 2);
    assert_eq!(v["n_intervals"], 30);
}

#[test]
fn select_names_missing_column() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    fs::write(&data, "time,A,B\n0,1,2\n1,2,3\n").unwrap();
    let out = leh(&["select", "--data", p(&data), "--network", "builtin:cell-diff", "--out", p(&dir.path().join("s.json"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("column") && err.contains('C'), "{err}");
}

#[test]
fn ingest_pivots_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("covid.csv");
    fs::write(
        &input,
        "date,region,I,R,D\n\
         2020-03-08,x,1,0,0\n2020-03-08,y,2,0,0\n\
         2020-03-09,x,3,1,0\n2020-03-09,y,4,0,1\n\
         2020-03-10,x,5,1,0\n2020-03-10,y,6,1,1\n\
         2020-03-11,x,7,2,1\n2020-03-11,y,9,1,1\n",
    )
    .unwrap();
    let out = dir.path().join("traj.csv");
    ok(&leh(&["ingest", "--input", p(&input), "--from", "2020-03-09", "--to", "2020-03-11", "--out", p(&out)]));
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(
        text,
        "time,I_x,R_x,D_x,I_y,R_y,D_y\n0,3,1,0,4,0,1\n1,5,1,0,6,1,1\n2,7,2,1,9,1,1\n"
    );
    let back = leh::io::read_trajectory(text.as_bytes()).unwrap();
    let mut again = Vec::new();
    leh::io::write_trajectory(&back, &mut again).unwrap();
    assert_eq!(String::from_utf8(again).unwrap(), text);

    let shuffled = dir.path().join("bad.csv");
    fs::write(&shuffled, "date,region,I,R,D\n2020-03-09,x,1,0,0\n2020-03-08,x,1,0,0\n").unwrap();
    let res = leh(&["ingest", "--input", p(&shuffled), "--out", p(&dir.path().join("t.csv"))]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn study_dry_run_and_validation() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let out = leh(&["study", "--config", p(&root.join("comparison.toml")), "--dry-run"]);
    ok(&out);
    let plan = String::from_utf8(out.stdout).unwrap();
    assert_eq!(plan.lines().count(), 11);
    assert!(plan.contains("comparison,cell-diff,50,30,100"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "jumps = [0, 10]\n").unwrap();
    let res = leh(&["study", "--config", p(&bad), "--dry-run"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("jump"));
}

#[test]
fn systems_listing_parses_back() {
    let out = leh(&["systems", "reactions-12"]);
    ok(&out);
    let net = leh::parse_network(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!((net.n_species(), net.n_reactions(), net.n_params()), (6, 12, 6));
}
