use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use salpchain::emit::{csv_header, NEES_HEADER, SNAPSHOT_HEADER};
use salpchain::run::RunArtifacts;
use salpchain::scenario::{default_scenario, Scenario};
use tempfile::TempDir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_salpchain"));
    cmd.env_remove("SALPCHAIN_SEED");
    cmd
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, scenario: &Scenario) -> PathBuf {
    let path = dir.join("scenario.json");
    fs::write(&path, scenario.to_json_pretty()).unwrap();
    path
}

fn short_scenario() -> Scenario {
    let mut s = default_scenario();
    s.sim.duration = 0.3;
    s
}

#[test]
fn scenario_command_is_byte_identical_across_invocations() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = run(bin().args(["paper-scenario", "--seed", "42", "--out"]).arg(out));
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for name in ["scenario.json", "trace.csv", "trace.json", "snapshots.csv"] {
        let x = fs::read(a.join(name)).unwrap();
        let y = fs::read(b.join(name)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{name} differs");
    }
    let csv = fs::read_to_string(a.join("trace.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), csv_header(3));
    assert_eq!(lines.count(), 101);
}

#[test]
fn observability_at_a_thrust_instant() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &default_scenario());
    let o = run(bin().arg("observability").arg(&cfg).args(["--at", "0.25"]));
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.lines().any(|l| l == "observable=true"), "{text}");
    assert!(text.lines().any(|l| l == "rank=12"), "{text}");

    let o = run(bin().arg("observability").arg(&cfg).args(["--at", "0.35"]));
    assert!(stdout(&o).lines().any(|l| l == "observable=false"));
}

#[test]
fn observability_sweep_is_csv() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &default_scenario());
    let o = run(bin().arg("observability").arg(&cfg).arg("--sweep"));
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "time,rank,observable,cond1_1,cond1_2,cond1_3,cond2_1,cond2_2,cond2_3"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 101);
    let observable: Vec<bool> = rows.iter().map(|r| r.split(',').nth(2).unwrap() == "1").collect();
    assert!(!observable[19] && observable[20] && observable[29] && !observable[30]);
}

#[test]
fn observability_needs_a_time_choice() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &default_scenario());
    let o = run(bin().arg("observability").arg(&cfg));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn monte_carlo_writes_runs_and_nees_table() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &short_scenario());
    let out = tmp.path().join("mc");
    let o = run(bin().arg("estimate").arg(&cfg).args(["--runs", "50", "--out"]).arg(&out));
    assert!(o.status.success(), "{}", stderr(&o));
    for k in 0..50 {
        assert!(out.join(format!("runs/run_{k:03}.csv")).is_file());
        assert!(out.join(format!("runs/run_{k:03}.json")).is_file());
    }
    let nees = fs::read_to_string(out.join("nees.csv")).unwrap();
    assert_eq!(nees.lines().next().unwrap(), NEES_HEADER);
    assert_eq!(nees.lines().count(), 1 + 31);
    assert!(stdout(&o).contains("NEES band"));
    let snapshots = fs::read_to_string(out.join("snapshots.csv")).unwrap();
    assert_eq!(snapshots.lines().next().unwrap(), SNAPSHOT_HEADER);
}

#[test]
fn simulate_leaves_filter_columns_empty() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &short_scenario());
    let out = tmp.path().join("sim");
    let o = run(bin().arg("simulate").arg(&cfg).arg("--out").arg(&out));
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("trace.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(header.len(), row.len());
    for (h, v) in header.iter().zip(&row) {
        let filter_column = h.starts_with("est_") || h.starts_with("bound3_") || *h == "nees";
        assert_eq!(v.is_empty(), filter_column, "column {h}");
    }
    let artifacts: RunArtifacts = salpchain::emit::read_json(&out.join("trace.json")).unwrap();
    assert!(artifacts.filter.is_none());
}

#[test]
fn seed_precedence() {
    let tmp = TempDir::new().unwrap();
    let mut scenario = short_scenario();
    scenario.sim.seed = 5;
    let cfg = write_config(tmp.path(), &scenario);
    let trace = |out: &str, env: Option<&str>, flag: Option<&str>| {
        let dir = tmp.path().join(out);
        let mut cmd = bin();
        cmd.arg("simulate").arg(&cfg).arg("--out").arg(&dir);
        if let Some(e) = env {
            cmd.env("SALPCHAIN_SEED", e);
        }
        if let Some(f) = flag {
            cmd.args(["--seed", f]);
        }
        let o = run(&mut cmd);
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(dir.join("trace.csv")).unwrap()
    };
    let config_seed = trace("c", None, None);
    let explicit_five = trace("f5", None, Some("5"));
    let env_seven = trace("e7", Some("7"), None);
    let flag_seven = trace("f7", None, Some("7"));
    let flag_over_env = trace("fe", Some("9"), Some("7"));
    assert_eq!(config_seed, explicit_five);
    assert_eq!(env_seven, flag_seven);
    assert_eq!(flag_over_env, flag_seven);
    assert_ne!(config_seed, flag_seven);
}

#[test]
fn malformed_config_exits_one_with_location() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("bad.json");
    let text = default_scenario().to_json_pretty().replacen("\"masses\": [", "\"masses\": [\"heavy\", ", 1);
    fs::write(&path, text).unwrap();
    let o = run(bin().arg("simulate").arg(&path).arg("--out").arg(tmp.path().join("o")));
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("chain.masses[0]"), "{err}");
    assert!(err.contains("line"), "{err}");

    let mut invalid = default_scenario();
    invalid.chain.inertias[2] = -1.0;
    let cfg = write_config(tmp.path(), &invalid);
    let o = run(bin().arg("simulate").arg(&cfg).arg("--out").arg(tmp.path().join("o")));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("chain.inertias[2]"), "{}", stderr(&o));

    let o = run(bin().arg("simulate").arg(tmp.path().join("missing.json")));
    assert_eq!(o.status.code(), Some(1));

    let o = run(bin().args(["simulate", "--seed", "x"]).arg(&cfg));
    assert_eq!(o.status.code(), Some(1));

    let valid = tmp.path().join("valid.json");
    fs::write(&valid, short_scenario().to_json_pretty()).unwrap();
    let o = run(bin().arg("simulate").arg(&valid).arg("--out").arg(tmp.path().join("o")).env("SALPCHAIN_SEED", "not-a-number"));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("SALPCHAIN_SEED"));
}

#[test]
fn unknown_flag_prints_usage() {
    let o = run(bin().args(["simulate", "--bogus"]));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"));
    let o = run(bin().arg("--help"));
    assert_eq!(o.status.code(), Some(0));
    for sub in ["simulate", "estimate", "observability", "paper-scenario"] {
        assert!(stdout(&o).contains(sub));
    }
}

#[test]
fn runtime_failure_exits_two() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &short_scenario());
    // A regular file where the output directory should go.
    let blocker = tmp.path().join("blocker");
    fs::write(&blocker, "").unwrap();
    let o = run(bin().arg("simulate").arg(&cfg).arg("--out").arg(blocker.join("out")));
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("blocker"));
}

#[test]
fn json_trace_round_trips_bit_exactly() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("p");
    let o = run(bin().args(["paper-scenario", "--seed", "3", "--out"]).arg(&out));
    assert!(o.status.success());
    let text = fs::read_to_string(out.join("trace.json")).unwrap();
    let artifacts: RunArtifacts = salpchain::emit::from_json(&text, "trace.json").unwrap();
    assert_eq!(salpchain::emit::to_json(&artifacts), text);
    let written: Scenario = Scenario::load(&out.join("scenario.json")).unwrap();
    let mut expected = default_scenario();
    expected.sim.seed = 3;
    assert_eq!(written, expected);
}
