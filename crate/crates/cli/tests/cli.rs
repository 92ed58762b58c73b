use std::path::Path;
use std::process::{Command, Output};

fn netlearn(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netlearn")).args(args).current_dir(dir).output().expect("binary runs")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_then_exact_moment_learn_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let gen = netlearn(
        &["gen", "--kind", "hard_csq", "--k", "4", "--d", "10", "--seed", "1", "--out", "inst.json"],
        dir.path(),
    );
    assert_eq!(gen.status.code(), Some(0), "{}", String::from_utf8_lossy(&gen.stderr));
    let learn = netlearn(
        &["learn", "inst.json", "--mode", "exact-moments", "--out", "rec.json", "--model-out", "model.json"],
        dir.path(),
    );
    assert_eq!(learn.status.code(), Some(0), "{}", String::from_utf8_lossy(&learn.stderr));
    let rec = json(&dir.path().join("rec.json"));
    assert_eq!(rec["status"], "success");
    assert_eq!(rec["format"], "netlearn/record");
    assert!(rec["final_error"]["exact"].as_f64().unwrap() <= 0.15);
    assert_eq!(json(&dir.path().join("model.json"))["format"], "netlearn/network");
}

#[test]
fn eval_reports_agreeing_distances() {
    let dir = tempfile::tempdir().unwrap();
    for (seed, name) in [("2", "a.json"), ("3", "b.json")] {
        let out = netlearn(
            &["gen", "--kind", "separated", "--k", "2", "--d", "5", "--seed", seed, "--out", name],
            dir.path(),
        );
        assert_eq!(out.status.code(), Some(0));
    }
    let out = netlearn(&["eval", "a.json", "b.json"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let exact = report["exact"].as_f64().unwrap();
    let mc = report["monte_carlo"].as_f64().unwrap();
    assert!(exact > 0.1);
    assert!((exact - mc).abs() <= 0.02 * exact, "exact {exact} vs mc {mc}");
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = netlearn(&["learn", "x.json", "--no-such-flag"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn malformed_params_file_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    netlearn(&["gen", "--kind", "separated", "--k", "1", "--d", "3", "--out", "i.json"], dir.path());
    std::fs::write(dir.path().join("p.json"), r#"{"epsilon": 0.2, "unknown_key": 1}"#).unwrap();
    let out = netlearn(&["learn", "i.json", "--params", "p.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn budget_stop_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    netlearn(
        &["gen", "--kind", "separated", "--k", "2", "--d", "6", "--R", "2", "--seed", "3", "--out", "i.json"],
        dir.path(),
    );
    std::fs::write(dir.path().join("p.json"), r#"{"overrides": {"N": 100000, "N_val": 10000}}"#).unwrap();
    let out = netlearn(&["learn", "i.json", "--params", "p.json", "--budget", "candidates=10"], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn theory_mode_prints_parameters_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    netlearn(&["gen", "--kind", "separated", "--k", "2", "--d", "10", "--R", "2", "--out", "i.json"], dir.path());
    let out = netlearn(&["learn", "i.json", "--mode", "theory", "--eps", "0.1"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let params: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(params["mode"], "theory");
    assert!(params["N"].is_string());
}

#[test]
fn learn_from_samples_and_replay_fields() {
    let dir = tempfile::tempdir().unwrap();
    let gen = netlearn(
        &[
            "gen",
            "--kind",
            "separated",
            "--k",
            "1",
            "--d",
            "4",
            "--seed",
            "5",
            "--out",
            "i.json",
            "--samples-out",
            "s.json",
            "--n-train",
            "50000",
            "--n-holdout",
            "5000",
        ],
        dir.path(),
    );
    assert_eq!(gen.status.code(), Some(0));
    std::fs::write(dir.path().join("p.json"), r#"{"k": 1, "R": 1, "epsilon": 0.3}"#).unwrap();
    let out = netlearn(&["learn", "s.json", "--params", "p.json", "--out", "r.json", "--seed", "4"], dir.path());
    let code = out.status.code().unwrap();
    assert!(code == 0 || code == 2, "{}", String::from_utf8_lossy(&out.stderr));
    let rec = json(&dir.path().join("r.json"));
    assert!(rec["instance"].is_null());
    assert_eq!(rec["seeds"]["master"], 4);
    assert_eq!(rec["sample_counts"]["train"], 50000);
}

#[test]
fn bench_writes_records_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let spec = r#"{
        "cases": [{"kind": "separated", "k": 1, "d": 4, "R": 1.0, "epsilon": 0.3}],
        "seeds": [1, 2],
        "overrides": {"N_val": 5000}
    }"#;
    std::fs::write(dir.path().join("spec.json"), spec).unwrap();
    let out = netlearn(
        &["bench", "--params", "spec.json", "--out", "runs.ndjson", "--summary", "sum.csv", "--mode", "exact-moments"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let lines = std::fs::read_to_string(dir.path().join("runs.ndjson")).unwrap();
    assert_eq!(lines.lines().count(), 2);
    let csv = std::fs::read_to_string(dir.path().join("sum.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn diag_emits_report() {
    let dir = tempfile::tempdir().unwrap();
    netlearn(&["gen", "--kind", "clustered_pairs", "--k", "3", "--d", "6", "--R", "3", "--out", "i.json"], dir.path());
    let out = netlearn(&["diag", "i.json", "--mode", "exact-moments", "--out", "d.json"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&dir.path().join("d.json"));
    assert!(report["subspace_dim"].as_u64().unwrap() <= 3);
    assert!(report["partition"]["intervals"].is_array());
}
