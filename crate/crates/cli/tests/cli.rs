use std::path::Path;
use std::process::{Command, Output};

fn watchdog(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_watchdog"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL: &str = r#"
[campaign]
seed = 17
agents = 2
rounds = 3
learning_round = 2
live_inputs_per_round = 5

[agent_defaults]
round_budget = 120
confidence_samples = 20

[output]
report = "report.json"
trace = "trace.csv"
"#;

#[test]
fn run_writes_report_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SMALL);
    let out = watchdog(&["run", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    let report: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(report["rounds"].as_array().unwrap().len(), 3);
    assert!(report.get("timing").is_none());

    let probes = &report["totals"]["probes"];
    let total = ["round", "confidence", "inversion"]
        .iter()
        .map(|k| probes[k].as_u64().unwrap())
        .sum::<u64>()
        + report["totals"]["acts"].as_u64().unwrap();
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next().unwrap(), "t,agent,kind,x0,x1,v0,v1,category,psi,verdict");
    assert_eq!(lines.count() as u64, total);
}

#[test]
fn identical_configs_give_identical_reports() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let cfg = write_config(d.path(), "c.toml", SMALL);
        assert!(watchdog(&["run", &cfg]).status.success());
    }
    let ra = std::fs::read(a.path().join("report.json")).unwrap();
    let rb = std::fs::read(b.path().join("report.json")).unwrap();
    assert_eq!(ra, rb);
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "[campaign]\nagents = 2\n");
    let out = watchdog(&["run", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
    let missing = dir.path().join("nope.toml");
    assert_eq!(watchdog(&["run", missing.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn check_exit_codes_follow_the_floors() {
    let dir = tempfile::tempdir().unwrap();
    let strict = format!("{SMALL}\n[check]\nrecall_h_prime = 1.5\n");
    let cfg = write_config(dir.path(), "strict.toml", &strict);
    let out = watchdog(&["run", &cfg, "--check"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("check FAIL: recall_h_prime"));
    assert_eq!(watchdog(&["run", &cfg]).status.code(), Some(0));

    let lenient = format!("{SMALL}\n[check]\nrecall_h_prime = 0.0\nprecision_h_prime = 0.0\nrecall_hs_prime = 0.0\n");
    let cfg = write_config(dir.path(), "lenient.toml", &lenient);
    assert_eq!(watchdog(&["run", &cfg, "--check"]).status.code(), Some(0));
}

#[test]
fn score_reproduces_the_report_cards() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SMALL);
    assert!(watchdog(&["run", &cfg]).status.success());
    let report_path = dir.path().join("report.json");
    let out = watchdog(&["score", report_path.to_str().unwrap()]);
    assert!(out.status.success());
    let scores: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(scores, report["scores"]);
}

#[test]
fn replay_emits_one_round() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SMALL);
    assert!(watchdog(&["run", &cfg]).status.success());
    let report_path = dir.path().join("report.json");
    let report = report_path.to_str().unwrap();
    let out = watchdog(&["replay", report, "--round", "2"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["t"], 2);
    assert_eq!(v["agents"].as_array().unwrap().len(), 2);
    assert_eq!(v["regions"].as_array().unwrap().len(), 13);
    assert_eq!(watchdog(&["replay", report, "--round", "9"]).status.code(), Some(1));
}

#[test]
fn zero_rounds_print_an_empty_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "z.toml", "[campaign]\nseed = 1\nrounds = 0\n");
    let out = watchdog(&["run", &cfg]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["rounds"], serde_json::json!([]));
}

#[test]
fn custom_scenario_runs_without_scores() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("rules.txt"),
        "var v0 : real 0..10\nvar v1 : real 0..10\nlr hard v0 + v1 <= 15\nnl soft weight=2.0 (v0 - 5)^2 + (v1 - 5)^2 <= 4\n",
    )
    .unwrap();
    let sut = r#"{
        "input_space": [
            {"name": "x0", "kind": {"type": "real", "lo": 0.0, "hi": 1.0}},
            {"name": "x1", "kind": {"type": "real", "lo": 0.0, "hi": 1.0}}
        ],
        "action_space": [
            {"name": "v0", "kind": {"type": "real", "lo": 0.0, "hi": 10.0}},
            {"name": "v1", "kind": {"type": "real", "lo": 0.0, "hi": 10.0}}
        ],
        "kind": "linear",
        "matrix": [[10.0, 0.0], [0.0, 10.0]],
        "offset": [0.0, 0.0]
    }"#;
    std::fs::write(dir.path().join("sut.json"), sut).unwrap();
    let body = "[campaign]\nseed = 3\nagents = 2\nrounds = 2\n\n[scenario]\nkind = \"custom\"\nconstraints = \"rules.txt\"\nsut = \"sut.json\"\n\n[agent_defaults]\nround_budget = 100\nconfidence_samples = 15\n\n[output]\nreport = \"report.json\"\n";
    let cfg = write_config(dir.path(), "c.toml", body);
    let out = watchdog(&["run", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["rounds"].as_array().unwrap().len(), 2);
    assert!(report["scores"]["pre"].is_null());
    assert!(report["header"]["regions"].is_null());
    let blocked = report["totals"]["gate"]["blocked"].as_u64().unwrap();
    let released = report["totals"]["gate"]["released"].as_u64().unwrap();
    assert_eq!(blocked + released, report["totals"]["acts"].as_u64().unwrap());
    assert_eq!(report["totals"]["gate"]["released_h_prime"], 0);
}
