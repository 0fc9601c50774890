use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn kairos(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kairos")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = kairos(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn error_object(out: &Output) -> Value {
    assert!(!out.status.success());
    let text = String::from_utf8_lossy(&out.stderr);
    let v: Value = serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("stderr not JSON ({e}): {text}"));
    assert!(v["error"]["message"].is_string());
    v
}

const SPEC: &str = r#"{
  "tasks": 100,
  "control_hz": 30,
  "chunk_size": 50,
  "diffusion_steps": 6,
  "action_budget": {"min": 60, "max": 200},
  "onset": {"min": 8, "max": 40},
  "onset_jitter": 3,
  "uncertain_fraction": 0.6,
  "decay": {"min": 0.5, "max": 0.9},
  "noise": 0.05,
  "success_rate": 0.7,
  "obs_payload_bytes": 200000,
  "action_payload_bytes": 2000
}"#;

const EDGE: &str = r#"{"tier":"edge","capacity":1,"max_batch":1,"points":[[1,300000]]}"#;

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generate(dir: &Path, extra: &[&str]) -> PathBuf {
    let spec = dir.join("spec.json");
    fs::write(&spec, SPEC).unwrap();
    let out = dir.join("traces");
    let mut args = vec!["gen-traces", "--spec", path(&spec), "--out", path(&out), "--seed", "4"];
    args.extend_from_slice(extra);
    ok(&args);
    out
}

#[test]
fn gen_traces_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = generate(dir.path(), &[]);
    let text = fs::read_to_string(a.join("traces.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 100);
    let other = tempfile::tempdir().unwrap();
    let b = generate(other.path(), &[]);
    assert_eq!(text, fs::read_to_string(b.join("traces.jsonl")).unwrap());
}

#[test]
fn confidence_traces_need_no_more_rounds_than_static() {
    let dir = tempfile::tempdir().unwrap();
    let rounds = |sub: &str, extra: &[&str]| -> Vec<usize> {
        let d = dir.path().join(sub);
        fs::create_dir_all(&d).unwrap();
        let t = generate(&d, extra);
        fs::read_to_string(t.join("traces.jsonl"))
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str::<Value>(l).unwrap()["rounds"].as_array().unwrap().len())
            .collect()
    };
    // A static horizon at the confidence policy's floor.
    let fixed = rounds("static", &["--policy", "static", "--horizon", "5"]);
    let adaptive = rounds("confidence", &["--policy", "confidence", "--min-horizon", "5"]);
    assert!(fixed.iter().zip(&adaptive).all(|(s, c)| c <= s));
}

#[test]
fn run_writes_stable_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let traces = generate(dir.path(), &[]);
    let edge = dir.path().join("edge.json");
    fs::write(&edge, EDGE).unwrap();
    let run = |out: &Path, extra: &[&str]| {
        let mut args = vec!["run", "--traces", path(&traces), "--fleet", "10", "--edge-profile", path(&edge), "--out", path(out), "--seed", "3", "--events"];
        args.extend_from_slice(extra);
        ok(&args);
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run(&a, &["--no-timestamp"]);
    run(&b, &["--no-timestamp"]);
    for f in ["results.csv", "events.jsonl", "summary.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let csv = fs::read_to_string(a.join("results.csv")).unwrap();
    assert!(csv.starts_with("task_id,scheduler,rate_or_fleet,latency_us,wait_us,offloaded_rounds,total_rounds\n"));
    assert_eq!(csv.lines().count(), 101);

    let stamped = dir.path().join("c");
    run(&stamped, &[]);
    let text = fs::read_to_string(stamped.join("results.csv")).unwrap();
    let (first, rest) = text.split_once('\n').unwrap();
    assert!(first.starts_with("# generated "));
    assert_eq!(rest, csv);

    // No cloud profile: nothing offloaded.
    let summary: Value = serde_json::from_str(&fs::read_to_string(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["summary"]["offload_fraction"], 0.0);
    assert!(summary["summary"]["p25_latency_us"].as_u64() <= summary["summary"]["p95_latency_us"].as_u64());
    assert_eq!(summary["config"]["load"]["fleet"], 10);

    // Fleet of ten: never more than ten tasks in flight.
    let mut in_flight = 0i64;
    for line in fs::read_to_string(a.join("events.jsonl")).unwrap().lines() {
        let e: Value = serde_json::from_str(line).unwrap();
        match e["kind"].as_str().unwrap() {
            "task_arrival" => in_flight += 1,
            "task_completed" => in_flight -= 1,
            _ => {}
        }
        assert!((0..=10).contains(&in_flight));
    }
}

#[test]
fn kairos_beats_fifo_at_saturating_rate() {
    let dir = tempfile::tempdir().unwrap();
    let traces = generate(dir.path(), &[]);
    let edge = dir.path().join("edge.json");
    fs::write(&edge, EDGE).unwrap();
    let avg = |sched: &str| {
        let out = dir.path().join(sched);
        ok(&["run", "--traces", path(&traces), "--rate", "0.8", "--scheduler", sched, "--edge-profile", path(&edge), "--out", path(&out), "--seed", "1"]);
        let s: Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
        s["summary"]["avg_latency_us"].as_f64().unwrap()
    };
    assert!(avg("kairos") <= avg("fifo"));
}

#[test]
fn pareto_rows() {
    let dir = tempfile::tempdir().unwrap();
    let traces = generate(dir.path(), &[]);
    let out = dir.path().join("curves/pareto.csv");
    ok(&["pareto", "--traces", path(&traces), "--static-horizons", "10,20,30", "--thresholds", "0.1,0.4,1.0", "--out", path(&out)]);
    let mut r = csv::Reader::from_path(&out).unwrap();
    let rows: Vec<Vec<String>> = r.records().map(|x| x.unwrap().iter().map(str::to_string).collect()).collect();
    assert_eq!(rows.len(), 6);
    let horizon = |i: usize| rows[i][2].parse::<f64>().unwrap();
    assert!(horizon(0) < horizon(1) && horizon(1) < horizon(2));
    assert!(horizon(3) <= horizon(4) && horizon(4) <= horizon(5));
    assert!(rows.iter().all(|row| row[3] == rows[0][3]));
}

#[test]
fn errors_are_json_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"tasks": 0}"#).unwrap();
    let v = error_object(&kairos(&["gen-traces", "--spec", path(&bad), "--out", path(dir.path())]));
    assert_eq!(v["error"]["kind"], "workload");

    let traces = dir.path().join("t.jsonl");
    fs::write(&traces, "{\"task_id\":\"x\"}\n").unwrap();
    let v = error_object(&kairos(&["run", "--traces", path(&traces), "--fleet", "2", "--out", path(dir.path())]));
    assert_eq!(v["error"]["kind"], "trace");
    assert!(v["error"]["message"].as_str().unwrap().contains("line 1"));

    // Traces without magnitudes cannot be swept; the error names the trace.
    fs::write(
        &traces,
        r#"{"task_id":"plain","control_hz":30,"obs_payload_bytes":1,"action_payload_bytes":1,"success":true,"rounds":[{"round_id":0,"trigger_action_index":0,"recorded_horizon":5,"chunk_size":10}]}"#,
    )
    .unwrap();
    let v = error_object(&kairos(&["pareto", "--traces", path(&traces), "--thresholds", "0.4", "--out", path(&dir.path().join("p.csv"))]));
    assert!(v["error"]["message"].as_str().unwrap().contains("plain"));

    let v = error_object(&kairos(&["run", "--traces", path(&traces), "--fleet", "0", "--out", path(dir.path())]));
    assert_eq!(v["error"]["kind"], "experiment");

    let out = kairos(&["run", "--traces", path(&traces), "--fleet", "2", "--rate", "1", "--out", path(dir.path())]);
    assert!(!out.status.success());
}
