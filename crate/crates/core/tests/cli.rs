use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_videominer"));
    c.env_remove("VIDEOMINER_SEED").env_remove("RUST_LOG");
    c
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).output().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn error_json(out: &Output) -> Value {
    assert_eq!(out.status.code(), Some(1), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().rev().find(|l| l.starts_with('{')).expect("json error line");
    serde_json::from_str(line).unwrap()
}

fn suite(dir: &Path, count: &str) {
    let out = run(&["synth", "--out", "suite", "--count", count, "--seed", "3"], dir);
    let v = stdout_json(&out);
    assert_eq!(v["instances"], count.parse::<u64>().unwrap());
}

#[test]
fn usage_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(run(&["frobnicate"], tmp.path()).status.code(), Some(2));
    assert_eq!(run(&["segment", "--bogus"], tmp.path()).status.code(), Some(2));
    assert_eq!(run(&[], tmp.path()).status.code(), Some(2));
    let help = run(&["--help"], tmp.path());
    assert_eq!(help.status.code(), Some(0));
    let text = String::from_utf8_lossy(&help.stdout);
    for sub in ["segment", "cluster", "tree", "answer", "train", "synth", "eval"] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
}

#[test]
fn segment_prints_intervals() {
    let tmp = TempDir::new().unwrap();
    suite(tmp.path(), "1");
    let out = run(&["segment", "--manifest", "suite/video_000/manifest.json", "--k", "4"], tmp.path());
    let v = stdout_json(&out);
    let intervals = v["intervals"].as_array().unwrap();
    assert_eq!(intervals.len(), 4);
    assert_eq!(intervals[0]["start"], 1);
    let n = v["frame_indices"].as_array().unwrap().len() as u64;
    assert_eq!(intervals[3]["end"], n);
    assert_eq!(v["distances"].as_array().unwrap().len() as u64, n - 1);
}

#[test]
fn cluster_captions() {
    let tmp = TempDir::new().unwrap();
    fs::write(
        tmp.path().join("caps.json"),
        r#"["a red car on the road", "a red car on the road", "a cat sleeping on a sofa"]"#,
    )
    .unwrap();
    let v = stdout_json(&run(&["cluster", "--captions", "caps.json"], tmp.path()));
    assert_eq!(v["labels"], serde_json::json!([0, 0, 1]));
    assert_eq!(v["cluster_count"], 2);
}

#[test]
fn config_errors_are_structured() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("bad.json"), r#"{"trainer": {"clip_eps": 1.5}}"#).unwrap();
    fs::write(tmp.path().join("unknown.json"), r#"{"foo": 1}"#).unwrap();
    let e = error_json(&run(&["--config", "bad.json", "synth", "--out", "s", "--count", "1"], tmp.path()));
    assert_eq!(e["error"]["kind"], "config");
    assert_eq!(e["error"]["message"], "trainer.clip_eps");
    let e = error_json(&run(&["--config", "unknown.json", "synth", "--out", "s", "--count", "1"], tmp.path()));
    assert_eq!(e["error"]["message"], "foo: unknown key");
    let e = error_json(&run(&["segment", "--manifest", "missing.json"], tmp.path()));
    assert!(e["error"]["message"].as_str().unwrap().contains("missing.json"));
}

#[test]
fn tree_answer_eval_offline() {
    let tmp = TempDir::new().unwrap();
    suite(tmp.path(), "2");
    let v = stdout_json(&run(&["tree", "--suite", "suite", "--instance", "1", "--seed", "5", "--out", "t.json"], tmp.path()));
    assert!(v["nodes"].as_u64().unwrap() >= 2);
    let tree: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("t.json")).unwrap()).unwrap();
    assert!(tree["nodes"].as_array().unwrap().iter().all(|n| n["state"] != "pending"));

    let answer = run(&["answer", "--tree", "t.json", "--out", "answered.json"], tmp.path());
    if answer.status.success() {
        let v: Value = serde_json::from_slice(&answer.stdout).unwrap();
        assert!(!v["keyframes"].as_array().unwrap().is_empty());
        assert!(tmp.path().join("answered.json").exists());
    } else {
        assert_eq!(error_json(&answer)["error"]["kind"], "tree");
    }

    let v = stdout_json(&run(&["eval", "--suite", "suite", "--oracle"], tmp.path()));
    assert_eq!(v["instances"], 2);
    assert_eq!(v["answer_accuracy"], 1.0);
}

#[test]
fn unreachable_policy_persists_partial_tree() {
    let tmp = TempDir::new().unwrap();
    suite(tmp.path(), "1");
    std::env::set_var("VM_CLI_TEST_SECRET", "hunter2-secret");
    fs::write(
        tmp.path().join("remote.json"),
        r#"{"clients": {"policy": {"base_url": "http://127.0.0.1:1/v1", "max_retries": 0, "timeout": 2,
            "api_key_env": "VM_CLI_TEST_SECRET"}}}"#,
    )
    .unwrap();
    let out = bin()
        .args(["--config", "remote.json", "tree", "--suite", "suite", "--out", "partial.json"])
        .env("RUST_LOG", "debug")
        .current_dir(tmp.path())
        .output()
        .unwrap();
    let e = error_json(&out);
    assert_eq!(e["error"]["kind"], "service");
    assert!(!String::from_utf8_lossy(&out.stderr).contains("hunter2-secret"));
    let partial: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("partial.json")).unwrap()).unwrap();
    let nodes = partial["nodes"].as_array().unwrap();
    assert!(nodes.len() >= 2);
    assert!(nodes.iter().any(|n| n["state"] == "pending"));
}

#[test]
fn seed_env_overrides_config() {
    let tmp = TempDir::new().unwrap();
    suite(tmp.path(), "1");
    let go = |seed: Option<&str>, out: &str| {
        let mut c = bin();
        c.args(["tree", "--suite", "suite", "--out", out]).current_dir(tmp.path());
        if let Some(s) = seed {
            c.env("VIDEOMINER_SEED", s);
        }
        assert!(c.output().unwrap().status.success());
        fs::read(tmp.path().join(out)).unwrap()
    };
    let flag = run(&["tree", "--suite", "suite", "--seed", "0", "--out", "flag.json"], tmp.path());
    assert!(flag.status.success());
    assert_eq!(go(Some("0"), "env0.json"), fs::read(tmp.path().join("flag.json")).unwrap());
    let bad = bin()
        .args(["tree", "--suite", "suite"])
        .env("VIDEOMINER_SEED", "abc")
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert_eq!(error_json(&bad)["error"]["kind"], "config");
    let _ = go(None, "default.json");
}

#[test]
fn train_writes_log_and_weights() {
    let tmp = TempDir::new().unwrap();
    suite(tmp.path(), "2");
    let out = run(
        &["train", "--suite", "suite", "--iterations", "3", "--growth-rate", "1.5", "--out", "w.json", "--dump-rollout", "r.json"],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lines: Vec<Value> = String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 3);
    for (i, l) in lines.iter().enumerate() {
        assert_eq!(l["iter"], i as u64);
        for key in ["J", "mean_reward", "p_accept", "p_continue", "p_delete", "mean_nodes"] {
            assert!(l[key].is_number(), "{key}");
        }
        assert!((l["lambda_auxin"].as_f64().unwrap() - 1.5).abs() < 1e-12);
    }
    let dump: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(dump["rewards"].as_array().unwrap().len(), dump["advantages"].as_array().unwrap().len());

    let v = stdout_json(&run(&["eval", "--suite", "suite", "--policy", "w.json"], tmp.path()));
    assert_eq!(v["instances"], 2);
}
