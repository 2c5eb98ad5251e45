use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn plumb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plumb")).args(args).output().expect("plumb runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn write(dir: &TempDir, name: &str, value: &Value) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, serde_json::to_string(value).unwrap()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn chain() -> Value {
    json!({"nodes": [[2, 0, 0], [1, 0, 0], [-3, 1, 0]], "edges": [[0, 1, 1], [1, 2, -1]]})
}

#[test]
fn gen_writes_requested_composition() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("d.jsonl");
    let run = plumb(&["gen", "--out", s(&out), "--count", "40", "--equiv-frac", "0.5", "--tweak-frac", "0.25", "--seed", "7", "--nmax", "5"]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let summary = stdout_json(&run);
    assert_eq!(summary["sources"], json!({"equiv": 20, "inequiv": 10, "tweak": 10}));
    assert_eq!((summary["label0"].as_u64(), summary["label1"].as_u64()), (Some(20), Some(20)));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 40);
    for line in text.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        let label = v["label"].as_u64().unwrap();
        assert_eq!(label == 1, v["source"] == "equiv");
    }
}

#[test]
fn gen_zero_count_and_errors() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("empty.jsonl");
    let run = plumb(&["gen", "--out", s(&out), "--count", "0", "--equiv-frac", "0.5", "--tweak-frac", "0.25", "--seed", "1"]);
    assert_eq!(code(&run), 0);
    assert_eq!(std::fs::metadata(&out).unwrap().len(), 0);

    let bad = plumb(&["gen", "--out", s(&out), "--count", "5", "--equiv-frac", "0.8", "--tweak-frac", "0.5", "--seed", "1"]);
    assert_eq!(code(&bad), 2);

    let unwritable = dir.path().join("missing-dir").join("x.jsonl");
    let run = plumb(&["gen", "--out", s(&unwritable), "--count", "1", "--equiv-frac", "1", "--tweak-frac", "0", "--seed", "1"]);
    assert_eq!(code(&run), 3);

    assert_eq!(code(&plumb(&["gen", "--count", "3"])), 2);
    assert_eq!(code(&plumb(&["frobnicate"])), 2);
}

#[test]
fn check_isomorphic_pair_gives_empty_certificate() {
    let dir = TempDir::new().unwrap();
    let relabelled = json!({"nodes": [[-3, 1, 0], [1, 0, 0], [2, 0, 0]], "edges": [[1, 0, -1], [2, 1, 1]]});
    let pair = write(&dir, "pair.json", &json!([chain(), relabelled]));
    let run = plumb(&["check", "--pair", s(&pair), "--max-states", "1000", "--max-depth", "3"]);
    assert_eq!(code(&run), 0);
    let verdict = stdout_json(&run);
    assert_eq!(verdict["verdict"], "equivalent");
    assert_eq!(verdict["certificate"]["moves"], json!([]));
}

#[test]
fn check_then_verify_round_trip() {
    let dir = TempDir::new().unwrap();
    // Blow down the (1,0,0) vertex, then reverse the merged vertex.
    let moves = json!([
        {"kind": "R1", "dir": "fwd", "site": {"vertices": [1], "edges": [0, 1]}, "params": {"rho": 1}},
        {"kind": "R0", "dir": "fwd", "site": {"vertices": [2]}}
    ]);
    let graph = write(&dir, "g.json", &chain());
    let moves_path = write(&dir, "m.json", &moves);
    let applied = plumb(&["apply", "--graph", s(&graph), "--moves", s(&moves_path)]);
    assert_eq!(code(&applied), 0, "{}", String::from_utf8_lossy(&applied.stderr));
    let target = stdout_json(&applied);
    // ε0 = -(1)(+1)(-1) = +1, then reversed at the merged vertex.
    assert_eq!(target, json!({"nodes": [[1, 0, 0], [-4, 1, 0]], "edges": [[0, 1, -1]]}));

    // Two concatenated graph objects are accepted too.
    let pair = dir.path().join("pair.json");
    std::fs::write(&pair, format!("{}\n{}\n", chain(), target)).unwrap();
    let run = plumb(&["check", "--pair", s(&pair), "--max-states", "100000", "--max-depth", "2"]);
    assert_eq!(code(&run), 0);
    let verdict = stdout_json(&run);
    let cert = write(&dir, "cert.json", &verdict["certificate"]);
    let verified = plumb(&["verify", "--cert", s(&cert)]);
    assert_eq!(code(&verified), 0);
    assert_eq!(stdout_json(&verified)["valid"], true);
}

#[test]
fn check_budget_exhaustion_and_bad_input() {
    let dir = TempDir::new().unwrap();
    let pair = write(&dir, "pair.json", &json!({"graph1": {"nodes": [[5, 0, 0]], "edges": []}, "graph2": {"nodes": [[6, 0, 0]], "edges": []}}));
    let run = plumb(&["check", "--pair", s(&pair), "--max-states", "10", "--max-depth", "3"]);
    assert_eq!(code(&run), 1);
    assert_eq!(stdout_json(&run)["reason"], "states exhausted");

    let invalid = write(&dir, "invalid.json", &json!([{"nodes": [[1, 0, 1]], "edges": []}, chain()]));
    assert_eq!(code(&plumb(&["check", "--pair", s(&invalid), "--max-states", "10", "--max-depth", "3"])), 2);
    let garbage = dir.path().join("garbage.json");
    std::fs::write(&garbage, "{not json").unwrap();
    assert_eq!(code(&plumb(&["check", "--pair", s(&garbage), "--max-states", "10", "--max-depth", "3"])), 2);
    let missing = dir.path().join("nope.json");
    assert_eq!(code(&plumb(&["check", "--pair", s(&missing), "--max-states", "10", "--max-depth", "3"])), 3);
    assert_eq!(code(&plumb(&["check", "--pair", s(&pair), "--max-states", "0", "--max-depth", "3"])), 2);
    assert_eq!(code(&plumb(&["check", "--pair", s(&pair), "--max-states", "9", "--max-depth", "3", "--inverse-kinds", "R8"])), 2);
}

#[test]
fn verify_reports_failing_step() {
    let dir = TempDir::new().unwrap();
    let good = json!({"start": chain(), "moves": [], "end": chain()});
    assert_eq!(code(&plumb(&["verify", "--cert", s(&write(&dir, "good.json", &good))])), 0);

    let corrupted = json!({
        "start": chain(),
        "moves": [{"kind": "R0", "dir": "fwd", "site": {"vertices": [0]}}, {"kind": "R0", "dir": "fwd", "site": {"vertices": [9]}}],
        "end": chain()
    });
    let run = plumb(&["verify", "--cert", s(&write(&dir, "bad.json", &corrupted))]);
    assert_eq!(code(&run), 1);
    let report = stdout_json(&run);
    assert_eq!(report["valid"], false);
    assert_eq!(report["failed_step"], 1);

    let malformed = write(&dir, "malformed.json", &json!({"start": chain()}));
    assert_eq!(code(&plumb(&["verify", "--cert", s(&malformed)])), 2);
}

#[test]
fn apply_echo_r0_and_stale_site() {
    let dir = TempDir::new().unwrap();
    let graph = write(&dir, "g.json", &json!({"nodes": [[0, 1, 0], [1, 0, 0], [1, 0, 0]], "edges": [[0, 1, 1], [0, 2, -1], [0, 0, 1]]}));
    let none = write(&dir, "none.json", &json!([]));
    let echoed = plumb(&["apply", "--graph", s(&graph), "--moves", s(&none)]);
    assert_eq!(code(&echoed), 0);
    assert_eq!(stdout_json(&echoed), serde_json::from_str::<Value>(&std::fs::read_to_string(&graph).unwrap()).unwrap());

    let r0 = write(&dir, "r0.json", &json!([{"kind": "R0", "dir": "fwd", "site": {"vertices": [0]}}]));
    let flipped = plumb(&["apply", "--graph", s(&graph), "--moves", s(&r0)]);
    assert_eq!(code(&flipped), 0);
    assert_eq!(stdout_json(&flipped)["edges"], json!([[0, 1, -1], [0, 2, 1], [0, 0, 1]]));

    let stale = write(&dir, "stale.json", &json!([{"kind": "R1", "dir": "fwd", "site": {"vertices": [1], "edges": [0]}, "params": {"rho": 1}}, {"kind": "R1", "dir": "fwd", "site": {"vertices": [1], "edges": [0]}, "params": {"rho": 1}}]));
    let run = plumb(&["apply", "--graph", s(&graph), "--moves", s(&stale)]);
    assert_eq!(code(&run), 1);
    assert!(String::from_utf8_lossy(&run.stderr).contains("step 1"));
}
