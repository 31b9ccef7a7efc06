use std::path::Path;
use std::process::{Command, Output};

fn pebblewalk(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pebblewalk")).args(args).current_dir(dir).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn malformed_graph_reports_a_position() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), "{\"vertex_count\": 2,\n \"edges\": [{\"u\": 0 \"v\": 1}]}").unwrap();
    let o = pebblewalk(&["graph", "validate", "bad.json"], dir.path());
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.json") && err.contains("line 2 column"), "{err}");
}

#[test]
fn generated_graphs_validate() {
    let dir = tempfile::tempdir().unwrap();
    let o = pebblewalk(&["graph", "gen", "cubic", "--n", "12", "--seed", "4"], dir.path());
    assert!(o.status.success());
    std::fs::write(dir.path().join("g.json"), &o.stdout).unwrap();
    let v = pebblewalk(&["graph", "validate", "g.json"], dir.path());
    assert!(v.status.success());
    assert!(stdout(&v).contains("\"valid\": true"));
    let dot = pebblewalk(&["graph", "dot", "g.json", "--highlight", "0,1"], dir.path());
    assert!(stdout(&dot).starts_with("graph G {"));
}

#[test]
fn built_traps_verify() {
    let dir = tempfile::tempdir().unwrap();
    let b = pebblewalk(&["trap", "build", "--states", "2", "--seed", "9", "--out", "trap.json", "--agents-out", "agents.json"], dir.path());
    assert!(b.status.success(), "{}", String::from_utf8_lossy(&b.stderr));
    let v = pebblewalk(&["trap", "verify", "--graph", "trap.json", "--agents", "agents.json"], dir.path());
    assert!(v.status.success());
    assert!(stdout(&v).contains("\"verdict\": \"trapped\""));
}

#[test]
fn corpus_hashes_are_stable_and_edits_are_caught() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        assert!(pebblewalk(&["corpus", "make", "cubic", "--max-n", "10", "--out", out], dir.path()).status.success());
    }
    let ma = std::fs::read(dir.path().join("a/MANIFEST.json")).unwrap();
    assert_eq!(ma, std::fs::read(dir.path().join("b/MANIFEST.json")).unwrap());

    let list = pebblewalk(&["corpus", "list", "a", "--format", "csv"], dir.path());
    assert_eq!(stdout(&list), "n,count\n4,1\n6,2\n8,17\n10,61\n");

    assert!(pebblewalk(&["corpus", "hash", "a"], dir.path()).status.success());
    let victim = dir.path().join("a/cubic-n6-0.json");
    let text = std::fs::read_to_string(&victim).unwrap().replace("\"pu\": 1", "\"pu\": 2");
    std::fs::write(&victim, text).unwrap();
    let h = pebblewalk(&["corpus", "hash", "a"], dir.path());
    assert!(!h.status.success());
    assert!(stdout(&h).contains("cubic-n6-0.json"));
}

#[test]
fn explore_emits_csv() {
    let dir = tempfile::tempdir().unwrap();
    let g = pebblewalk(&["graph", "gen", "k4"], dir.path());
    std::fs::write(dir.path().join("k4.json"), &g.stdout).unwrap();
    let o = pebblewalk(&["explore", "k4.json", "--format", "csv"], dir.path());
    assert!(o.status.success());
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("n,pebbles_used,traversals,r_final"));
    assert!(lines.next().unwrap().starts_with("4,"));
}

#[test]
fn doubled_walk_of_a_prefix() {
    let dir = tempfile::tempdir().unwrap();
    let o = pebblewalk(&["seq", "lift", "1,2"], dir.path());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["walk"], serde_json::json!([1, 2, 0, 1]));
}

#[test]
fn plans_write_identical_bundles() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("plan.json"), r#"{"command": "traps", "agents": 1, "states": [1, 2], "seeds": [1, 2], "budget": 1000000, "format": "csv"}"#).unwrap();
    let a = pebblewalk(&["plan", "plan.json", "--out", "a"], dir.path());
    let b = pebblewalk(&["plan", "plan.json", "--out", "b"], dir.path());
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(stdout(&a), stdout(&b));
    let csv = std::fs::read_to_string(dir.path().join("a/report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.lines().skip(1).all(|l| l.contains("trapped")));
}
