use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use netobj::io::ResultDocument;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name).join("manifest.json")
}

fn netobj(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netobj"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .env("NETOBJ_THREADS", "1")
        .output()
        .unwrap()
}

fn document(dir: &Path) -> ResultDocument {
    serde_json::from_str(&fs::read_to_string(dir.join("results.json")).unwrap()).unwrap()
}

#[test]
fn glp_on_planted_fixture_reports_the_planted_block() {
    let dir = tempfile::tempdir().unwrap();
    let m = fixture("planted");
    let out = netobj(
        &["test", "--manifest", m.to_str().unwrap(), "--perm", "glp", "--M", "199", "--seed", "7", "--emit-heatmap"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = document(dir.path());
    let report = doc.inference.as_ref().unwrap();
    let sig: Vec<_> = report.significant_subnetworks().collect();
    assert_eq!(sig.len(), 1);
    assert_eq!(sig[0].nodes, vec![4, 6, 7, 10, 15, 19]);
    assert!(sig[0].p_value.unwrap() <= 0.05);

    // The heatmap lists nodes in the same order as the JSON.
    let svg = fs::read_to_string(dir.path().join("heatmap.svg")).unwrap();
    let order: Vec<usize> = svg
        .split("node order ")
        .nth(1)
        .unwrap()
        .split("</desc>")
        .next()
        .unwrap()
        .split_whitespace()
        .map(|t| t.parse().unwrap())
        .collect();
    assert_eq!(Some(order), doc.node_order);

    // Edge table: one row per edge, significant rows are the block's 15 edges.
    let edges = fs::read_to_string(dir.path().join("edges.csv")).unwrap();
    let mut lines = edges.lines();
    assert_eq!(lines.next(), Some("i,j,p,sign,w,subnetwork,significant"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 190);
    assert_eq!(rows.iter().filter(|r| r.ends_with(",1")).count(), 15);
}

#[test]
fn result_document_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let m = fixture("planted");
    let out = netobj(&["test", "--manifest", m.to_str().unwrap(), "--perm", "gep", "--M", "39", "--B", "39"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let doc = document(dir.path());
    let again: ResultDocument = serde_json::from_str(&serde_json::to_string(&doc).unwrap()).unwrap();
    assert_eq!(doc, again);
    assert_eq!(doc.run.command, "test");
}

#[test]
fn identical_groups_give_no_subnetworks() {
    let dir = tempfile::tempdir().unwrap();
    let m = fixture("identical");
    let out = netobj(&["detect", "--manifest", m.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let det = document(dir.path()).detection.unwrap();
    assert!(det.subnetworks.is_empty());
    assert_eq!(det.k_selected, 1);
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(netobj(&["detect"], dir.path()).status.code(), Some(2));
    assert_eq!(netobj(&["frobnicate"], dir.path()).status.code(), Some(2));
    let m = fixture("planted");
    let bad_alpha = netobj(&["test", "--manifest", m.to_str().unwrap(), "--alpha", "1.5"], dir.path());
    assert_eq!(bad_alpha.status.code(), Some(2));
}

#[test]
fn data_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let data = tempfile::tempdir().unwrap();
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/identical");
    fs::create_dir(data.path().join("subjects")).unwrap();
    for entry in fs::read_dir(src.join("subjects")).unwrap() {
        let entry = entry.unwrap();
        fs::copy(entry.path(), data.path().join("subjects").join(entry.file_name())).unwrap();
    }
    fs::copy(src.join("manifest.json"), data.path().join("manifest.json")).unwrap();
    let manifest = data.path().join("manifest.json");

    // A non-numeric cell in one subject's matrix.
    let victim = fs::read_dir(data.path().join("subjects")).unwrap().next().unwrap().unwrap().path();
    let text = fs::read_to_string(&victim).unwrap();
    let (first, rest) = text.split_once(',').unwrap();
    fs::write(&victim, format!("{first},oops{}", &rest[rest.find(',').unwrap()..])).unwrap();
    let out = netobj(&["detect", "--manifest", manifest.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("oops"));

    let missing = data.path().join("nope.json");
    let out = netobj(&["detect", "--manifest", missing.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn simulate_then_detect_round_trip() {
    let sim = tempfile::tempdir().unwrap();
    let out = netobj(&["simulate", "--n", "15", "--planted", "5", "--theta", "2", "--seed", "3"], sim.path());
    assert_eq!(out.status.code(), Some(0));
    let planted: Vec<usize> = serde_json::from_value(document(sim.path()).simulation.unwrap()["planted_nodes"].clone())
        .unwrap();
    let det = tempfile::tempdir().unwrap();
    let manifest = sim.path().join("manifest.json");
    let out = netobj(&["detect", "--manifest", manifest.to_str().unwrap(), "--seed", "1"], det.path());
    assert_eq!(out.status.code(), Some(0));
    let found = document(det.path()).detection.unwrap();
    assert!(found.subnetworks.iter().any(|s| s.nodes == planted));
}
