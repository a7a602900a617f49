use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn klevel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_klevel")).args(args).output().unwrap()
}

fn experiment(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../experiments").join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_verify_and_detect_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let spec = experiment("g08a_kr_vs_fix.json");
    let done = klevel(&["run", "--spec", s(&spec), "--out", s(&out)]);
    assert!(done.status.success(), "{}", String::from_utf8_lossy(&done.stderr));
    assert!(String::from_utf8_lossy(&done.stdout).contains("1.0000 ± 0.0000 over 10 valid repeats"));

    assert!(klevel(&["verify", s(&out)]).status.success());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["complete"], true);

    let records = out.join("records.jsonl");
    let text = fs::read_to_string(&records).unwrap();
    fs::write(&records, text.replacen("\"type\":\"choice\",\"value\":30", "\"type\":\"choice\",\"value\":31", 1)).unwrap();
    let bad = klevel(&["verify", s(&out)]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("records.jsonl"));
}

#[test]
fn replay_reproduces_the_records() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let again = dir.path().join("again");
    let spec = experiment("pd_kr4_selfplay.json");
    assert!(klevel(&["run", "--spec", s(&spec), "--out", s(&first)]).status.success());
    let transcripts = first.join("transcripts.jsonl");
    let replay = klevel(&["replay", "--spec", s(&spec), "--transcripts", s(&transcripts), "--out", s(&again)]);
    assert!(replay.status.success(), "{}", String::from_utf8_lossy(&replay.stderr));
    for f in ["records.jsonl", "matrix.csv"] {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
    // replay without transcripts is refused
    assert!(!klevel(&["replay", "--spec", s(&spec), "--out", s(&again)]).status.success());
}

#[test]
fn depth_of_a_single_choice_and_the_anchor_table() {
    let one = klevel(&["depth", "--choice", "40"]);
    assert_eq!(String::from_utf8_lossy(&one.stdout).trim(), "1.0000");
    let table = klevel(&["depth"]);
    let text = String::from_utf8_lossy(&table.stdout).into_owned();
    assert_eq!(text.lines().count(), 15);
    assert!(text.starts_with("group,source,mean_choice,alpha,strategic_depth,reported_depth"));
}

#[test]
fn report_rejects_runs_from_different_games() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g");
    let v = dir.path().join("v");
    assert!(klevel(&["run", "--spec", s(&experiment("g08a_kr_vs_fix.json")), "--out", s(&g)]).status.success());
    assert!(klevel(&["run", "--spec", s(&experiment("sag_programmatic.json")), "--out", s(&v)]).status.success());

    let ok = dir.path().join("report");
    assert!(klevel(&["report", s(&g), "--out", s(&ok)]).status.success());
    assert!(ok.join("matrix.csv").exists() && ok.join("significance.csv").exists());
    let mixed = klevel(&["report", s(&g), s(&v), "--out", s(&dir.path().join("mixed"))]);
    assert!(!mixed.status.success());
}
