use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn rfidlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rfidlab"))
        .args(args)
        .env_remove("RFIDLAB_SEED")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn json_file(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn honest_fwcfp_exits_zero() {
    let out = rfidlab(&["honest", "--trials", "40"]);
    assert_eq!(code(&out), 0);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("\"both_accept\": 40"));
    assert!(stdout.lines().last().unwrap().starts_with("fwcfp honest:"));
}

#[test]
fn invalid_width_is_a_config_error() {
    let out = rfidlab(&["honest", "--hash-bits", "0"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("hash_bits"));
}

#[test]
fn unknown_flag_is_a_config_error() {
    assert_eq!(code(&rfidlab(&["honest", "--frobnicate"])), 1);
    assert_eq!(code(&rfidlab(&["trace", "--protocol", "nope"])), 1);
    assert_eq!(code(&rfidlab(&["honest", "--m-limit", "3"])), 1);
}

#[test]
fn help_exits_zero() {
    assert_eq!(code(&rfidlab(&["--help"])), 0);
}

#[test]
fn missed_threshold_exits_two() {
    let out = rfidlab(&[
        "honest",
        "--protocol",
        "lwjx",
        "--drop-flow3-rate",
        "0.3",
        "--trials",
        "200",
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn trace_writes_csv_report() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    let out = rfidlab(&[
        "trace",
        "--hash-bits",
        "8",
        "--trials",
        "2000",
        "--format",
        "csv",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(&path).unwrap();
    let mut rows = csv::Reader::from_reader(text.as_bytes());
    let headers = rows.headers().unwrap().clone();
    let record = rows.records().next().unwrap().unwrap();
    let get = |name: &str| &record[headers.iter().position(|h| h == name).unwrap()];
    assert_eq!(get("strategy"), "fwcfp-trace");
    assert_eq!(get("trials"), "2000");
    assert_eq!(get("exact_adv"), "0.498046875");
}

#[test]
fn env_seed_applies_and_flag_wins() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let run = |path: &Path, extra: &[&str]| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_rfidlab"));
        cmd.args(["trace", "--trials", "50", "--output", path.to_str().unwrap()])
            .args(extra)
            .env("RFIDLAB_SEED", "0x2a");
        cmd.output().unwrap()
    };
    run(&a, &[]);
    run(&b, &["--seed", "7"]);
    assert_eq!(json_file(&a)["params"]["seed"], 42);
    assert_eq!(json_file(&b)["params"]["seed"], 7);
}

#[test]
fn reports_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let paths: Vec<_> = ["a.json", "b.json"].iter().map(|n| dir.path().join(n)).collect();
    for (p, extra) in paths.iter().zip([None, Some("--sequential")]) {
        let mut args = vec!["backtrace", "--hash-bits", "4", "--trials", "500", "--seed", "9"];
        args.extend(extra);
        args.extend(["--output", p.to_str().unwrap()]);
        rfidlab(&args);
    }
    assert_eq!(std::fs::read(&paths[0]).unwrap(), std::fs::read(&paths[1]).unwrap());
}

#[test]
fn desync_report_counts_rejects() {
    let out = rfidlab(&[
        "desync",
        "--trials",
        "3",
        "--attempts",
        "5",
        "--mask",
        "128:00000000000000000000000000000001",
    ]);
    assert_eq!(code(&out), 0);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("rejects=15/15"), "{stdout}");
}

#[test]
fn replay_passes_then_fails_after_tamper() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    let p = path.to_str().unwrap();
    assert_eq!(
        code(&rfidlab(&[
            "honest",
            "--protocol",
            "lwjx",
            "--trials",
            "10",
            "--transcript",
            p
        ])),
        0
    );
    let out = rfidlab(&["replay", p]);
    assert_eq!(code(&out), 0);
    let verdict: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(verdict["verdict"], "pass");
    assert_eq!(verdict["sessions"], 10);

    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let idx = lines.iter().position(|l| l.contains("\"hk\"")).unwrap();
    let mut entry: Value = serde_json::from_str(&lines[idx]).unwrap();
    let hk = entry["fields"]["hk"].as_str().unwrap().to_string();
    let (w, hex) = hk.split_once(':').unwrap();
    let flipped = if hex.starts_with('0') {
        hex.replacen('0', "1", 1)
    } else {
        format!("0{}", &hex[1..])
    };
    entry["fields"]["hk"] = Value::String(format!("{w}:{flipped}"));
    lines[idx] = entry.to_string();
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    let out = rfidlab(&["replay", p]);
    assert_eq!(code(&out), 2);
    let verdict: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(verdict["verdict"], "fail");
    assert_eq!(verdict["field"], "hk");
}

#[test]
fn replay_of_garbage_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.jsonl");
    std::fs::write(&path, "not json\n").unwrap();
    assert_eq!(code(&rfidlab(&["replay", path.to_str().unwrap()])), 1);
    assert_eq!(code(&rfidlab(&["replay", "/nonexistent/t.jsonl"])), 1);
}

#[test]
fn snapshot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("db.json");
    let p = path.to_str().unwrap();
    let out = rfidlab(&["snapshot", "--sessions", "3", "--output", p]);
    assert_eq!(code(&out), 0);
    let snap = json_file(&path);
    assert_eq!(snap["protocol"], "fwcfp");
    assert!(snap["master_key"].is_null());
    let out = rfidlab(&["snapshot", "--load", p]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8(out.stdout).unwrap().contains("fwcfp snapshot v1"));

    std::fs::write(&path, r#"{"version":99,"hash":"sha256","protocol":"lwjx"}"#).unwrap();
    assert_eq!(code(&rfidlab(&["snapshot", "--load", p])), 1);
}

#[test]
fn mask_of_wrong_width_is_a_config_error() {
    let out = rfidlab(&["desync", "--mask", "32:00000001"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("alias is 128"));
}
