use std::path::Path;
use std::process::{Command, Output};

fn txpar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_txpar"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn exit_codes() {
    assert_eq!(code(&txpar(&["analyze", "--gen", "payments:4"])), 0);
    assert_eq!(code(&txpar(&["analyze", "/definitely/missing.trace"])), 2);
    assert_eq!(code(&txpar(&["analyze", "--gen", "payments:0"])), 1);
    assert_eq!(code(&txpar(&["analyze"])), 1);
    assert_eq!(code(&txpar(&["no-such-command"])), 1);
    assert_eq!(code(&txpar(&["--help"])), 0);
    let o = txpar(&["analyze", "--gen", "nft-mint:3", "--threads", "0"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("thread"));
}

#[test]
fn malformed_trace_is_validation_error_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.trace");
    std::fs::write(&path, "# txpar trace v1\n{\"sender\":\"a\",\"gas\":1}\nnot json\n").unwrap();
    let o = txpar(&["analyze", path.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn generate_then_analyze_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("corpus");
    let o = txpar(&["generate", "--gen", "token-distribution:5:2", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let trace = out.join("w0000.trace");
    assert!(trace.exists() && out.join("w0001.trace").exists());
    let o = txpar(&["analyze", trace.to_str().unwrap(), "--format", "csv", "--threads", "4"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    // single-sender distribution: the bottleneck path is every transaction
    assert!(text.contains("0 1 2 3 4"), "{text}");
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &str| {
        vec![
            "simulate".to_string(),
            "--gen".into(),
            "defi-fee:12:4".into(),
            "--mode".into(),
            "occ-da".into(),
            "--baseline".into(),
            "occ-det-commit".into(),
            "--seed".into(),
            "11".into(),
            "--out".into(),
            out.into(),
        ]
    };
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let a = args(out.to_str().unwrap());
        let refs: Vec<&str> = a.iter().map(String::as_str).collect();
        assert_eq!(code(&txpar(&refs)), 0);
    }
    let a = read_dir_sorted(&dir.path().join("a"));
    assert_eq!(a.len(), 2);
    assert_eq!(a, read_dir_sorted(&dir.path().join("b")));
}

#[test]
fn config_file_and_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.json");
    std::fs::write(
        &cfg,
        r#"{
  "input": {"generator": {"components": [
      {"pattern": "payments", "gas": {"kind": "fixed", "gas": 10}, "weight": 1},
      {"pattern": "nft-mint", "gas": {"kind": "fixed", "gas": 10}, "weight": 1}],
    "n": 16, "count": 3}},
  "threads": [4],
  "variants": [
    {"name": "base"},
    {"name": "free", "transforms": [
      {"transform": "prune-edges", "params": {"target_keys": ["m1:items.length"], "probability": "1"}}]}
  ]
}"#,
    )
    .unwrap();
    let o = txpar(&["histogram", "--config", cfg.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "bucket_lo,bucket_hi,base@4,free@4");
    // with the counter edges gone, 16 txs of equal gas pack perfectly onto 4 threads
    assert_eq!(text.lines().last().unwrap(), "3,4,0,3");

    let o = txpar(&["histogram", "--config", cfg.to_str().unwrap(), "--format", "csv", "--threads", "2"]);
    assert!(stdout(&o).starts_with("bucket_lo,bucket_hi,base@2,free@2\n"));
    assert_eq!(code(&txpar(&["analyze", "--config", "/missing/cfg.json"])), 2);
}

#[test]
fn transform_flag_chains_steps() {
    let step = r#"{"transform":"cadd-rewrite","params":{"target_keys":["@balance:m0-fee-account"]}}"#;
    let o = txpar(&["transform", "--gen", "defi-fee:4", "--transform", step]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("\"cadds\":[[\"@balance:m0-fee-account\""), "{text}");

    let dependent = r#"{"transform":"split-senders","params":{"hot_sender":"nobody","m":2,"sender_balance_key":"a:b"}}"#;
    assert_eq!(code(&txpar(&["transform", "--gen", "defi-fee:4", "--transform", dependent])), 1);
}

#[test]
fn probe_reports_pass() {
    let o = txpar(&["probe", "--gen", "nft-mint:10:2", "--trials", "5", "--threads", "2,8", "--format", "csv"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().skip(1).all(|l| l.ends_with(",true")));
}
