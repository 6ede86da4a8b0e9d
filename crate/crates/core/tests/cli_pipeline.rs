use std::path::{Path, PathBuf};
use std::process::Command;

use qoe_transfer::cli::{cmd_run, main_with_args};
use qoe_transfer::par::Execution;

fn qoe(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_qoe")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SESSIONS: &str = "session_id,content_id,ti,si,fps,segment_bitrates,initial_stall_s,intermediate_stalls,mos
s1,c1,40,60,24,\"1.0;1.0\",0,\"\",75
s2,c2,90,30,30,\"0.5;1.5;3.0\",1.2,\"0.5;0.7\",48.5
s3,c1,40,60,24,\"4.0;2.0;2.0;0.5\",0,\"2.0\",33
";

#[test]
fn ingest_writes_one_row_per_session() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.csv");
    let out = dir.path().join("features.csv");
    std::fs::write(&raw, SESSIONS).unwrap();
    let o = qoe(&["ingest", "--input", s(&raw), "--output", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "TI,SI,fps,nstalls,stallTimeIntermediateTotal,stallTimeInitialTotal,meanBitrate,bitrateTrend,lastbitrate,mos"
    );
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[1], "40,60,24,0,0,0,1,0,1,75");
}

#[test]
fn malformed_row_exits_with_data_error_and_row_number() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.csv");
    std::fs::write(&raw, SESSIONS.replace("48.5", "forty")).unwrap();
    let o = qoe(&["ingest", "--input", s(&raw), "--output", s(&dir.path().join("f.csv"))]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("row 2") && err.contains("mos"), "{err}");
    assert!(!dir.path().join("f.csv").exists());
}

#[test]
fn synth_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a.csv"), dir.path().join("b.csv"), dir.path().join("c.csv"));
    for (p, seed) in [(&a, "5"), (&b, "5"), (&c, "6")] {
        assert!(qoe(&["synth", "--output", s(p), "--seed", seed]).status.success());
    }
    let read = |p: &PathBuf| std::fs::read(p).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    assert_eq!(String::from_utf8(read(&a)).unwrap().lines().count(), 451);
}

#[test]
fn step_commands_compose() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    let ok = |args: &[&str]| {
        let o = qoe(args);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        o
    };
    ok(&["synth", "--output", s(&p("sessions.csv")), "--seed", "3"]);
    ok(&["ingest", "--input", s(&p("sessions.csv")), "--output", s(&p("all.csv"))]);
    ok(&["split", "--input", s(&p("all.csv")), "--g0", s(&p("g0.csv")), "--g1", s(&p("g1.csv"))]);
    assert_eq!(std::fs::read_to_string(p("g0.csv")).unwrap().lines().count(), 354);
    ok(&[
        "train", "--input", s(&p("g0.csv")), "--algorithm", "gbt", "--seed", "1", "--param", "n_rounds=40",
        "--param", "eta=0.1", "--features", "generic", "--as-base", "--output", s(&p("base.json")),
    ]);
    ok(&[
        "train", "--input", s(&p("g1.csv")), "--algorithm", "model_tree", "--seed", "1", "--output",
        s(&p("local.json")),
    ]);
    ok(&["export", "--model", s(&p("base.json")), "--as-base", "--output", s(&p("base2.json"))]);
    assert_eq!(std::fs::read(p("base.json")).unwrap(), std::fs::read(p("base2.json")).unwrap());
    ok(&["import", "--model", s(&p("base.json")), "--input", s(&p("g1.csv")), "--output", s(&p("pred.csv"))]);
    ok(&[
        "stack", "--base", s(&p("base.json")), "--local", s(&p("local.json")), "--input", s(&p("g1.csv")),
        "--w0", "0.5", "--output", s(&p("stacked.csv")),
    ]);
    ok(&[
        "scan", "--base", s(&p("base.json")), "--local", s(&p("local.json")), "--input", s(&p("g1.csv")),
        "--output", s(&p("scan.dat")),
    ]);
    assert_eq!(std::fs::read_to_string(p("scan.dat")).unwrap().lines().count(), 12);
    let o = ok(&["evaluate", "--model", s(&p("base.json")), "--test", &format!("G0={}", s(&p("g0.csv"))), "--test", &format!("G1={}", s(&p("g1.csv")))]);
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 3);
    ok(&["shap", "--model", s(&p("base.json")), "--input", s(&p("g0.csv")), "--plot", s(&p("shap.csv")), "--summary", s(&p("summary.csv"))]);
    let plot = std::fs::read_to_string(p("shap.csv")).unwrap();
    assert!(plot.starts_with("row_id,feature,feature_value,phi\n"));
    assert_eq!(plot.lines().count(), 1 + 353 * 7);
    ok(&["ks", "--g0", s(&p("g0.csv")), "--g1", s(&p("g1.csv")), "--output", s(&p("ks.csv"))]);

    // a local model cannot be exported as a base model
    let o = qoe(&["export", "--model", s(&p("local.json")), "--as-base", "--output", s(&p("x.json"))]);
    assert_eq!(o.status.code(), Some(5));
    let o = qoe(&["train", "--input", s(&p("g0.csv")), "--algorithm", "svm", "--seed", "1", "--output", s(&p("x.json"))]);
    assert_eq!(o.status.code(), Some(2));
}

fn write_config(dir: &Path, repetitions: usize) -> PathBuf {
    let sessions = dir.join("sessions.csv");
    assert_eq!(main_with_args(["qoe", "synth", "--output", s(&sessions), "--seed", "2", "--n-sessions", "200"]), 0);
    let cfg = dir.join("exp.toml");
    std::fs::write(
        &cfg,
        format!(
            r#"dataset = "sessions.csv"
seed = 100
repetitions = {repetitions}
output_dir = "report"

[reference]
algorithm = "gbt"
params = {{ n_rounds = 40, eta = 0.1 }}

[[pairs]]
base = {{ algorithm = "gbt", params = {{ n_rounds = 40, eta = 0.1 }} }}
local = {{ algorithm = "gbt", params = {{ n_rounds = 40, eta = 0.1 }} }}

[[pairs]]
base = {{ algorithm = "mlp", params = {{ epochs = 10 }} }}
local = {{ algorithm = "model_tree" }}
"#
        ),
    )
    .unwrap();
    cfg
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn run_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 3);
    cmd_run(&cfg, &[], Execution::default()).unwrap();
    let first = snapshot(&dir.path().join("report"));
    cmd_run(&cfg, &[], Execution::Sequential).unwrap();
    let second = snapshot(&dir.path().join("report"));
    assert_eq!(first, second);
    let names: Vec<&str> = first.iter().map(|(n, _)| n.as_str()).collect();
    for f in [
        "config.json", "ks.csv", "model_trees.csv", "report.json", "scan_gbt-gbt.dat", "scan_mlp-model_tree.dat",
        "seed_ledger.csv", "shap_plot.csv", "shap_summary.csv", "stacking_checks.csv",
        "table3_content_dependency.csv", "table4_splits.csv", "table5_cross.csv", "table6_stacking.csv",
    ] {
        assert!(names.contains(&f), "missing {f}");
    }
    let checks = String::from_utf8(first.iter().find(|(n, _)| n == "stacking_checks.csv").unwrap().1.clone()).unwrap();
    assert!(checks.lines().skip(1).all(|l| l.ends_with(",true")), "{checks}");
    let ledger = String::from_utf8(first.iter().find(|(n, _)| n == "seed_ledger.csv").unwrap().1.clone()).unwrap();
    assert!(ledger.contains("table6:mlp-model_tree,2,102"));
}

#[test]
fn single_repetition_reports_missing_half_widths() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 3);
    let code = main_with_args(["qoe", "run", "--config", s(&cfg), "--repetitions", "1", "--pairs.1.base.params.epochs=5"]);
    assert_eq!(code, 0);
    let t3 = std::fs::read_to_string(dir.path().join("report/table3_content_dependency.csv")).unwrap();
    assert!(t3.lines().skip(1).all(|l| l.contains("(n/a)")), "{t3}");
    let t6 = std::fs::read_to_string(dir.path().join("report/table6_stacking.csv")).unwrap();
    assert!(t6.contains("(n/a)"));
}

#[test]
fn config_errors_exit_two_and_leave_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 2);
    assert_eq!(main_with_args(["qoe", "run", "--config", s(&cfg), "--set", "reference.params.depth=3"]), 2);
    assert_eq!(main_with_args(["qoe", "run", "--config", s(&cfg), "--dataset", "missing.csv"]), 2);
    assert_eq!(main_with_args(["qoe", "run", "--config", s(&dir.path().join("nope.toml"))]), 2);
    assert!(!dir.path().join("report").exists());
}

#[test]
fn failing_stage_is_named_and_outputs_removed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 2);
    // a base trained on all features cannot be transferred
    let err = cmd_run(&cfg, &["pairs.0.base_features=\"all\"".into()], Execution::default()).unwrap_err();
    assert_eq!(err.exit_code(), 5);
    assert!(err.to_string().contains("table6:gbt-gbt"), "{err}");
    assert!(!dir.path().join("report").exists());
    assert!(!dir.path().join("report.partial").exists());
}
