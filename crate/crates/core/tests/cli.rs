use std::path::Path;
use std::process::Command;

use resync::cli::{run, EXIT_INFEASIBLE, EXIT_INVALID, EXIT_IO, EXIT_MALFORMED, EXIT_OK};

fn resync(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(std::iter::once("resync").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_simulate_and_recover_shifted_block() {
    let dir = tempfile::tempdir().unwrap();
    let pattern = dir.path().join("pattern.rsyn");
    let detections = dir.path().join("block.txt");
    let (code, out, _) = resync(&["gen-pattern", "--seed", "7", "--bins", "65536", "--out", s(&pattern)]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("bins=65536 popcount=32768"));
    let (code, _, err) = resync(&[
        "gen-detections", "--pattern", s(&pattern), "--out", s(&detections), "--eta", "0.05", "--qber", "0",
        "--offset-ps", "2400", "--text",
    ]);
    assert_eq!(code, EXIT_OK, "{err}");

    let (code, out, err) = resync(&[
        "recover", "--pattern", s(&pattern), "--detections", s(&detections), "--delta-max", "1000",
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(err.contains("\"delta_max\":1000"), "config echo missing: {err}");
    for line in ["status: accepted", "delta_bins: 3", "delta_align_ps: 0", "delta_total_ps: 2400", "tested_count: 6", "threshold_abs: 250", "correlation_abs: 500"] {
        assert!(out.contains(line), "missing {line:?} in\n{out}");
    }

    let (code, out, _) = resync(&[
        "recover", "--pattern", s(&pattern), "--detections", s(&detections), "--delta-max", "1000", "--json",
    ]);
    assert_eq!(code, EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(v["status"], "accepted");
    assert_eq!(v["delta_bins"], 3);
    assert_eq!(v["tested_count"], 6);
    // schema-stable: the same input gives byte-identical output
    let (_, again, _) = resync(&[
        "recover", "--pattern", s(&pattern), "--detections", s(&detections), "--delta-max", "1000", "--json",
    ]);
    assert_eq!(out, again);
}

#[test]
fn error_classes_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let pattern = dir.path().join("pattern.rsyn");
    assert_eq!(resync(&["gen-pattern", "--bins", "4096", "--out", s(&pattern)]).0, EXIT_OK);

    let missing = dir.path().join("absent.txt");
    let (code, _, err) = resync(&["recover", "--pattern", s(&pattern), "--detections", s(&missing)]);
    assert_eq!(code, EXIT_IO);
    assert!(err.starts_with("effective config") && err.contains("error:"));

    let garbage = dir.path().join("garbage.txt");
    std::fs::write(&garbage, "12\nnot-a-number\n").unwrap();
    let (code, _, err) = resync(&["recover", "--pattern", s(&pattern), "--detections", s(&garbage)]);
    assert_eq!(code, EXIT_MALFORMED, "{err}");

    let truncated = dir.path().join("truncated.rsyn");
    let bytes = std::fs::read(&pattern).unwrap();
    std::fs::write(&truncated, &bytes[..bytes.len() - 1]).unwrap();
    let (code, _, err) = resync(&["recover", "--pattern", s(&truncated), "--detections", s(&garbage)]);
    assert_eq!(code, EXIT_MALFORMED, "{err}");

    let (code, _, _) = resync(&["plan", "--qmax", "0.45", "--p-correct", "0.99"]);
    assert_eq!(code, EXIT_INFEASIBLE);

    let (code, _, _) = resync(&["recover", "--pattern", s(&pattern), "--detections", s(&garbage), "--t", "1.5"]);
    assert_eq!(code, EXIT_INVALID);

    let (code, _, _) = resync(&["frobnicate"]);
    assert_eq!(code, 2);
}

#[test]
fn plan_json_and_text_agree() {
    let args = ["plan", "--qmax", "0.2", "--max-km", "100", "--interval-s", "10", "--p-day", "0.999999", "--p-correct", "0.99", "--rate-hz", "3000"];
    let (code, text, _) = resync(&args);
    assert_eq!(code, EXIT_OK);
    assert!(text.contains("delta_max: 612746 timebins (100.0 km)"), "{text}");
    let mut json_args = args.to_vec();
    json_args.push("--json");
    let (_, json, _) = resync(&json_args);
    let v: serde_json::Value = serde_json::from_str(json.trim()).unwrap();
    assert_eq!(v["nd_star"], 284);
    assert!((v["t_star"].as_f64().unwrap() - 0.489).abs() < 1e-9);
    assert!(v["skr_penalty"].as_f64().unwrap() < 0.01);
}

#[test]
fn grid_and_penalty_csv() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.csv");
    let (code, out, err) = resync(&[
        "grid", "--qmax", "0.2", "--interval-s", "10", "--nd-start", "100", "--nd-end", "400", "--nd-step", "100",
        "--t-start", "0.4", "--t-end", "0.6", "--t-step", "0.1", "--out", s(&grid),
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.contains("wrote 12 cells"), "{out}");
    let text = std::fs::read_to_string(&grid).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "nd,t,p_correct,p_no_wrong_day,feasible");
    assert_eq!(lines.len(), 13);
    // (300, 0.5) misses p_correct >= 0.99 by a little, (400, 0.5) meets both
    assert!(lines.iter().any(|l| l.starts_with("400,0.500000,") && l.ends_with(",1")), "{text}");
    assert!(lines.iter().any(|l| l.starts_with("300,0.500000,") && l.ends_with(",0")));
    assert!(lines.iter().filter(|l| l.starts_with("100,")).all(|l| l.ends_with(",0")));

    let penalty = dir.path().join("penalty.csv");
    let (code, _, err) = resync(&[
        "penalty", "--interval-s", "10", "--qmax-list", "0.05,0.2", "--rates-hz", "3000,50000", "--out", s(&penalty),
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    let text = std::fs::read_to_string(&penalty).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.contains("\n0.2,3000,10,284,0.489000,"), "{text}");
}

#[test]
fn simulate_mc_and_bench_commands() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("scenario.json");
    std::fs::write(
        &config,
        r#"{"n_q": 524288, "n_r": 65536, "pattern_seed": 1, "threshold_t": 0.5, "delta_max": 4096,
            "nd_max": 500, "n_blocks": 6, "rng_seed": 2, "record_timing": false,
            "channel": {"detection_prob": 0.02, "qber": 0.05},
            "events": [{"block": 2, "type": "set_fiber_km", "length_km": 0.3}]}"#,
    )
    .unwrap();
    let report = dir.path().join("report.csv");
    let summary = dir.path().join("summary.json");
    let (code, out, err) = resync(&["simulate", "--config", s(&config), "--out", s(&report), "--summary", s(&summary)]);
    assert_eq!(code, EXIT_OK, "{err}");
    let v: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(v["correct"], 6);
    assert_eq!(v["offset_changes"], 1);
    assert_eq!(v["recovered_changes"], 1);
    assert_eq!(std::fs::read_to_string(&summary).unwrap().trim(), out.trim());
    assert_eq!(std::fs::read_to_string(&report).unwrap().lines().count(), 7);

    std::fs::write(&config, "{\"n_q\": ").unwrap();
    let (code, _, _) = resync(&["simulate", "--config", s(&config), "--out", s(&report)]);
    assert_eq!(code, EXIT_MALFORMED);

    let (code, out, err) = resync(&["mc", "--trials", "50", "--qber", "0.05", "--json"]);
    assert_eq!(code, EXIT_OK, "{err}");
    let v: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(v["correct"], 50);

    let (code, out, err) = resync(&["bench", "--pattern-bins", "65536", "--delta-max", "1000", "--reps", "5"]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.contains("full sweep (2001 offsets)"), "{out}");
}

#[test]
fn binary_exit_code_and_threads_variable() {
    let exe = env!("CARGO_BIN_EXE_resync");
    let status = Command::new(exe).args(["plan", "--qmax", "0.45"]).status().unwrap();
    assert_eq!(status.code(), Some(EXIT_INFEASIBLE));
    let out = Command::new(exe)
        .args(["mc", "--trials", "20", "--qber", "0.05"])
        .env("RESYNC_THREADS", "2")
        .output()
        .unwrap();
    assert!(out.status.success());
    let out = Command::new(exe)
        .args(["mc", "--trials", "20"])
        .env("RESYNC_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_INVALID));
    let help = Command::new(exe).arg("--help").output().unwrap();
    assert!(String::from_utf8_lossy(&help.stdout).contains("5  infeasible parameters"));
}
