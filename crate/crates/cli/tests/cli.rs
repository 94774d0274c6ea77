use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("examples")
        .join(name)
}

fn qestim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qestim"))
        .args(args)
        .env_remove("QESTIM_THREADS")
        .output()
        .unwrap()
}

fn run_json(args: &[&str]) -> Value {
    let out = qestim(args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).unwrap()
}

fn ex(name: &str) -> String {
    example(name).to_str().unwrap().to_string()
}

fn param<'a>(report: &'a Value, name: &str) -> &'a Value {
    report["parameters"]
        .as_array()
        .unwrap()
        .iter()
        .find(|p| p["parameter"] == name)
        .unwrap()
}

fn verdict(report: &Value, name: &str) -> bool {
    report["verdicts"]
        .as_array()
        .unwrap()
        .iter()
        .find(|v| v["parameter"] == name)
        .unwrap()["learnable"]
        .as_bool()
        .unwrap()
}

#[test]
fn naive_phase_is_not_estimable() {
    let r = run_json(&["analyze-state", &ex("naive_model.json")]);
    let phi = param(&r, "phi");
    assert_eq!(phi["verdict"], "unbiased estimation impossible");
    assert!(phi["bound"].is_null());
    assert_eq!(phi["tests_agree"], true);
}

#[test]
fn ghz_phase_bound_matches_closed_form() {
    let r = run_json(&["analyze-state", &ex("ghz_model.json"), "--param", "phi"]);
    let p = [1.0 - 0.12 - 0.1 - 0.08, 0.12, 0.1, 0.08];
    let l = [0.92, 0.75, 0.6, 0.83];
    let want = 1.0 / (4.0 * (0..4).map(|x| p[x] * l[x] * l[x]).sum::<f64>());
    let phi = param(&r, "phi");
    assert_eq!(phi["verdict"], "estimable");
    assert!((phi["bound"].as_f64().unwrap() - want).abs() < 1e-10);
    assert_eq!(r["parameters"].as_array().unwrap().len(), 1);
}

#[test]
fn theta0_flag_overrides_the_file() {
    let r = run_json(&[
        "analyze-state",
        &ex("ghz_model.json"),
        "--param",
        "phi",
        "--theta0",
        "lambda_00=0.5",
        "--theta0",
        "p_01=0.2",
    ]);
    let p = [1.0 - 0.2 - 0.1 - 0.08, 0.2, 0.1, 0.08];
    let l = [0.5, 0.75, 0.6, 0.83];
    let want = 1.0 / (4.0 * (0..4).map(|x| p[x] * l[x] * l[x]).sum::<f64>());
    assert!((param(&r, "phi")["bound"].as_f64().unwrap() - want).abs() < 1e-10);
}

#[test]
fn pure_state_bound_is_inverse_fisher_information() {
    let r = run_json(&["analyze-state", &ex("pure_qubit.json")]);
    let q = r["qfim"][0][0].as_f64().unwrap();
    assert!((q - 1.0).abs() < 1e-8);
    let b = param(&r, "phi")["bound"].as_f64().unwrap();
    assert!((b * q - 1.0).abs() < 1e-12);
}

#[test]
fn rz_cycle_leaves_alpha_unlearnable() {
    let r = run_json(&["cycle-bench", &ex("rz_example.json")]);
    assert!(!verdict(&r, "alpha"));
    for p in ["lambda_1", "lambda_2", "theta_prime"] {
        assert!(verdict(&r, p), "{p}");
    }
    let rel = r["relations"]
        .as_array()
        .unwrap()
        .iter()
        .find(|rel| rel.get("alpha").is_some())
        .unwrap();
    let c = |k: &str| rel[k].as_f64().unwrap();
    let a = c("alpha");
    assert!((c("lambda_3M") / a + 1.0).abs() < 1e-8);
    assert!((c("lambda_3S") / a - 1.0).abs() < 1e-8);
    assert_eq!(r["depths"], serde_json::json!([0, 1, 2, 3, 4, 5, 6, 7, 8]));
}

#[test]
fn cnot_learnable_set_is_the_commutant() {
    let r = run_json(&["cycle-bench", &ex("cnot_example.json")]);
    let learnable: Vec<&str> = r["verdicts"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|v| v["learnable"] == true)
        .map(|v| v["parameter"].as_str().unwrap())
        .collect();
    // CNOT fixes exactly ZI, IX and ZX among non-identity Paulis
    assert_eq!(learnable, ["lambda_ZI", "lambda_IX", "lambda_ZX"]);
}

#[test]
fn depths_flag_replaces_file_depths() {
    let r = run_json(&["cycle-bench", &ex("cnot_example.json"), "--depths", "0,2,5"]);
    assert_eq!(r["depths"], serde_json::json!([0, 2, 5]));
    let r = run_json(&["cycle-bench", &ex("cnot_example.json"), "--depths", "1..3"]);
    assert_eq!(r["depths"], serde_json::json!([1, 2, 3]));
}

#[test]
fn twirl_gives_the_four_parameter_form() {
    let r = run_json(&["twirl", &ex("single_qubit_ptm.json")]);
    let m: Vec<Vec<f64>> = serde_json::from_value(r["matrix"].clone()).unwrap();
    // rows and columns in the order I, Z, X, Y
    for (i, j) in [
        (0, 1),
        (0, 2),
        (0, 3),
        (1, 2),
        (1, 3),
        (2, 0),
        (2, 1),
        (3, 0),
        (3, 1),
    ] {
        assert!(m[i][j].abs() < 1e-12, "({i}, {j})");
    }
    assert!((m[0][0] - 1.0).abs() < 1e-12);
    assert!((m[2][2] - m[3][3]).abs() < 1e-12);
    assert!((m[2][3] + m[3][2]).abs() < 1e-12);
    assert!((m[1][0] - 0.2).abs() < 1e-12);
    assert!((m[1][1] - 0.8).abs() < 1e-12);
    assert_eq!(r["provenance"]["tool"], "qestim");
}

#[test]
fn twirled_ptm_reads_back_to_itself() {
    let dir = tempfile::tempdir().unwrap();
    let once = dir.path().join("once.json");
    let twice = dir.path().join("twice.json");
    let o = once.to_str().unwrap();
    assert!(qestim(&["twirl", &ex("single_qubit_ptm.json"), "-o", o])
        .status
        .success());
    assert!(qestim(&["twirl", o, "-o", twice.to_str().unwrap()])
        .status
        .success());
    let a: Value = serde_json::from_slice(&std::fs::read(&once).unwrap()).unwrap();
    let b: Value = serde_json::from_slice(&std::fs::read(&twice).unwrap()).unwrap();
    assert_eq!(a["matrix"], b["matrix"]);
    assert_eq!(a["labels"], b["labels"]);
}

#[test]
fn output_is_byte_identical_across_runs() {
    for args in [
        vec!["analyze-state".to_string(), ex("ghz_model.json")],
        vec!["cycle-bench".to_string(), ex("rz_example.json")],
        vec![
            "simulate".to_string(),
            ex("ghz_scenario.json"),
            "--shots".into(),
            "5000".into(),
            "--seed".into(),
            "7".into(),
        ],
    ] {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let a = qestim(&args).stdout;
        let b = qestim(&args).stdout;
        assert!(!a.is_empty());
        assert_eq!(a, b, "{args:?}");
    }
}

#[test]
fn simulation_does_not_depend_on_thread_count() {
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_qestim"))
            .args([
                "simulate",
                &ex("ghz_scenario.json"),
                "--shots",
                "50000",
                "--seed",
                "3",
            ])
            .env("QESTIM_THREADS", threads)
            .output()
            .unwrap()
            .stdout
    };
    let base = run("1");
    assert_eq!(run("3"), base);
    assert_eq!(run("0"), base);
}

#[test]
fn simulate_writes_report_and_histogram() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let out = qestim(&[
        "simulate",
        &ex("ghz_scenario.json"),
        "--shots",
        "20000",
        "--seed",
        "1",
        "-o",
        report.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let r: Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(r["shots"], 20000);
    assert!(r["z_score_bias"].as_f64().unwrap().abs() <= 4.0);
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("outcome,label,probability,count"));
    let total: u64 = lines
        .map(|l| l.rsplit(',').next().unwrap().parse::<u64>().unwrap())
        .sum();
    assert_eq!(total, 20000);
    let hash = r["provenance"]["input_hash"].as_str().unwrap();
    assert!(hash.starts_with("sha256:") && hash.len() == 7 + 64);
}

#[test]
fn miscalibrated_readout_shows_bias() {
    let r = run_json(&[
        "simulate",
        &ex("naive_scenario.json"),
        "--shots",
        "1000000",
        "--seed",
        "4",
    ]);
    assert!(r["z_score_bias"].as_f64().unwrap().abs() > 5.0);
}

#[test]
fn malformed_json_reports_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("bad.json");
    std::fs::write(&f, "{\"kind\": \"builtin\",\n  \"name\": ").unwrap();
    let out = qestim(&["analyze-state", f.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let e = stderr_json(&out);
    assert_eq!(e["error"]["kind"], "parse_error");
    assert_eq!(e["error"]["line"], 2);
    assert!(e["error"]["column"].as_u64().unwrap() > 0);
    assert!(out.stdout.is_empty());
}

#[test]
fn unknown_fields_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (
            "analyze-state",
            r#"{"kind": "builtin", "name": "naive", "extra": 1}"#,
        ),
        ("cycle-bench", r#"{"gate": "cnot", "depth": [1, 2]}"#),
        ("twirl", r#"{"n": 1, "matrix": [[1]], "note": "x"}"#),
        ("simulate", r#"{"kind": "twirled", "shots": 10}"#),
    ];
    for (cmd, text) in cases {
        let f = dir.path().join("in.json");
        std::fs::write(&f, text).unwrap();
        let out = qestim(&[cmd, f.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(1), "{cmd}");
        let msg = stderr_json(&out)["error"]["message"].to_string();
        assert!(msg.contains("unknown field"), "{cmd}: {msg}");
    }
}

#[test]
fn require_estimable_fails_with_status_two() {
    let out = qestim(&[
        "analyze-state",
        &ex("naive_model.json"),
        "--param",
        "phi",
        "--require-estimable",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["kind"], "verdict");
    // the report is still written
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(param(&r, "phi")["estimable"], false);

    let out = qestim(&[
        "analyze-state",
        &ex("ghz_model.json"),
        "--param",
        "phi",
        "--require-estimable",
    ]);
    assert_eq!(out.status.code(), Some(0));

    let out = qestim(&["cycle-bench", &ex("rz_example.json"), "--require-learnable"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn input_errors_exit_with_status_one() {
    let out = qestim(&["analyze-state", "/nonexistent/model.json"]);
    assert_eq!(out.status.code(), Some(1));
    let out = qestim(&["analyze-state", &ex("ghz_model.json"), "--theta0", "nope=1"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"]["kind"], "invalid_input");
    let out = qestim(&["cycle-bench", &ex("rz_example.json"), "--depths", "4..1"]);
    assert_eq!(out.status.code(), Some(1));
    let out = qestim(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"]["kind"], "usage");
    let out = Command::new(env!("CARGO_BIN_EXE_qestim"))
        .args(["twirl", &ex("single_qubit_ptm.json")])
        .env("QESTIM_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn channel_analysis_separates_learnable_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("ch.json");
    std::fs::write(&f, r#"{"kind": "builtin", "name": "pauli", "n": 1}"#).unwrap();
    let r = run_json(&["analyze-channel", f.to_str().unwrap()]);
    for p in ["lambda_Z", "lambda_X", "lambda_Y"] {
        assert_eq!(param(&r, p)["verdict"], "learnable");
    }
    // an over-parametrized depolarizing-like model: lambda_Z = lambda_X = 1 - a - b
    let ch = r#"{
        "kind": "explicit", "n": 1, "parameters": ["a", "b"],
        "ptm": [[1,0,0,0],[0,0.9,0,0],[0,0,0.9,0],[0,0,0,0.9]],
        "derivatives": [
            [[0,0,0,0],[0,-1,0,0],[0,0,-1,0],[0,0,0,-1]],
            [[0,0,0,0],[0,-1,0,0],[0,0,-1,0],[0,0,0,-1]]
        ],
        "theta0": {"a": 0.05, "b": 0.05}
    }"#;
    std::fs::write(&f, ch).unwrap();
    let out = qestim(&[
        "analyze-channel",
        f.to_str().unwrap(),
        "--require-learnable",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(param(&r, "a")["verdict"], "not learnable");
}

#[test]
fn help_and_version_exit_cleanly() {
    let out = qestim(&["--version"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains(env!("CARGO_PKG_VERSION")));
    assert_eq!(qestim(&["cycle-bench", "--help"]).status.code(), Some(0));
}
