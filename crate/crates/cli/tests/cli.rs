//! End-to-end CLI behavior: exit codes, report shape, config-file
//! precedence, and output determinism.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_splitcheck"))
}

fn run_ok(args: &[&str]) -> (i32, String, String) {
    let out = bin().args(args).output().expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn gen_is_deterministic_and_check_null_accepts() {
    let dir = tempfile::tempdir().unwrap();
    let csv_a = dir.path().join("a.csv");
    let csv_b = dir.path().join("b.csv");
    for path in [&csv_a, &csv_b] {
        let (code, _, err) = run_ok(&[
            "gen",
            "--scenario",
            "marginal",
            "--hetero-cols",
            "0",
            "--rows",
            "80",
            "--groups",
            "2",
            "--seed",
            "7",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(code, 0, "stderr: {err}");
    }
    assert_eq!(
        std::fs::read(&csv_a).unwrap(),
        std::fs::read(&csv_b).unwrap(),
        "gen output must be byte-identical under a fixed seed"
    );

    let report = dir.path().join("report.json");
    let (code, stdout, err) = run_ok(&[
        "check",
        "--input",
        csv_a.to_str().unwrap(),
        "--b",
        "99",
        "--seed",
        "11",
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "null data must not reject; stdout: {stdout} stderr: {err}");
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["schema_version"], 1);
    assert_eq!(json["decision"], "no_reject");
    assert_eq!(json["methods"].as_array().unwrap().len(), 4);
    assert!(json["token_map"]["columns"].as_array().unwrap().len() == 10);
    assert!(json.get("timing_ms").is_none(), "timing must be opt-in");
}

#[test]
fn check_rejects_imbalanced_data() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("strong.csv");
    let (code, _, _) = run_ok(&[
        "gen",
        "--scenario",
        "marginal",
        "--signal",
        "strong",
        "--hetero-cols",
        "10",
        "--rows",
        "100",
        "--groups",
        "2",
        "--seed",
        "3",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let (code, stdout, _) = run_ok(&[
        "check",
        "--input",
        csv.to_str().unwrap(),
        "--b",
        "99",
        "--seed",
        "4",
    ]);
    assert_eq!(code, 1, "strong imbalance must exit 1; stdout: {stdout}");
    assert!(stdout.contains("decision: reject"));
}

#[test]
fn usage_errors_exit_2() {
    // missing group column
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("x.csv");
    std::fs::write(&csv, "g,a\nA,1\nB,2\n").unwrap();
    let (code, _, err) = run_ok(&[
        "check",
        "--input",
        csv.to_str().unwrap(),
        "--group-col",
        "missing",
    ]);
    assert_eq!(code, 2);
    assert!(err.contains("missing"), "stderr: {err}");

    let (code, _, _) = run_ok(&["gen", "--scenario", "marginal", "--rows", "0"]);
    assert_eq!(code, 2);

    let (code, _, _) = run_ok(&["gen", "--scenario", "nope"]);
    assert_eq!(code, 2);

    let (code, _, _) = run_ok(&["check", "--input", "/does/not/exist.csv"]);
    assert_eq!(code, 2);

    let (code, _, _) = run_ok(&["simulate", "--scenario", "marginal", "--reps", "0"]);
    assert_eq!(code, 2);
}

#[test]
fn reports_identical_across_threads_and_runs() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("d.csv");
    run_ok(&[
        "gen",
        "--scenario",
        "combined",
        "--signal",
        "medium",
        "--rows",
        "60",
        "--groups",
        "3",
        "--hetero-cols",
        "3",
        "--seed",
        "9",
        "--out",
        csv.to_str().unwrap(),
    ]);
    let mut reports = Vec::new();
    for (i, threads) in ["1", "1", "4"].iter().enumerate() {
        let report = dir.path().join(format!("r{i}.json"));
        let (code, stdout, err) = run_ok(&[
            "check",
            "--input",
            csv.to_str().unwrap(),
            "--b",
            "49",
            "--seed",
            "21",
            "--threads",
            threads,
            "--report",
            report.to_str().unwrap(),
        ]);
        assert!(code == 0 || code == 1, "stderr: {err}");
        reports.push((std::fs::read(&report).unwrap(), stdout));
    }
    assert_eq!(reports[0], reports[1], "same-seed runs must match");
    assert_eq!(reports[0], reports[2], "--threads must not change output");
}

#[test]
fn simulate_emits_power_csv() {
    let (code, stdout, err) = run_ok(&[
        "simulate",
        "--scenario",
        "marginal",
        "--signal",
        "strong",
        "--hetero-cols",
        "10",
        "--rows",
        "60",
        "--groups",
        "2",
        "--reps",
        "5",
        "--b",
        "19",
        "--methods",
        "baseline,randchi",
        "--seed",
        "2",
    ]);
    assert_eq!(code, 0, "stderr: {err}");
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines[0], "method,scenario,signal,n_hetero,m,reps,power,se");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("baseline,marginal,strong,10,10,5,"));
    assert!(lines[2].starts_with("randchi,marginal,strong,10,10,5,"));
}

#[test]
fn simulate_compare_holm_adds_paired_rows() {
    let (code, stdout, err) = run_ok(&[
        "simulate",
        "--scenario",
        "marginal",
        "--signal",
        "medium",
        "--hetero-cols",
        "5",
        "--rows",
        "60",
        "--groups",
        "2",
        "--reps",
        "4",
        "--b",
        "19",
        "--methods",
        "randchi",
        "--compare-holm",
        "--seed",
        "5",
    ]);
    assert_eq!(code, 0, "stderr: {err}");
    let body: Vec<&str> = stdout.lines().skip(1).collect();
    assert_eq!(body.len(), 2);
    assert!(body[0].starts_with("randchi,"));
    assert!(body[1].starts_with("randchi_holm,"));
}

#[test]
fn simulate_sweep_and_flag_table() {
    let dir = tempfile::tempdir().unwrap();
    let flags = dir.path().join("flags.csv");
    let out = dir.path().join("power.csv");
    let (code, _, err) = run_ok(&[
        "simulate",
        "--scenario",
        "marginal",
        "--signal",
        "strong",
        "--rows",
        "50",
        "--groups",
        "2",
        "--reps",
        "3",
        "--b",
        "19",
        "--methods",
        "randchi",
        "--sweep-hetero",
        "2..6:2",
        "--flag-table",
        flags.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "8",
    ]);
    assert_eq!(code, 0, "stderr: {err}");
    let power = std::fs::read_to_string(&out).unwrap();
    assert_eq!(power.lines().count(), 4, "3 sweep points + header");
    let flag_table = std::fs::read_to_string(&flags).unwrap();
    assert!(flag_table.starts_with("column,count\n"));
    assert_eq!(flag_table.lines().count(), 11, "10 columns + header");
}

#[test]
fn config_file_applies_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("data.csv");
    run_ok(&[
        "gen",
        "--scenario",
        "marginal",
        "--hetero-cols",
        "0",
        "--rows",
        "40",
        "--groups",
        "2",
        "--seed",
        "1",
        "--out",
        csv.to_str().unwrap(),
    ]);
    let conf = dir.path().join("splitcheck.conf");
    std::fs::write(
        &conf,
        "methods = disco\nb = 19   # small run\nseed = 42\n",
    )
    .unwrap();
    // config selects disco only
    let report = dir.path().join("r.json");
    let (code, _, err) = run_ok(&[
        "check",
        "--input",
        csv.to_str().unwrap(),
        "--config",
        conf.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]);
    assert!(code == 0 || code == 1, "stderr: {err}");
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["settings"]["b"], 19);
    assert_eq!(json["settings"]["seed"], 42);
    assert_eq!(json["methods"].as_array().unwrap().len(), 1);
    // explicit flag beats the config value
    let (_, _, _) = run_ok(&[
        "check",
        "--input",
        csv.to_str().unwrap(),
        "--config",
        conf.to_str().unwrap(),
        "--b",
        "29",
        "--report",
        report.to_str().unwrap(),
    ]);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["settings"]["b"], 29);

    // unknown config key is a usage error
    std::fs::write(&conf, "nonsense = 1\n").unwrap();
    let (code, _, _) = run_ok(&[
        "check",
        "--input",
        csv.to_str().unwrap(),
        "--config",
        conf.to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
}

#[test]
fn timing_is_opt_in() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("t.csv");
    run_ok(&[
        "gen",
        "--scenario",
        "marginal",
        "--hetero-cols",
        "0",
        "--rows",
        "40",
        "--groups",
        "2",
        "--seed",
        "1",
        "--out",
        csv.to_str().unwrap(),
    ]);
    let report = dir.path().join("r.json");
    run_ok(&[
        "check",
        "--input",
        csv.to_str().unwrap(),
        "--methods",
        "disco",
        "--b",
        "19",
        "--timing",
        "--report",
        report.to_str().unwrap(),
    ]);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(json["timing_ms"].is_array());
}

#[test]
fn json_format_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("j.csv");
    run_ok(&[
        "gen",
        "--scenario",
        "realworld",
        "--rows",
        "50",
        "--seed",
        "2",
        "--out",
        csv.to_str().unwrap(),
    ]);
    let (code, stdout, err) = run_ok(&[
        "check",
        "--input",
        csv.to_str().unwrap(),
        "--methods",
        "randchi",
        "--b",
        "49",
        "--format",
        "json",
    ]);
    assert!(code == 0 || code == 1, "stderr: {err}");
    let json: serde_json::Value = serde_json::from_str(&stdout).expect("stdout is JSON");
    assert_eq!(json["input"]["n_groups"], 2);
    assert_eq!(
        json["input"]["column_names"][4],
        serde_json::Value::String("employment_status".into())
    );
}
