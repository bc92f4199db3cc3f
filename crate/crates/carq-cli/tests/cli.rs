//! End-to-end tests of the carq binary: exit codes, CSV exactness and
//! run-to-run determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_carq"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf8 stdout")
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf8 stderr")
}

const S_LAMBDA_03: &str = "0.6108643020548935";

#[test]
fn verify_car_passes_for_small_mode_counts() {
    for modes in ["1", "4"] {
        let out = run(&["verify-car", "--modes", modes]);
        assert_eq!(code(&out), 0, "modes {modes}: {}", stderr(&out));
        assert!(stdout(&out).contains("all relations verified"));
    }
}

#[test]
fn verify_car_rejects_out_of_range_modes() {
    let out = run(&["verify-car", "--modes", "11"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("1..=10"), "{}", stderr(&out));
}

#[test]
fn injected_fault_fails_with_the_relation_named() {
    let out = run(&["verify-car", "--modes", "2", "--inject-fault", "0"]);
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    assert!(err.contains("CAR relation violated"), "{err}");
    assert!(err.contains("a_i"), "{err}");
    assert!(err.contains("i=0"), "{err}");
}

#[test]
fn entropy_of_the_two_level_model_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("series.csv");
    let kernel = dir.path().join("kernel.csv");
    let out = run(&[
        "entropy",
        fixture("two-level.json").to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
        "--kernel-csv",
        kernel.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let series = fs::read_to_string(&csv).unwrap();
    let mut expected = String::from("n,S_n,S_n_over_n,delta_S_n\n");
    for n in 1..=8u32 {
        let s: f64 = S_LAMBDA_03.parse().unwrap();
        let delta = if n == 1 { S_LAMBDA_03.to_string() } else { "0".to_string() };
        expected.push_str(&format!("{n},{S_LAMBDA_03},{},{delta}\n", s / n as f64));
    }
    assert_eq!(series, expected);

    let kernel = fs::read_to_string(&kernel).unwrap();
    assert_eq!(kernel, "word,P\n11111111,0.3\n22222222,0.7\n");
}

#[test]
fn entropy_honors_the_horizon_override() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("series.csv");
    let out = run(&[
        "entropy",
        fixture("two-level.json").to_str().unwrap(),
        "--horizon",
        "3",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let series = fs::read_to_string(&csv).unwrap();
    assert_eq!(series.lines().count(), 4);
    assert!(series.starts_with("n,S_n,S_n_over_n,delta_S_n\n"));
}

#[test]
fn entropy_output_is_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut artifacts: Vec<(String, String)> = Vec::new();
    for (tag, threads) in [("a", None), ("b", None), ("c", Some("1")), ("d", Some("2"))] {
        let csv = dir.path().join(format!("{tag}.csv"));
        let kernel = dir.path().join(format!("{tag}-kernel.csv"));
        let mut args = vec![
            "entropy".to_string(),
            fixture("two-level.json").to_str().unwrap().to_string(),
            "--csv".to_string(),
            csv.to_str().unwrap().to_string(),
            "--kernel-csv".to_string(),
            kernel.to_str().unwrap().to_string(),
        ];
        if let Some(t) = threads {
            args.push("--threads".to_string());
            args.push(t.to_string());
        }
        let arg_refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = run(&arg_refs);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        artifacts.push((
            fs::read_to_string(&csv).unwrap(),
            fs::read_to_string(&kernel).unwrap(),
        ));
    }
    for pair in &artifacts[1..] {
        assert_eq!(pair, &artifacts[0]);
    }
}

#[test]
fn malformed_scenario_names_the_field() {
    let out = run(&["entropy", fixture("malformed.json").to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let err = stderr(&out);
    assert!(err.contains("rho[1][1]"), "{err}");
    assert!(err.contains("[re, im]"), "{err}");
}

#[test]
fn missing_scenario_file_exits_1() {
    let out = run(&["entropy", "no-such-file.json"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("no-such-file.json"), "{}", stderr(&out));
}

#[test]
fn enumeration_overflow_exits_3() {
    let out = run(&["entropy", fixture("badcap.json").to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("enumeration cap"), "{}", stderr(&out));

    let out = run(&[
        "entropy",
        fixture("two-level.json").to_str().unwrap(),
        "--cap",
        "1",
    ]);
    assert_eq!(code(&out), 3);
}

#[test]
fn singleton_partition_has_zero_entropy() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("series.csv");
    let out = run(&[
        "entropy",
        fixture("singleton.json").to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let series = fs::read_to_string(&csv).unwrap();
    let mut expected = String::from("n,S_n,S_n_over_n,delta_S_n\n");
    for n in 1..=6 {
        expected.push_str(&format!("{n},0,0,0\n"));
    }
    assert_eq!(series, expected);
}

#[test]
fn classical_permutation_scenario_reports_in_bits() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("series.csv");
    let out = run(&[
        "entropy",
        fixture("classical.json").to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let series = fs::read_to_string(&csv).unwrap();
    let expected =
        -(0.5f64 * 0.5f64.ln() + 0.3 * 0.3f64.ln() + 0.2 * 0.2f64.ln()) / std::f64::consts::LN_2;
    for (i, line) in series.lines().skip(1).enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[0], (i + 1).to_string());
        let s: f64 = fields[1].parse().unwrap();
        assert!(
            (s - expected).abs() < 1e-12,
            "S_{} = {s}, expected {expected}",
            i + 1
        );
        let delta: f64 = fields[3].parse().unwrap();
        if i > 0 {
            assert!(delta.abs() < 1e-12, "delta_{} = {delta}", i + 1);
        }
    }
}

#[test]
fn gibbs_preset_scenario_runs() {
    let out = run(&["entropy", fixture("car-gibbs.json").to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    // lambda = e^-1 / (1 + e^-1); the series is flat at h(lambda)
    let lambda = (-1.0f64).exp() / (1.0 + (-1.0f64).exp());
    let h = -(lambda * lambda.ln() + (1.0 - lambda) * (1.0 - lambda).ln());
    assert!(stdout(&out).contains(&format!("{h}")), "{}", stdout(&out));
}

#[test]
fn family_scenario_is_rejected_by_the_entropy_command() {
    let out = run(&["entropy", fixture("family.json").to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("optimize"), "{}", stderr(&out));
}

#[test]
fn reproduce_paper_passes_across_lambda_values() {
    for lambda in ["0", "0.25", "0.3", "0.5", "1"] {
        let out = run(&["reproduce-paper", "--lambda", lambda]);
        assert_eq!(code(&out), 0, "lambda {lambda}: {}", stderr(&out));
        let text = stdout(&out);
        assert_eq!(text.matches("claim holds:").count(), 4, "{text}");
    }
    let out = run(&["reproduce-paper", "--lambda", "0.5"]);
    assert!(
        stdout(&out).contains("0.6931471805599453"),
        "{}",
        stdout(&out)
    );
}

#[test]
fn reproduce_paper_rejects_bad_parameters() {
    for lambda in ["1.5", "-0.1", "NaN"] {
        let out = run(&["reproduce-paper", "--lambda", lambda]);
        assert_eq!(code(&out), 1, "lambda {lambda}");
        assert!(stderr(&out).contains("lambda"), "{}", stderr(&out));
    }
    let out = run(&["reproduce-paper", "--horizon", "2"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn reproduce_paper_csv_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for path in [&a, &b] {
        let out = run(&["reproduce-paper", "--csv", path.to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    assert_eq!(
        fs::read_to_string(&a).unwrap(),
        fs::read_to_string(&b).unwrap()
    );
    assert!(fs::read_to_string(&a).unwrap().contains(S_LAMBDA_03));
}

#[test]
fn optimize_reports_a_best_at_least_as_good_as_the_trace() {
    let out = run(&[
        "optimize",
        fixture("family.json").to_str().unwrap(),
        "--budget",
        "200",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("best: params"), "{text}");
    let best: f64 = text
        .lines()
        .find(|l| l.starts_with("best: params"))
        .and_then(|l| l.rsplit(' ').next())
        .unwrap()
        .parse()
        .unwrap();
    for line in text.lines().filter(|l| l.trim_start().starts_with('[')) {
        let rate: f64 = line.rsplit(' ').next().unwrap().parse().unwrap();
        assert!(best >= rate, "best {best} < trace rate {rate}");
    }
}

#[test]
fn optimize_rejects_a_budget_below_the_grid() {
    let out = run(&[
        "optimize",
        fixture("family.json").to_str().unwrap(),
        "--budget",
        "10",
    ]);
    assert_eq!(code(&out), 1);
    assert!(
        stderr(&out).contains("required minimum 32"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn optimize_handles_constant_families_with_budget_one() {
    let out = run(&[
        "optimize",
        fixture("constant-family.json").to_str().unwrap(),
        "--budget",
        "1",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("evaluations: 1"), "{}", stdout(&out));
}

#[test]
fn optimize_rejects_fixed_partitions_and_short_horizons() {
    let out = run(&[
        "optimize",
        fixture("two-level.json").to_str().unwrap(),
        "--budget",
        "100",
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("family"), "{}", stderr(&out));

    let out = run(&[
        "optimize",
        fixture("family.json").to_str().unwrap(),
        "--budget",
        "100",
        "--horizon",
        "2",
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn help_and_usage_follow_the_exit_code_contract() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
    assert_eq!(code(&run(&["no-such-command"])), 1);
    assert_eq!(code(&run(&["entropy"])), 1);
    assert_eq!(code(&run(&[])), 1);
    let out = run(&[
        "entropy",
        fixture("two-level.json").to_str().unwrap(),
        "--threads",
        "0",
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn log_env_var_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let quiet = dir.path().join("quiet.csv");
    let loud = dir.path().join("loud.csv");
    let out = run(&[
        "entropy",
        fixture("two-level.json").to_str().unwrap(),
        "--csv",
        quiet.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let out = Command::new(env!("CARGO_BIN_EXE_carq"))
        .args([
            "entropy",
            fixture("two-level.json").to_str().unwrap(),
            "--csv",
            loud.to_str().unwrap(),
        ])
        .env("CARQ_LOG", "debug")
        .output()
        .expect("binary runs");
    assert_eq!(code(&out), 0);
    assert_eq!(
        fs::read_to_string(&quiet).unwrap(),
        fs::read_to_string(&loud).unwrap()
    );
}
