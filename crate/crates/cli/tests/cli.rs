//! Command-surface tests: exit codes, diagnostics, and file outputs for
//! each subcommand, driven through the real binary.

use std::path::Path;
use std::process::{Command, Output};

fn triad(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_triad"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn triad")
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

const PROFILES: &str = r#"
[models.A]
display_name = "planner-sim"
backend = "planner"

[models.B]
display_name = "executor-sim"
backend = "executor"

[models.C]
display_name = "critic-sim"
backend = "critic"

[pipeline]
planner = "A"
executor = "B"
critic = "C"

[baseline]
model = "A"

[backends.planner]
type = "stochastic"
base_correct = 1.0
mean_prompt_tokens = 100
mean_completion_tokens = 20
stream_id = "planner"

[backends.executor]
type = "stochastic"
mean_prompt_tokens = 120
mean_completion_tokens = 20
stream_id = "executor"

[backends.critic]
type = "stochastic"
mean_prompt_tokens = 140
mean_completion_tokens = 20
stream_id = "critic"
"#;

const DATASET: &str = concat!(
    r#"{"id":"q1","question":"pick a","choices":{"A":"first","B":"second"},"gold":"A"}"#,
    "\n",
    r#"{"id":"q2","question":"pick b","choices":{"A":"first","B":"second"},"gold":"B"}"#,
    "\n",
    r#"{"id":"q3","question":"pick a again","choices":{"A":"first","B":"second"},"gold":"A"}"#,
    "\n",
);

#[test]
fn validate_dataset_accepts_well_formed_files() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("ds.jsonl"), DATASET).unwrap();
    let output = triad(&["validate-dataset", "ds.jsonl"], dir.path());
    assert!(output.status.success(), "{}", stderr(&output));
    assert!(stdout(&output).contains("ok: 3 items"));
}

#[test]
fn validate_dataset_reports_line_numbers_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    let bad = format!(
        "{DATASET}{}\n",
        r#"{"id":"q4","question":"?","choices":{"A":"x","B":"y"},"gold":"F"}"#
    );
    std::fs::write(dir.path().join("bad.jsonl"), bad).unwrap();
    let output = triad(&["validate-dataset", "bad.jsonl"], dir.path());
    assert_eq!(output.status.code(), Some(1));
    let message = stderr(&output);
    assert!(message.contains("line 4"), "{message}");
    assert!(message.contains("gold not in answer space"), "{message}");
}

#[test]
fn missing_files_fail_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let output = triad(&["validate-dataset", "absent.jsonl"], dir.path());
    assert_eq!(output.status.code(), Some(1));
    let output = triad(
        &[
            "run",
            "--config",
            "nope.toml",
            "--dataset",
            "absent.jsonl",
            "--regime",
            "simple",
            "--out",
            "out",
        ],
        dir.path(),
    );
    assert_eq!(output.status.code(), Some(1));
    assert!(stderr(&output).contains("nope.toml"));
}

#[test]
fn unknown_flags_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let output = triad(&["simulate", "--bogus-flag", "1"], dir.path());
    assert_eq!(output.status.code(), Some(2), "clap usage errors exit 2");
    assert!(stderr(&output).contains("--bogus-flag"));
}

#[test]
fn run_and_report_with_perfect_model_shows_100() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("profiles.toml"), PROFILES).unwrap();
    std::fs::write(dir.path().join("ds.jsonl"), DATASET).unwrap();

    let output = triad(
        &[
            "run",
            "--config",
            "profiles.toml",
            "--dataset",
            "ds.jsonl",
            "--regime",
            "baseline",
            "--out",
            "base-run",
            "--seed",
            "3",
        ],
        dir.path(),
    );
    assert!(output.status.success(), "{}", stderr(&output));
    assert!(stdout(&output).contains("accuracy 100.00%"));

    let output = triad(
        &["report", "--traces", "base-run", "--out", "rep"],
        dir.path(),
    );
    assert!(output.status.success(), "{}", stderr(&output));
    let baseline_csv = std::fs::read_to_string(dir.path().join("rep/baseline.csv")).unwrap();
    assert!(baseline_csv.contains("100.00"), "{baseline_csv}");
    assert!(dir.path().join("rep/report.md").exists());

    // --prices recomputes stage costs from recorded usage
    let sheet = "[models.A]\ninput_per_1k = \"1.000\"\noutput_per_1k = \"2.000\"\n";
    std::fs::write(dir.path().join("expensive.toml"), sheet).unwrap();
    let output = triad(
        &[
            "report",
            "--traces",
            "base-run",
            "--prices",
            "expensive.toml",
            "--out",
            "rep2",
        ],
        dir.path(),
    );
    assert!(output.status.success(), "{}", stderr(&output));
    let cheap = std::fs::read_to_string(dir.path().join("rep/cost_runs.csv")).unwrap();
    let dear = std::fs::read_to_string(dir.path().join("rep2/cost_runs.csv")).unwrap();
    assert_ne!(cheap, dear, "repricing must change the cost table");
    // $1/1K prompt + $2/1K completion dwarfs the default rates
    let total = |csv: &str| -> f64 {
        csv.lines()
            .nth(1)
            .and_then(|row| row.split(',').nth(6))
            .and_then(|cell| cell.parse::<f64>().ok())
            .unwrap()
    };
    assert!(total(&dear) > total(&cheap));
}

#[test]
fn item_level_failures_exit_partial() {
    let dir = tempfile::tempdir().unwrap();
    // a scripted backend with no fixtures misses every prompt
    let config = r#"
[models.A]
display_name = "fragile"
backend = "empty"

[baseline]
model = "A"

[backends.empty]
type = "scripted"
fixtures = "empty.jsonl"
"#;
    std::fs::write(dir.path().join("config.toml"), config).unwrap();
    std::fs::write(dir.path().join("empty.jsonl"), "").unwrap();
    std::fs::write(dir.path().join("ds.jsonl"), DATASET).unwrap();
    let output = triad(
        &[
            "run",
            "--config",
            "config.toml",
            "--dataset",
            "ds.jsonl",
            "--regime",
            "baseline",
            "--out",
            "out",
        ],
        dir.path(),
    );
    assert_eq!(output.status.code(), Some(2), "{}", stderr(&output));
    assert!(stderr(&output).contains("3 item(s)"), "{}", stderr(&output));
    assert!(stdout(&output).contains("3 item error(s)"));
    // the run still persisted a complete trace file
    let traces = std::fs::read_to_string(dir.path().join("out/traces.jsonl")).unwrap();
    assert_eq!(traces.lines().count(), 3);
}

#[test]
fn pareto_three_point_fixture_yields_two_point_frontier() {
    let dir = tempfile::tempdir().unwrap();
    let csv = "label,accuracy,median_cost_usd,median_latency_s\n\
               mid,90.00,0.010000,1.0\n\
               high,95.00,0.020000,2.0\n\
               bad,85.00,0.030000,3.0\n";
    std::fs::write(dir.path().join("points.csv"), csv).unwrap();
    let output = triad(
        &["pareto", "--report", "points.csv", "--out", "par"],
        dir.path(),
    );
    assert!(output.status.success(), "{}", stderr(&output));
    assert!(stdout(&output).contains("frontier: 2 of 3"));
    let frontier = std::fs::read_to_string(dir.path().join("par/frontier.csv")).unwrap();
    let labels: Vec<&str> = frontier
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(labels, vec!["mid", "high"]);
    assert!(dir.path().join("par/plot_data.csv").exists());
}

#[test]
fn pareto_filters_by_dataset_and_regime_columns() {
    let dir = tempfile::tempdir().unwrap();
    let csv = "dataset,regime,label,accuracy,median_cost_usd,median_latency_s\n\
               one,accountable,AAA,90.00,0.010000,1.0\n\
               two,accountable,BBB,99.00,0.001000,1.0\n\
               one,simple,CCC,95.00,0.002000,1.0\n";
    std::fs::write(dir.path().join("points.csv"), csv).unwrap();
    let output = triad(
        &[
            "pareto",
            "--report",
            "points.csv",
            "--dataset",
            "one",
            "--regime",
            "accountable",
            "--out",
            "par",
        ],
        dir.path(),
    );
    assert!(output.status.success(), "{}", stderr(&output));
    assert!(
        stdout(&output).contains("frontier: 1 of 1"),
        "{}",
        stdout(&output)
    );
}

#[test]
fn simulate_writes_report_files() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("profiles.toml"), PROFILES).unwrap();
    let output = triad(
        &[
            "simulate",
            "--profiles",
            "profiles.toml",
            "--n",
            "100",
            "--seed",
            "5",
            "--out",
            "sim",
        ],
        dir.path(),
    );
    assert!(output.status.success(), "{}", stderr(&output));
    assert!(stdout(&output).contains("predicted final accuracy 1.000000"));
    for file in [
        "sim/calibration.json",
        "sim/calibration.txt",
        "sim/dataset.jsonl",
        "sim/run/manifest.json",
        "sim/run/traces.jsonl",
    ] {
        assert!(dir.path().join(file).exists(), "missing {file}");
    }
}

#[test]
fn report_rejects_unsupported_schema_versions() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("profiles.toml"), PROFILES).unwrap();
    std::fs::write(dir.path().join("ds.jsonl"), DATASET).unwrap();
    let output = triad(
        &[
            "run",
            "--config",
            "profiles.toml",
            "--dataset",
            "ds.jsonl",
            "--regime",
            "baseline",
            "--out",
            "out",
        ],
        dir.path(),
    );
    assert!(output.status.success(), "{}", stderr(&output));

    let manifest_path = dir.path().join("out/manifest.json");
    let mangled = std::fs::read_to_string(&manifest_path)
        .unwrap()
        .replace("\"schema_version\": 1", "\"schema_version\": 99");
    std::fs::write(&manifest_path, mangled).unwrap();
    let output = triad(&["report", "--traces", "out", "--out", "rep"], dir.path());
    assert_eq!(output.status.code(), Some(1));
    assert!(stderr(&output).contains("99"), "{}", stderr(&output));
}

#[test]
fn resume_flag_continues_a_run() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("profiles.toml"), PROFILES).unwrap();
    std::fs::write(dir.path().join("ds.jsonl"), DATASET).unwrap();
    let args = [
        "run",
        "--config",
        "profiles.toml",
        "--dataset",
        "ds.jsonl",
        "--regime",
        "accountable",
        "--out",
        "out",
        "--seed",
        "9",
    ];
    let output = triad(&args, dir.path());
    assert!(output.status.success(), "{}", stderr(&output));

    // a second fresh run refuses to clobber
    let output = triad(&args, dir.path());
    assert_eq!(output.status.code(), Some(1));
    assert!(stderr(&output).contains("resume"), "{}", stderr(&output));

    // with --resume it is a no-op union
    let mut resumed: Vec<&str> = args.to_vec();
    resumed.push("--resume");
    let output = triad(&resumed, dir.path());
    assert!(output.status.success(), "{}", stderr(&output));
    assert!(stdout(&output).contains("(0 new)"), "{}", stdout(&output));
}
