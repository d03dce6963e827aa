//! End-to-end simulator checks: measured rates against the closed-form
//! chain within binomial tolerance, exactness at degenerate probability
//! settings, and chain monotonicity.

use std::path::PathBuf;

use proptest::prelude::*;

use triad_core::config::ExperimentConfig;
use triad_core::sim::{calibrate, predict_accuracy, ChainProbabilities, SimOptions};

fn sim_config(q: f64, re: f64, he: f64, rc: f64, hc: f64) -> ExperimentConfig {
    let text = format!(
        r#"
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

[backends.planner]
type = "stochastic"
base_correct = {q}
mean_prompt_tokens = 200
mean_completion_tokens = 30
stream_id = "planner"

[backends.executor]
type = "stochastic"
repair_prob = {re}
harm_prob = {he}
mean_prompt_tokens = 260
mean_completion_tokens = 40
stream_id = "executor"

[backends.critic]
type = "stochastic"
repair_prob = {rc}
harm_prob = {hc}
mean_prompt_tokens = 300
mean_completion_tokens = 24
stream_id = "critic"
"#
    );
    ExperimentConfig::from_toml_str(&text, PathBuf::from(".")).unwrap()
}

#[test]
fn degenerate_probabilities_calibrate_exactly() {
    // q=0, executor always repairs, nothing ever harms: accuracy 1.0
    let config = sim_config(0.0, 1.0, 0.0, 0.0, 0.0);
    let dir = tempfile::tempdir().unwrap();
    let opts = SimOptions {
        out_dir: dir.path().to_path_buf(),
        parallelism: 2,
    };
    let (report, outcome) = calibrate(&config, 500, 7, &opts).unwrap();
    assert_eq!(report.predicted_accuracy, 1.0);
    for check in &report.checks {
        assert_eq!(
            check.measured.unwrap_or(check.expected),
            check.expected,
            "{} drifted",
            check.name
        );
    }
    assert_eq!(report.max_deviation_sigma, 0.0);
    assert!(outcome.traces.iter().all(|t| t.is_correct()));
}

/// Golden chain: q=0.6, r_E=0.5, h_E=0.1, r_C=0.5, h_C=0.1 -> 0.796.
/// Measured accuracy must land within 3 binomial sigma over 10,000 items.
#[test]
fn golden_chain_calibrates_within_three_sigma() {
    let config = sim_config(0.6, 0.5, 0.1, 0.5, 0.1);
    let dir = tempfile::tempdir().unwrap();
    let opts = SimOptions {
        out_dir: dir.path().to_path_buf(),
        parallelism: 4,
    };
    let started = std::time::Instant::now();
    let (report, _) = calibrate(&config, 10_000, 42, &opts).unwrap();
    assert!((report.predicted_accuracy - 0.796).abs() < 1e-12);
    assert!(
        report.all_within(3.0),
        "some checks exceeded 3 sigma:\n{}",
        report.summary()
    );
    // conditional rates sit near their configured probabilities
    for (name, expected) in [
        ("executor_repair_conditional", 0.5),
        ("executor_harm_conditional", 0.1),
        ("critic_repair_conditional", 0.5),
        ("critic_harm_conditional", 0.1),
    ] {
        let check = report.checks.iter().find(|c| c.name == name).unwrap();
        assert_eq!(check.expected, expected);
        assert!(check.measured.is_some(), "{name} had no eligible cases");
    }
    assert!(
        started.elapsed().as_secs() < 30,
        "calibration must be desk-scale fast"
    );
}

#[test]
fn planner_error_rate_calibrates() {
    let config = sim_config(0.6, 0.0, 0.0, 0.0, 0.0);
    let dir = tempfile::tempdir().unwrap();
    let opts = SimOptions {
        out_dir: dir.path().to_path_buf(),
        parallelism: 2,
    };
    let (report, _) = calibrate(&config, 10_000, 11, &opts).unwrap();
    let planner = report
        .checks
        .iter()
        .find(|c| c.name == "planner_error_rate")
        .unwrap();
    assert_eq!(planner.expected, 0.4);
    let measured = planner.measured.unwrap();
    let sigma = (0.4f64 * 0.6 / 10_000.0).sqrt();
    assert!((measured - 0.4).abs() <= 3.0 * sigma, "measured {measured}");
}

/// Metrics-side binomial check: with planner base_correct = 0.5 and
/// executor repair_prob = 0.5 over 10,000 items, the conditional repair
/// rate lands within 3 sigma of 50% and the raw rate within 3 sigma of
/// 25% (eligibility halves the denominator).
#[test]
fn repair_rates_from_real_runs_match_binomial_oracle() {
    use triad_core::metrics::{repair_harm_rates, RunBundle};

    let config = sim_config(0.5, 0.5, 0.0, 0.0, 0.0);
    let dir = tempfile::tempdir().unwrap();
    let opts = SimOptions {
        out_dir: dir.path().to_path_buf(),
        parallelism: 4,
    };
    let (_, outcome) = calibrate(&config, 10_000, 1234, &opts).unwrap();
    let bundles = vec![RunBundle {
        manifest: outcome.manifest,
        traces: outcome.traces,
    }];
    let rows = repair_harm_rates(&bundles);
    let executor = rows
        .iter()
        .find(|r| r.model_key == "B" && r.role == triad_core::domain::StageRole::Executor)
        .unwrap();

    let conditional = executor.repair_rate_conditional.unwrap().value();
    let sigma_conditional = 100.0 * (0.5f64 * 0.5 / executor.eligible_repair_cases as f64).sqrt();
    assert!(
        (conditional - 50.0).abs() <= 3.0 * sigma_conditional,
        "conditional repair {conditional}%"
    );

    let raw = executor.repair_rate_raw.value();
    let sigma_raw = 100.0 * (0.25f64 * 0.75 / 10_000.0).sqrt();
    assert!((raw - 25.0).abs() <= 3.0 * sigma_raw, "raw repair {raw}%");
}

#[test]
fn calibration_report_serializes_deterministically() {
    let config = sim_config(0.7, 0.3, 0.05, 0.4, 0.02);
    let mut reports = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let opts = SimOptions {
            out_dir: dir.path().to_path_buf(),
            parallelism: 3,
        };
        let (report, _) = calibrate(&config, 800, 5, &opts).unwrap();
        reports.push(serde_json::to_string_pretty(&report).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn non_stochastic_backend_is_rejected() {
    let text = r#"
[models.A]
display_name = "live"
backend = "live"

[models.B]
display_name = "sim"
backend = "sim"

[pipeline]
planner = "A"
executor = "B"
critic = "B"

[backends.live]
type = "http"
base_url = "http://localhost:1/v1"
model_name = "m"

[backends.sim]
type = "stochastic"
base_correct = 0.5
mean_prompt_tokens = 10
mean_completion_tokens = 5
stream_id = "s"
"#;
    let config = ExperimentConfig::from_toml_str(text, PathBuf::from(".")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let opts = SimOptions {
        out_dir: dir.path().to_path_buf(),
        parallelism: 1,
    };
    assert!(calibrate(&config, 10, 1, &opts).is_err());
}

/// Upstream monotonicity can invert when a downstream stage is
/// adversarial (repair + harm > 1): such a stage flips answers often
/// enough that feeding it a *more* correct state hurts. Freeze one
/// concrete counterexample so the constraint on the property below stays
/// honest.
#[test]
fn adversarial_critic_inverts_upstream_monotonicity() {
    let base = ChainProbabilities {
        planner_correct: 0.0,
        executor_repair: 0.0,
        executor_harm: 0.0,
        critic_repair: 0.69,
        critic_harm: 0.77,
    };
    let mut better_executor = base;
    better_executor.executor_repair = 0.01;
    assert!(predict_accuracy(&better_executor) < predict_accuracy(&base));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Accuracy is monotone non-decreasing in q and the repair rates,
    /// non-increasing in the harm rates, for non-adversarial stages
    /// (repair + harm <= 1 per stage; see the counterexample above for
    /// why the constraint is necessary). Monotonicity in the critic's own
    /// rates needs no constraint.
    #[test]
    fn chain_is_monotone(
        q in 0.0f64..=1.0,
        re in 0.0f64..=1.0,
        he in 0.0f64..=1.0,
        rc in 0.0f64..=1.0,
        hc in 0.0f64..=1.0,
        bump in 0.01f64..=0.2,
    ) {
        // project the executor/critic rates onto repair + harm <= 1
        let (re, he) = if re + he > 1.0 { (re / (re + he), he / (re + he)) } else { (re, he) };
        let (rc, hc) = if rc + hc > 1.0 { (rc / (rc + hc), hc / (rc + hc)) } else { (rc, hc) };
        let base = ChainProbabilities {
            planner_correct: q,
            executor_repair: re,
            executor_harm: he,
            critic_repair: rc,
            critic_harm: hc,
        };
        let p0 = predict_accuracy(&base);

        let up = |f: &dyn Fn(&mut ChainProbabilities, f64)| {
            let mut chain = base;
            f(&mut chain, bump);
            chain
        };
        let clamp = |v: f64| v.clamp(0.0, 1.0);

        prop_assert!(predict_accuracy(&up(&|c, b| c.planner_correct = clamp(c.planner_correct + b))) >= p0 - 1e-12);
        prop_assert!(predict_accuracy(&up(&|c, b| c.executor_repair = clamp(c.executor_repair + b))) >= p0 - 1e-12);
        prop_assert!(predict_accuracy(&up(&|c, b| c.executor_harm = clamp(c.executor_harm + b))) <= p0 + 1e-12);
        // critic-rate monotonicity holds for arbitrary upstream values
        prop_assert!(predict_accuracy(&up(&|c, b| c.critic_repair = clamp(c.critic_repair + b))) >= p0 - 1e-12);
        prop_assert!(predict_accuracy(&up(&|c, b| c.critic_harm = clamp(c.critic_harm + b))) <= p0 + 1e-12);
    }
}
