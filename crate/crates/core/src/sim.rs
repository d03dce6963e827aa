//! Closed-form and Monte-Carlo prediction of pipeline behavior under
//! stochastic agent profiles; the desk-scale verification harness for the
//! whole system.
//!
//! The pipeline is a two-state Markov chain over {correct, wrong}: the
//! planner lands correct with probability `q`; each later stage repairs a
//! wrong state with its repair probability and harms a correct state with
//! its harm probability. `calibrate` runs the real runner over a synthetic
//! dataset with stochastic backends and reports how far every measured
//! rate sits from its closed-form value, in units of binomial sigma.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backends::{BackendDecl, StochasticAgentProfile};
use crate::config::{ConfigError, ExperimentConfig};
use crate::domain::{
    AnswerLetter, Dataset, DatasetError, Regime, StageRole, TaskItem, TraceRecord,
};
use crate::runner::{run_pipeline, RunError, RunOptions, RunOutcome};

/// The five chain parameters of the generative model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainProbabilities {
    pub planner_correct: f64,
    pub executor_repair: f64,
    pub executor_harm: f64,
    pub critic_repair: f64,
    pub critic_harm: f64,
}

fn chain_step(correct: f64, repair: f64, harm: f64) -> f64 {
    correct * (1.0 - harm) + (1.0 - correct) * repair
}

/// Probability the final answer is correct under the two-state chain.
///
/// Monotone non-decreasing in `planner_correct` and the repair rates and
/// non-increasing in the harm rates whenever every stage satisfies
/// repair + harm <= 1. An adversarial stage (repair + harm > 1) flips
/// answers often enough that improving its input state can lower the
/// final accuracy, so no unconditional monotonicity claim is possible.
pub fn predict_accuracy(chain: &ChainProbabilities) -> f64 {
    let after_executor = chain_step(
        chain.planner_correct,
        chain.executor_repair,
        chain.executor_harm,
    );
    chain_step(after_executor, chain.critic_repair, chain.critic_harm)
}

/// Probability the executor's answer is correct (the critic's input state).
pub fn predict_executor_correct(chain: &ChainProbabilities) -> f64 {
    chain_step(
        chain.planner_correct,
        chain.executor_repair,
        chain.executor_harm,
    )
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("simulation requires at least one item")]
    NoItems,
    #[error("pipeline {role} backend must be stochastic for calibration")]
    NotStochastic { role: StageRole },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Build a synthetic four-choice dataset with gold uniform over letters,
/// deterministically from the seed.
pub fn synthetic_dataset(n_items: usize, seed: u64) -> Result<Dataset, SimError> {
    if n_items == 0 {
        return Err(SimError::NoItems);
    }
    let letters = [
        AnswerLetter::A,
        AnswerLetter::B,
        AnswerLetter::C,
        AnswerLetter::D,
    ];
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(b"synthetic-dataset");
    let digest = hasher.finalize();
    let mut rng_seed = [0u8; 32];
    rng_seed.copy_from_slice(&digest);
    let mut rng = ChaCha8Rng::from_seed(rng_seed);

    let width = n_items.to_string().len().max(6);
    let mut items = Vec::with_capacity(n_items);
    for i in 0..n_items {
        let gold = letters[rng.random_range(0..letters.len())];
        let choices: BTreeMap<AnswerLetter, String> = letters
            .iter()
            .map(|&letter| (letter, format!("option {letter}")))
            .collect();
        let item = TaskItem::new(
            format!("sim-{i:0width$}"),
            format!("Synthetic task {i}: select the designated option."),
            choices,
            gold,
        )
        .expect("synthetic items satisfy invariants");
        items.push(item);
    }
    Ok(Dataset::new(format!("synthetic-{n_items}-s{seed}"), items)?)
}

/// One measured quantity against its closed-form expectation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateCheck {
    pub name: String,
    pub expected: f64,
    /// Absent when no case was eligible (conditional rate undefined).
    pub measured: Option<f64>,
    pub count: u64,
    pub denominator: u64,
    /// Binomial sigma at the expected rate over the denominator.
    pub sigma: f64,
    /// |measured - expected| / sigma; 0 for an exact match when sigma is
    /// zero, absent when measured is absent.
    pub deviation_sigma: Option<f64>,
}

impl RateCheck {
    fn new(name: &str, expected: f64, count: u64, denominator: u64) -> Self {
        let measured = (denominator > 0).then(|| count as f64 / denominator as f64);
        let sigma = if denominator > 0 {
            (expected * (1.0 - expected) / denominator as f64).sqrt()
        } else {
            0.0
        };
        let deviation_sigma = measured.map(|m| {
            let gap = (m - expected).abs();
            if sigma > 0.0 {
                gap / sigma
            } else if gap == 0.0 {
                0.0
            } else {
                f64::MAX
            }
        });
        RateCheck {
            name: name.to_string(),
            expected,
            measured,
            count,
            denominator,
            sigma,
            deviation_sigma,
        }
    }

    pub fn within(&self, sigmas: f64) -> bool {
        match self.deviation_sigma {
            Some(dev) => dev <= sigmas,
            None => true,
        }
    }
}

/// Measured-vs-predicted comparison for one simulated run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub schema_version: u32,
    pub n_items: usize,
    pub seed: u64,
    pub pipeline_label: String,
    pub probabilities: ChainProbabilities,
    pub predicted_accuracy: f64,
    pub checks: Vec<RateCheck>,
    pub max_deviation_sigma: f64,
}

impl CalibrationReport {
    pub fn all_within(&self, sigmas: f64) -> bool {
        self.checks.iter().all(|c| c.within(sigmas))
    }

    /// Human-readable one-line-per-check summary.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "calibration over {} items (seed {}), pipeline {}\n",
            self.n_items, self.seed, self.pipeline_label
        ));
        out.push_str(&format!(
            "predicted final accuracy {:.6}\n",
            self.predicted_accuracy
        ));
        for check in &self.checks {
            match (check.measured, check.deviation_sigma) {
                (Some(measured), Some(dev)) => {
                    let dev_str = if dev == f64::MAX {
                        "inf".to_string()
                    } else {
                        format!("{dev:.3}")
                    };
                    out.push_str(&format!(
                        "{:<26} expected {:.6} measured {:.6} ({}/{}) deviation {} sigma\n",
                        check.name,
                        check.expected,
                        measured,
                        check.count,
                        check.denominator,
                        dev_str
                    ));
                }
                _ => {
                    out.push_str(&format!(
                        "{:<26} expected {:.6} measured n/a (0 eligible cases)\n",
                        check.name, check.expected
                    ));
                }
            }
        }
        out.push_str(&format!(
            "max deviation {:.3} sigma\n",
            if self.max_deviation_sigma == f64::MAX {
                f64::NAN
            } else {
                self.max_deviation_sigma
            }
        ));
        out
    }
}

pub struct SimOptions {
    pub out_dir: PathBuf,
    pub parallelism: usize,
}

/// Chain parameters declared by the three pipeline backends of a config.
pub fn chain_from_config(config: &ExperimentConfig) -> Result<ChainProbabilities, SimError> {
    let pipeline = config.pipeline_config(Regime::Accountable)?;
    let profile_for = |role: StageRole| -> Result<StochasticAgentProfile, SimError> {
        let model = pipeline.model_for(role);
        match config.backend_decl(&model.backend_ref) {
            Some(BackendDecl::Stochastic(profile)) => Ok(profile.clone()),
            _ => Err(SimError::NotStochastic { role }),
        }
    };
    let planner = profile_for(StageRole::Planner)?;
    let executor = profile_for(StageRole::Executor)?;
    let critic = profile_for(StageRole::Critic)?;
    Ok(ChainProbabilities {
        planner_correct: planner.base_correct,
        executor_repair: executor.repair_prob,
        executor_harm: executor.harm_prob,
        critic_repair: critic.repair_prob,
        critic_harm: critic.harm_prob,
    })
}

/// Run the accountable pipeline end-to-end over a synthetic dataset with
/// the config's stochastic backends, then compare every measured rate to
/// its closed-form expectation.
pub fn calibrate(
    config: &ExperimentConfig,
    n_items: usize,
    seed: u64,
    opts: &SimOptions,
) -> Result<(CalibrationReport, RunOutcome), SimError> {
    let chain = chain_from_config(config)?;
    let pipeline = config.pipeline_config(Regime::Accountable)?;
    let agents = config.pipeline_agents(&pipeline, seed)?;

    let dataset = synthetic_dataset(n_items, seed)?;
    std::fs::create_dir_all(&opts.out_dir)?;
    let dataset_bytes = dataset.to_jsonl();
    std::fs::write(opts.out_dir.join("dataset.jsonl"), &dataset_bytes)?;
    let dataset_sha = crate::domain::sha256_hex(dataset_bytes.as_bytes());

    let mut run_opts = RunOptions::new(opts.out_dir.join("run"));
    run_opts.parallelism = opts.parallelism;
    run_opts.seed = seed;
    run_opts.prices = config.price_sheet();
    let outcome = run_pipeline(&pipeline, agents, &dataset, &dataset_sha, &run_opts)?;

    let report = build_report(&chain, &pipeline.label, &outcome.traces, n_items, seed);
    Ok((report, outcome))
}

fn build_report(
    chain: &ChainProbabilities,
    label: &str,
    traces: &[TraceRecord],
    n_items: usize,
    seed: u64,
) -> CalibrationReport {
    let n = traces.len() as u64;
    let mut correct = 0u64;
    let mut planner_errors = 0u64;
    let mut exec_repairs = 0u64;
    let mut exec_harms = 0u64;
    let mut critic_repairs = 0u64;
    let mut critic_harms = 0u64;
    let mut exec_eligible_repair = 0u64;
    let mut exec_eligible_harm = 0u64;
    let mut critic_eligible_repair = 0u64;
    let mut critic_eligible_harm = 0u64;

    for trace in traces {
        let gold = Some(trace.gold);
        correct += trace.is_correct() as u64;
        planner_errors += trace.flags.planner_error as u64;
        exec_repairs += trace.flags.executor_repair as u64;
        exec_harms += trace.flags.executor_harm as u64;
        critic_repairs += trace.flags.critic_repair as u64;
        critic_harms += trace.flags.critic_harm as u64;
        if trace.planner.answer == gold {
            exec_eligible_harm += 1;
        } else {
            exec_eligible_repair += 1;
        }
        let executor_answer = trace.executor.as_ref().and_then(|s| s.answer);
        if executor_answer == Some(trace.gold) {
            critic_eligible_harm += 1;
        } else {
            critic_eligible_repair += 1;
        }
    }

    let q = chain.planner_correct;
    let executor_correct = predict_executor_correct(chain);
    let predicted = predict_accuracy(chain);

    let checks = vec![
        RateCheck::new("final_accuracy", predicted, correct, n),
        RateCheck::new("planner_error_rate", 1.0 - q, planner_errors, n),
        RateCheck::new(
            "executor_repair_conditional",
            chain.executor_repair,
            exec_repairs,
            exec_eligible_repair,
        ),
        RateCheck::new(
            "executor_harm_conditional",
            chain.executor_harm,
            exec_harms,
            exec_eligible_harm,
        ),
        RateCheck::new(
            "critic_repair_conditional",
            chain.critic_repair,
            critic_repairs,
            critic_eligible_repair,
        ),
        RateCheck::new(
            "critic_harm_conditional",
            chain.critic_harm,
            critic_harms,
            critic_eligible_harm,
        ),
        RateCheck::new(
            "executor_repair_raw",
            (1.0 - q) * chain.executor_repair,
            exec_repairs,
            n,
        ),
        RateCheck::new("executor_harm_raw", q * chain.executor_harm, exec_harms, n),
        RateCheck::new(
            "critic_repair_raw",
            (1.0 - executor_correct) * chain.critic_repair,
            critic_repairs,
            n,
        ),
        RateCheck::new(
            "critic_harm_raw",
            executor_correct * chain.critic_harm,
            critic_harms,
            n,
        ),
    ];
    let max_deviation_sigma = checks
        .iter()
        .filter_map(|c| c.deviation_sigma)
        .fold(0.0f64, f64::max);

    CalibrationReport {
        schema_version: 1,
        n_items,
        seed,
        pipeline_label: label.to_string(),
        probabilities: *chain,
        predicted_accuracy: predicted,
        checks,
        max_deviation_sigma,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(q: f64, re: f64, he: f64, rc: f64, hc: f64) -> ChainProbabilities {
        ChainProbabilities {
            planner_correct: q,
            executor_repair: re,
            executor_harm: he,
            critic_repair: rc,
            critic_harm: hc,
        }
    }

    #[test]
    fn perfect_chain_stays_perfect() {
        assert_eq!(predict_accuracy(&chain(1.0, 0.0, 0.0, 0.0, 0.0)), 1.0);
    }

    #[test]
    fn full_repair_executor_fixes_everything() {
        assert_eq!(predict_accuracy(&chain(0.0, 1.0, 0.0, 0.0, 0.0)), 1.0);
    }

    // Hand-computed golden value: after the executor
    // 0.6*0.9 + 0.4*0.5 = 0.74; after the critic 0.74*0.9 + 0.26*0.5 = 0.796.
    #[test]
    fn golden_chain_value() {
        let p = predict_accuracy(&chain(0.6, 0.5, 0.1, 0.5, 0.1));
        assert!((p - 0.796).abs() < 1e-12, "got {p}");
    }

    #[test]
    fn noop_stages_preserve_planner_accuracy() {
        for q in [0.0, 0.25, 0.5, 0.9, 1.0] {
            assert_eq!(predict_accuracy(&chain(q, 0.0, 0.0, 0.0, 0.0)), q);
        }
    }

    #[test]
    fn synthetic_dataset_is_deterministic_and_valid() {
        let a = synthetic_dataset(50, 42).unwrap();
        let b = synthetic_dataset(50, 42).unwrap();
        assert_eq!(a, b);
        let c = synthetic_dataset(50, 43).unwrap();
        assert_ne!(a, c);
        assert_eq!(a.len(), 50);
        for item in &a.items {
            assert_eq!(item.choices.len(), 4);
        }
    }

    #[test]
    fn zero_items_rejected() {
        assert!(matches!(synthetic_dataset(0, 1), Err(SimError::NoItems)));
    }
}
