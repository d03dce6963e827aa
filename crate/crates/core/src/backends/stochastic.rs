use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{AnswerLetter, ParsedAnswer, StageRole, TokenUsage};

use super::{Agent, AgentRequest, AgentResponse, BackendError};

/// Generative per-role behavior probabilities, the inverse of the blame
/// flag definitions: `base_correct` drives the planner, `repair_prob` and
/// `harm_prob` drive executor/critic conditioned on upstream correctness.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StochasticAgentProfile {
    /// Probability of a correct answer when invoked as the planner.
    #[serde(default)]
    pub base_correct: f64,
    /// Probability of fixing a wrong upstream answer (executor/critic).
    #[serde(default)]
    pub repair_prob: f64,
    /// Probability of breaking a correct upstream answer (executor/critic).
    #[serde(default)]
    pub harm_prob: f64,
    pub mean_prompt_tokens: u64,
    pub mean_completion_tokens: u64,
    /// Seedable RNG stream id; distinct ids give independent streams under
    /// the same master seed.
    pub stream_id: String,
}

impl StochasticAgentProfile {
    pub fn validate(&self) -> Result<(), BackendError> {
        for (name, p) in [
            ("base_correct", self.base_correct),
            ("repair_prob", self.repair_prob),
            ("harm_prob", self.harm_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(BackendError::BadProfile(format!(
                    "{name} must lie in [0,1], got {p}"
                )));
            }
        }
        Ok(())
    }
}

/// One generative draw. The planner answers gold with probability
/// `base_correct`, otherwise a uniformly random wrong letter from the
/// item's choice set. Executor/critic: a correct upstream answer survives
/// with probability `1 - harm_prob` (otherwise a random wrong letter); a
/// wrong upstream answer is repaired to gold with probability
/// `repair_prob`, otherwise retained. An UNDEFINED upstream counts as
/// wrong; since there is no letter to retain, a random wrong letter
/// stands in.
pub fn stochastic_step(
    profile: &StochasticAgentProfile,
    role: StageRole,
    gold: AnswerLetter,
    choices: &[AnswerLetter],
    upstream: ParsedAnswer,
    rng: &mut impl Rng,
) -> AnswerLetter {
    match role {
        StageRole::Planner => {
            if rng.random::<f64>() < profile.base_correct {
                gold
            } else {
                wrong_letter(gold, choices, rng)
            }
        }
        StageRole::Executor | StageRole::Critic => {
            if upstream == Some(gold) {
                if rng.random::<f64>() < profile.harm_prob {
                    wrong_letter(gold, choices, rng)
                } else {
                    gold
                }
            } else if rng.random::<f64>() < profile.repair_prob {
                gold
            } else {
                match upstream {
                    Some(letter) => letter,
                    None => wrong_letter(gold, choices, rng),
                }
            }
        }
    }
}

fn wrong_letter(gold: AnswerLetter, choices: &[AnswerLetter], rng: &mut impl Rng) -> AnswerLetter {
    let wrong: Vec<AnswerLetter> = choices.iter().copied().filter(|&c| c != gold).collect();
    assert!(
        !wrong.is_empty(),
        "choice set must offer at least one wrong letter"
    );
    wrong[rng.random_range(0..wrong.len())]
}

/// Simulation backend: emits `Answer: <letter>` according to its profile,
/// with synthetic token counts and latency. Reproducible: the RNG stream
/// for each call is derived from (master seed, stream id, task id, role),
/// so results do not depend on worker scheduling.
pub struct StochasticBackend {
    profile: StochasticAgentProfile,
    master_seed: u64,
}

impl StochasticBackend {
    pub fn new(profile: StochasticAgentProfile, master_seed: u64) -> Result<Self, BackendError> {
        profile.validate()?;
        Ok(StochasticBackend {
            profile,
            master_seed,
        })
    }

    pub fn profile(&self) -> &StochasticAgentProfile {
        &self.profile
    }

    fn rng_for(&self, task_id: &str, role: StageRole) -> ChaCha8Rng {
        let mut hasher = Sha256::new();
        hasher.update(self.master_seed.to_le_bytes());
        hasher.update([0]);
        hasher.update(self.profile.stream_id.as_bytes());
        hasher.update([0]);
        hasher.update(task_id.as_bytes());
        hasher.update([0]);
        hasher.update(role.name().as_bytes());
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(seed)
    }
}

fn sample_around_mean(mean: u64, rng: &mut impl Rng) -> u64 {
    if mean == 0 {
        return 0;
    }
    let lo = mean - mean / 4;
    let hi = mean + mean / 4;
    rng.random_range(lo..=hi)
}

impl Agent for StochasticBackend {
    fn invoke(&self, request: &AgentRequest) -> Result<AgentResponse, BackendError> {
        let sim = request
            .sim
            .as_ref()
            .ok_or(BackendError::SimContextMissing)?;
        let mut rng = self.rng_for(&sim.task_id, request.role);
        let letter = stochastic_step(
            &self.profile,
            request.role,
            sim.gold,
            &sim.choices,
            sim.upstream_answer,
            &mut rng,
        );
        let prompt_tokens = sample_around_mean(self.profile.mean_prompt_tokens, &mut rng);
        let completion_tokens = sample_around_mean(self.profile.mean_completion_tokens, &mut rng);
        // synthetic latency, proportional to output length; deterministic
        let latency_s = completion_tokens as f64 / 100.0;
        Ok(AgentResponse::new(
            format!("Answer: {letter}"),
            Some(TokenUsage::new(prompt_tokens, completion_tokens)),
            latency_s,
        ))
    }

    fn deterministic(&self) -> bool {
        true
    }
}
