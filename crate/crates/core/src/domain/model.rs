use std::fmt;

use serde::{Deserialize, Serialize};

/// Pipeline position. Ordered: Planner < Executor < Critic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageRole {
    Planner,
    Executor,
    Critic,
}

impl StageRole {
    pub const ALL: [StageRole; 3] = [StageRole::Planner, StageRole::Executor, StageRole::Critic];

    /// Zero-based pipeline position; equals the number of upstream stages.
    pub fn position(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            StageRole::Planner => "planner",
            StageRole::Executor => "executor",
            StageRole::Critic => "critic",
        }
    }
}

impl fmt::Display for StageRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A configured model: short code used in config labels, a human name, and
/// a reference into the backend table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelId {
    pub key: String,
    pub display_name: String,
    pub backend_ref: String,
}

impl ModelId {
    pub fn new(
        key: impl Into<String>,
        display_name: impl Into<String>,
        backend_ref: impl Into<String>,
    ) -> Result<Self, ModelConfigError> {
        let key = key.into();
        if key.is_empty() {
            return Err(ModelConfigError::EmptyKey);
        }
        Ok(ModelId {
            key,
            display_name: display_name.into(),
            backend_ref: backend_ref.into(),
        })
    }
}

/// Inference regime over a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// Single model answers end-to-end.
    Baseline,
    /// Three stages; each passes only question + current answer downstream.
    Simple,
    /// Three stages exchanging validated structured artifacts.
    Accountable,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Baseline => "baseline",
            Regime::Simple => "simple",
            Regime::Accountable => "accountable",
        }
    }

    pub fn is_pipeline(self) -> bool {
        !matches!(self, Regime::Baseline)
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Regime {
    type Err = ModelConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(Regime::Baseline),
            "simple" => Ok(Regime::Simple),
            "accountable" => Ok(Regime::Accountable),
            other => Err(ModelConfigError::UnknownRegime(other.to_string())),
        }
    }
}

/// An ordered model triple plus regime. The label is always derived from
/// the model keys in planner -> executor -> critic order, never typed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub planner: ModelId,
    pub executor: ModelId,
    pub critic: ModelId,
    pub regime: Regime,
    pub label: String,
}

impl PipelineConfig {
    pub fn new(
        planner: ModelId,
        executor: ModelId,
        critic: ModelId,
        regime: Regime,
    ) -> Result<Self, ModelConfigError> {
        if !regime.is_pipeline() {
            return Err(ModelConfigError::BaselineIsNotAPipeline);
        }
        let label = format!("{}{}{}", planner.key, executor.key, critic.key);
        Ok(PipelineConfig {
            planner,
            executor,
            critic,
            regime,
            label,
        })
    }

    pub fn model_for(&self, role: StageRole) -> &ModelId {
        match role {
            StageRole::Planner => &self.planner,
            StageRole::Executor => &self.executor,
            StageRole::Critic => &self.critic,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ModelConfigError {
    #[error("model key must be non-empty")]
    EmptyKey,
    #[error("unknown regime {0:?} (expected baseline, simple, or accountable)")]
    UnknownRegime(String),
    #[error("a pipeline config requires the simple or accountable regime")]
    BaselineIsNotAPipeline,
}
