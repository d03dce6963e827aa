use serde::{Deserialize, Serialize};

/// The five binary blame flags recorded per item.
///
/// Structural invariants, enforced at construction and on every record
/// read back from disk:
/// - `executor_repair` and `executor_harm` are mutually exclusive;
/// - `critic_repair` and `critic_harm` are mutually exclusive;
/// - `executor_repair` implies `planner_error`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BlameFlags {
    pub planner_error: bool,
    pub executor_repair: bool,
    pub executor_harm: bool,
    pub critic_repair: bool,
    pub critic_harm: bool,
}

impl BlameFlags {
    pub fn new(
        planner_error: bool,
        executor_repair: bool,
        executor_harm: bool,
        critic_repair: bool,
        critic_harm: bool,
    ) -> Result<Self, FlagInvariantError> {
        let flags = BlameFlags {
            planner_error,
            executor_repair,
            executor_harm,
            critic_repair,
            critic_harm,
        };
        flags.validate()?;
        Ok(flags)
    }

    pub fn validate(&self) -> Result<(), FlagInvariantError> {
        if self.executor_repair && self.executor_harm {
            return Err(FlagInvariantError::ExecutorRepairAndHarm);
        }
        if self.critic_repair && self.critic_harm {
            return Err(FlagInvariantError::CriticRepairAndHarm);
        }
        if self.executor_repair && !self.planner_error {
            return Err(FlagInvariantError::RepairWithoutPlannerError);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum FlagInvariantError {
    #[error("executor_repair and executor_harm are mutually exclusive")]
    ExecutorRepairAndHarm,
    #[error("critic_repair and critic_harm are mutually exclusive")]
    CriticRepairAndHarm,
    #[error("executor_repair requires planner_error")]
    RepairWithoutPlannerError,
}

/// The earliest stage whose mistake remains unrepaired in the final
/// output; `None` when the final answer is correct.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ErrorOrigin {
    None,
    Planner,
    Executor,
    Critic,
}

impl ErrorOrigin {
    pub fn name(self) -> &'static str {
        match self {
            ErrorOrigin::None => "NONE",
            ErrorOrigin::Planner => "PLANNER",
            ErrorOrigin::Executor => "EXECUTOR",
            ErrorOrigin::Critic => "CRITIC",
        }
    }
}

impl std::fmt::Display for ErrorOrigin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
