use serde::{Deserialize, Serialize};

use super::answer::{AnswerLetter, ParsedAnswer};
use super::flags::{BlameFlags, ErrorOrigin, FlagInvariantError};
use super::model::Regime;
use super::money::Usd;
use super::usage::TokenUsage;

pub const TRACE_SCHEMA_VERSION: u32 = 1;

/// One stage's slice of a trace record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub model_key: String,
    pub raw_text: String,
    pub answer: ParsedAnswer,
    /// Absent when the provider did not report usage; costs are then
    /// unavailable rather than zero-filled.
    pub usage: Option<TokenUsage>,
    pub latency_s: f64,
    pub cost_usd: Option<Usd>,
    /// Invocation count for this stage (> 1 when a malformed reply was
    /// re-asked). Usage and latency aggregate all attempts.
    pub attempts: u32,
    /// Backend failure description, if the stage errored out.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Per-item forensic record: stage answers, blame flags, error origin,
/// tokens, latency, cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub schema_version: u32,
    pub task_id: String,
    pub label: String,
    pub regime: Regime,
    pub gold: AnswerLetter,
    pub planner: StageTrace,
    /// `None` for baseline (single-stage) runs.
    pub executor: Option<StageTrace>,
    pub critic: Option<StageTrace>,
    #[serde(rename = "final")]
    pub final_answer: ParsedAnswer,
    pub flags: BlameFlags,
    pub origin: ErrorOrigin,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
}

impl TraceRecord {
    /// Stage answers as fed to final selection: baseline records collapse
    /// all three slots onto the single answer.
    pub fn stage_answers(&self) -> (ParsedAnswer, ParsedAnswer, ParsedAnswer) {
        let p = self.planner.answer;
        match (&self.executor, &self.critic) {
            (Some(e), Some(c)) => (p, e.answer, c.answer),
            _ => (p, p, p),
        }
    }

    pub fn is_correct(&self) -> bool {
        self.final_answer == Some(self.gold)
    }

    /// Sum of stage latencies: the end-to-end item latency.
    pub fn total_latency_s(&self) -> f64 {
        let mut total = self.planner.latency_s;
        if let Some(e) = &self.executor {
            total += e.latency_s;
        }
        if let Some(c) = &self.critic {
            total += c.latency_s;
        }
        total
    }

    pub fn stages(&self) -> impl Iterator<Item = &StageTrace> {
        std::iter::once(&self.planner)
            .chain(self.executor.as_ref())
            .chain(self.critic.as_ref())
    }

    pub fn stages_mut(&mut self) -> impl Iterator<Item = &mut StageTrace> {
        std::iter::once(&mut self.planner)
            .chain(self.executor.as_mut())
            .chain(self.critic.as_mut())
    }

    /// Structural validation applied to every record read back from disk.
    pub fn validate(&self) -> Result<(), TraceValidationError> {
        if self.schema_version != TRACE_SCHEMA_VERSION {
            return Err(TraceValidationError::SchemaVersion {
                found: self.schema_version,
                expected: TRACE_SCHEMA_VERSION,
            });
        }
        self.flags.validate()?;
        if self.executor.is_some() != self.critic.is_some() {
            return Err(TraceValidationError::PartialPipelineStages);
        }
        let (p, e, c) = self.stage_answers();
        let expected = crate::blame::select_final(p, e, c);
        if self.final_answer != expected {
            return Err(TraceValidationError::FinalSelectionMismatch);
        }
        let correct = self.final_answer == Some(self.gold);
        if correct != (self.origin == ErrorOrigin::None) {
            return Err(TraceValidationError::OriginPostcondition);
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TraceValidationError {
    #[error("trace schema version {found} unsupported (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
    #[error(transparent)]
    Flags(#[from] FlagInvariantError),
    #[error("pipeline record must carry both executor and critic stages")]
    PartialPipelineStages,
    #[error("final answer does not match stage-preference selection")]
    FinalSelectionMismatch,
    #[error("origin NONE must coincide exactly with a correct final answer")]
    OriginPostcondition,
}
