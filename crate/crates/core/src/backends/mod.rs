//! The agent abstraction and its three implementations: live HTTP
//! chat-completion providers, scripted fixture agents, and stochastic
//! simulation agents.

mod http;
mod scripted;
mod stochastic;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::{AnswerLetter, ModelId, ParsedAnswer, StageRole, TokenUsage};

pub use http::{HttpBackend, HttpBackendConfig, RequestMapping, ResponseMapping};
pub use scripted::{Fixture, ScriptedBackend};
pub use stochastic::{stochastic_step, StochasticAgentProfile, StochasticBackend};

/// One request to an agent backend.
#[derive(Debug, Clone)]
pub struct AgentRequest {
    pub prompt: String,
    pub role: StageRole,
    pub model: ModelId,
    /// Temperature-like sampling controls, passed through opaquely to
    /// providers that accept them.
    pub sampling: BTreeMap<String, serde_json::Value>,
    pub timeout_s: f64,
    /// Simulation metadata, populated by the runner for every request and
    /// ignored by live backends. Stochastic agents require it: their
    /// behavior is generated against the ground truth, not the prompt.
    pub sim: Option<SimContext>,
}

impl AgentRequest {
    pub fn new(
        prompt: impl Into<String>,
        role: StageRole,
        model: ModelId,
        timeout_s: f64,
    ) -> Result<Self, BackendError> {
        let prompt = prompt.into();
        if prompt.is_empty() {
            return Err(BackendError::EmptyPrompt);
        }
        if !timeout_s.is_finite() || timeout_s <= 0.0 {
            return Err(BackendError::BadTimeout(timeout_s));
        }
        Ok(AgentRequest {
            prompt,
            role,
            model,
            sampling: BTreeMap::new(),
            timeout_s,
            sim: None,
        })
    }

    pub fn with_sim(mut self, sim: SimContext) -> Self {
        self.sim = Some(sim);
        self
    }

    pub fn with_sampling(mut self, sampling: BTreeMap<String, serde_json::Value>) -> Self {
        self.sampling = sampling;
        self
    }
}

/// Ground-truth context for simulation backends.
#[derive(Debug, Clone)]
pub struct SimContext {
    pub task_id: String,
    pub gold: AnswerLetter,
    /// The item's own choice set; wrong answers are sampled from it.
    pub choices: Vec<AnswerLetter>,
    /// Parsed answer of the immediately preceding stage; `None` both for
    /// the planner (no upstream) and for an UNDEFINED upstream answer.
    pub upstream_answer: ParsedAnswer,
}

/// One response from an agent backend.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentResponse {
    pub raw_text: String,
    /// `None` when the provider did not report usage; never zero-filled.
    pub usage: Option<TokenUsage>,
    /// Wall-clock seconds from request start to response parse. In-process
    /// backends report deterministic synthetic values instead so that
    /// seeded runs are byte-reproducible.
    pub latency_s: f64,
}

impl AgentResponse {
    pub fn new(raw_text: impl Into<String>, usage: Option<TokenUsage>, latency_s: f64) -> Self {
        AgentResponse {
            raw_text: raw_text.into(),
            usage,
            latency_s,
        }
    }
}

/// Uniform contract for all backends. Implementations must be safe to
/// call from many workers concurrently.
pub trait Agent: Send + Sync {
    fn invoke(&self, request: &AgentRequest) -> Result<AgentResponse, BackendError>;

    /// True when identical inputs always yield identical responses
    /// (scripted and stochastic backends). Deterministic runs zero their
    /// wall-clock timestamps so trace files are byte-reproducible.
    fn deterministic(&self) -> bool;
}

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("prompt must be non-empty")]
    EmptyPrompt,
    #[error("timeout must be positive, got {0}")]
    BadTimeout(f64),
    #[error("request timed out after {0}s")]
    Timeout(f64),
    #[error("authentication failure: {0}")]
    Auth(String),
    #[error("retry budget exhausted after {attempts} attempts; last status {last_status}")]
    RetriesExhausted { attempts: u32, last_status: u16 },
    #[error("provider returned status {status}: {body}")]
    BadStatus { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed provider response: {0}")]
    BadResponse(String),
    #[error("no fixture for prompt sha256 {0}")]
    FixtureMiss(String),
    #[error("malformed fixture file at line {line}: {message}")]
    BadFixture { line: usize, message: String },
    #[error("stochastic backend invoked without simulation context")]
    SimContextMissing,
    #[error("invalid stochastic profile: {0}")]
    BadProfile(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Backend declaration as it appears in config files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum BackendDecl {
    Http(Box<HttpBackendConfig>),
    Scripted {
        /// Fixture JSONL path, relative to the config file.
        fixtures: String,
    },
    Stochastic(StochasticAgentProfile),
}

/// Instantiate a declared backend. `base_dir` anchors relative fixture
/// paths; `master_seed` feeds stochastic backends.
pub fn build_backend(
    decl: &BackendDecl,
    base_dir: &Path,
    master_seed: u64,
) -> Result<Arc<dyn Agent>, BackendError> {
    match decl {
        BackendDecl::Http(config) => Ok(Arc::new(HttpBackend::new((**config).clone())?)),
        BackendDecl::Scripted { fixtures } => {
            let path = base_dir.join(fixtures);
            Ok(Arc::new(ScriptedBackend::load(&path)?))
        }
        BackendDecl::Stochastic(profile) => Ok(Arc::new(StochasticBackend::new(
            profile.clone(),
            master_seed,
        )?)),
    }
}
