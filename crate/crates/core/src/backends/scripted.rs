use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{sha256_hex, TokenUsage};

use super::{Agent, AgentRequest, AgentResponse, BackendError};

/// One scripted exchange, keyed by the SHA-256 of the exact prompt text.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Fixture {
    pub prompt_sha256: String,
    pub response_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_tokens: Option<u64>,
}

impl Fixture {
    /// Convenience constructor hashing the prompt text.
    pub fn for_prompt(
        prompt: &str,
        response_text: &str,
        prompt_tokens: u64,
        completion_tokens: u64,
    ) -> Self {
        Fixture {
            prompt_sha256: sha256_hex(prompt.as_bytes()),
            response_text: response_text.to_string(),
            prompt_tokens: Some(prompt_tokens),
            completion_tokens: Some(completion_tokens),
        }
    }
}

/// Replays recorded responses; total over its fixture set and loud
/// outside it.
#[derive(Debug)]
pub struct ScriptedBackend {
    fixtures: HashMap<String, Fixture>,
}

impl ScriptedBackend {
    pub fn new(fixtures: impl IntoIterator<Item = Fixture>) -> Self {
        ScriptedBackend {
            fixtures: fixtures
                .into_iter()
                .map(|f| (f.prompt_sha256.clone(), f))
                .collect(),
        }
    }

    /// Load fixtures from JSONL, one object per line.
    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)?;
        let mut fixtures = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fixture: Fixture =
                serde_json::from_str(line).map_err(|e| BackendError::BadFixture {
                    line: idx + 1,
                    message: e.to_string(),
                })?;
            fixtures.push(fixture);
        }
        Ok(Self::new(fixtures))
    }

    pub fn len(&self) -> usize {
        self.fixtures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixtures.is_empty()
    }

    /// Serialize fixtures to JSONL (used by tests and fixture tooling).
    pub fn to_jsonl(fixtures: &[Fixture]) -> String {
        let mut out = String::new();
        for fixture in fixtures {
            out.push_str(&serde_json::to_string(fixture).expect("fixture serializes"));
            out.push('\n');
        }
        out
    }
}

impl Agent for ScriptedBackend {
    fn invoke(&self, request: &AgentRequest) -> Result<AgentResponse, BackendError> {
        let key = sha256_hex(request.prompt.as_bytes());
        let fixture = self
            .fixtures
            .get(&key)
            .ok_or_else(|| BackendError::FixtureMiss(key.clone()))?;
        let usage = match (fixture.prompt_tokens, fixture.completion_tokens) {
            (Some(p), Some(c)) => Some(TokenUsage::new(p, c)),
            _ => None,
        };
        Ok(AgentResponse::new(&fixture.response_text, usage, 0.0))
    }

    fn deterministic(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ModelId, StageRole};

    fn request(prompt: &str) -> AgentRequest {
        AgentRequest::new(
            prompt,
            StageRole::Planner,
            ModelId::new("A", "a", "scripted").unwrap(),
            30.0,
        )
        .unwrap()
    }

    #[test]
    fn lookup_by_prompt_hash() {
        let backend = ScriptedBackend::new([Fixture::for_prompt("hello", "Answer: B", 100, 5)]);
        let response = backend.invoke(&request("hello")).unwrap();
        assert_eq!(response.raw_text, "Answer: B");
        assert_eq!(response.usage, Some(TokenUsage::new(100, 5)));
        assert_eq!(response.latency_s, 0.0);
    }

    #[test]
    fn miss_errors_loudly() {
        let backend = ScriptedBackend::new([]);
        assert!(matches!(
            backend.invoke(&request("unknown")).unwrap_err(),
            BackendError::FixtureMiss(_)
        ));
    }

    #[test]
    fn absent_token_counts_mean_no_usage() {
        let fixture = Fixture {
            prompt_sha256: sha256_hex(b"p"),
            response_text: "Answer: A".to_string(),
            prompt_tokens: None,
            completion_tokens: None,
        };
        let backend = ScriptedBackend::new([fixture]);
        assert_eq!(backend.invoke(&request("p")).unwrap().usage, None);
    }

    #[test]
    fn jsonl_roundtrip() {
        let fixtures = vec![
            Fixture::for_prompt("p1", "Answer: A", 10, 2),
            Fixture::for_prompt("p2", "Answer: B", 12, 3),
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fixtures.jsonl");
        std::fs::write(&path, ScriptedBackend::to_jsonl(&fixtures)).unwrap();
        let backend = ScriptedBackend::load(&path).unwrap();
        assert_eq!(backend.len(), 2);
        assert_eq!(
            backend.invoke(&request("p2")).unwrap().raw_text,
            "Answer: B"
        );
    }

    #[test]
    fn bad_fixture_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fixtures.jsonl");
        std::fs::write(
            &path,
            "{\"prompt_sha256\":\"x\",\"response_text\":\"y\"}\nnot json\n",
        )
        .unwrap();
        match ScriptedBackend::load(&path).unwrap_err() {
            BackendError::BadFixture { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error: {other}"),
        }
    }
}
