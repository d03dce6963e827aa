//! Inter-stage message construction for both regimes: the raw pass-along
//! of the simple pipeline and the validated, structured envelope of the
//! accountable pipeline.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{answer_label, extract_answer, ModelId, ParsedAnswer, StageRole, TaskItem};

pub const ARTIFACT_SCHEMA_VERSION: u32 = 1;

/// Appended verbatim on the single re-ask after a malformed reply.
pub const FORMAT_REMINDER: &str =
    "Format reminder: your previous reply did not contain a readable answer. \
     End your reply with a final line of exactly:\nAnswer: <letter>";

/// A validated, structured handoff envelope carrying one stage's answer,
/// rationale, and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageArtifact {
    pub task_id: String,
    pub stage: StageRole,
    pub producer: ModelId,
    pub answer: ParsedAnswer,
    pub rationale: String,
    /// Answers of exactly the stages preceding `stage`, in pipeline order.
    pub upstream_answers: Vec<(StageRole, ParsedAnswer)>,
    pub schema_version: u32,
}

impl StageArtifact {
    pub fn new(
        task_id: impl Into<String>,
        stage: StageRole,
        producer: ModelId,
        answer: ParsedAnswer,
        rationale: impl Into<String>,
        upstream_answers: Vec<(StageRole, ParsedAnswer)>,
    ) -> Result<Self, HandoffError> {
        if upstream_answers.len() != stage.position() {
            return Err(HandoffError::UpstreamLengthMismatch {
                role: stage,
                expected: stage.position(),
                actual: upstream_answers.len(),
            });
        }
        for (i, (role, _)) in upstream_answers.iter().enumerate() {
            if role.position() != i {
                return Err(HandoffError::UpstreamOutOfOrder { role: *role });
            }
        }
        Ok(StageArtifact {
            task_id: task_id.into(),
            stage,
            producer,
            answer,
            rationale: rationale.into(),
            upstream_answers,
            schema_version: ARTIFACT_SCHEMA_VERSION,
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HandoffError {
    #[error("upstream length mismatch for {role}: expected {expected} artifacts, got {actual}")]
    UpstreamLengthMismatch {
        role: StageRole,
        expected: usize,
        actual: usize,
    },
    #[error("upstream artifacts out of pipeline order at {role}")]
    UpstreamOutOfOrder { role: StageRole },
    #[error("io error loading templates: {0}")]
    Io(#[from] std::io::Error),
}

/// Prompt templates with named placeholders. Defaults are compiled in;
/// any file present in an override directory replaces its default.
#[derive(Debug, Clone)]
pub struct PromptTemplates {
    simple: String,
    accountable: String,
    role_planner: String,
    role_executor: String,
    role_critic: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            simple: include_str!("../templates/simple.txt").to_string(),
            accountable: include_str!("../templates/accountable.txt").to_string(),
            role_planner: include_str!("../templates/role_planner.txt").to_string(),
            role_executor: include_str!("../templates/role_executor.txt").to_string(),
            role_critic: include_str!("../templates/role_critic.txt").to_string(),
        }
    }
}

impl PromptTemplates {
    /// Start from the defaults and replace any template whose file exists
    /// under `dir` (simple.txt, accountable.txt, role_planner.txt,
    /// role_executor.txt, role_critic.txt).
    pub fn load_overrides(dir: &Path) -> Result<Self, HandoffError> {
        let mut templates = PromptTemplates::default();
        let slots: [(&str, &mut String); 5] = [
            ("simple.txt", &mut templates.simple),
            ("accountable.txt", &mut templates.accountable),
            ("role_planner.txt", &mut templates.role_planner),
            ("role_executor.txt", &mut templates.role_executor),
            ("role_critic.txt", &mut templates.role_critic),
        ];
        for (file, slot) in slots {
            let path = dir.join(file);
            if path.exists() {
                *slot = std::fs::read_to_string(&path)?;
            }
        }
        Ok(templates)
    }

    fn role_instructions(&self, role: StageRole) -> &str {
        match role {
            StageRole::Planner => &self.role_planner,
            StageRole::Executor => &self.role_executor,
            StageRole::Critic => &self.role_critic,
        }
    }

    /// Simple-pipeline prompt: question, choices, and (after the planner)
    /// the bare upstream answer with no validation metadata.
    pub fn simple_handoff(&self, item: &TaskItem, prior: Option<&StageArtifact>) -> String {
        if let Some(prior) = prior {
            debug_assert_eq!(prior.task_id, item.id, "prior artifact from another task");
        }
        let previous_section = match prior {
            None => String::new(),
            Some(artifact) => match artifact.answer {
                Some(letter) => format!("Previous answer: {letter}\n\n"),
                None => "The previous stage produced no valid answer.\n\n".to_string(),
            },
        };
        self.simple
            .replace("{question}", &item.question)
            .replace("{choices}", &render_choices(item))
            .replace("{previous_section}", &previous_section)
    }

    /// Accountable-pipeline prompt: a machine-readable state block holding
    /// the serialized upstream artifacts plus role-specific instructions
    /// and the required output schema.
    pub fn accountable_handoff(
        &self,
        item: &TaskItem,
        role: StageRole,
        upstream: &[StageArtifact],
    ) -> Result<String, HandoffError> {
        if upstream.len() != role.position() {
            return Err(HandoffError::UpstreamLengthMismatch {
                role,
                expected: role.position(),
                actual: upstream.len(),
            });
        }
        Ok(self
            .accountable
            .replace("{question}", &item.question)
            .replace("{choices}", &render_choices(item))
            .replace("{state_block}", &render_state_block(upstream))
            .replace("{role_instructions}", self.role_instructions(role)))
    }
}

fn render_choices(item: &TaskItem) -> String {
    let mut out = String::new();
    for (letter, text) in &item.choices {
        let _ = writeln!(out, "{letter}. {text}");
    }
    out.pop(); // no trailing newline inside the placeholder
    out
}

/// One serialized upstream artifact inside the prompt's state block.
#[derive(Serialize)]
struct StateEntry<'a> {
    stage: &'a str,
    producer: &'a str,
    answer: &'a str,
    rationale: &'a str,
}

fn render_state_block(upstream: &[StageArtifact]) -> String {
    if upstream.is_empty() {
        return "(none)".to_string();
    }
    let mut lines = Vec::with_capacity(upstream.len());
    for artifact in upstream {
        let entry = StateEntry {
            stage: artifact.stage.name(),
            producer: &artifact.producer.key,
            answer: answer_label(artifact.answer),
            rationale: &artifact.rationale,
        };
        lines.push(serde_json::to_string(&entry).expect("state entry serializes"));
    }
    lines.join("\n")
}

/// Validate raw model output into a stage artifact. Parse failure is not
/// an error: the artifact is produced with an UNDEFINED answer and the
/// whole raw text as rationale, so downstream fallback can handle it.
pub fn validate_artifact(
    raw_output: &str,
    task_id: &str,
    stage: StageRole,
    producer: &ModelId,
    upstream: &[StageArtifact],
) -> Result<StageArtifact, HandoffError> {
    let (answer, rationale) = match extract_answer(raw_output) {
        Some((letter, span)) => {
            let mut rest = String::with_capacity(raw_output.len() - span.len());
            rest.push_str(&raw_output[..span.start]);
            rest.push_str(&raw_output[span.end..]);
            (Some(letter), rest)
        }
        None => (None, raw_output.to_string()),
    };
    let upstream_answers = upstream
        .iter()
        .map(|a| (a.stage, a.answer))
        .collect::<Vec<_>>();
    StageArtifact::new(
        task_id,
        stage,
        producer.clone(),
        answer,
        rationale,
        upstream_answers,
    )
}

/// The letters a downstream validator sees, for tests and diagnostics.
pub fn upstream_letters(artifact: &StageArtifact) -> Vec<&'static str> {
    artifact
        .upstream_answers
        .iter()
        .map(|(_, a)| answer_label(*a))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::AnswerLetter::*;
    use std::collections::BTreeMap;

    fn item() -> TaskItem {
        TaskItem::new(
            "q1",
            "Which tide is highest?",
            BTreeMap::from([
                (A, "neap".to_string()),
                (B, "spring".to_string()),
                (C, "ebb".to_string()),
            ]),
            B,
        )
        .unwrap()
    }

    fn model(key: &str) -> ModelId {
        ModelId::new(key, format!("model-{key}"), "backend").unwrap()
    }

    fn planner_artifact(answer: ParsedAnswer) -> StageArtifact {
        StageArtifact::new("q1", StageRole::Planner, model("A"), answer, "plan", vec![]).unwrap()
    }

    #[test]
    fn simple_prompt_without_prior_has_no_previous_section() {
        let prompt = PromptTemplates::default().simple_handoff(&item(), None);
        assert!(prompt.contains("Which tide is highest?"));
        assert!(prompt.contains("B. spring"));
        assert!(!prompt.contains("Previous answer"));
        assert!(!prompt.contains("no valid answer"));
    }

    #[test]
    fn simple_prompt_embeds_prior_answer_verbatim() {
        let prompt =
            PromptTemplates::default().simple_handoff(&item(), Some(&planner_artifact(Some(B))));
        assert!(prompt.contains("Previous answer: B"));
        // no validation metadata leaks into the simple regime
        assert!(!prompt.contains("producer"));
        assert!(!prompt.contains("rationale"));
    }

    #[test]
    fn simple_prompt_states_undefined_prior() {
        let prompt =
            PromptTemplates::default().simple_handoff(&item(), Some(&planner_artifact(None)));
        assert!(prompt.contains("The previous stage produced no valid answer."));
    }

    #[test]
    fn accountable_prompt_lists_upstream_in_order() {
        let templates = PromptTemplates::default();
        let planner = planner_artifact(Some(B));
        let executor = StageArtifact::new(
            "q1",
            StageRole::Executor,
            model("B"),
            Some(C),
            "work",
            vec![(StageRole::Planner, Some(B))],
        )
        .unwrap();
        let prompt = templates
            .accountable_handoff(&item(), StageRole::Critic, &[planner, executor])
            .unwrap();
        let planner_pos = prompt.find("\"stage\":\"planner\"").unwrap();
        let executor_pos = prompt.find("\"stage\":\"executor\"").unwrap();
        assert!(planner_pos < executor_pos);
        assert!(prompt.contains("\"answer\":\"B\""));
        assert!(prompt.contains("\"answer\":\"C\""));
        assert!(prompt.contains("Answer: <letter>"));
    }

    #[test]
    fn accountable_prompt_planner_has_empty_state() {
        let prompt = PromptTemplates::default()
            .accountable_handoff(&item(), StageRole::Planner, &[])
            .unwrap();
        assert!(prompt.contains("(none)"));
        assert!(prompt.contains("You are the planner."));
    }

    #[test]
    fn upstream_length_mismatch_is_an_error() {
        let err = PromptTemplates::default()
            .accountable_handoff(&item(), StageRole::Executor, &[])
            .unwrap_err();
        assert!(matches!(
            err,
            HandoffError::UpstreamLengthMismatch {
                role: StageRole::Executor,
                expected: 1,
                actual: 0
            }
        ));
    }

    #[test]
    fn validate_artifact_parses_answer_and_keeps_rationale() {
        let planner = planner_artifact(Some(B));
        let executor = StageArtifact::new(
            "q1",
            StageRole::Executor,
            model("B"),
            Some(D),
            "",
            vec![(StageRole::Planner, Some(B))],
        )
        .unwrap();
        let artifact = validate_artifact(
            "Answer: D",
            "q1",
            StageRole::Critic,
            &model("C"),
            &[planner, executor],
        )
        .unwrap();
        assert_eq!(artifact.answer, Some(D));
        assert_eq!(artifact.rationale, "");
        assert_eq!(
            artifact.upstream_answers,
            vec![
                (StageRole::Planner, Some(B)),
                (StageRole::Executor, Some(D))
            ]
        );
    }

    #[test]
    fn validate_artifact_encodes_failure_as_undefined() {
        let artifact =
            validate_artifact("no idea", "q1", StageRole::Planner, &model("A"), &[]).unwrap();
        assert_eq!(artifact.answer, None);
        assert_eq!(artifact.rationale, "no idea");
    }

    #[test]
    fn validate_artifact_uses_last_marker() {
        let artifact = validate_artifact(
            "Answer: B\nAnswer: C",
            "q1",
            StageRole::Planner,
            &model("A"),
            &[],
        )
        .unwrap();
        assert_eq!(artifact.answer, Some(C));
        assert_eq!(artifact.rationale, "Answer: B\n");
    }

    #[test]
    fn rationale_plus_span_reconstructs_raw_output() {
        let raw = "Thinking... Answer: E trailing";
        let (letter, span) = extract_answer(raw).unwrap();
        let artifact = validate_artifact(raw, "q1", StageRole::Planner, &model("A"), &[]).unwrap();
        assert_eq!(artifact.answer, Some(letter));
        let mut rebuilt = artifact.rationale.clone();
        rebuilt.insert_str(span.start, &raw[span.clone()]);
        assert_eq!(rebuilt, raw);
    }

    #[test]
    fn question_and_choices_render_identically_across_regimes() {
        let templates = PromptTemplates::default();
        let item = item();
        let simple = templates.simple_handoff(&item, None);
        let accountable = templates
            .accountable_handoff(&item, StageRole::Planner, &[])
            .unwrap();
        let header = format!(
            "Question:\n{}\n\nChoices:\n{}\n",
            item.question, "A. neap\nB. spring\nC. ebb"
        );
        assert!(simple.starts_with(&header));
        assert!(accountable.starts_with(&header));
    }
}
