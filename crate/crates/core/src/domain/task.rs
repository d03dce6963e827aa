use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::answer::AnswerLetter;

/// One multiple-choice problem with a gold label; the unit of evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TaskItem {
    pub id: String,
    pub question: String,
    /// Lettered options, contiguous from A (2-5 entries).
    pub choices: BTreeMap<AnswerLetter, String>,
    pub gold: AnswerLetter,
}

impl TaskItem {
    pub fn new(
        id: impl Into<String>,
        question: impl Into<String>,
        choices: BTreeMap<AnswerLetter, String>,
        gold: AnswerLetter,
    ) -> Result<Self, DatasetError> {
        let item = TaskItem {
            id: id.into(),
            question: question.into(),
            choices,
            gold,
        };
        item.check(0)?;
        Ok(item)
    }

    /// Letters available on this item, in order.
    pub fn choice_letters(&self) -> Vec<AnswerLetter> {
        self.choices.keys().copied().collect()
    }

    fn check(&self, line: usize) -> Result<(), DatasetError> {
        let n = self.choices.len();
        if !(2..=5).contains(&n) {
            return Err(DatasetError::ChoiceCount {
                line,
                id: self.id.clone(),
                count: n,
            });
        }
        // keys must be A, B, ... with no gaps
        for (i, letter) in self.choices.keys().enumerate() {
            if letter.index() != i {
                return Err(DatasetError::NonContiguousChoices {
                    line,
                    id: self.id.clone(),
                });
            }
        }
        if !self.choices.contains_key(&self.gold) {
            return Err(DatasetError::GoldNotInChoices {
                line,
                id: self.id.clone(),
                gold: self.gold,
            });
        }
        Ok(())
    }
}

/// An ordered, non-empty collection of task items with distinct ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Dataset {
    pub name: String,
    pub items: Vec<TaskItem>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, items: Vec<TaskItem>) -> Result<Self, DatasetError> {
        if items.is_empty() {
            return Err(DatasetError::Empty);
        }
        let mut seen = BTreeSet::new();
        for item in &items {
            if !seen.insert(item.id.as_str()) {
                return Err(DatasetError::DuplicateId {
                    line: 0,
                    id: item.id.clone(),
                });
            }
        }
        Ok(Dataset {
            name: name.into(),
            items,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Serialize back to the JSONL wire format, one item per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for item in &self.items {
            // TaskItem serialization cannot fail: all keys are strings.
            let line = serde_json::to_string(item).expect("task item serializes");
            let _ = writeln!(out, "{line}");
        }
        out
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("io error reading dataset: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed dataset line: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("line {line}: item {id:?}: gold not in answer space: {gold:?}")]
    GoldOutsideAnswerSpace {
        line: usize,
        id: String,
        gold: String,
    },
    #[error("line {line}: item {id:?}: gold {gold} not among choices")]
    GoldNotInChoices {
        line: usize,
        id: String,
        gold: AnswerLetter,
    },
    #[error("line {line}: item {id:?}: choice key not in answer space: {key:?}")]
    ChoiceKeyOutsideAnswerSpace {
        line: usize,
        id: String,
        key: String,
    },
    #[error("line {line}: item {id:?}: expected 2-5 choices, found {count}")]
    ChoiceCount {
        line: usize,
        id: String,
        count: usize,
    },
    #[error("line {line}: item {id:?}: choice letters must be contiguous from A")]
    NonContiguousChoices { line: usize, id: String },
    #[error("line {line}: duplicate item id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("dataset is empty")]
    Empty,
}

/// Wire shape of one dataset line; unknown fields are ignored.
#[derive(Deserialize)]
struct RawItem {
    id: String,
    question: String,
    choices: BTreeMap<String, String>,
    gold: String,
}

/// Parse and validate a serialized dataset (UTF-8 JSONL, one item per
/// line). Items are preserved in file order; blank lines are skipped.
pub fn validate_dataset(raw: &[u8], name: impl Into<String>) -> Result<Dataset, DatasetError> {
    let text = std::str::from_utf8(raw).map_err(|e| DatasetError::MalformedLine {
        line: 0,
        message: format!("invalid utf-8: {e}"),
    })?;
    let mut items = Vec::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw_item: RawItem =
            serde_json::from_str(line).map_err(|e| DatasetError::MalformedLine {
                line: line_no,
                message: e.to_string(),
            })?;
        let item = validate_item(raw_item, line_no)?;
        if !seen.insert(item.id.clone()) {
            return Err(DatasetError::DuplicateId {
                line: line_no,
                id: item.id,
            });
        }
        items.push(item);
    }
    if items.is_empty() {
        return Err(DatasetError::Empty);
    }
    // Dataset::new re-checks id uniqueness; already guaranteed above.
    Ok(Dataset {
        name: name.into(),
        items,
    })
}

fn validate_item(raw: RawItem, line: usize) -> Result<TaskItem, DatasetError> {
    let mut choices = BTreeMap::new();
    for (key, text) in raw.choices {
        let letter: AnswerLetter =
            key.parse()
                .map_err(|_| DatasetError::ChoiceKeyOutsideAnswerSpace {
                    line,
                    id: raw.id.clone(),
                    key: key.clone(),
                })?;
        choices.insert(letter, text);
    }
    let gold: AnswerLetter =
        raw.gold
            .parse()
            .map_err(|_| DatasetError::GoldOutsideAnswerSpace {
                line,
                id: raw.id.clone(),
                gold: raw.gold.clone(),
            })?;
    let item = TaskItem {
        id: raw.id,
        question: raw.question,
        choices,
        gold,
    };
    item.check(line)?;
    Ok(item)
}

/// Load a dataset file, returning the validated dataset and the SHA-256 of
/// the raw bytes (used for resume/provenance checks).
pub fn load_dataset(path: &Path) -> Result<(Dataset, String), DatasetError> {
    let bytes = std::fs::read(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    let dataset = validate_dataset(&bytes, name)?;
    Ok((dataset, super::sha256_hex(&bytes)))
}
