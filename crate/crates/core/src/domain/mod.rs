//! Domain types shared by every other module. Everything here is immutable
//! after construction and safe to share across workers.

mod answer;
mod flags;
mod model;
mod money;
mod task;
mod trace;
mod usage;

pub use answer::{
    answer_label, extract_answer, parse_answer_letter, AnswerLetter, ParseLetterError, ParsedAnswer,
};
pub use flags::{BlameFlags, ErrorOrigin, FlagInvariantError};
pub use model::{ModelConfigError, ModelId, PipelineConfig, Regime, StageRole};
pub use money::{MoneyError, PriceRate, PriceSheet, Usd};
pub use task::{load_dataset, validate_dataset, Dataset, DatasetError, TaskItem};
pub use trace::{StageTrace, TraceRecord, TraceValidationError, TRACE_SCHEMA_VERSION};
pub use usage::TokenUsage;

/// Hex SHA-256, used for dataset/fixture/price-sheet content addressing.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}
