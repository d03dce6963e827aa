use std::io::Write;
use std::path::Path;

use crate::domain::{TraceRecord, TraceValidationError};

/// Trace files are JSONL: one validated record per line.
#[derive(Debug, thiserror::Error)]
pub enum TraceFileError {
    #[error("io error on trace file: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace line {line}: corrupt record: {message}")]
    CorruptLine { line: usize, message: String },
    #[error("trace line {line}: {source}")]
    Invalid {
        line: usize,
        source: TraceValidationError,
    },
}

pub fn read_traces(path: &Path) -> Result<Vec<TraceRecord>, TraceFileError> {
    let text = std::fs::read_to_string(path)?;
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: TraceRecord =
            serde_json::from_str(line).map_err(|e| TraceFileError::CorruptLine {
                line: line_no,
                message: e.to_string(),
            })?;
        record
            .validate()
            .map_err(|source| TraceFileError::Invalid {
                line: line_no,
                source,
            })?;
        records.push(record);
    }
    Ok(records)
}

pub fn append_trace<W: Write>(writer: &mut W, record: &TraceRecord) -> std::io::Result<()> {
    let line = serde_json::to_string(record).expect("trace record serializes");
    writeln!(writer, "{line}")
}
