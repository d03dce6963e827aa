use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{ModelId, Regime};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// Provenance record written alongside each run's trace file: which
/// models ran, over which dataset bytes, priced how, seeded with what.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub run_id: String,
    pub regime: Regime,
    pub label: String,
    pub planner: ModelId,
    pub executor: Option<ModelId>,
    pub critic: Option<ModelId>,
    pub dataset_name: String,
    pub dataset_sha256: String,
    pub item_count: usize,
    pub price_sheet_sha256: String,
    pub seed: u64,
    pub trace_file: String,
    pub started_unix_ms: u64,
    pub finished_unix_ms: Option<u64>,
    pub item_error_count: usize,
    pub complete: bool,
}

impl RunManifest {
    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let mut json = serde_json::to_string_pretty(self).expect("manifest serializes");
        json.push('\n');
        std::fs::write(path, json)
    }

    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let text = std::fs::read_to_string(path)?;
        let manifest: RunManifest =
            serde_json::from_str(&text).map_err(|e| ManifestError::Malformed(e.to_string()))?;
        if manifest.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(ManifestError::SchemaVersion(manifest.schema_version));
        }
        Ok(manifest)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("io error reading manifest: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed manifest: {0}")]
    Malformed(String),
    #[error("manifest schema version {0} unsupported")]
    SchemaVersion(u32),
}
