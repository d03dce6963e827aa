//! Experiment configuration: model table, backend declarations, pipeline
//! role assignment, optional baseline model and price sheet.
//!
//! ```toml
//! [models.A]
//! display_name = "alpha"
//! backend = "sim_planner"
//!
//! [pipeline]
//! planner = "A"
//! executor = "B"
//! critic = "C"
//!
//! [baseline]
//! model = "A"
//!
//! [backends.sim_planner]
//! type = "stochastic"
//! base_correct = 0.6
//! mean_prompt_tokens = 200
//! mean_completion_tokens = 40
//! stream_id = "planner"
//!
//! [prices.A]
//! input_per_1k = "0.005"
//! output_per_1k = "0.020"
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::backends::{build_backend, Agent, BackendDecl, BackendError};
use crate::domain::{
    ModelConfigError, ModelId, MoneyError, PipelineConfig, PriceRate, PriceSheet, Regime,
};
use crate::runner::PipelineAgents;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelDecl {
    display_name: String,
    backend: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PipelineDecl {
    planner: String,
    executor: String,
    critic: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BaselineDecl {
    model: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawConfig {
    models: BTreeMap<String, ModelDecl>,
    backends: BTreeMap<String, BackendDecl>,
    #[serde(default)]
    pipeline: Option<PipelineDecl>,
    #[serde(default)]
    baseline: Option<BaselineDecl>,
    #[serde(default)]
    prices: Option<BTreeMap<String, PriceRate>>,
}

/// A parsed, cross-checked experiment configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    raw: RawConfig,
    /// Directory the config file lives in; anchors relative fixture paths.
    base_dir: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("io error reading config: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed config: {0}")]
    Malformed(String),
    #[error("model {0:?} references unknown backend {1:?}")]
    UnknownBackend(String, String),
    #[error("{role} references unknown model key {key:?}")]
    UnknownModel { role: String, key: String },
    #[error("config has no [pipeline] section")]
    MissingPipeline,
    #[error("config has no [baseline] section")]
    MissingBaseline,
    #[error(transparent)]
    Model(#[from] ModelConfigError),
    #[error(transparent)]
    Money(#[from] MoneyError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Self::from_toml_str(&text, base_dir)
    }

    pub fn from_toml_str(text: &str, base_dir: PathBuf) -> Result<Self, ConfigError> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| ConfigError::Malformed(e.to_string()))?;
        let config = ExperimentConfig { raw, base_dir };
        config.check()?;
        Ok(config)
    }

    fn check(&self) -> Result<(), ConfigError> {
        for (key, decl) in &self.raw.models {
            if key.is_empty() {
                return Err(ModelConfigError::EmptyKey.into());
            }
            if !self.raw.backends.contains_key(&decl.backend) {
                return Err(ConfigError::UnknownBackend(
                    key.clone(),
                    decl.backend.clone(),
                ));
            }
        }
        if let Some(pipeline) = &self.raw.pipeline {
            for (role, key) in [
                ("pipeline.planner", &pipeline.planner),
                ("pipeline.executor", &pipeline.executor),
                ("pipeline.critic", &pipeline.critic),
            ] {
                if !self.raw.models.contains_key(key) {
                    return Err(ConfigError::UnknownModel {
                        role: role.to_string(),
                        key: key.clone(),
                    });
                }
            }
        }
        if let Some(baseline) = &self.raw.baseline {
            if !self.raw.models.contains_key(&baseline.model) {
                return Err(ConfigError::UnknownModel {
                    role: "baseline.model".to_string(),
                    key: baseline.model.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn model(&self, key: &str) -> Result<ModelId, ConfigError> {
        let decl = self
            .raw
            .models
            .get(key)
            .ok_or_else(|| ConfigError::UnknownModel {
                role: "model lookup".to_string(),
                key: key.to_string(),
            })?;
        Ok(ModelId::new(key, &decl.display_name, &decl.backend)?)
    }

    pub fn baseline_model(&self) -> Result<ModelId, ConfigError> {
        let baseline = self
            .raw
            .baseline
            .as_ref()
            .ok_or(ConfigError::MissingBaseline)?;
        self.model(&baseline.model)
    }

    pub fn pipeline_config(&self, regime: Regime) -> Result<PipelineConfig, ConfigError> {
        let pipeline = self
            .raw
            .pipeline
            .as_ref()
            .ok_or(ConfigError::MissingPipeline)?;
        Ok(PipelineConfig::new(
            self.model(&pipeline.planner)?,
            self.model(&pipeline.executor)?,
            self.model(&pipeline.critic)?,
            regime,
        )?)
    }

    pub fn backend_decl(&self, backend_ref: &str) -> Option<&BackendDecl> {
        self.raw.backends.get(backend_ref)
    }

    pub fn build_agent(&self, model: &ModelId, seed: u64) -> Result<Arc<dyn Agent>, ConfigError> {
        let decl = self.backend_decl(&model.backend_ref).ok_or_else(|| {
            ConfigError::UnknownBackend(model.key.clone(), model.backend_ref.clone())
        })?;
        Ok(build_backend(decl, &self.base_dir, seed)?)
    }

    pub fn pipeline_agents(
        &self,
        config: &PipelineConfig,
        seed: u64,
    ) -> Result<PipelineAgents, ConfigError> {
        Ok(PipelineAgents {
            planner: self.build_agent(&config.planner, seed)?,
            executor: self.build_agent(&config.executor, seed)?,
            critic: self.build_agent(&config.critic, seed)?,
        })
    }

    /// The price sheet: the config's own `[prices]` table when present,
    /// otherwise the built-in default.
    pub fn price_sheet(&self) -> PriceSheet {
        match &self.raw.prices {
            Some(models) => PriceSheet {
                models: models.clone(),
            },
            None => PriceSheet::builtin_default(),
        }
    }
}
