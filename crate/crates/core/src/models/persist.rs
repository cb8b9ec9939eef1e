//! Self-describing JSON model files.
//!
//! Floats are written in shortest round-trip form and parsed with exact
//! round-tripping, so a reloaded model reproduces predictions bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelKind};
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "sepsis-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub kind: ModelKind,
    pub seed: u64,
    pub hyperparameters: serde_json::Value,
    /// Digest of the run configuration that produced the model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_digest: Option<String>,
    pub model: Model,
}

impl ModelFile {
    pub fn new(model: Model, seed: u64, hyperparameters: serde_json::Value) -> Self {
        Self {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_FORMAT_VERSION,
            kind: model.kind(),
            seed,
            hyperparameters,
            config_digest: None,
            model,
        }
    }

    pub fn with_config_digest(mut self, digest: impl Into<String>) -> Self {
        self.config_digest = Some(digest.into());
        self
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if file.format != MODEL_FORMAT {
            return Err(Error::Format(format!("unexpected format tag '{}'", file.format)));
        }
        if file.version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported model format version {} (expected {MODEL_FORMAT_VERSION})",
                file.version
            )));
        }
        if file.kind != file.model.kind() {
            return Err(Error::Format(format!(
                "header says {} but parameters are for {}",
                file.kind,
                file.model.kind()
            )));
        }
        Ok(file)
    }
}

pub fn save_model(path: &Path, file: &ModelFile) -> Result<()> {
    fs::write(path, file.to_json()?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ModelFile::from_json(&text)
}
