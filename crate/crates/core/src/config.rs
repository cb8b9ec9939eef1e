//! Run configuration (TOML) shared by the experiment harnesses and the CLI.
//!
//! ```toml
//! seed = 42
//! negative_count = 1000
//! tasks = ["detection", "prediction"]
//!
//! [models.forest]
//! n_trees = 200
//!
//! [[cells]]
//! task = "prediction"
//! category = "septic_shock"
//! [cells.models.boosted]
//! n_rounds = 300
//! ```
//!
//! `[[cells]]` entries override model hyperparameters for one
//! (task, category) pair; unspecified keys keep the run-wide values.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cohort::Channel;
use crate::ensemble::StackingConfig;
use crate::error::{Error, Result};
use crate::eval::BENCHMARK_MODELS;
use crate::features::Task;
use crate::gold::Category;
use crate::models::ModelParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vitals: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub annotations: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bands: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellOverride {
    pub task: Task,
    pub category: Category,
    #[serde(default)]
    pub models: toml::Table,
}

/// Settings for the single-vital ranking and prefix ablation tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureStudyConfig {
    /// One of the benchmark model names (`logistic`, ..., `stacked`).
    pub model: String,
    pub category: Category,
    /// Ablation order; canonical vital order when empty.
    pub order: Vec<Channel>,
}

impl Default for FeatureStudyConfig {
    fn default() -> Self {
        Self {
            model: "boosted".into(),
            category: Category::Sepsis,
            order: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Negative (non-septic) episodes drawn from the included pool.
    pub negative_count: usize,
    pub negatives_per_episode: usize,
    pub bootstrap_resamples: usize,
    pub confidence_level: f64,
    pub tasks: Vec<Task>,
    pub categories: Vec<Category>,
    pub paths: PathsConfig,
    pub models: ModelParams,
    pub stacking: StackingConfig,
    pub features: FeatureStudyConfig,
    pub cells: Vec<CellOverride>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            negative_count: 1000,
            negatives_per_episode: 1,
            bootstrap_resamples: 1000,
            confidence_level: 0.95,
            tasks: vec![Task::Detection, Task::Prediction],
            categories: vec![Category::Sepsis, Category::SevereSepsis, Category::SepticShock],
            paths: PathsConfig::default(),
            models: ModelParams::default(),
            stacking: StackingConfig::default(),
            features: FeatureStudyConfig::default(),
            cells: Vec::new(),
        }
    }
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn merge(base: &mut toml::Table, over: &toml::Table) {
    for (k, v) in over {
        match (base.get_mut(k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.models.validate()?;
        self.stacking.validate()?;
        if self.negatives_per_episode == 0 {
            return Err(Error::Config("negatives_per_episode must be positive".into()));
        }
        if !(self.confidence_level > 0.0 && self.confidence_level < 1.0) {
            return Err(Error::Config("confidence_level must be in (0, 1)".into()));
        }
        if self.tasks.is_empty() || self.categories.is_empty() {
            return Err(Error::Config("tasks and categories must be non-empty".into()));
        }
        if !BENCHMARK_MODELS.contains(&self.features.model.as_str()) {
            return Err(Error::Config(format!(
                "features.model '{}' is not one of {}",
                self.features.model,
                BENCHMARK_MODELS.join(", ")
            )));
        }
        let order = &self.features.order;
        if !order.is_empty() {
            let mut sorted = order.clone();
            sorted.sort();
            let mut core = Channel::CORE.to_vec();
            core.sort();
            if sorted != core {
                return Err(Error::Config("features.order must be a permutation of the six core vitals".into()));
            }
        }
        for cell in &self.cells {
            self.params_for(cell.task, cell.category)?;
        }
        Ok(())
    }

    /// Model hyperparameters for one cell with its overrides applied.
    pub fn params_for(&self, task: Task, category: Category) -> Result<ModelParams> {
        let overrides: Vec<&CellOverride> = self
            .cells
            .iter()
            .filter(|c| c.task == task && c.category == category)
            .collect();
        if overrides.is_empty() {
            return Ok(self.models.clone());
        }
        let mut table = toml::Table::try_from(&self.models).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            merge(&mut table, &o.models);
        }
        let params: ModelParams = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("cell {task}/{category}: {e}")))?;
        params.validate()?;
        Ok(params)
    }

    /// Ablation order, defaulting to the canonical vital order.
    pub fn ablation_order(&self) -> Vec<Channel> {
        if self.features.order.is_empty() {
            Channel::CORE.to_vec()
        } else {
            self.features.order.clone()
        }
    }

    /// SHA-256 (hex) of the canonical JSON form of this configuration.
    pub fn digest(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("configuration serializes").as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.digest(), cfg.digest());
    }

    #[test]
    fn cell_override_merges() {
        let cfg = RunConfig::from_toml(
            "[models.forest]\nn_trees = 20\n\n[[cells]]\ntask = \"prediction\"\ncategory = \"septic_shock\"\n[cells.models.forest]\nmax_depth = 6\n",
        )
        .unwrap();
        let p = cfg.params_for(Task::Prediction, Category::SepticShock).unwrap();
        assert_eq!(p.forest.n_trees, 20);
        assert_eq!(p.forest.max_depth, Some(6));
        let d = cfg.params_for(Task::Detection, Category::SepticShock).unwrap();
        assert_eq!(d.forest.max_depth, None);
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(RunConfig::from_toml("sed = 3\n").is_err());
        assert!(RunConfig::from_toml("[[cells]]\ntask = \"detection\"\ncategory = \"sepsis\"\n[cells.models.forest]\nn_trees = 0\n").is_err());
        assert!(RunConfig::from_toml("[features]\nmodel = \"svm\"\n").is_err());
        assert!(RunConfig::from_toml("[features]\norder = [\"hr\", \"hr\", \"rr\", \"sbp\", \"dbp\", \"temp\"]\n").is_err());
    }

    #[test]
    fn digest_tracks_content() {
        let a = RunConfig::default();
        let b = RunConfig { seed: 7, ..RunConfig::default() };
        assert_ne!(a.digest(), b.digest());
    }
}
