//! Single-vital ranking and prefix ablation over the six feature blocks.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::benchmark::{cell_seed, fit_and_score};
use crate::cohort::Channel;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::features::{block_columns, LabeledDataset, Task};
use crate::gold::Category;
use crate::pipeline::PreparedCohort;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub task: Task,
    /// Position of the vital in the canonical order, 1 to 6.
    pub number: usize,
    pub vital: Channel,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
    /// 1 for the highest AUC within the task.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub task: Task,
    pub k: usize,
    pub vitals: Vec<Channel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable<R> {
    pub model: String,
    pub category: Category,
    pub seed: u64,
    pub config_digest: String,
    pub rows: Vec<R>,
}

impl<R: Serialize> FeatureTable<R> {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }
}

impl FeatureTable<RankRow> {
    pub fn to_text(&self) -> String {
        let mut out = format!("feature ranking ({}, {})\n", self.model, self.category);
        let _ = writeln!(out, "{:<11} {:>2} {:<6} {:>8} {:>4}", "task", "#", "vital", "auc", "rank");
        for r in &self.rows {
            let a = r.auc.map_or("n/a".into(), |a| format!("{a:.4}"));
            let k = r.rank.map_or("-".into(), |k| k.to_string());
            let _ = writeln!(out, "{:<11} {:>2} {:<6} {a:>8} {k:>4}", r.task.name(), r.number, r.vital.name());
        }
        out
    }
}

impl FeatureTable<AblationRow> {
    pub fn to_text(&self) -> String {
        let mut out = format!("feature ablation ({}, {})\n", self.model, self.category);
        let _ = writeln!(out, "{:<11} {:>2} {:>8}  vitals", "task", "k", "auc");
        for r in &self.rows {
            let a = r.auc.map_or("n/a".into(), |a| format!("{a:.4}"));
            let names: Vec<&str> = r.vitals.iter().map(|c| c.name()).collect();
            let _ = writeln!(out, "{:<11} {:>2} {a:>8}  {}", r.task.name(), r.k, names.join(","));
        }
        out
    }
}

fn score_columns(ds: &LabeledDataset, vitals: &[Channel], task: Task, config: &RunConfig) -> Result<f64> {
    let category = config.features.category;
    let params = config.params_for(task, category)?;
    let cols = block_columns(vitals)?;
    let model = config.features.model.as_str();
    let quiet = RunConfig {
        bootstrap_resamples: 0,
        ..config.clone()
    };
    let scored = fit_and_score(
        ds,
        Some(&cols),
        &params,
        &config.stacking,
        &quiet,
        cell_seed(config.seed, task, category),
        &[model],
    )?;
    let s = &scored.scores[0];
    s.auc.ok_or_else(|| Error::Training(s.reason.clone().unwrap_or_default()))
}

fn reason(e: &Error) -> String {
    format!("{}: {e}", e.kind())
}

/// Test AUC of the configured model trained on one vital's block at a time,
/// listed in canonical vital order with the rank by AUC alongside.
pub fn rank_features(cohort: &PreparedCohort, config: &RunConfig) -> Result<FeatureTable<RankRow>> {
    config.validate()?;
    let mut rows = Vec::new();
    for &task in &config.tasks {
        let ds = cohort.dataset(task, config.features.category, config);
        let mut task_rows: Vec<RankRow> = Channel::CORE
            .iter()
            .enumerate()
            .map(|(i, &vital)| {
                let r = ds.as_ref().map_err(|e| Error::DegenerateDataset(reason(e))).and_then(|ds| {
                    score_columns(ds, &[vital], task, config)
                });
                RankRow {
                    task,
                    number: i + 1,
                    vital,
                    auc: r.as_ref().ok().copied(),
                    rank: None,
                    reason: r.err().map(|e| reason(&e)),
                }
            })
            .collect();
        let mut order: Vec<usize> = (0..task_rows.len()).filter(|&i| task_rows[i].auc.is_some()).collect();
        order.sort_by(|&a, &b| task_rows[b].auc.unwrap().total_cmp(&task_rows[a].auc.unwrap()).then(a.cmp(&b)));
        for (pos, i) in order.into_iter().enumerate() {
            task_rows[i].rank = Some(pos + 1);
        }
        rows.extend(task_rows);
    }
    Ok(FeatureTable {
        model: config.features.model.clone(),
        category: config.features.category,
        seed: config.seed,
        config_digest: config.digest(),
        rows,
    })
}

/// Test AUC for each prefix of `order` (k = 1..6 vitals).
pub fn ablate_features(cohort: &PreparedCohort, order: &[Channel], config: &RunConfig) -> Result<FeatureTable<AblationRow>> {
    config.validate()?;
    let mut sorted = order.to_vec();
    sorted.sort();
    let mut core = Channel::CORE.to_vec();
    core.sort();
    if sorted != core {
        return Err(Error::Config("ablation order must be a permutation of the six core vitals".into()));
    }
    let mut rows = Vec::new();
    for &task in &config.tasks {
        let ds = cohort.dataset(task, config.features.category, config);
        for k in 1..=order.len() {
            let vitals = order[..k].to_vec();
            let r = ds
                .as_ref()
                .map_err(|e| Error::DegenerateDataset(reason(e)))
                .and_then(|ds| score_columns(ds, &vitals, task, config));
            rows.push(AblationRow {
                task,
                k,
                vitals,
                auc: r.as_ref().ok().copied(),
                reason: r.err().map(|e| reason(&e)),
            });
        }
    }
    Ok(FeatureTable {
        model: config.features.model.clone(),
        category: config.features.category,
        seed: config.seed,
        config_digest: config.digest(),
        rows,
    })
}
