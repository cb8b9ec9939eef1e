//! Benchmark driver: every (task, category) cell gets its own dataset, four
//! base models, three combiners and three rule-score comparators, all scored
//! by test-split AUC.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{auc, bootstrap_auc, roc_curve, BootstrapCi, RocPoint};
use crate::cohort::HourlyGrid;
use crate::config::RunConfig;
use crate::ensemble::{average_proba, base_seed, fit_stacked_with_bases, fit_weights, GroupedRows, StackingConfig};
use crate::error::{Error, Result};
use crate::features::{LabeledDataset, Split, Task};
use crate::gold::{BandTables, Category, RuleScore};
use crate::models::{fit_model, Labeled, Model, ModelKind, ModelParams, ProbabilisticModel};
use crate::pipeline::{CohortSummary, PreparedCohort};
use crate::seed;

pub const REPORT_FORMAT: &str = "sepsis-report";
pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Learned scorers in report column order.
pub const BENCHMARK_MODELS: [&str; 7] = ["logistic", "forest", "boosted", "mlp", "average", "weighted", "stacked"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci: Option<BootstrapCi>,
    /// Why the AUC is missing.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl ModelScore {
    fn from_result(name: &str, r: Result<(f64, Option<BootstrapCi>)>) -> Self {
        match r {
            Ok((a, ci)) => Self {
                name: name.into(),
                auc: Some(a),
                ci,
                reason: None,
            },
            Err(e) => Self {
                name: name.into(),
                auc: None,
                ci: None,
                reason: Some(format!("{}: {e}", e.kind())),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSizes {
    pub rows: usize,
    pub positives: usize,
    pub episodes: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub test_positives: usize,
    pub skipped_positive_anchors: usize,
}

impl DatasetSizes {
    pub fn of(ds: &LabeledDataset) -> Self {
        let test = ds.indices(Split::Test);
        let mut episodes: Vec<&str> = ds.rows.iter().map(|r| r.features.episode_id.as_str()).collect();
        episodes.sort_unstable();
        episodes.dedup();
        Self {
            rows: ds.len(),
            positives: ds.positives(),
            episodes: episodes.len(),
            train: ds.indices(Split::Train).len(),
            val: ds.indices(Split::Val).len(),
            test: test.len(),
            test_positives: test.iter().filter(|&&i| ds.rows[i].label == 1).count(),
            skipped_positive_anchors: ds.skipped_positive_anchors,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellOutcome {
    Ok {
        seed: u64,
        sizes: DatasetSizes,
        models: Vec<ModelScore>,
        rules: Vec<ModelScore>,
        #[serde(skip_serializing_if = "Option::is_none")]
        weights: Option<[f64; 3]>,
    },
    #[serde(rename = "n/a")]
    NotAvailable { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub task: Task,
    pub category: Category,
    #[serde(flatten)]
    pub outcome: CellOutcome,
    /// Test-split ROC points per scorer; written to separate files.
    #[serde(skip)]
    pub roc: BTreeMap<String, Vec<RocPoint>>,
}

impl CellReport {
    pub fn model_auc(&self, name: &str) -> Option<f64> {
        match &self.outcome {
            CellOutcome::Ok { models, rules, .. } => {
                models.iter().chain(rules).find(|m| m.name == name).and_then(|m| m.auc)
            }
            CellOutcome::NotAvailable { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub format: String,
    pub version: u32,
    pub config_digest: String,
    pub seed: u64,
    pub config: RunConfig,
    pub cohort: CohortSummary,
    pub cells: Vec<CellReport>,
}

impl ExperimentReport {
    pub fn cell(&self, task: Task, category: Category) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.task == task && c.category == category)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    /// Fixed-width AUC table, one row per cell.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "config digest {}  seed {}", self.config_digest, self.seed);
        let rules: Vec<&str> = RuleScore::ALL.iter().map(|r| r.name()).collect();
        let _ = write!(out, "{:<11} {:<14}", "task", "category");
        for name in BENCHMARK_MODELS.iter().chain(&rules) {
            let _ = write!(out, " {name:>8}");
        }
        out.push('\n');
        for c in &self.cells {
            let _ = write!(out, "{:<11} {:<14}", c.task.name(), c.category.name());
            match &c.outcome {
                CellOutcome::Ok { .. } => {
                    for name in BENCHMARK_MODELS.iter().chain(&rules) {
                        match c.model_auc(name) {
                            Some(a) => {
                                let _ = write!(out, " {a:>8.4}");
                            }
                            None => {
                                let _ = write!(out, " {:>8}", "n/a");
                            }
                        }
                    }
                }
                CellOutcome::NotAvailable { reason } => {
                    let _ = write!(out, " n/a ({reason})");
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Rule-score AUCs with the integer score at each row's anchor hour as the
/// ranking statistic.
pub fn rule_score_aucs(rows: &[(&HourlyGrid, usize, u8)], bands: &BandTables) -> Vec<(RuleScore, Result<f64>)> {
    let labels: Vec<u8> = rows.iter().map(|r| r.2).collect();
    RuleScore::ALL
        .iter()
        .map(|&rule| {
            let scores: Vec<f64> = rows
                .iter()
                .map(|(g, h, _)| f64::from(rule.score(g.hour(*h), bands)))
                .collect();
            (rule, auc(&scores, &labels))
        })
        .collect()
}

/// Seed for one benchmark cell.
pub fn cell_seed(master: u64, task: Task, category: Category) -> u64 {
    seed::derive(master, &format!("cell:{}:{}", task.name(), category.name()), 0)
}

pub(crate) struct ScoredModels {
    pub scores: Vec<ModelScore>,
    pub roc: BTreeMap<String, Vec<RocPoint>>,
    pub weights: Option<[f64; 3]>,
}

fn with_ci(scores: &[f64], labels: &[u8], config: &RunConfig, seed: u64, name: &str) -> Result<(f64, Option<BootstrapCi>)> {
    let a = auc(scores, labels)?;
    let ci = if config.bootstrap_resamples > 0 {
        Some(bootstrap_auc(
            scores,
            labels,
            config.bootstrap_resamples,
            config.confidence_level,
            seed::derive(seed, &format!("bootstrap:{name}"), 0),
        )?)
    } else {
        None
    };
    Ok((a, ci))
}

/// Fits what `wanted` needs on the train split of `ds` (restricted to
/// `columns`) and scores each requested model on the test split.
pub(crate) fn fit_and_score(
    ds: &LabeledDataset,
    columns: Option<&[usize]>,
    params: &ModelParams,
    stacking: &StackingConfig,
    config: &RunConfig,
    seed: u64,
    wanted: &[&str],
) -> Result<ScoredModels> {
    let (tx, ty) = ds.matrix(Split::Train, columns)?;
    let (vx, vy) = ds.matrix(Split::Val, columns)?;
    let (sx, sy) = ds.matrix(Split::Test, columns)?;
    let val = (!vy.is_empty()).then(|| Labeled::new(&vx, &vy));
    let train = Labeled::new(&tx, &ty);

    let needs_trio = wanted
        .iter()
        .any(|w| ["forest", "boosted", "mlp", "average", "weighted", "stacked"].contains(w));
    let kinds: Vec<ModelKind> = ModelKind::ALL
        .into_iter()
        .filter(|k| wanted.contains(&k.name()) || (needs_trio && *k != ModelKind::Logistic))
        .collect();
    let fitted: Vec<(ModelKind, Result<Model>)> = kinds
        .par_iter()
        .map(|&k| (k, fit_model(k, params, train, val, base_seed(seed, k))))
        .collect();
    let fitted: BTreeMap<ModelKind, Result<Model>> = fitted.into_iter().collect();

    let mut test_probs: BTreeMap<&str, Result<Vec<f64>>> = BTreeMap::new();
    for (k, m) in &fitted {
        let probs = match m {
            Ok(m) => Ok(m.predict_matrix(&sx)),
            Err(e) => Err(Error::Training(format!("{}: {e}", e.kind()))),
        };
        test_probs.insert(k.name(), probs);
    }

    let trio: Option<Vec<&Model>> = [ModelKind::Forest, ModelKind::Boosted, ModelKind::Mlp]
        .iter()
        .map(|k| fitted.get(k).and_then(|r| r.as_ref().ok()))
        .collect();
    let mut weights = None;
    if let Some(trio) = &trio {
        let base_test: Vec<Vec<f64>> = trio.iter().map(|m| m.predict_matrix(&sx)).collect();
        if wanted.contains(&"average") {
            let avg = (0..sy.len())
                .map(|r| average_proba(&[base_test[0][r], base_test[1][r], base_test[2][r]]))
                .collect::<Result<Vec<f64>>>();
            test_probs.insert("average", avg);
        }
        if wanted.contains(&"weighted") {
            let r = val
                .ok_or_else(|| Error::DegenerateDataset("empty validation split".into()))
                .and_then(|v| {
                    let vp: Vec<Vec<f64>> = trio.iter().map(|m| m.predict_matrix(v.x)).collect();
                    fit_weights([&vp[0], &vp[1], &vp[2]], v.y)
                })
                .and_then(|w| {
                    weights = Some(w.weights);
                    (0..sy.len())
                        .map(|r| w.combine([base_test[0][r], base_test[1][r], base_test[2][r]]))
                        .collect()
                });
            test_probs.insert("weighted", r);
        }
        if wanted.contains(&"stacked") {
            let groups: Vec<String> = ds
                .indices(Split::Train)
                .into_iter()
                .map(|i| ds.rows[i].features.episode_id.clone())
                .collect();
            let r = fit_stacked_with_bases(
                trio.iter().map(|m| (*m).clone()).collect(),
                GroupedRows {
                    rows: train,
                    groups: &groups,
                },
                val,
                params,
                stacking,
                seed,
            )
            .map(|ens| ens.predict_matrix(&sx));
            test_probs.insert("stacked", r);
        }
    } else {
        for name in ["average", "weighted", "stacked"] {
            if wanted.contains(&name) {
                test_probs.insert(name, Err(Error::State("a base model failed to fit".into())));
            }
        }
    }

    let mut scores = Vec::new();
    let mut roc = BTreeMap::new();
    for name in BENCHMARK_MODELS.iter().filter(|n| wanted.contains(n)) {
        let r = match test_probs.remove(name).expect("every wanted model has an entry") {
            Ok(p) => {
                if let Ok(points) = roc_curve(&p, &sy) {
                    roc.insert(name.to_string(), points);
                }
                with_ci(&p, &sy, config, seed, name)
            }
            Err(e) => Err(e),
        };
        scores.push(ModelScore::from_result(name, r));
    }
    Ok(ScoredModels { scores, roc, weights })
}

pub(crate) fn grid_index(cohort: &PreparedCohort) -> HashMap<&str, &HourlyGrid> {
    cohort
        .included()
        .filter_map(|e| e.grid.as_ref().map(|g| (e.episode.episode_id.as_str(), g)))
        .collect()
}

fn run_cell(
    cohort: &PreparedCohort,
    grids: &HashMap<&str, &HourlyGrid>,
    task: Task,
    category: Category,
    config: &RunConfig,
) -> Result<(CellOutcome, BTreeMap<String, Vec<RocPoint>>)> {
    let seed = cell_seed(config.seed, task, category);
    let params = config.params_for(task, category)?;
    let ds = cohort.dataset(task, category, config)?;
    let scored = fit_and_score(&ds, None, &params, &config.stacking, config, seed, &BENCHMARK_MODELS)?;

    let test: Vec<(&HourlyGrid, usize, u8)> = ds
        .indices(Split::Test)
        .into_iter()
        .map(|i| {
            let r = &ds.rows[i];
            (grids[r.features.episode_id.as_str()], r.features.anchor_hour, r.label)
        })
        .collect();
    let labels: Vec<u8> = test.iter().map(|t| t.2).collect();
    let rules = RuleScore::ALL
        .iter()
        .map(|&rule| {
            let s: Vec<f64> = test
                .iter()
                .map(|(g, h, _)| f64::from(rule.score(g.hour(*h), &cohort.bands)))
                .collect();
            ModelScore::from_result(rule.name(), with_ci(&s, &labels, config, seed, rule.name()))
        })
        .collect();
    let outcome = CellOutcome::Ok {
        seed,
        sizes: DatasetSizes::of(&ds),
        models: scored.scores,
        rules,
        weights: scored.weights,
    };
    Ok((outcome, scored.roc))
}

/// Runs every configured (task, category) cell. Cells are independent and
/// seeded individually, so the report does not depend on scheduling. A
/// cell that cannot be evaluated is reported as n/a with the reason.
pub fn run_benchmark(cohort: &PreparedCohort, config: &RunConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let grids = grid_index(cohort);
    let cells: Vec<(Task, Category)> = config
        .tasks
        .iter()
        .flat_map(|&t| config.categories.iter().map(move |&c| (t, c)))
        .collect();
    let cells: Vec<CellReport> = cells
        .into_par_iter()
        .map(|(task, category)| {
            let (outcome, roc) = match run_cell(cohort, &grids, task, category, config) {
                Ok(r) => r,
                Err(e @ Error::Config(_)) => return Err(e),
                Err(e) => {
                    log::warn!("{task}/{category}: {e}");
                    (
                        CellOutcome::NotAvailable {
                            reason: format!("{}: {e}", e.kind()),
                        },
                        BTreeMap::new(),
                    )
                }
            };
            Ok(CellReport {
                task,
                category,
                outcome,
                roc,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ExperimentReport {
        format: REPORT_FORMAT.into(),
        version: REPORT_FORMAT_VERSION,
        config_digest: config.digest(),
        seed: config.seed,
        config: config.clone(),
        cohort: cohort.summary(),
        cells,
    })
}
