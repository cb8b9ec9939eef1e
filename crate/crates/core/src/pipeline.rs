//! Cohort preparation shared by the harnesses: bin, impute, label and apply
//! inclusion to every episode, then assemble per-cell datasets.

use std::fs::File;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{
    apply_inclusion, attach_annotations, bin_hourly, impute, parse_vitals, Channel, Episode, ExclusionReason, HourlyGrid,
    InclusionVerdict, ParseReport,
};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::features::{build_dataset, select_negatives, split, LabeledDataset, PositiveSource, Task, TaskSpec};
use crate::gold::{label_positive_hours, BandTables, Category, HourLabeling};
use crate::seed;

#[derive(Debug, Clone)]
pub struct PreparedEpisode {
    pub episode: Episode,
    /// Imputed grid; absent when a core vital was never observed.
    pub grid: Option<HourlyGrid>,
    pub labeling: Option<HourLabeling>,
    pub verdict: InclusionVerdict,
}

impl PreparedEpisode {
    pub fn is_included(&self) -> bool {
        self.verdict.is_included()
    }

    pub fn is_septic(&self) -> bool {
        self.labeling.as_ref().is_some_and(|l| !l.sepsis.is_empty())
    }
}

#[derive(Debug, Clone)]
pub struct PreparedCohort {
    pub episodes: Vec<PreparedEpisode>,
    /// Band tables used for labeling, reused for rule scores.
    pub bands: BandTables,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub episodes: usize,
    pub included: usize,
    pub excluded_age: usize,
    pub excluded_unit: usize,
    pub excluded_missing_vital: usize,
    pub excluded_history: usize,
    pub included_septic: usize,
    pub included_severe_sepsis: usize,
    pub included_septic_shock: usize,
    pub included_non_septic: usize,
}

fn prepare_one(episode: Episode, bands: &BandTables) -> Result<PreparedEpisode> {
    let raw = bin_hourly(&episode)?;
    if Channel::CORE.iter().any(|c| !raw.channel_observed(*c)) {
        let verdict = apply_inclusion(&episode, &raw, None);
        return Ok(PreparedEpisode {
            episode,
            grid: None,
            labeling: None,
            verdict,
        });
    }
    let grid = impute(&raw)?;
    let labeling = label_positive_hours(&episode, &grid, bands);
    let verdict = apply_inclusion(&episode, &grid, labeling.first_positive_hour(Category::Sepsis));
    Ok(PreparedEpisode {
        episode,
        grid: Some(grid),
        labeling: Some(labeling),
        verdict,
    })
}

/// Bins, imputes, labels and screens every episode (in parallel; order is
/// preserved).
pub fn prepare_cohort(episodes: Vec<Episode>, bands: &BandTables) -> Result<PreparedCohort> {
    let episodes = episodes
        .into_par_iter()
        .map(|e| prepare_one(e, bands))
        .collect::<Result<Vec<_>>>()?;
    Ok(PreparedCohort {
        episodes,
        bands: bands.clone(),
    })
}

/// Parses the vitals file (and annotations when given) and prepares the
/// cohort. Row-level problems are returned in the reports.
pub fn load_cohort(
    vitals: &Path,
    annotations: Option<&Path>,
    bands: &BandTables,
) -> Result<(PreparedCohort, ParseReport, Option<ParseReport>)> {
    let f = File::open(vitals).map_err(|e| Error::io(vitals, e))?;
    let (mut episodes, vreport) = parse_vitals(f)?;
    let areport = match annotations {
        Some(p) => {
            let f = File::open(p).map_err(|e| Error::io(p, e))?;
            Some(attach_annotations(&mut episodes, f)?)
        }
        None => None,
    };
    Ok((prepare_cohort(episodes, bands)?, vreport, areport))
}

impl PreparedCohort {
    pub fn included(&self) -> impl Iterator<Item = &PreparedEpisode> {
        self.episodes.iter().filter(|e| e.is_included())
    }

    pub fn summary(&self) -> CohortSummary {
        let mut s = CohortSummary {
            episodes: self.episodes.len(),
            ..CohortSummary::default()
        };
        for e in &self.episodes {
            match e.verdict {
                InclusionVerdict::Included => {
                    s.included += 1;
                    let l = e.labeling.as_ref().expect("included episodes are labeled");
                    if l.sepsis.is_empty() {
                        s.included_non_septic += 1;
                    } else {
                        s.included_septic += 1;
                    }
                    s.included_severe_sepsis += usize::from(!l.severe_sepsis.is_empty());
                    s.included_septic_shock += usize::from(!l.septic_shock.is_empty());
                }
                InclusionVerdict::Excluded(ExclusionReason::Age) => s.excluded_age += 1,
                InclusionVerdict::Excluded(ExclusionReason::Unit) => s.excluded_unit += 1,
                InclusionVerdict::Excluded(ExclusionReason::MissingVital(_)) => s.excluded_missing_vital += 1,
                InclusionVerdict::Excluded(ExclusionReason::History) => s.excluded_history += 1,
            }
        }
        s
    }

    /// Included episodes with no sepsis-positive hour.
    pub fn negative_pool(&self) -> Vec<&PreparedEpisode> {
        self.included().filter(|e| !e.is_septic()).collect()
    }

    /// Seeded draw of up to `config.negative_count` negative episodes, shared
    /// by every cell of a run.
    pub fn selected_negatives(&self, config: &RunConfig) -> Vec<&PreparedEpisode> {
        let pool = self.negative_pool();
        select_negatives(pool.len(), config.negative_count, seed::derive(config.seed, "negatives", 0))
            .into_iter()
            .map(|i| pool[i])
            .collect()
    }

    /// Split dataset for one (task, category) cell.
    pub fn dataset(&self, task: Task, category: Category, config: &RunConfig) -> Result<LabeledDataset> {
        let positives: Vec<PositiveSource<'_>> = self
            .included()
            .filter_map(|e| {
                let l = e.labeling.as_ref()?;
                let hours = l.hours(category);
                (!hours.is_empty()).then(|| PositiveSource {
                    grid: e.grid.as_ref().expect("included episodes have grids"),
                    positive_hours: hours,
                })
            })
            .collect();
        let negatives: Vec<&HourlyGrid> = self
            .selected_negatives(config)
            .into_iter()
            .map(|e| e.grid.as_ref().expect("included episodes have grids"))
            .collect();
        let ds = build_dataset(
            &positives,
            &negatives,
            TaskSpec::new(task, category),
            config.negatives_per_episode,
            config.seed,
        )?;
        split(ds, config.seed)
    }

    pub fn find(&self, episode_id: &str) -> Option<&PreparedEpisode> {
        self.episodes.iter().find(|e| e.episode.episode_id == episode_id)
    }
}
