//! Feature vectors and labeled datasets.
//!
//! Each core vital contributes a five-value block `(v_t, v_{t-1}, v_{t-2},
//! v_t - v_{t-1}, v_{t-1} - v_{t-2})` read at the anchor hour `t` and the two
//! hours before it, giving 30 features in vital-major order.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cohort::{Channel, HourlyGrid, CORE_VITAL_COUNT};
use crate::error::{Error, Result};
use crate::gold::Category;
use crate::models::Matrix;
use crate::seed;

pub const BLOCK_LEN: usize = 5;
pub const FEATURE_LEN: usize = CORE_VITAL_COUNT * BLOCK_LEN;
pub const MIN_ANCHOR_HOUR: usize = 2;
pub const MIN_SPLIT_EPISODES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub episode_id: String,
    pub anchor_hour: usize,
    pub values: [f64; FEATURE_LEN],
}

/// Builds the feature vector anchored at `anchor`. Reads only hours
/// `anchor - 2 ..= anchor`.
pub fn build_feature_vector(grid: &HourlyGrid, anchor: usize) -> Result<FeatureVector> {
    if anchor < MIN_ANCHOR_HOUR {
        return Err(Error::InsufficientHistory { anchor });
    }
    if anchor >= grid.hours() {
        return Err(Error::AnchorOutOfRange {
            anchor,
            hours: grid.hours(),
        });
    }
    let mut values = [0.0; FEATURE_LEN];
    for (k, channel) in Channel::CORE.iter().enumerate() {
        let read = |h: usize| {
            grid.get(h, *channel).ok_or_else(|| {
                Error::Domain(format!(
                    "episode {}: {channel} missing at hour {h}; grid not imputed",
                    grid.episode_id
                ))
            })
        };
        let (v0, v1, v2) = (read(anchor)?, read(anchor - 1)?, read(anchor - 2)?);
        values[k * BLOCK_LEN..(k + 1) * BLOCK_LEN].copy_from_slice(&[v0, v1, v2, v0 - v1, v1 - v2]);
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("feature {i} of episode {}", grid.episode_id)));
    }
    Ok(FeatureVector {
        episode_id: grid.episode_id.clone(),
        anchor_hour: anchor,
        values,
    })
}

/// Column indices of the blocks of `vitals`, in canonical vital order
/// regardless of the order given.
pub fn block_columns(vitals: &[Channel]) -> Result<Vec<usize>> {
    let mut positions = BTreeSet::new();
    for v in vitals {
        let k = Channel::CORE
            .iter()
            .position(|c| c == v)
            .ok_or_else(|| Error::Config(format!("{v} is not a core vital")))?;
        positions.insert(k);
    }
    Ok(positions
        .into_iter()
        .flat_map(|k| k * BLOCK_LEN..(k + 1) * BLOCK_LEN)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Detection,
    Prediction,
}

impl Task {
    pub const ALL: [Task; 2] = [Task::Detection, Task::Prediction];

    pub fn name(self) -> &'static str {
        match self {
            Task::Detection => "detection",
            Task::Prediction => "prediction",
        }
    }

    pub fn lookahead_hours(self) -> usize {
        match self {
            Task::Detection => 0,
            Task::Prediction => 4,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "detection" => Ok(Task::Detection),
            "prediction" => Ok(Task::Prediction),
            other => Err(Error::Config(format!("unknown task '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub lookahead_hours: usize,
    pub category: Category,
}

impl TaskSpec {
    pub fn new(task: Task, category: Category) -> Self {
        Self {
            lookahead_hours: task.lookahead_hours(),
            category,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub features: FeatureVector,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub spec: TaskSpec,
    pub rows: Vec<Row>,
    /// Per-row split; empty until [`split`] runs.
    pub splits: Vec<Split>,
    pub seed: u64,
    pub skipped_positive_anchors: usize,
    pub skipped_negative_episodes: usize,
}

/// One positive-candidate episode: its imputed grid and positive hours for
/// the dataset's category.
#[derive(Debug, Clone, Copy)]
pub struct PositiveSource<'a> {
    pub grid: &'a HourlyGrid,
    pub positive_hours: &'a BTreeSet<usize>,
}

/// Assembles positive rows at `h - lookahead` for every positive hour `h`
/// (anchors below hour 2 are skipped and counted) and `negatives_per_episode`
/// distinct random anchors per negative episode among hours `>= 2`.
pub fn build_dataset(
    positives: &[PositiveSource<'_>],
    negatives: &[&HourlyGrid],
    spec: TaskSpec,
    negatives_per_episode: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    let mut rows = Vec::new();
    let mut skipped_positive_anchors = 0;
    for src in positives {
        let mut anchors = BTreeSet::new();
        for &h in src.positive_hours {
            match h.checked_sub(spec.lookahead_hours) {
                Some(a) if a >= MIN_ANCHOR_HOUR && a < src.grid.hours() => {
                    anchors.insert(a);
                }
                _ => skipped_positive_anchors += 1,
            }
        }
        for a in anchors {
            rows.push(Row {
                features: build_feature_vector(src.grid, a)?,
                label: 1,
            });
        }
    }
    if skipped_positive_anchors > 0 {
        log::info!(
            "{} positive anchors skipped (anchor below hour {MIN_ANCHOR_HOUR})",
            skipped_positive_anchors
        );
    }
    let positive_rows = rows.len();

    let mut skipped_negative_episodes = 0;
    for grid in negatives {
        let hours = grid.hours();
        if hours <= MIN_ANCHOR_HOUR {
            skipped_negative_episodes += 1;
            continue;
        }
        let candidates = hours - MIN_ANCHOR_HOUR;
        let take = negatives_per_episode.min(candidates);
        let mut rng = seed::rng(seed::derive(seed, &format!("negative-anchor:{}", grid.episode_id), 0));
        let mut picks: Vec<usize> = if take == 1 {
            vec![rng.gen_range(0..candidates)]
        } else {
            index::sample(&mut rng, candidates, take).into_vec()
        };
        picks.sort_unstable();
        for p in picks {
            rows.push(Row {
                features: build_feature_vector(grid, p + MIN_ANCHOR_HOUR)?,
                label: 0,
            });
        }
    }

    let negative_rows = rows.len() - positive_rows;
    if positive_rows == 0 || negative_rows == 0 {
        return Err(Error::DegenerateDataset(format!(
            "{positive_rows} positive and {negative_rows} negative rows"
        )));
    }
    Ok(LabeledDataset {
        spec,
        rows,
        splits: Vec::new(),
        seed,
        skipped_positive_anchors,
        skipped_negative_episodes,
    })
}

/// Episode-level 70:10:20 split. Episodes are shuffled with the seed and the
/// first `floor(0.7 E)` go to train, the next `floor(0.1 E)` to validation
/// and the remainder to test.
pub fn split(mut dataset: LabeledDataset, seed: u64) -> Result<LabeledDataset> {
    let mut episodes: Vec<&str> = dataset
        .rows
        .iter()
        .map(|r| r.features.episode_id.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let n = episodes.len();
    if n < MIN_SPLIT_EPISODES {
        return Err(Error::TooFewEpisodes {
            found: n,
            required: MIN_SPLIT_EPISODES,
        });
    }
    let mut rng = seed::rng(seed::derive(seed, "split", 0));
    rand::seq::SliceRandom::shuffle(episodes.as_mut_slice(), &mut rng);
    let n_train = n * 7 / 10;
    let n_val = n / 10;
    let assignment: HashMap<String, Split> = episodes
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let s = if i < n_train {
                Split::Train
            } else if i < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
            (id.to_string(), s)
        })
        .collect();
    dataset.splits = dataset
        .rows
        .iter()
        .map(|r| assignment[&r.features.episode_id])
        .collect();
    dataset.seed = seed;
    Ok(dataset)
}

/// Uniform sample without replacement of `min(count, pool.len())` indices
/// into `pool`, returned in ascending order.
pub fn select_negatives(pool_len: usize, count: usize, seed: u64) -> Vec<usize> {
    let take = count.min(pool_len);
    if take == pool_len {
        return (0..pool_len).collect();
    }
    let mut rng = seed::rng(seed::derive(seed, "select-negatives", 0));
    let mut picks = index::sample(&mut rng, pool_len, take).into_vec();
    picks.sort_unstable();
    picks
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.rows.iter().filter(|r| r.label == 1).count()
    }

    pub fn is_split(&self) -> bool {
        self.splits.len() == self.rows.len()
    }

    pub fn indices(&self, which: Split) -> Vec<usize> {
        self.splits
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == which)
            .map(|(i, _)| i)
            .collect()
    }

    /// Feature matrix and labels for one split, restricted to `columns`
    /// when given.
    pub fn matrix(&self, which: Split, columns: Option<&[usize]>) -> Result<(Matrix, Vec<u8>)> {
        if !self.is_split() {
            return Err(Error::State("dataset has no split assignment".into()));
        }
        let idx = self.indices(which);
        let all: Vec<usize> = (0..FEATURE_LEN).collect();
        let cols = columns.unwrap_or(&all);
        let mut data = Vec::with_capacity(idx.len() * cols.len());
        let mut labels = Vec::with_capacity(idx.len());
        for &i in &idx {
            let v = &self.rows[i].features.values;
            data.extend(cols.iter().map(|&c| v[c]));
            labels.push(self.rows[i].label);
        }
        Ok((Matrix::new(data, cols.len())?, labels))
    }

    /// Writes the dataset as comma-delimited text: `f00..f29`, then
    /// `episode_id, anchor_hour, label, split`. `preamble` lines are written
    /// first as `#` comments.
    pub fn write_csv<W: Write>(&self, out: W, preamble: &[String]) -> Result<()> {
        let mut out = std::io::BufWriter::new(out);
        for line in preamble {
            writeln!(out, "# {line}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (0..FEATURE_LEN).map(|i| format!("f{i:02}")).collect();
        header.extend(["episode_id", "anchor_hour", "label", "split"].map(String::from));
        w.write_record(&header)?;
        for (i, row) in self.rows.iter().enumerate() {
            let mut rec: Vec<String> = row.features.values.iter().map(|v| v.to_string()).collect();
            rec.push(row.features.episode_id.clone());
            rec.push(row.features.anchor_hour.to_string());
            rec.push(row.label.to_string());
            rec.push(self.splits.get(i).map_or("", |s| s.name()).to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}
