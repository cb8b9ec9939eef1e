//! Random forest of Gini CART trees.
//!
//! Each tree is grown on a bootstrap sample with a fresh random feature
//! subset drawn at every node. Candidate features are scanned in ascending
//! index order and thresholds in ascending value order; only a strictly
//! better impurity decrease replaces the incumbent split, so ties resolve to
//! the lowest feature index, then the lowest threshold. Impure nodes split
//! even at zero gain (XOR-style interactions need it).

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{midpoint, Node, Tree};
use super::{canonical_order, check_training, Labeled, Matrix, ProbabilisticModel};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestParams {
    pub n_trees: i64,
    /// Unlimited when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_depth: Option<i64>,
    /// Features tried per node; `ceil(sqrt(d))` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_features: Option<i64>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            max_features: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees <= 0 {
            return Err(Error::Config(format!("forest.n_trees must be positive, got {}", self.n_trees)));
        }
        if let Some(d) = self.max_depth {
            if d <= 0 {
                return Err(Error::Config(format!("forest.max_depth must be positive, got {d}")));
            }
        }
        if let Some(f) = self.max_features {
            if f <= 0 {
                return Err(Error::Config(format!("forest.max_features must be positive, got {f}")));
            }
        }
        if self.min_samples_leaf == 0 || self.min_samples_split < 2 {
            return Err(Error::Config(
                "forest.min_samples_leaf must be >= 1 and min_samples_split >= 2".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub n_features: usize,
    pub trees: Vec<Tree>,
}

impl ProbabilisticModel for ForestModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_proba(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        (sum / self.trees.len() as f64).clamp(0.0, 1.0)
    }
}

fn gini(pos: f64, n: f64) -> f64 {
    if n == 0.0 {
        return 0.0;
    }
    let p = pos / n;
    2.0 * p * (1.0 - p)
}

struct Grower<'a> {
    x: &'a Matrix,
    y: &'a [u8],
    max_depth: Option<usize>,
    max_features: usize,
    min_samples_split: usize,
    min_samples_leaf: usize,
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Grower<'_> {
    fn grow<R: Rng>(&self, sample: Vec<usize>, rng: &mut R) -> Tree {
        let mut nodes = Vec::new();
        self.build(sample, 0, rng, &mut nodes);
        Tree { nodes }
    }

    fn build<R: Rng>(&self, sample: Vec<usize>, depth: usize, rng: &mut R, nodes: &mut Vec<Node>) -> usize {
        let id = nodes.len();
        let n = sample.len();
        let pos = sample.iter().filter(|&&i| self.y[i] == 1).count();
        nodes.push(Node::Leaf {
            value: pos as f64 / n as f64,
        });

        let pure = pos == 0 || pos == n;
        let depth_reached = self.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_reached || n < self.min_samples_split {
            return id;
        }

        let d = self.x.cols();
        let mut features = if self.max_features >= d {
            (0..d).collect::<Vec<_>>()
        } else {
            index::sample(rng, d, self.max_features).into_vec()
        };
        features.sort_unstable();

        let Some(best) = self.best_split(&sample, pos, &features) else {
            return id;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = sample
            .into_iter()
            .partition(|&i| self.x.get(i, best.feature) <= best.threshold);
        let l = self.build(left, depth + 1, rng, nodes);
        let r = self.build(right, depth + 1, rng, nodes);
        nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: l,
            right: r,
        };
        id
    }

    fn best_split(&self, sample: &[usize], pos: usize, features: &[usize]) -> Option<SplitChoice> {
        let n = sample.len() as f64;
        let parent = gini(pos as f64, n);
        let mut best: Option<SplitChoice> = None;
        let mut pairs: Vec<(f64, u8)> = Vec::with_capacity(sample.len());
        for &f in features {
            pairs.clear();
            pairs.extend(sample.iter().map(|&i| (self.x.get(i, f), self.y[i])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_pos = 0.0;
            for k in 0..pairs.len() - 1 {
                left_pos += f64::from(pairs[k].1);
                if pairs[k].0 == pairs[k + 1].0 {
                    continue;
                }
                let nl = (k + 1) as f64;
                let nr = n - nl;
                if (k + 1) < self.min_samples_leaf || pairs.len() - (k + 1) < self.min_samples_leaf {
                    continue;
                }
                let right_pos = pos as f64 - left_pos;
                let child = (nl * gini(left_pos, nl) + nr * gini(right_pos, nr)) / n;
                let gain = parent - child;
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(SplitChoice {
                        feature: f,
                        threshold: midpoint(pairs[k].0, pairs[k + 1].0),
                        gain,
                    });
                }
            }
        }
        best
    }
}

/// Fits the forest. Rows are put in a canonical order first, so the result
/// does not depend on the order of the training rows.
pub fn train_forest(train: Labeled<'_>, params: &ForestParams, seed: u64) -> Result<ForestModel> {
    params.validate()?;
    check_training(train.x, train.y)?;
    let order = canonical_order(train.x, train.y);
    let x = train.x.select_rows(&order);
    let y: Vec<u8> = order.iter().map(|&i| train.y[i]).collect();
    let d = x.cols();
    let n = x.rows();
    let max_features = params
        .max_features
        .map_or_else(|| ((d as f64).sqrt().ceil() as usize).max(1), |f| f as usize)
        .min(d);

    let grower = Grower {
        x: &x,
        y: &y,
        max_depth: params.max_depth.map(|v| v as usize),
        max_features,
        min_samples_split: params.min_samples_split,
        min_samples_leaf: params.min_samples_leaf,
    };
    let trees = (0..params.n_trees as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed::rng(seed::derive(seed, "forest-tree", t));
            let sample: Vec<usize> = if params.bootstrap {
                let mut s: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
                s.sort_unstable();
                s
            } else {
                (0..n).collect()
            };
            grower.grow(sample, &mut rng)
        })
        .collect();
    Ok(ForestModel { n_features: d, trees })
}
