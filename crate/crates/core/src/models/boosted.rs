//! Gradient-boosted regression trees on the logistic loss.
//!
//! Trees are grown greedily on first and second derivatives of the loss
//! (gradient `p - y`, hessian `p (1 - p)`) with L2 leaf regularization
//! `lambda`, split penalty `gamma` and shrinkage. When a shrunken tree would
//! raise the training loss its leaf values are halved until it does not.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::tree::{midpoint, Node, Tree};
use super::{canonical_order, check_training, log_loss, sigmoid, Labeled, Matrix, ProbabilisticModel};
use crate::error::{Error, Result};
use crate::seed;

const MAX_HALVINGS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoostedParams {
    pub n_rounds: i64,
    pub learning_rate: f64,
    pub max_depth: i64,
    pub lambda: f64,
    pub gamma: f64,
    pub min_child_weight: f64,
    /// Fraction of rows drawn (without replacement) for each round.
    pub subsample: f64,
}

impl Default for BoostedParams {
    fn default() -> Self {
        Self {
            n_rounds: 150,
            learning_rate: 0.1,
            max_depth: 4,
            lambda: 1.0,
            gamma: 0.0,
            min_child_weight: 1.0,
            subsample: 1.0,
        }
    }
}

impl BoostedParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_rounds <= 0 {
            return Err(Error::Config(format!("boosted.n_rounds must be positive, got {}", self.n_rounds)));
        }
        if self.max_depth <= 0 {
            return Err(Error::Config(format!("boosted.max_depth must be positive, got {}", self.max_depth)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Config("boosted.learning_rate must be in (0, 1]".into()));
        }
        if !(self.lambda >= 0.0 && self.gamma >= 0.0 && self.min_child_weight >= 0.0) {
            return Err(Error::Config("boosted.lambda, gamma and min_child_weight must be >= 0".into()));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::Config("boosted.subsample must be in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    pub n_features: usize,
    pub base_score: f64,
    pub trees: Vec<Tree>,
    /// Training log-loss after the base score and after each round.
    pub train_loss: Vec<f64>,
}

impl BoostedModel {
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.base_score + self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }
}

impl ProbabilisticModel for BoostedModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_proba(&self, x: &[f64]) -> f64 {
        sigmoid(self.margin(x))
    }
}

struct Grower<'a> {
    x: &'a Matrix,
    grad: &'a [f64],
    hess: &'a [f64],
    params: &'a BoostedParams,
}

impl Grower<'_> {
    fn leaf_weight(&self, g: f64, h: f64) -> f64 {
        -g / (h + self.params.lambda) * self.params.learning_rate
    }

    fn score(&self, g: f64, h: f64) -> f64 {
        g * g / (h + self.params.lambda)
    }

    fn build(&self, sample: Vec<usize>, depth: usize, nodes: &mut Vec<Node>) -> usize {
        let id = nodes.len();
        let g: f64 = sample.iter().map(|&i| self.grad[i]).sum();
        let h: f64 = sample.iter().map(|&i| self.hess[i]).sum();
        nodes.push(Node::Leaf {
            value: self.leaf_weight(g, h),
        });
        if depth >= self.params.max_depth as usize || sample.len() < 2 {
            return id;
        }

        let parent = self.score(g, h);
        let mut best: Option<(usize, f64, f64)> = None;
        let mut items: Vec<(f64, usize)> = Vec::with_capacity(sample.len());
        for f in 0..self.x.cols() {
            items.clear();
            items.extend(sample.iter().map(|&i| (self.x.get(i, f), i)));
            items.sort_by(|a, b| a.0.total_cmp(&b.0));
            let (mut gl, mut hl) = (0.0, 0.0);
            for k in 0..items.len() - 1 {
                gl += self.grad[items[k].1];
                hl += self.hess[items[k].1];
                if items[k].0 == items[k + 1].0 {
                    continue;
                }
                let (gr, hr) = (g - gl, h - hl);
                if hl < self.params.min_child_weight || hr < self.params.min_child_weight {
                    continue;
                }
                let gain = 0.5 * (self.score(gl, hl) + self.score(gr, hr) - parent) - self.params.gamma;
                if gain > 0.0 && best.is_none_or(|b| gain > b.2) {
                    best = Some((f, midpoint(items[k].0, items[k + 1].0), gain));
                }
            }
        }
        let Some((feature, threshold, _)) = best else {
            return id;
        };
        let (left, right): (Vec<usize>, Vec<usize>) =
            sample.into_iter().partition(|&i| self.x.get(i, feature) <= threshold);
        let l = self.build(left, depth + 1, nodes);
        let r = self.build(right, depth + 1, nodes);
        nodes[id] = Node::Split {
            feature,
            threshold,
            left: l,
            right: r,
        };
        id
    }
}

fn scale_leaves(tree: &mut Tree, factor: f64) {
    for node in &mut tree.nodes {
        if let Node::Leaf { value } = node {
            *value *= factor;
        }
    }
}

pub fn train_boosted(train: Labeled<'_>, params: &BoostedParams, seed: u64) -> Result<BoostedModel> {
    params.validate()?;
    check_training(train.x, train.y)?;
    let order = canonical_order(train.x, train.y);
    let x = train.x.select_rows(&order);
    let y: Vec<u8> = order.iter().map(|&i| train.y[i]).collect();
    let n = x.rows();

    let prevalence = y.iter().filter(|&&v| v == 1).count() as f64 / n as f64;
    let base_score = (prevalence / (1.0 - prevalence)).ln();
    let mut margin = vec![base_score; n];
    let probs = |m: &[f64]| m.iter().map(|&z| sigmoid(z)).collect::<Vec<_>>();
    let mut loss = log_loss(&probs(&margin), &y);
    let mut train_loss = vec![loss];
    let mut trees = Vec::with_capacity(params.n_rounds as usize);

    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    for round in 0..params.n_rounds as u64 {
        for i in 0..n {
            let p = sigmoid(margin[i]);
            grad[i] = p - f64::from(y[i]);
            hess[i] = p * (1.0 - p);
        }
        let sample: Vec<usize> = if params.subsample < 1.0 {
            let take = ((params.subsample * n as f64).floor() as usize).max(1);
            let mut rng = seed::rng(seed::derive(seed, "boost-round", round));
            let mut s = index::sample(&mut rng, n, take).into_vec();
            s.sort_unstable();
            s
        } else {
            (0..n).collect()
        };

        let grower = Grower {
            x: &x,
            grad: &grad,
            hess: &hess,
            params,
        };
        let mut nodes = Vec::new();
        grower.build(sample, 0, &mut nodes);
        let mut tree = Tree { nodes };

        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let candidate: Vec<f64> = margin
                .iter()
                .enumerate()
                .map(|(i, m)| m + tree.predict(x.row(i)))
                .collect();
            let new_loss = log_loss(&probs(&candidate), &y);
            if !new_loss.is_finite() {
                return Err(Error::Training("boosting loss became non-finite".into()));
            }
            if new_loss <= loss {
                margin = candidate;
                loss = new_loss;
                accepted = true;
                break;
            }
            scale_leaves(&mut tree, 0.5);
        }
        if !accepted {
            // no descent left along this tree; keep the ensemble as is
            train_loss.push(loss);
            continue;
        }
        train_loss.push(loss);
        trees.push(tree);
    }

    Ok(BoostedModel {
        n_features: x.cols(),
        base_score,
        trees,
        train_loss,
    })
}
