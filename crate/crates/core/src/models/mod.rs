//! Base classifiers behind one probabilistic contract.
//!
//! All four learners are implemented here: L2-regularized logistic
//! regression, a Gini random forest, second-order gradient-boosted trees and
//! a three-layer perceptron. Each fits deterministically from a seed and
//! emits a positive-class probability in `[0, 1]`.

pub mod boosted;
pub mod forest;
pub mod logistic;
pub mod mlp;
mod persist;
mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use boosted::{BoostedModel, BoostedParams};
pub use forest::{ForestModel, ForestParams};
pub use logistic::{LogisticModel, LogisticParams};
pub use mlp::{Activation, MlpHyper, MlpModel, MlpParams, Optimizer};
pub use persist::{load_model, save_model, ModelFile, MODEL_FORMAT, MODEL_FORMAT_VERSION};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    data: Vec<f64>,
    cols: usize,
}

impl Matrix {
    pub fn new(data: Vec<f64>, cols: usize) -> Result<Self> {
        if cols == 0 && !data.is_empty() {
            return Err(Error::Shape("zero columns with non-empty data".into()));
        }
        if cols > 0 && data.len() % cols != 0 {
            return Err(Error::Shape(format!(
                "{} values do not fill rows of {cols}",
                data.len()
            )));
        }
        Ok(Self { data, cols })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::new(rows.concat(), cols)
    }

    pub fn rows(&self) -> usize {
        if self.cols == 0 {
            0
        } else {
            self.data.len() / self.cols
        }
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1))
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            data,
            cols: self.cols,
        }
    }

    pub fn select_cols(&self, cols: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(self.rows() * cols.len());
        for r in self.iter_rows() {
            data.extend(cols.iter().map(|&c| r[c]));
        }
        Matrix {
            data,
            cols: cols.len(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Per-column z-scoring fitted on training rows. Constant columns keep
/// unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Matrix) -> Self {
        let n = x.rows().max(1) as f64;
        let d = x.cols();
        let mut mean = vec![0.0; d];
        for r in x.iter_rows() {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in x.iter_rows() {
            for j in 0..d {
                let dv = r[j] - mean[j];
                var[j] += dv * dv;
            }
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn apply_matrix(&self, x: &Matrix) -> Matrix {
        let data = x.iter_rows().flat_map(|r| self.apply(r)).collect();
        Matrix { data, cols: x.cols }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy with probabilities clamped away from 0 and 1.
pub fn log_loss(probs: &[f64], labels: &[u8]) -> f64 {
    const EPS: f64 = 1e-15;
    let n = probs.len().max(1) as f64;
    probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(EPS, 1.0 - EPS);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum::<f64>()
        / n
}

/// Fit/predict contract shared by every classifier and ensemble.
pub trait ProbabilisticModel {
    fn n_features(&self) -> usize;

    /// Positive-class probability in `[0, 1]`.
    fn predict_proba(&self, x: &[f64]) -> f64;

    fn predict_matrix(&self, x: &Matrix) -> Vec<f64> {
        x.iter_rows().map(|r| self.predict_proba(r)).collect()
    }
}

/// Training-input checks shared by all learners: shapes agree, features are
/// finite, labels are binary and both classes are present.
pub fn check_training(x: &Matrix, y: &[u8]) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::Shape(format!("{} rows but {} labels", x.rows(), y.len())));
    }
    if x.cols() == 0 {
        return Err(Error::Shape("no feature columns".into()));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("training features contain NaN or infinity".into()));
    }
    if let Some(bad) = y.iter().find(|&&v| v > 1) {
        return Err(Error::Domain(format!("label {bad} is not binary")));
    }
    let pos = y.iter().filter(|&&v| v == 1).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::DegenerateDataset(
            "training split needs at least one row of each class".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Logistic,
    Forest,
    Boosted,
    Mlp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Logistic,
        ModelKind::Forest,
        ModelKind::Boosted,
        ModelKind::Mlp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Logistic => "logistic",
            ModelKind::Forest => "forest",
            ModelKind::Boosted => "boosted",
            ModelKind::Mlp => "mlp",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "logistic" | "lr" => Ok(ModelKind::Logistic),
            "forest" | "rf" => Ok(ModelKind::Forest),
            "boosted" | "xgb" | "gbm" => Ok(ModelKind::Boosted),
            "mlp" => Ok(ModelKind::Mlp),
            other => Err(Error::Config(format!("unknown model '{other}'"))),
        }
    }
}

/// Hyperparameters for every learner plus the stacking meta-network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    pub logistic: LogisticParams,
    pub forest: ForestParams,
    pub boosted: BoostedParams,
    pub mlp: MlpHyper,
    pub meta: MlpHyper,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            logistic: LogisticParams::default(),
            forest: ForestParams::default(),
            boosted: BoostedParams::default(),
            mlp: MlpHyper::default(),
            meta: MlpHyper::meta_default(),
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        self.logistic.validate()?;
        self.forest.validate()?;
        self.boosted.validate()?;
        self.mlp.validate()?;
        self.meta.validate()
    }

    pub fn hyperparameters_json(&self, kind: ModelKind) -> serde_json::Value {
        let v = match kind {
            ModelKind::Logistic => serde_json::to_value(&self.logistic),
            ModelKind::Forest => serde_json::to_value(&self.forest),
            ModelKind::Boosted => serde_json::to_value(&self.boosted),
            ModelKind::Mlp => serde_json::to_value(&self.mlp),
        };
        v.expect("hyperparameters serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum Model {
    Logistic(LogisticModel),
    Forest(ForestModel),
    Boosted(BoostedModel),
    Mlp(MlpModel),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Logistic(_) => ModelKind::Logistic,
            Model::Forest(_) => ModelKind::Forest,
            Model::Boosted(_) => ModelKind::Boosted,
            Model::Mlp(_) => ModelKind::Mlp,
        }
    }
}

impl ProbabilisticModel for Model {
    fn n_features(&self) -> usize {
        match self {
            Model::Logistic(m) => m.n_features(),
            Model::Forest(m) => m.n_features(),
            Model::Boosted(m) => m.n_features(),
            Model::Mlp(m) => m.n_features(),
        }
    }

    fn predict_proba(&self, x: &[f64]) -> f64 {
        match self {
            Model::Logistic(m) => m.predict_proba(x),
            Model::Forest(m) => m.predict_proba(x),
            Model::Boosted(m) => m.predict_proba(x),
            Model::Mlp(m) => m.predict_proba(x),
        }
    }
}

/// Labeled rows borrowed for fitting.
#[derive(Debug, Clone, Copy)]
pub struct Labeled<'a> {
    pub x: &'a Matrix,
    pub y: &'a [u8],
}

impl<'a> Labeled<'a> {
    pub fn new(x: &'a Matrix, y: &'a [u8]) -> Self {
        Self { x, y }
    }
}

/// Fits one base learner. `val` is used by the MLP for early stopping and
/// ignored by the others.
pub fn fit_model(
    kind: ModelKind,
    params: &ModelParams,
    train: Labeled<'_>,
    val: Option<Labeled<'_>>,
    seed: u64,
) -> Result<Model> {
    Ok(match kind {
        ModelKind::Logistic => Model::Logistic(logistic::train_logistic(train, &params.logistic)?),
        ModelKind::Forest => Model::Forest(forest::train_forest(train, &params.forest, seed)?),
        ModelKind::Boosted => Model::Boosted(boosted::train_boosted(train, &params.boosted, seed)?),
        ModelKind::Mlp => Model::Mlp(mlp::train_mlp(train, val, &params.mlp, seed)?),
    })
}

/// Sorts rows into a canonical order (lexicographic on features, then
/// label) so tree learners are invariant to training-row order.
pub(crate) fn canonical_order(x: &Matrix, y: &[u8]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..x.rows()).collect();
    idx.sort_by(|&a, &b| {
        let (ra, rb) = (x.row(a), x.row(b));
        ra.iter()
            .zip(rb)
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(y[a].cmp(&y[b]))
    });
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_shapes() {
        assert!(Matrix::new(vec![1.0, 2.0, 3.0], 2).is_err());
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(m.rows(), 2);
        assert_eq!(m.row(1), &[3.0, 4.0]);
        assert_eq!(m.select_cols(&[1]).row(0), &[2.0]);
        assert_eq!(m.select_rows(&[1]).row(0), &[3.0, 4.0]);
        assert!(Matrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(-800.0) < 1e-300);
        assert_eq!(sigmoid(800.0), 1.0);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn training_checks() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        assert!(check_training(&x, &[0, 1]).is_ok());
        assert!(matches!(check_training(&x, &[1, 1]), Err(Error::DegenerateDataset(_))));
        assert!(check_training(&x, &[0]).is_err());
        let bad = Matrix::from_rows(&[vec![f64::NAN], vec![1.0]]).unwrap();
        assert!(matches!(check_training(&bad, &[0, 1]), Err(Error::NonFinite(_))));
    }

    #[test]
    fn unknown_hyperparameter_rejected() {
        let err = toml::from_str::<ModelParams>("[forest]\nn_trees = 5\nbogus = 1\n");
        assert!(err.is_err());
        let ok: ModelParams = toml::from_str("[forest]\nn_trees = 5\n").unwrap();
        assert_eq!(ok.forest.n_trees, 5);
    }
}
