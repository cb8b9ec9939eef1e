//! Probability-level combiners over the forest, boosted and MLP models:
//! plain averaging, simplex-weighted averaging and a stacked meta-MLP over
//! 6-dimensional probe vectors.
//!
//! The meta-network is trained on out-of-fold base predictions (episode-level
//! K-fold cross-fitting over the train split) so it never sees probabilities
//! from a base model that was fitted on the same rows.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::auc;
use crate::models::mlp::train_mlp;
use crate::models::{
    fit_model, Labeled, Matrix, MlpModel, Model, ModelFile, ModelKind, ModelParams, ProbabilisticModel,
};
use crate::seed;

/// Fixed base-model order for probes and weights.
pub const BASE_ORDER: [ModelKind; 3] = [ModelKind::Forest, ModelKind::Boosted, ModelKind::Mlp];
pub const PROBE_LEN: usize = 6;
pub const ENSEMBLE_FORMAT: &str = "sepsis-ensemble";
pub const ENSEMBLE_FORMAT_VERSION: u32 = 1;
pub const WEIGHT_GRID_STEP: f64 = 0.05;

/// Seed used for a base model of `kind` fitted on the full train split.
pub fn base_seed(seed: u64, kind: ModelKind) -> u64 {
    seed::derive(seed, &format!("model:{}", kind.name()), 0)
}

fn check_probability(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("probability {p} outside [0, 1]")));
    }
    Ok(())
}

/// Arithmetic mean of base probabilities.
pub fn average_proba(probs: &[f64]) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::Shape("no probabilities to average".into()));
    }
    for &p in probs {
        check_probability(p)?;
    }
    Ok(probs.iter().sum::<f64>() / probs.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedAverage {
    /// Non-negative, summing to 1, in [`BASE_ORDER`].
    pub weights: [f64; 3],
    pub validation_auc: f64,
}

impl WeightedAverage {
    pub fn combine(&self, probs: [f64; 3]) -> Result<f64> {
        for p in probs {
            check_probability(p)?;
        }
        Ok(self.weights.iter().zip(probs).map(|(w, p)| w * p).sum::<f64>().clamp(0.0, 1.0))
    }
}

/// Grid search over the weight simplex at [`WEIGHT_GRID_STEP`] for the
/// highest AUC on held-out probabilities. Ties keep the first grid point in
/// lexicographic order of `(w_forest, w_boosted)`.
pub fn fit_weights(probs: [&[f64]; 3], labels: &[u8]) -> Result<WeightedAverage> {
    let n = labels.len();
    if probs.iter().any(|p| p.len() != n) {
        return Err(Error::Shape("probability columns differ in length".into()));
    }
    let steps = (1.0 / WEIGHT_GRID_STEP).round() as usize;
    let mut best: Option<WeightedAverage> = None;
    let mut combined = vec![0.0; n];
    for i in 0..=steps {
        for j in 0..=steps - i {
            let k = steps - i - j;
            let w = [i, j, k].map(|v| v as f64 / steps as f64);
            for r in 0..n {
                combined[r] = w[0] * probs[0][r] + w[1] * probs[1][r] + w[2] * probs[2][r];
            }
            let a = auc(&combined, labels)?;
            if best.as_ref().is_none_or(|b| a > b.validation_auc) {
                best = Some(WeightedAverage {
                    weights: w,
                    validation_auc: a,
                });
            }
        }
    }
    Ok(best.expect("grid is non-empty"))
}

/// `(1 - p, p)` for each base model in [`BASE_ORDER`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeVector(pub [f64; PROBE_LEN]);

impl ProbeVector {
    pub fn from_probs(p: [f64; 3]) -> Result<Self> {
        let mut v = [0.0; PROBE_LEN];
        for (k, &pk) in p.iter().enumerate() {
            check_probability(pk)?;
            v[2 * k] = 1.0 - pk;
            v[2 * k + 1] = pk;
        }
        Ok(Self(v))
    }
}

/// Probe for `x`. A missing base model is a state error.
pub fn make_probe(bases: [Option<&dyn ProbabilisticModel>; 3], x: &[f64]) -> Result<ProbeVector> {
    let mut p = [0.0; 3];
    for (k, base) in bases.iter().enumerate() {
        let m = base.ok_or_else(|| Error::State(format!("base model {} is not fitted", BASE_ORDER[k])))?;
        if m.n_features() != x.len() {
            return Err(Error::Shape(format!(
                "{} expects {} features, got {}",
                BASE_ORDER[k],
                m.n_features(),
                x.len()
            )));
        }
        p[k] = m.predict_proba(x);
    }
    ProbeVector::from_probs(p)
}

fn probe_matrix(prob_cols: &[Vec<f64>; 3]) -> Result<Matrix> {
    let n = prob_cols[0].len();
    let mut data = Vec::with_capacity(n * PROBE_LEN);
    for r in 0..n {
        let probe = ProbeVector::from_probs([prob_cols[0][r], prob_cols[1][r], prob_cols[2][r]])?;
        data.extend_from_slice(&probe.0);
    }
    Matrix::new(data, PROBE_LEN)
}

/// Which base-model probabilities train the meta-network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaSource {
    /// Out-of-fold predictions over the train split.
    Crossfit,
    /// In-sample predictions of the full-train base models.
    Train,
    /// Predictions on the validation split.
    Validation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StackingConfig {
    pub folds: usize,
    pub meta_source: MetaSource,
}

impl Default for StackingConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            meta_source: MetaSource::Crossfit,
        }
    }
}

impl StackingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::Config(format!("stacking.folds must be >= 2, got {}", self.folds)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackedEnsemble {
    pub order: [ModelKind; 3],
    pub bases: Vec<Model>,
    pub meta: MlpModel,
    pub meta_source: MetaSource,
}

impl StackedEnsemble {
    pub fn probe(&self, x: &[f64]) -> Result<ProbeVector> {
        let b: Vec<Option<&dyn ProbabilisticModel>> =
            (0..3).map(|k| self.bases.get(k).map(|m| m as &dyn ProbabilisticModel)).collect();
        make_probe([b[0], b[1], b[2]], x)
    }

    pub fn base_probs(&self, x: &[f64]) -> [f64; 3] {
        [0, 1, 2].map(|k| self.bases[k].predict_proba(x))
    }
}

impl ProbabilisticModel for StackedEnsemble {
    fn n_features(&self) -> usize {
        self.bases.first().map_or(0, |b| b.n_features())
    }

    fn predict_proba(&self, x: &[f64]) -> f64 {
        predict_stacked(self, x).expect("stacked ensemble is fitted and shapes match")
    }
}

/// Meta-network output on the probe of `x`.
pub fn predict_stacked(ensemble: &StackedEnsemble, x: &[f64]) -> Result<f64> {
    if ensemble.bases.len() != 3 {
        return Err(Error::State(format!(
            "ensemble has {} base models, expected 3",
            ensemble.bases.len()
        )));
    }
    let probe = ensemble.probe(x)?;
    Ok(ensemble.meta.predict_proba(&probe.0))
}

/// Rows plus the episode each row came from, for episode-level folds.
#[derive(Debug, Clone, Copy)]
pub struct GroupedRows<'a> {
    pub rows: Labeled<'a>,
    pub groups: &'a [String],
}

fn fit_bases(params: &ModelParams, train: Labeled<'_>, val: Option<Labeled<'_>>, seeds: [u64; 3]) -> Result<Vec<Model>> {
    BASE_ORDER
        .par_iter()
        .zip(seeds)
        .map(|(&kind, s)| fit_model(kind, params, train, val, s))
        .collect()
}

/// Fits the three base models on the full train split, then the stack.
pub fn fit_stacked(
    train: GroupedRows<'_>,
    val: Option<Labeled<'_>>,
    params: &ModelParams,
    config: &StackingConfig,
    seed: u64,
) -> Result<StackedEnsemble> {
    let seeds = BASE_ORDER.map(|k| base_seed(seed, k));
    let bases = fit_bases(params, train.rows, val, seeds)?;
    fit_stacked_with_bases(bases, train, val, params, config, seed)
}

/// Stacks already-fitted full-train base models (in [`BASE_ORDER`]).
pub fn fit_stacked_with_bases(
    bases: Vec<Model>,
    train: GroupedRows<'_>,
    val: Option<Labeled<'_>>,
    params: &ModelParams,
    config: &StackingConfig,
    seed: u64,
) -> Result<StackedEnsemble> {
    config.validate()?;
    params.meta.validate()?;
    if bases.len() != 3 || bases.iter().zip(BASE_ORDER).any(|(m, k)| m.kind() != k) {
        return Err(Error::State("base models must be forest, boosted, mlp in that order".into()));
    }
    if train.groups.len() != train.rows.y.len() {
        return Err(Error::Shape("one episode id per training row is required".into()));
    }
    let predict_all = |x: &Matrix| -> [Vec<f64>; 3] { [0, 1, 2].map(|k| bases[k].predict_matrix(x)) };
    let val_probes = match val {
        Some(v) if !v.y.is_empty() => Some(probe_matrix(&predict_all(v.x))?),
        _ => None,
    };

    let meta_seed = seed::derive(seed, "meta", 0);
    let meta = match config.meta_source {
        MetaSource::Crossfit => {
            let oof = crossfit_probs(train, val, params, config.folds, seed)?;
            let x = probe_matrix(&oof)?;
            let v = val_probes.as_ref().zip(val).map(|(m, v)| Labeled::new(m, v.y));
            train_mlp(Labeled::new(&x, train.rows.y), v, &params.meta, meta_seed)?
        }
        MetaSource::Train => {
            let x = probe_matrix(&predict_all(train.rows.x))?;
            let v = val_probes.as_ref().zip(val).map(|(m, v)| Labeled::new(m, v.y));
            train_mlp(Labeled::new(&x, train.rows.y), v, &params.meta, meta_seed)?
        }
        MetaSource::Validation => {
            let (Some(x), Some(v)) = (val_probes.as_ref(), val) else {
                return Err(Error::DegenerateDataset(
                    "meta_source = validation needs a non-empty validation split".into(),
                ));
            };
            train_mlp(Labeled::new(x, v.y), None, &params.meta, meta_seed)?
        }
    };
    Ok(StackedEnsemble {
        order: BASE_ORDER,
        bases,
        meta,
        meta_source: config.meta_source,
    })
}

/// Out-of-fold base probabilities over the train rows. Episodes are shuffled
/// with the seed and dealt round-robin into `folds` folds.
fn crossfit_probs(
    train: GroupedRows<'_>,
    val: Option<Labeled<'_>>,
    params: &ModelParams,
    folds: usize,
    seed: u64,
) -> Result<[Vec<f64>; 3]> {
    let mut episodes: Vec<&str> = train.groups.iter().map(String::as_str).collect();
    episodes.sort_unstable();
    episodes.dedup();
    if episodes.len() < folds {
        return Err(Error::TooFewEpisodes {
            found: episodes.len(),
            required: folds,
        });
    }
    let mut rng = seed::rng(seed::derive(seed, "crossfit", 0));
    episodes.shuffle(&mut rng);
    let fold_of: BTreeMap<&str, usize> = episodes.iter().enumerate().map(|(i, e)| (*e, i % folds)).collect();
    let row_fold: Vec<usize> = train.groups.iter().map(|g| fold_of[g.as_str()]).collect();

    let jobs: Vec<(usize, usize)> = (0..folds).flat_map(|f| (0..3).map(move |k| (f, k))).collect();
    let results: Vec<(usize, usize, Vec<f64>)> = jobs
        .into_par_iter()
        .map(|(f, k)| {
            let fit_idx: Vec<usize> = (0..row_fold.len()).filter(|&i| row_fold[i] != f).collect();
            let hold_idx: Vec<usize> = (0..row_fold.len()).filter(|&i| row_fold[i] == f).collect();
            let fx = train.rows.x.select_rows(&fit_idx);
            let fy: Vec<u8> = fit_idx.iter().map(|&i| train.rows.y[i]).collect();
            let s = seed::derive(seed, &format!("crossfit-model:{}", BASE_ORDER[k].name()), f as u64);
            let m = fit_model(BASE_ORDER[k], params, Labeled::new(&fx, &fy), val, s)?;
            let hx = train.rows.x.select_rows(&hold_idx);
            Ok((f, k, m.predict_matrix(&hx)))
        })
        .collect::<Result<_>>()?;

    let n = row_fold.len();
    let mut out = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for (f, k, probs) in results {
        let hold = (0..n).filter(|&i| row_fold[i] == f);
        for (i, p) in hold.zip(probs) {
            out[k][i] = p;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleManifest {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub order: Vec<ModelKind>,
    pub base_files: Vec<String>,
    pub meta_file: String,
    pub meta_source: MetaSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_digest: Option<String>,
    /// SHA-256 over the ordered base names and base file contents.
    pub ordering_checksum: String,
}

fn ordering_checksum(order: &[ModelKind], contents: &[String]) -> String {
    let mut h = Sha256::new();
    for (k, text) in order.iter().zip(contents) {
        h.update(k.name().as_bytes());
        h.update([0u8]);
        h.update(Sha256::digest(text.as_bytes()));
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `manifest.json`, one file per base model and `meta.json` into
/// `dir` (created if needed). `config_digest` is recorded in every file.
pub fn save_ensemble(
    dir: &Path,
    ensemble: &StackedEnsemble,
    seed: u64,
    params: &ModelParams,
    config_digest: Option<&str>,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut names = Vec::new();
    let mut contents = Vec::new();
    for (k, m) in ensemble.order.iter().zip(&ensemble.bases) {
        let mut file = ModelFile::new(m.clone(), base_seed(seed, *k), params.hyperparameters_json(*k));
        file.config_digest = config_digest.map(String::from);
        let name = format!("base_{}.json", k.name());
        let text = file.to_json()?;
        fs::write(dir.join(&name), &text).map_err(|e| Error::io(dir.join(&name), e))?;
        names.push(name);
        contents.push(text);
    }
    let mut meta = ModelFile::new(
        Model::Mlp(ensemble.meta.clone()),
        seed::derive(seed, "meta", 0),
        serde_json::to_value(&params.meta).map_err(|e| Error::Format(e.to_string()))?,
    );
    meta.config_digest = config_digest.map(String::from);
    fs::write(dir.join("meta.json"), meta.to_json()?).map_err(|e| Error::io(dir.join("meta.json"), e))?;
    let manifest = EnsembleManifest {
        format: ENSEMBLE_FORMAT.into(),
        version: ENSEMBLE_FORMAT_VERSION,
        seed,
        order: ensemble.order.to_vec(),
        base_files: names,
        meta_file: "meta.json".into(),
        meta_source: ensemble.meta_source,
        config_digest: config_digest.map(String::from),
        ordering_checksum: ordering_checksum(&ensemble.order, &contents),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(dir.join("manifest.json"), text).map_err(|e| Error::io(dir.join("manifest.json"), e))
}

/// Loads an ensemble directory, rejecting any order that disagrees with the
/// checksum or with [`BASE_ORDER`].
pub fn load_ensemble(dir: &Path) -> Result<StackedEnsemble> {
    let mpath = dir.join("manifest.json");
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: EnsembleManifest = serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))?;
    if manifest.format != ENSEMBLE_FORMAT || manifest.version != ENSEMBLE_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported ensemble format {} v{}",
            manifest.format, manifest.version
        )));
    }
    if manifest.order.len() != 3 || manifest.base_files.len() != 3 {
        return Err(Error::Format("ensemble manifest must list three base models".into()));
    }
    let mut contents = Vec::new();
    let mut bases = Vec::new();
    for (k, name) in manifest.order.iter().zip(&manifest.base_files) {
        let p = dir.join(name);
        let t = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        let file = ModelFile::from_json(&t)?;
        if file.kind != *k {
            return Err(Error::Format(format!(
                "{name} holds a {} model where the ordering expects {k}",
                file.kind
            )));
        }
        contents.push(t);
        bases.push(file.model);
    }
    if ordering_checksum(&manifest.order, &contents) != manifest.ordering_checksum {
        return Err(Error::Format("ensemble ordering checksum mismatch".into()));
    }
    if manifest.order != BASE_ORDER {
        return Err(Error::Format("base models are not in forest, boosted, mlp order".into()));
    }
    let meta_path = dir.join(&manifest.meta_file);
    let meta = match crate::models::load_model(&meta_path)?.model {
        Model::Mlp(m) => m,
        other => return Err(Error::Format(format!("meta model must be an mlp, found {}", other.kind()))),
    };
    if meta.n_features() != PROBE_LEN {
        return Err(Error::Format("meta model does not take 6-dimensional probes".into()));
    }
    Ok(StackedEnsemble {
        order: BASE_ORDER,
        bases,
        meta,
        meta_source: manifest.meta_source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn averaging_examples() {
        assert!((average_proba(&[0.2, 0.4, 0.6]).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(average_proba(&[0.3, 0.3, 0.3]).unwrap(), 0.3);
        assert_eq!(average_proba(&[0.0, 0.0, 1.0]).unwrap(), 1.0 / 3.0);
        assert!(matches!(average_proba(&[0.2, 1.2, 0.5]), Err(Error::Domain(_))));
    }

    #[test]
    fn probe_layout() {
        let p = ProbeVector::from_probs([0.9, 0.8, 0.7]).unwrap();
        let want = [0.1, 0.9, 0.2, 0.8, 0.3, 0.7];
        for (a, b) in p.0.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(ProbeVector::from_probs([0.5; 3]).unwrap().0, [0.5; 6]);
    }

    #[test]
    fn missing_base_is_a_state_error() {
        assert!(matches!(make_probe([None, None, None], &[0.0]), Err(Error::State(_))));
    }

    #[test]
    fn weights_pick_the_informative_column() {
        let y: Vec<u8> = (0..40).map(|i| (i % 2) as u8).collect();
        let good: Vec<f64> = y.iter().enumerate().map(|(i, &l)| 0.3 + 0.4 * l as f64 + i as f64 * 1e-3).collect();
        let noise: Vec<f64> = (0..40).map(|i| ((i * 7919) % 97) as f64 / 97.0).collect();
        let w = fit_weights([&noise, &good, &noise], &y).unwrap();
        assert_eq!(w.validation_auc, 1.0);
        assert!(w.weights[1] > 0.0);
        assert!((w.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
