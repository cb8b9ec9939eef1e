//! Three-layer perceptron for binary classification.
//!
//! The network computes
//!
//! ```text
//! o = sigmoid(W_out^T f(W_2^T f(W_1^T x + b_1) + b_2) + b_out)
//! ```
//!
//! with a configurable hidden activation `f`. Training minimizes mean binary
//! cross-entropy plus `0.5 * l2 * ||W||^2` (weights only) with mini-batch
//! backpropagation, inverted dropout on the hidden layers, and early stopping
//! on validation loss.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_training, log_loss, sigmoid, Labeled, Matrix, ProbabilisticModel, Standardizer};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Sigmoid,
    Softplus,
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => a.tanh(),
            Activation::Sigmoid => sigmoid(a),
            Activation::Softplus => {
                if a > 0.0 {
                    a + (-a).exp().ln_1p()
                } else {
                    a.exp().ln_1p()
                }
            }
            Activation::Relu => a.max(0.0),
            Activation::Identity => a,
        }
    }

    /// Derivative with respect to the pre-activation `a`, given `out = f(a)`.
    fn derivative(self, a: f64, out: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - out * out,
            Activation::Sigmoid => out * (1.0 - out),
            Activation::Softplus => sigmoid(a),
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    /// Gradient descent, with heavy-ball momentum when `momentum > 0`.
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpHyper {
    pub hidden1: usize,
    pub hidden2: usize,
    pub activation: Activation,
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    /// Used by `sgd` only.
    pub momentum: f64,
    pub l2: f64,
    pub dropout: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Multiplier on the Glorot-uniform limit `sqrt(6 / (fan_in + fan_out))`.
    pub init_scale: f64,
}

impl Default for MlpHyper {
    fn default() -> Self {
        Self {
            hidden1: 16,
            hidden2: 8,
            activation: Activation::Tanh,
            optimizer: Optimizer::Adam,
            learning_rate: 0.003,
            momentum: 0.9,
            l2: 1e-4,
            dropout: 0.1,
            batch_size: 32,
            max_epochs: 150,
            patience: 15,
            init_scale: 1.0,
        }
    }
}

impl MlpHyper {
    /// Defaults for the stacking network over 6-dim probability probes.
    pub fn meta_default() -> Self {
        Self {
            hidden1: 8,
            hidden2: 4,
            learning_rate: 0.01,
            dropout: 0.0,
            max_epochs: 150,
            patience: 15,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden1 == 0 || self.hidden2 == 0 {
            return Err(Error::Config("mlp hidden widths must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("mlp.learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("mlp.momentum must be in [0, 1)".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Config("mlp.l2 must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("mlp.dropout must be in [0, 1)".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("mlp.batch_size and max_epochs must be positive".into()));
        }
        if !(self.init_scale > 0.0) {
            return Err(Error::Config("mlp.init_scale must be positive".into()));
        }
        Ok(())
    }
}

/// Weights and biases. Matrices are row-major `fan_in x fan_out`, so
/// `w1[i * h1 + j]` connects input `i` to hidden unit `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub n_input: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    pub activation: Activation,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub w_out: Vec<f64>,
    pub b_out: f64,
}

impl MlpParams {
    pub fn zeros(n_input: usize, hidden1: usize, hidden2: usize, activation: Activation) -> Self {
        Self {
            n_input,
            hidden1,
            hidden2,
            activation,
            w1: vec![0.0; n_input * hidden1],
            b1: vec![0.0; hidden1],
            w2: vec![0.0; hidden1 * hidden2],
            b2: vec![0.0; hidden2],
            w_out: vec![0.0; hidden2],
            b_out: 0.0,
        }
    }

    /// Glorot-uniform weights scaled by `scale`, zero biases.
    pub fn init<R: Rng>(
        n_input: usize,
        hidden1: usize,
        hidden2: usize,
        activation: Activation,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(n_input, hidden1, hidden2, activation);
        let mut fill = |w: &mut [f64], fan_in: usize, fan_out: usize| {
            let limit = scale * (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in w {
                *v = rng.gen_range(-limit..limit);
            }
        };
        fill(&mut p.w1, n_input, hidden1);
        fill(&mut p.w2, hidden1, hidden2);
        fill(&mut p.w_out, hidden2, 1);
        p
    }

    pub fn check_shapes(&self) -> Result<()> {
        let expect = [
            ("w1", self.w1.len(), self.n_input * self.hidden1),
            ("b1", self.b1.len(), self.hidden1),
            ("w2", self.w2.len(), self.hidden1 * self.hidden2),
            ("b2", self.b2.len(), self.hidden2),
            ("w_out", self.w_out.len(), self.hidden2),
        ];
        for (name, got, want) in expect {
            if got != want {
                return Err(Error::Shape(format!("{name} has {got} entries, expected {want}")));
            }
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len() + self.w_out.len() + 1
    }

    /// All parameters in the order `w1, b1, w2, b2, w_out, b_out`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        v.extend_from_slice(&self.w1);
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(&self.w2);
        v.extend_from_slice(&self.b2);
        v.extend_from_slice(&self.w_out);
        v.push(self.b_out);
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::Shape(format!(
                "{} values for {} parameters",
                flat.len(),
                self.n_params()
            )));
        }
        let mut at = 0;
        for dst in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2, &mut self.w_out] {
            let n = dst.len();
            dst.copy_from_slice(&flat[at..at + n]);
            at += n;
        }
        self.b_out = flat[at];
        Ok(())
    }

    fn is_finite(&self) -> bool {
        self.flatten().iter().all(|v| v.is_finite())
    }
}

/// Activations kept from a forward pass for backpropagation.
struct Trace {
    a1: Vec<f64>,
    h1: Vec<f64>,
    a2: Vec<f64>,
    h2: Vec<f64>,
    out: f64,
}

fn forward_trace(p: &MlpParams, x: &[f64], masks: Option<(&[f64], &[f64])>) -> Trace {
    let (h1n, h2n) = (p.hidden1, p.hidden2);
    let mut a1 = p.b1.clone();
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let row = &p.w1[i * h1n..(i + 1) * h1n];
        for j in 0..h1n {
            a1[j] += xi * row[j];
        }
    }
    let mut h1: Vec<f64> = a1.iter().map(|&a| p.activation.apply(a)).collect();
    if let Some((m1, _)) = masks {
        h1.iter_mut().zip(m1).for_each(|(h, m)| *h *= m);
    }
    let mut a2 = p.b2.clone();
    for (i, &hi) in h1.iter().enumerate() {
        let row = &p.w2[i * h2n..(i + 1) * h2n];
        for j in 0..h2n {
            a2[j] += hi * row[j];
        }
    }
    let mut h2: Vec<f64> = a2.iter().map(|&a| p.activation.apply(a)).collect();
    if let Some((_, m2)) = masks {
        h2.iter_mut().zip(m2).for_each(|(h, m)| *h *= m);
    }
    let z = p.b_out + h2.iter().zip(&p.w_out).map(|(h, w)| h * w).sum::<f64>();
    Trace {
        a1,
        h1,
        a2,
        h2,
        out: sigmoid(z),
    }
}

/// Network output for one input.
pub fn mlp_forward(params: &MlpParams, x: &[f64]) -> Result<f64> {
    params.check_shapes()?;
    if x.len() != params.n_input {
        return Err(Error::Shape(format!(
            "input has {} features, network expects {}",
            x.len(),
            params.n_input
        )));
    }
    Ok(forward_trace(params, x, None).out)
}

/// Accumulates the gradient of one example's cross-entropy into `grad`
/// (flat layout) and returns that example's loss.
fn backprop_one(p: &MlpParams, x: &[f64], y: u8, masks: Option<(&[f64], &[f64])>, grad: &mut [f64]) -> f64 {
    let t = forward_trace(p, x, masks);
    let (d, h1n, h2n) = (p.n_input, p.hidden1, p.hidden2);
    let (o_w1, o_b1) = (0, d * h1n);
    let o_w2 = o_b1 + h1n;
    let o_b2 = o_w2 + h1n * h2n;
    let o_wo = o_b2 + h2n;
    let o_bo = o_wo + h2n;

    let dz = t.out - f64::from(y);
    for j in 0..h2n {
        grad[o_wo + j] += dz * t.h2[j];
    }
    grad[o_bo] += dz;

    let mut da2 = vec![0.0; h2n];
    for j in 0..h2n {
        let mut dh = dz * p.w_out[j];
        let mut out = t.h2[j];
        if let Some((_, m2)) = masks {
            if m2[j] == 0.0 {
                continue;
            }
            dh *= m2[j];
            out /= m2[j];
        }
        da2[j] = dh * p.activation.derivative(t.a2[j], out);
    }
    for i in 0..h1n {
        let hi = t.h1[i];
        let row = &mut grad[o_w2 + i * h2n..o_w2 + (i + 1) * h2n];
        for j in 0..h2n {
            row[j] += hi * da2[j];
        }
    }
    for j in 0..h2n {
        grad[o_b2 + j] += da2[j];
    }

    let mut da1 = vec![0.0; h1n];
    for i in 0..h1n {
        let w_row = &p.w2[i * h2n..(i + 1) * h2n];
        let mut dh: f64 = w_row.iter().zip(&da2).map(|(w, g)| w * g).sum();
        let mut out = t.h1[i];
        if let Some((m1, _)) = masks {
            if m1[i] == 0.0 {
                continue;
            }
            dh *= m1[i];
            out /= m1[i];
        }
        da1[i] = dh * p.activation.derivative(t.a1[i], out);
    }
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let row = &mut grad[o_w1 + i * h1n..o_w1 + (i + 1) * h1n];
        for j in 0..h1n {
            row[j] += xi * da1[j];
        }
    }
    for j in 0..h1n {
        grad[o_b1 + j] += da1[j];
    }

    let pc = t.out.clamp(1e-15, 1.0 - 1e-15);
    if y == 1 {
        -pc.ln()
    } else {
        -(1.0 - pc).ln()
    }
}

fn l2_penalty(p: &MlpParams, l2: f64, grad: Option<&mut [f64]>) -> f64 {
    if l2 == 0.0 {
        return 0.0;
    }
    let (d, h1n, h2n) = (p.n_input, p.hidden1, p.hidden2);
    let o_w2 = d * h1n + h1n;
    let o_wo = o_w2 + h1n * h2n + h2n;
    let sq = |w: &[f64]| w.iter().map(|v| v * v).sum::<f64>();
    if let Some(g) = grad {
        for (k, w) in p.w1.iter().enumerate() {
            g[k] += l2 * w;
        }
        for (k, w) in p.w2.iter().enumerate() {
            g[o_w2 + k] += l2 * w;
        }
        for (k, w) in p.w_out.iter().enumerate() {
            g[o_wo + k] += l2 * w;
        }
    }
    0.5 * l2 * (sq(&p.w1) + sq(&p.w2) + sq(&p.w_out))
}

/// Regularized mean cross-entropy over `rows` (no dropout).
pub fn mlp_loss(params: &MlpParams, x: &Matrix, y: &[u8], l2: f64) -> f64 {
    let probs: Vec<f64> = x.iter_rows().map(|r| forward_trace(params, r, None).out).collect();
    log_loss(&probs, y) + l2_penalty(params, l2, None)
}

/// Loss and flat gradient (layout of [`MlpParams::flatten`]) of
/// [`mlp_loss`], computed by backpropagation.
pub fn mlp_gradient(params: &MlpParams, x: &Matrix, y: &[u8], l2: f64) -> Result<(f64, Vec<f64>)> {
    params.check_shapes()?;
    if x.cols() != params.n_input || x.rows() != y.len() {
        return Err(Error::Shape("gradient inputs do not match the network".into()));
    }
    let n = x.rows().max(1) as f64;
    let mut grad = vec![0.0; params.n_params()];
    let mut loss = 0.0;
    for (r, &label) in x.iter_rows().zip(y) {
        loss += backprop_one(params, r, label, None, &mut grad);
    }
    grad.iter_mut().for_each(|g| *g /= n);
    loss = loss / n + l2_penalty(params, l2, Some(&mut grad));
    Ok((loss, grad))
}

struct OptimizerState {
    kind: Optimizer,
    lr: f64,
    momentum: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl OptimizerState {
    fn new(h: &MlpHyper, n: usize) -> Self {
        Self {
            kind: h.optimizer,
            lr: h.learning_rate,
            momentum: h.momentum,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        match self.kind {
            Optimizer::Sgd => {
                for k in 0..theta.len() {
                    self.m[k] = self.momentum * self.m[k] + grad[k];
                    theta[k] -= self.lr * self.m[k];
                }
            }
            Optimizer::Adam => {
                const B1: f64 = 0.9;
                const B2: f64 = 0.999;
                const EPS: f64 = 1e-8;
                self.t += 1;
                let c1 = 1.0 - B1.powi(self.t);
                let c2 = 1.0 - B2.powi(self.t);
                for k in 0..theta.len() {
                    self.m[k] = B1 * self.m[k] + (1.0 - B1) * grad[k];
                    self.v[k] = B2 * self.v[k] + (1.0 - B2) * grad[k] * grad[k];
                    theta[k] -= self.lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + EPS);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub standardizer: Standardizer,
    pub params: MlpParams,
    pub epochs_trained: usize,
    pub best_epoch: usize,
    pub best_monitor_loss: f64,
}

impl ProbabilisticModel for MlpModel {
    fn n_features(&self) -> usize {
        self.params.n_input
    }

    fn predict_proba(&self, x: &[f64]) -> f64 {
        let z = self.standardizer.apply(x);
        forward_trace(&self.params, &z, None).out
    }
}

fn dropout_mask<R: Rng>(n: usize, rate: f64, rng: &mut R) -> Vec<f64> {
    let keep = 1.0 - rate;
    (0..n)
        .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect()
}

/// Trains the network. The monitored loss for early stopping is the
/// validation loss when `val` is given, the training loss otherwise; the
/// parameters of the best monitored epoch are returned.
pub fn train_mlp(train: Labeled<'_>, val: Option<Labeled<'_>>, hyper: &MlpHyper, seed: u64) -> Result<MlpModel> {
    hyper.validate()?;
    check_training(train.x, train.y)?;
    if let Some(v) = val {
        if v.x.cols() != train.x.cols() || v.x.rows() != v.y.len() {
            return Err(Error::Shape("validation rows do not match training rows".into()));
        }
        if !v.x.is_finite() {
            return Err(Error::NonFinite("validation features contain NaN or infinity".into()));
        }
    }
    let standardizer = Standardizer::fit(train.x);
    let xs = standardizer.apply_matrix(train.x);
    let val_xs = val.map(|v| (standardizer.apply_matrix(v.x), v.y));
    let n = xs.rows();

    let mut init_rng = seed::rng(seed::derive(seed, "mlp-init", 0));
    let mut params = MlpParams::init(
        xs.cols(),
        hyper.hidden1,
        hyper.hidden2,
        hyper.activation,
        hyper.init_scale,
        &mut init_rng,
    );
    let mut theta = params.flatten();
    let mut opt = OptimizerState::new(hyper, theta.len());

    let monitor = |p: &MlpParams| match &val_xs {
        Some((vx, vy)) if !vy.is_empty() => mlp_loss(p, vx, vy, 0.0),
        _ => mlp_loss(p, &xs, train.y, 0.0),
    };
    let mut best = params.clone();
    let mut best_loss = monitor(&params);
    let mut best_epoch = 0;
    let mut epochs_trained = 0;
    let mut order: Vec<usize> = (0..n).collect();
    let mut grad = vec![0.0; theta.len()];

    for epoch in 1..=hyper.max_epochs {
        let mut rng = seed::rng(seed::derive(seed, "mlp-epoch", epoch as u64));
        order.shuffle(&mut rng);
        for (b, batch) in order.chunks(hyper.batch_size).enumerate() {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut batch_loss = 0.0;
            for &i in batch {
                let masks = (hyper.dropout > 0.0).then(|| {
                    (
                        dropout_mask(hyper.hidden1, hyper.dropout, &mut rng),
                        dropout_mask(hyper.hidden2, hyper.dropout, &mut rng),
                    )
                });
                let m = masks.as_ref().map(|(a, b)| (a.as_slice(), b.as_slice()));
                batch_loss += backprop_one(&params, xs.row(i), train.y[i], m, &mut grad);
            }
            let bn = batch.len() as f64;
            grad.iter_mut().for_each(|g| *g /= bn);
            batch_loss = batch_loss / bn + l2_penalty(&params, hyper.l2, Some(&mut grad));
            if !batch_loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Training(format!(
                    "non-finite loss at epoch {epoch}, batch {b} (learning rate {}, loss {batch_loss})",
                    hyper.learning_rate
                )));
            }
            opt.step(&mut theta, &grad);
            params.set_flat(&theta)?;
        }
        epochs_trained = epoch;
        if !params.is_finite() {
            return Err(Error::Training(format!("parameters diverged at epoch {epoch}")));
        }
        let loss = monitor(&params);
        if loss < best_loss {
            best_loss = loss;
            best = params.clone();
            best_epoch = epoch;
        } else if epoch - best_epoch >= hyper.patience.max(1) {
            break;
        }
    }

    Ok(MlpModel {
        standardizer,
        params: best,
        epochs_trained,
        best_epoch,
        best_monitor_loss: best_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::auc;

    #[test]
    fn zero_network_outputs_half() {
        let p = MlpParams::zeros(30, 8, 4, Activation::Tanh);
        assert_eq!(mlp_forward(&p, &[1.0; 30]).unwrap(), 0.5);
    }

    #[test]
    fn hand_computed_tiny_network() {
        let mut p = MlpParams::zeros(1, 1, 1, Activation::Identity);
        p.w1 = vec![2.0];
        p.b1 = vec![0.5];
        p.w2 = vec![-1.5];
        p.b2 = vec![0.25];
        p.w_out = vec![0.8];
        p.b_out = -0.1;
        // x = 1.0: a1 = 2.5, a2 = -3.5, z = 0.8 * -3.5 - 0.1 = -2.9
        let expected = 1.0 / (1.0 + 2.9f64.exp());
        assert!((mlp_forward(&p, &[1.0]).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn negating_output_weights_mirrors_output() {
        let mut rng = seed::rng(3);
        let mut p = MlpParams::init(5, 4, 3, Activation::Tanh, 1.0, &mut rng);
        p.b_out = 0.0;
        let x = [0.3, -0.2, 1.1, 0.0, 0.7];
        let o = mlp_forward(&p, &x).unwrap();
        p.w_out.iter_mut().for_each(|w| *w = -*w);
        let flipped = mlp_forward(&p, &x).unwrap();
        assert!((o + flipped - 1.0).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_errors() {
        let p = MlpParams::zeros(3, 2, 2, Activation::Tanh);
        assert!(matches!(mlp_forward(&p, &[1.0]), Err(Error::Shape(_))));
        let mut bad = p.clone();
        bad.w2.pop();
        assert!(matches!(mlp_forward(&bad, &[1.0; 3]), Err(Error::Shape(_))));
    }

    #[test]
    fn flatten_round_trip() {
        let mut rng = seed::rng(1);
        let p = MlpParams::init(4, 3, 2, Activation::Tanh, 1.0, &mut rng);
        let mut q = MlpParams::zeros(4, 3, 2, Activation::Tanh);
        q.set_flat(&p.flatten()).unwrap();
        assert_eq!(p, q);
    }

    fn separable(n: usize) -> (Matrix, Vec<u8>) {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 - n as f64 / 2.0 + 0.5]).collect();
        let y = rows.iter().map(|r| (r[0] > 0.0) as u8).collect();
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn separable_data_reaches_perfect_validation_auc() {
        let (x, y) = separable(40);
        let (vx, vy) = separable(12);
        let h = MlpHyper {
            max_epochs: 500,
            patience: 500,
            dropout: 0.0,
            ..MlpHyper::default()
        };
        let m = train_mlp(Labeled::new(&x, &y), Some(Labeled::new(&vx, &vy)), &h, 9).unwrap();
        assert!(m.epochs_trained <= 500);
        assert_eq!(auc(&m.predict_matrix(&vx), &vy).unwrap(), 1.0);
    }

    #[test]
    fn one_epoch_is_bitwise_reproducible() {
        let (x, y) = separable(30);
        let h = MlpHyper {
            max_epochs: 1,
            dropout: 0.0,
            ..MlpHyper::default()
        };
        let a = train_mlp(Labeled::new(&x, &y), None, &h, 4).unwrap();
        let b = train_mlp(Labeled::new(&x, &y), None, &h, 4).unwrap();
        assert_eq!(a.params.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                   b.params.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn sgd_with_momentum_learns() {
        let (x, y) = separable(40);
        let h = MlpHyper {
            optimizer: Optimizer::Sgd,
            learning_rate: 0.1,
            dropout: 0.0,
            max_epochs: 200,
            patience: 200,
            ..MlpHyper::default()
        };
        let m = train_mlp(Labeled::new(&x, &y), None, &h, 2).unwrap();
        assert_eq!(auc(&m.predict_matrix(&x), &y).unwrap(), 1.0);
    }

    #[test]
    fn divergence_is_reported() {
        let (x, y) = separable(20);
        let h = MlpHyper {
            optimizer: Optimizer::Sgd,
            learning_rate: 1e300,
            momentum: 0.0,
            dropout: 0.0,
            max_epochs: 5,
            ..MlpHyper::default()
        };
        assert!(matches!(train_mlp(Labeled::new(&x, &y), None, &h, 2), Err(Error::Training(_))));
    }

    fn central_difference_check(activation: Activation, l2: f64) {
        let mut rng = seed::rng(17);
        let p = MlpParams::init(3, 4, 3, activation, 1.0, &mut rng);
        let x = Matrix::from_rows(&[vec![0.5, -1.0, 0.2], vec![-0.3, 0.8, 1.5], vec![1.2, 0.1, -0.7]]).unwrap();
        let y = [1, 0, 1];
        let (_, g) = mlp_gradient(&p, &x, &y, l2).unwrap();
        let theta = p.flatten();
        let h = 1e-5;
        for k in 0..theta.len() {
            let mut q = p.clone();
            let mut t = theta.clone();
            t[k] += h;
            q.set_flat(&t).unwrap();
            let up = mlp_loss(&q, &x, &y, l2);
            t[k] -= 2.0 * h;
            q.set_flat(&t).unwrap();
            let down = mlp_loss(&q, &x, &y, l2);
            let fd = (up - down) / (2.0 * h);
            let denom = fd.abs().max(g[k].abs()).max(1e-8);
            assert!((fd - g[k]).abs() / denom < 1e-4, "param {k}: fd {fd} bp {}", g[k]);
        }
    }

    #[test]
    fn gradient_check_smooth_activations() {
        for act in [Activation::Tanh, Activation::Sigmoid, Activation::Softplus] {
            central_difference_check(act, 0.0);
            central_difference_check(act, 0.05);
        }
    }
}
