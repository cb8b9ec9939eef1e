//! L2-regularized logistic regression fitted by full-batch gradient descent
//! with backtracking (Armijo) step control on z-scored features.

use serde::{Deserialize, Serialize};

use super::{check_training, sigmoid, Labeled, ProbabilisticModel, Standardizer};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LogisticParams {
    /// Initial step size; halved on insufficient decrease.
    pub learning_rate: f64,
    /// Coefficient of `0.5 * ||w||^2` (bias excluded).
    pub l2: f64,
    pub max_iter: usize,
    /// Stop when the gradient's Euclidean norm falls below this.
    pub tol: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self {
            learning_rate: 1.0,
            l2: 1e-3,
            max_iter: 2000,
            tol: 1e-6,
        }
    }
}

impl LogisticParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("logistic.learning_rate must be positive".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Config("logistic.l2 must be non-negative".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("logistic.max_iter must be positive".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("logistic.tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub standardizer: Standardizer,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
    pub final_grad_norm: f64,
}

impl ProbabilisticModel for LogisticModel {
    fn n_features(&self) -> usize {
        self.weights.len()
    }

    fn predict_proba(&self, x: &[f64]) -> f64 {
        let z = self.standardizer.apply(x);
        sigmoid(dot(&self.weights, &z) + self.bias)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// Regularized mean log-loss and its gradient (weights then bias).
fn objective(rows: &[Vec<f64>], y: &[u8], w: &[f64], b: f64, l2: f64, grad: Option<&mut Vec<f64>>) -> f64 {
    let n = rows.len() as f64;
    let d = w.len();
    let mut loss = 0.0;
    let mut g = vec![0.0; d + 1];
    for (r, &label) in rows.iter().zip(y) {
        let z = dot(w, r) + b;
        // log(1 + e^z) - y z, computed stably
        let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
        loss += softplus - f64::from(label) * z;
        let resid = sigmoid(z) - f64::from(label);
        for j in 0..d {
            g[j] += resid * r[j];
        }
        g[d] += resid;
    }
    loss /= n;
    loss += 0.5 * l2 * dot(w, w);
    if let Some(out) = grad {
        for j in 0..d {
            g[j] = g[j] / n + l2 * w[j];
        }
        g[d] /= n;
        *out = g;
    }
    loss
}

pub fn train_logistic(train: Labeled<'_>, params: &LogisticParams) -> Result<LogisticModel> {
    params.validate()?;
    check_training(train.x, train.y)?;
    let standardizer = Standardizer::fit(train.x);
    let rows: Vec<Vec<f64>> = train.x.iter_rows().map(|r| standardizer.apply(r)).collect();
    let d = train.x.cols();

    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut grad = Vec::new();
    let mut loss = objective(&rows, train.y, &w, b, params.l2, Some(&mut grad));
    let mut step = params.learning_rate;
    let mut grad_norm = dot(&grad, &grad).sqrt();
    let mut iterations = 0;

    while iterations < params.max_iter && grad_norm >= params.tol {
        iterations += 1;
        let gg = grad_norm * grad_norm;
        let (mut w_new, mut b_new);
        loop {
            w_new = w.iter().zip(&grad).map(|(wi, gi)| wi - step * gi).collect::<Vec<_>>();
            b_new = b - step * grad[d];
            let trial = objective(&rows, train.y, &w_new, b_new, params.l2, None);
            if trial <= loss - 0.5 * step * gg || step < 1e-12 {
                break;
            }
            step *= 0.5;
        }
        w = w_new;
        b = b_new;
        loss = objective(&rows, train.y, &w, b, params.l2, Some(&mut grad));
        if !loss.is_finite() {
            return Err(Error::Training("logistic loss became non-finite".into()));
        }
        grad_norm = dot(&grad, &grad).sqrt();
        step = (step * 2.0).min(params.learning_rate);
    }

    let converged = grad_norm < params.tol;
    if !converged {
        log::warn!(
            "logistic regression stopped after {iterations} iterations without converging (gradient norm {grad_norm:.3e})"
        );
    }
    Ok(LogisticModel {
        standardizer,
        weights: w,
        bias: b,
        iterations,
        converged,
        final_grad_norm: grad_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Matrix;

    #[test]
    fn separable_one_dimensional() {
        let x = Matrix::from_rows(&[vec![-1.0], vec![1.0]]).unwrap();
        let m = train_logistic(Labeled::new(&x, &[0, 1]), &LogisticParams::default()).unwrap();
        assert!(m.predict_proba(&[-1.0]) < 0.5);
        assert!(m.predict_proba(&[1.0]) > 0.5);
        assert!(m.converged);
    }

    #[test]
    fn identical_labels_rejected() {
        let x = Matrix::from_rows(&[vec![-1.0], vec![1.0]]).unwrap();
        assert!(train_logistic(Labeled::new(&x, &[1, 1]), &LogisticParams::default()).is_err());
    }

    #[test]
    fn non_converged_model_is_still_returned() {
        let x = Matrix::from_rows(&[vec![-1.0], vec![1.0]]).unwrap();
        let params = LogisticParams {
            max_iter: 2,
            l2: 0.0,
            ..LogisticParams::default()
        };
        let m = train_logistic(Labeled::new(&x, &[0, 1]), &params).unwrap();
        assert!(!m.converged);
        assert_eq!(m.iterations, 2);
        assert!(m.final_grad_norm > 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let rows = vec![vec![0.3, -1.2], vec![1.5, 0.4], vec![-0.7, 0.9]];
        let y = [1, 0, 1];
        let w = vec![0.2, -0.5];
        let b = 0.1;
        let mut g = Vec::new();
        objective(&rows, &y, &w, b, 0.3, Some(&mut g));
        let h = 1e-6;
        for j in 0..2 {
            let mut wp = w.clone();
            wp[j] += h;
            let mut wm = w.clone();
            wm[j] -= h;
            let fd = (objective(&rows, &y, &wp, b, 0.3, None) - objective(&rows, &y, &wm, b, 0.3, None)) / (2.0 * h);
            assert!((fd - g[j]).abs() < 1e-8);
        }
        let fd = (objective(&rows, &y, &w, b + h, 0.3, None) - objective(&rows, &y, &w, b - h, 0.3, None)) / (2.0 * h);
        assert!((fd - g[2]).abs() < 1e-8);
    }
}
