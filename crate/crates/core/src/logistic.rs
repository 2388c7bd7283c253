//! Logistic regression `p = 1 / (1 + exp(-g(x)))`, `g(x) = beta . (1, x)`,
//! fitted by damped Newton iterations on the ridge-penalized log-likelihood.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::FeatureVector;

#[derive(Debug, Error, PartialEq)]
pub enum LogisticError {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{features} feature vectors but {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error("labels must be 0 or 1, found {0}")]
    BadLabel(i8),
    #[error("training labels must contain both 0 and 1")]
    SingleClass,
    #[error("empty training set")]
    Empty,
    #[error("ridge must be finite and >= 0, got {0}")]
    BadRidge(f64),
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("training data are perfectly separable; coefficients diverge without regularization, use ridge > 0")]
    PerfectSeparation,
    #[error("coefficient vector is not finite")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticSettings {
    pub ridge: f64,
    /// Stop when the gradient norm falls to this value.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LogisticSettings {
    fn default() -> Self {
        LogisticSettings {
            ridge: 1e-6,
            tol: 1e-6,
            max_iter: 200,
        }
    }
}

/// Norm above which a fit is reported as (quasi-)separated.
pub const SEPARATION_WARNING_NORM: f64 = 1e3;

/// Fitted coefficients, intercept first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub beta: Vec<f64>,
    pub ridge: f64,
    pub converged: bool,
}

/// Numerically stable logistic function.
pub fn sigmoid(g: f64) -> f64 {
    if g >= 0.0 {
        1.0 / (1.0 + (-g).exp())
    } else {
        let e = g.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(g))` without overflow.
fn softplus(g: f64) -> f64 {
    g.max(0.0) + (-g.abs()).exp().ln_1p()
}

fn linear_predictor(beta: &[f64], x: &[f64]) -> f64 {
    beta[0] + beta[1..].iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
}

fn check_shapes(beta: &[f64], features: &[FeatureVector], labels: &[i8]) -> Result<(), LogisticError> {
    if features.len() != labels.len() {
        return Err(LogisticError::LengthMismatch {
            features: features.len(),
            labels: labels.len(),
        });
    }
    let dim = beta.len().saturating_sub(1);
    if let Some(f) = features.iter().find(|f| f.dim() != dim) {
        return Err(LogisticError::DimensionMismatch {
            expected: dim,
            found: f.dim(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&y| y != 0 && y != 1) {
        return Err(LogisticError::BadLabel(bad));
    }
    Ok(())
}

/// `sum [y g - log(1 + e^g)] - ridge/2 * |beta without intercept|^2`.
pub fn log_likelihood(beta: &[f64], features: &[FeatureVector], labels: &[i8], ridge: f64) -> Result<f64, LogisticError> {
    check_shapes(beta, features, labels)?;
    Ok(penalized_ll(beta, features, labels, ridge))
}

fn penalized_ll(beta: &[f64], features: &[FeatureVector], labels: &[i8], ridge: f64) -> f64 {
    let data: f64 = features
        .iter()
        .zip(labels)
        .map(|(x, &y)| {
            let g = linear_predictor(beta, x.as_slice());
            f64::from(y) * g - softplus(g)
        })
        .sum();
    let penalty: f64 = beta[1..].iter().map(|b| b * b).sum();
    data - 0.5 * ridge * penalty
}

/// Exact gradient of [`log_likelihood`] with respect to `beta`.
pub fn gradient(beta: &[f64], features: &[FeatureVector], labels: &[i8], ridge: f64) -> Result<Vec<f64>, LogisticError> {
    check_shapes(beta, features, labels)?;
    Ok(penalized_gradient(beta, features, labels, ridge))
}

fn penalized_gradient(beta: &[f64], features: &[FeatureVector], labels: &[i8], ridge: f64) -> Vec<f64> {
    let mut grad = vec![0.0; beta.len()];
    for (x, &y) in features.iter().zip(labels) {
        let r = f64::from(y) - sigmoid(linear_predictor(beta, x.as_slice()));
        grad[0] += r;
        for (g, v) in grad[1..].iter_mut().zip(x.as_slice()) {
            *g += r * v;
        }
    }
    for (g, b) in grad[1..].iter_mut().zip(&beta[1..]) {
        *g -= ridge * b;
    }
    grad
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Negative Hessian of the penalized log-likelihood (positive semidefinite).
fn information_matrix(beta: &[f64], features: &[FeatureVector], ridge: f64) -> DMatrix<f64> {
    let d = beta.len();
    let mut h = DMatrix::<f64>::zeros(d, d);
    let mut row = vec![1.0; d];
    for x in features {
        row[1..].copy_from_slice(x.as_slice());
        let p = sigmoid(linear_predictor(beta, x.as_slice()));
        let w = p * (1.0 - p);
        for a in 0..d {
            for b in 0..d {
                h[(a, b)] += w * row[a] * row[b];
            }
        }
    }
    for a in 1..d {
        h[(a, a)] += ridge;
    }
    h
}

const MAX_CONDITION: f64 = 1e12;
const MAX_HALVINGS: usize = 60;

/// Newton direction, or `None` when the information matrix is too
/// ill-conditioned to trust.
fn newton_direction(info: DMatrix<f64>, grad: &[f64]) -> Option<Vec<f64>> {
    let eig = info.clone().symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(min > 0.0 && max / min < MAX_CONDITION) {
        return None;
    }
    let chol = info.cholesky()?;
    let step = chol.solve(&DVector::from_column_slice(grad));
    Some(step.iter().copied().collect())
}

pub fn fit_logistic(features: &[FeatureVector], labels: &[i8], settings: &LogisticSettings) -> Result<LogisticModel, LogisticError> {
    let first = features.first().ok_or(LogisticError::Empty)?;
    let mut beta = vec![0.0; first.dim() + 1];
    check_shapes(&beta, features, labels)?;
    if !(labels.contains(&0) && labels.contains(&1)) {
        return Err(LogisticError::SingleClass);
    }
    let ridge = settings.ridge;
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(LogisticError::BadRidge(ridge));
    }
    if settings.tol.is_nan() || settings.tol <= 0.0 {
        return Err(LogisticError::BadTolerance(settings.tol));
    }

    let mut ll = penalized_ll(&beta, features, labels, ridge);
    let mut converged = false;
    for _ in 0..settings.max_iter {
        let grad = penalized_gradient(&beta, features, labels, ridge);
        if norm(&grad) <= settings.tol {
            converged = true;
            break;
        }
        let info = information_matrix(&beta, features, ridge);
        let direction = match newton_direction(info, &grad) {
            Some(d) => d,
            None => {
                log::debug!("ill-conditioned information matrix; taking a gradient step");
                let scale = 1.0 / norm(&grad).max(1.0);
                grad.iter().map(|g| g * scale).collect()
            }
        };

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let candidate: Vec<f64> = beta.iter().zip(&direction).map(|(b, d)| b + step * d).collect();
            let cand_ll = penalized_ll(&candidate, features, labels, ridge);
            if cand_ll.is_finite() && cand_ll >= ll {
                let moved = candidate != beta;
                beta = candidate;
                ll = cand_ll;
                accepted = moved;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // No ascent possible at machine precision.
            converged = norm(&penalized_gradient(&beta, features, labels, ridge)) <= settings.tol;
            break;
        }
    }

    if beta.iter().any(|b| !b.is_finite()) {
        return Err(LogisticError::NonFinite);
    }
    if ridge == 0.0 && separates(&beta, features, labels) {
        return Err(LogisticError::PerfectSeparation);
    }
    let size = norm(&beta[1..]);
    if size > SEPARATION_WARNING_NORM {
        log::warn!("|beta| = {size:.3e} exceeds {SEPARATION_WARNING_NORM}; training data are (quasi-)separated");
    }
    if !converged {
        log::warn!("logistic fit stopped after {} iterations without meeting tol = {}", settings.max_iter, settings.tol);
    }
    Ok(LogisticModel {
        beta,
        ridge,
        converged,
    })
}

/// Every training sample lies strictly on its own side of `g = 0`; an
/// unpenalized maximizer cannot exist.
fn separates(beta: &[f64], features: &[FeatureVector], labels: &[i8]) -> bool {
    features.iter().zip(labels).all(|(x, &y)| {
        let g = linear_predictor(beta, x.as_slice());
        if y == 1 {
            g > 0.0
        } else {
            g < 0.0
        }
    })
}

impl LogisticModel {
    pub fn new(beta: Vec<f64>, ridge: f64) -> Result<Self, LogisticError> {
        if beta.is_empty() {
            return Err(LogisticError::Empty);
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(LogisticError::NonFinite);
        }
        Ok(LogisticModel {
            beta,
            ridge,
            converged: true,
        })
    }

    pub fn dim(&self) -> usize {
        self.beta.len() - 1
    }

    /// `g(x)`, the log-odds of explosion.
    pub fn log_odds(&self, x: &FeatureVector) -> Result<f64, LogisticError> {
        if x.dim() != self.dim() {
            return Err(LogisticError::DimensionMismatch {
                expected: self.dim(),
                found: x.dim(),
            });
        }
        Ok(linear_predictor(&self.beta, x.as_slice()))
    }

    pub fn predict_proba(&self, x: &FeatureVector) -> Result<f64, LogisticError> {
        Ok(sigmoid(self.log_odds(x)?))
    }

    /// 1 iff `p >= 0.5`.
    pub fn predict(&self, x: &FeatureVector) -> Result<i8, LogisticError> {
        Ok(threshold_label(self.predict_proba(x)?))
    }

    pub fn log_likelihood(&self, features: &[FeatureVector], labels: &[i8]) -> Result<f64, LogisticError> {
        log_likelihood(&self.beta, features, labels, self.ridge)
    }

    pub fn gradient(&self, features: &[FeatureVector], labels: &[i8]) -> Result<Vec<f64>, LogisticError> {
        gradient(&self.beta, features, labels, self.ridge)
    }
}

pub fn threshold_label(p: f64) -> i8 {
    if p >= 0.5 {
        1
    } else {
        0
    }
}
