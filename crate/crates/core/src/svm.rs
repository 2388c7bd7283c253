//! Soft-margin kernel SVM with separate slack penalties for the two classes,
//! trained by sequential minimal optimization on the dual.
//!
//! The dual solved here is
//!
//! ```text
//! max  sum_i a_i - 1/2 sum_ij a_i a_j y_i y_j K(x_i, x_j)
//! s.t. 0 <= a_i <= C_i,  sum_i a_i y_i = 0
//! ```
//!
//! where `C_i` is the positive-class penalty for exploded samples and the
//! negative-class penalty otherwise.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::FeatureVector;

#[derive(Debug, Error, PartialEq)]
pub enum SvmError {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("penalties must be positive and finite (got w1 = {positive}, w2 = {negative})")]
    InvalidPenalty { positive: f64, negative: f64 },
    #[error("training labels must contain both +1 and -1")]
    SingleClass,
    #[error("labels must be +1 or -1, found {0}")]
    BadLabel(i8),
    #[error("{features} feature vectors but {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error("empty training set")]
    Empty,
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("model has no support vectors")]
    NoSupportVectors,
}

/// Kernel function and its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    Linear,
    Polynomial { gamma: f64, coef0: f64, degree: u32 },
    Rbf { gamma: f64 },
    Sigmoid { gamma: f64, coef0: f64 },
}

impl Kernel {
    /// RBF with `gamma = 1 / n_features`.
    pub fn default_rbf(n_features: usize) -> Kernel {
        Kernel::Rbf {
            gamma: 1.0 / n_features.max(1) as f64,
        }
    }

    pub fn validate(&self) -> Result<(), SvmError> {
        let gamma = match *self {
            Kernel::Linear => return Ok(()),
            Kernel::Polynomial { gamma, coef0, degree } => {
                if degree < 1 {
                    return Err(SvmError::InvalidKernel("polynomial degree must be >= 1".into()));
                }
                if !coef0.is_finite() {
                    return Err(SvmError::InvalidKernel("coef0 must be finite".into()));
                }
                gamma
            }
            Kernel::Rbf { gamma } => gamma,
            Kernel::Sigmoid { gamma, coef0 } => {
                if !coef0.is_finite() {
                    return Err(SvmError::InvalidKernel("coef0 must be finite".into()));
                }
                gamma
            }
        };
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(SvmError::InvalidKernel(format!("gamma must be positive, got {gamma}")));
        }
        Ok(())
    }

    pub fn eval(&self, a: &FeatureVector, b: &FeatureVector) -> Result<f64, SvmError> {
        if a.dim() != b.dim() {
            return Err(SvmError::DimensionMismatch {
                expected: a.dim(),
                found: b.dim(),
            });
        }
        Ok(self.compute(a.as_slice(), b.as_slice()))
    }

    pub(crate) fn compute(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => dot(a, b),
            Kernel::Polynomial { gamma, coef0, degree } => (gamma * dot(a, b) + coef0).powi(degree as i32),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
            Kernel::Sigmoid { gamma, coef0 } => (gamma * dot(a, b) + coef0).tanh(),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Slack penalties: `positive` (w1) on exploded samples, `negative` (w2) on
/// the rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    #[serde(rename = "w1")]
    pub positive: f64,
    #[serde(rename = "w2")]
    pub negative: f64,
}

impl PenaltyConfig {
    pub fn new(positive: f64, negative: f64) -> Result<Self, SvmError> {
        let p = PenaltyConfig { positive, negative };
        p.validate()?;
        Ok(p)
    }

    pub fn symmetric(c: f64) -> Result<Self, SvmError> {
        Self::new(c, c)
    }

    /// `w1 = gamma * w2`.
    pub fn from_ratio(gamma: f64, negative: f64) -> Result<Self, SvmError> {
        Self::new(gamma * negative, negative)
    }

    pub fn ratio(&self) -> f64 {
        self.positive / self.negative
    }

    pub fn cap(&self, label: i8) -> f64 {
        if label > 0 {
            self.positive
        } else {
            self.negative
        }
    }

    pub fn validate(&self) -> Result<(), SvmError> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if ok(self.positive) && ok(self.negative) {
            Ok(())
        } else {
            Err(SvmError::InvalidPenalty {
                positive: self.positive,
                negative: self.negative,
            })
        }
    }
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig {
            positive: 10.0,
            negative: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoSettings {
    /// Stopping threshold on the maximal KKT violation.
    pub tol: f64,
    /// Iteration cap, in multiples of the sample count.
    pub max_passes: usize,
    /// Seeds the scan order used to break ties between equally violating
    /// samples.
    pub seed: u64,
    /// Keep the dual objective after every pair update.
    #[serde(default)]
    pub record_objective: bool,
}

impl Default for SmoSettings {
    fn default() -> Self {
        SmoSettings {
            tol: 1e-3,
            max_passes: 1000,
            seed: 0,
            record_objective: false,
        }
    }
}

/// Raw solver output, indexed like the training set.
#[derive(Debug, Clone)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    /// Dual objective at the returned iterate.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each update; empty unless requested.
    pub objective_trace: Vec<f64>,
}

/// Dual objective `sum a - 1/2 a' Q a` for an arbitrary multiplier vector.
pub fn dual_objective(features: &[FeatureVector], labels: &[i8], kernel: &Kernel, alpha: &[f64]) -> f64 {
    let n = features.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alpha[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            if alpha[j] == 0.0 {
                continue;
            }
            quad += alpha[i]
                * alpha[j]
                * f64::from(labels[i])
                * f64::from(labels[j])
                * kernel.compute(features[i].as_slice(), features[j].as_slice());
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

fn check_inputs(features: &[FeatureVector], labels: &[i8], tol: f64) -> Result<usize, SvmError> {
    if features.len() != labels.len() {
        return Err(SvmError::LengthMismatch {
            features: features.len(),
            labels: labels.len(),
        });
    }
    let first = features.first().ok_or(SvmError::Empty)?;
    let dim = first.dim();
    for f in features {
        if f.dim() != dim {
            return Err(SvmError::DimensionMismatch {
                expected: dim,
                found: f.dim(),
            });
        }
    }
    if let Some(&bad) = labels.iter().find(|&&y| y != 1 && y != -1) {
        return Err(SvmError::BadLabel(bad));
    }
    if !(labels.contains(&1) && labels.contains(&-1)) {
        return Err(SvmError::SingleClass);
    }
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(SvmError::BadTolerance(tol));
    }
    Ok(dim)
}

const TAU: f64 = 1e-12;

/// SMO with maximal-violating-pair selection.
///
/// `caps[i]` is the upper bound on `alpha[i]`.
pub fn solve_dual(
    features: &[FeatureVector],
    labels: &[i8],
    kernel: &Kernel,
    caps: &[f64],
    settings: &SmoSettings,
) -> Result<DualSolution, SvmError> {
    check_inputs(features, labels, settings.tol)?;
    kernel.validate()?;
    let n = features.len();
    let y: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();

    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let k = kernel.compute(features[i].as_slice(), features[j].as_slice());
            gram[i * n + j] = k;
            gram[j * n + i] = k;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(settings.seed));

    let mut alpha = vec![0.0; n];
    // f_no_bias[k] = sum_j alpha_j y_j K(x_j, x_k)
    let mut f_no_bias = vec![0.0; n];
    let mut objective = 0.0;
    let mut trace = Vec::new();
    let max_iter = settings.max_passes.saturating_mul(n).max(1);

    let in_up = |a: f64, yk: f64, c: f64| (yk > 0.0 && a < c) || (yk < 0.0 && a > 0.0);
    let in_low = |a: f64, yk: f64, c: f64| (yk < 0.0 && a < c) || (yk > 0.0 && a > 0.0);

    let mut iterations = 0;
    let mut converged = false;
    loop {
        // v_k = y_k - f_no_bias[k]; optimality holds when max over I_up of v
        // does not exceed min over I_low of v.
        let mut up: Option<(usize, f64)> = None;
        let mut low: Option<(usize, f64)> = None;
        for &k in &order {
            let v = y[k] - f_no_bias[k];
            if in_up(alpha[k], y[k], caps[k]) && up.is_none_or(|(_, best)| v > best) {
                up = Some((k, v));
            }
            if in_low(alpha[k], y[k], caps[k]) && low.is_none_or(|(_, best)| v < best) {
                low = Some((k, v));
            }
        }
        let (Some((i, vi)), Some((j, vj))) = (up, low) else {
            converged = true;
            break;
        };
        if vi - vj <= settings.tol {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
        iterations += 1;

        let eta = (gram[i * n + i] + gram[j * n + j] - 2.0 * gram[i * n + j]).max(TAU);
        let room_i = if y[i] > 0.0 { caps[i] - alpha[i] } else { alpha[i] };
        let room_j = if y[j] > 0.0 { alpha[j] } else { caps[j] - alpha[j] };
        let step = ((vi - vj) / eta).min(room_i).min(room_j);

        alpha[i] = clamp_to_box(alpha[i] + y[i] * step, caps[i]);
        alpha[j] = clamp_to_box(alpha[j] - y[j] * step, caps[j]);
        for k in 0..n {
            f_no_bias[k] += step * (gram[i * n + k] - gram[j * n + k]);
        }
        objective += step * (vi - vj) - 0.5 * eta * step * step;
        if settings.record_objective {
            trace.push(objective);
        }
    }

    if !converged {
        log::warn!("SMO stopped after {iterations} updates without meeting tol = {}", settings.tol);
    }

    let bias = compute_bias(&alpha, &y, caps, &f_no_bias);
    Ok(DualSolution {
        alpha,
        bias,
        objective,
        iterations,
        converged,
        objective_trace: trace,
    })
}

/// Snaps values within rounding distance of a bound onto it.
fn clamp_to_box(a: f64, cap: f64) -> f64 {
    let eps = 1e-12 * cap;
    if a <= eps {
        0.0
    } else if a >= cap - eps {
        cap
    } else {
        a
    }
}

/// Average of `y - f` over free multipliers, else the midpoint of the
/// interval of feasible biases.
fn compute_bias(alpha: &[f64], y: &[f64], caps: &[f64], f_no_bias: &[f64]) -> f64 {
    let mut free_sum = 0.0;
    let mut free_count = 0usize;
    let mut lower = f64::NEG_INFINITY;
    let mut upper = f64::INFINITY;
    for k in 0..alpha.len() {
        let v = y[k] - f_no_bias[k];
        if alpha[k] > 0.0 && alpha[k] < caps[k] {
            free_sum += v;
            free_count += 1;
            continue;
        }
        let at_zero = alpha[k] == 0.0;
        // at zero: y f >= 1; at cap: y f <= 1
        if (y[k] > 0.0) == at_zero {
            lower = lower.max(v);
        } else {
            upper = upper.min(v);
        }
    }
    if free_count > 0 {
        free_sum / free_count as f64
    } else {
        match (lower.is_finite(), upper.is_finite()) {
            (true, true) => 0.5 * (lower + upper),
            (true, false) => lower,
            (false, true) => upper,
            (false, false) => 0.0,
        }
    }
}

/// A trained SVM: support vectors with their `alpha * y` weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel: Kernel,
    pub penalties: PenaltyConfig,
    pub support_vectors: Vec<FeatureVector>,
    pub dual_coefficients: Vec<f64>,
    pub bias: f64,
    pub converged: bool,
}

impl SvmModel {
    pub fn new(
        kernel: Kernel,
        penalties: PenaltyConfig,
        support_vectors: Vec<FeatureVector>,
        dual_coefficients: Vec<f64>,
        bias: f64,
        converged: bool,
    ) -> Result<Self, SvmError> {
        let model = SvmModel {
            kernel,
            penalties,
            support_vectors,
            dual_coefficients,
            bias,
            converged,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), SvmError> {
        self.kernel.validate()?;
        self.penalties.validate()?;
        if self.support_vectors.is_empty() {
            return Err(SvmError::NoSupportVectors);
        }
        if self.support_vectors.len() != self.dual_coefficients.len() {
            return Err(SvmError::LengthMismatch {
                features: self.support_vectors.len(),
                labels: self.dual_coefficients.len(),
            });
        }
        let dim = self.dim();
        if let Some(sv) = self.support_vectors.iter().find(|sv| sv.dim() != dim) {
            return Err(SvmError::DimensionMismatch {
                expected: dim,
                found: sv.dim(),
            });
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.support_vectors[0].dim()
    }

    pub fn decision_value(&self, x: &FeatureVector) -> Result<f64, SvmError> {
        if x.dim() != self.dim() {
            return Err(SvmError::DimensionMismatch {
                expected: self.dim(),
                found: x.dim(),
            });
        }
        let sum: f64 = self
            .support_vectors
            .iter()
            .zip(&self.dual_coefficients)
            .map(|(sv, coef)| coef * self.kernel.compute(sv.as_slice(), x.as_slice()))
            .sum();
        Ok(sum + self.bias)
    }

    /// +1 (explosion) or -1. A zero decision value predicts explosion.
    pub fn predict(&self, x: &FeatureVector) -> Result<i8, SvmError> {
        Ok(sign_label(self.decision_value(x)?))
    }
}

pub fn sign_label(decision: f64) -> i8 {
    if decision >= 0.0 {
        1
    } else {
        -1
    }
}

pub fn fit_svm(
    features: &[FeatureVector],
    labels: &[i8],
    kernel: Kernel,
    penalties: PenaltyConfig,
    settings: &SmoSettings,
) -> Result<SvmModel, SvmError> {
    penalties.validate()?;
    let caps: Vec<f64> = labels.iter().map(|&y| penalties.cap(y)).collect();
    let solution = solve_dual(features, labels, &kernel, &caps, settings)?;

    let mut support_vectors = Vec::new();
    let mut dual_coefficients = Vec::new();
    for (k, &a) in solution.alpha.iter().enumerate() {
        if a > 0.0 {
            support_vectors.push(features[k].clone());
            dual_coefficients.push(a * f64::from(labels[k]));
        }
    }
    SvmModel::new(
        kernel,
        penalties,
        support_vectors,
        dual_coefficients,
        solution.bias,
        solution.converged,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector(v.to_vec())
    }

    #[test]
    fn kernel_values() {
        let rbf = Kernel::Rbf { gamma: 0.7 };
        assert_eq!(rbf.eval(&fv(&[0.3, -1.0]), &fv(&[0.3, -1.0])).unwrap(), 1.0);
        let lin = Kernel::Linear;
        assert_eq!(lin.eval(&fv(&[1.0, 2.0, 0.0]), &fv(&[3.0, 4.0, 0.0])).unwrap(), 11.0);
        // gamma * a.b + r = 0.5 * 2 - 1 = 0
        let sig = Kernel::Sigmoid { gamma: 0.5, coef0: -1.0 };
        assert_eq!(sig.eval(&fv(&[1.0, 1.0]), &fv(&[1.0, 1.0])).unwrap(), 0.0);
        let poly = Kernel::Polynomial { gamma: 2.0, coef0: 1.0, degree: 3 };
        assert_eq!(poly.eval(&fv(&[1.0]), &fv(&[1.0])).unwrap(), 27.0);
        assert!((rbf.eval(&fv(&[0.0]), &fv(&[1.0])).unwrap() - (-0.7f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn kernel_dimension_mismatch() {
        assert_eq!(
            Kernel::Linear.eval(&fv(&[1.0]), &fv(&[1.0, 2.0])),
            Err(SvmError::DimensionMismatch { expected: 1, found: 2 })
        );
    }

    #[test]
    fn kernel_parameter_checks() {
        assert!(Kernel::Rbf { gamma: 0.0 }.validate().is_err());
        assert!(Kernel::Sigmoid { gamma: -1.0, coef0: 0.0 }.validate().is_err());
        assert!(Kernel::Polynomial { gamma: 1.0, coef0: 0.0, degree: 0 }.validate().is_err());
        assert!(Kernel::Linear.validate().is_ok());
    }

    #[test]
    fn penalties_validate() {
        assert!(PenaltyConfig::new(0.0, 1.0).is_err());
        assert!(PenaltyConfig::new(1.0, f64::NAN).is_err());
        let p = PenaltyConfig::from_ratio(5.0, 2.0).unwrap();
        assert_eq!((p.positive, p.negative, p.ratio()), (10.0, 2.0, 5.0));
        assert_eq!(p.cap(1), 10.0);
        assert_eq!(p.cap(-1), 2.0);
    }

    #[test]
    fn two_point_problem_is_analytic() {
        // max a1 + a2 - (a1 + a2)^2 / 2 with a1 = a2 gives a = 0.5.
        let x = [fv(&[-1.0]), fv(&[1.0])];
        let y = [-1, 1];
        let model = fit_svm(
            &x,
            &y,
            Kernel::Linear,
            PenaltyConfig::symmetric(100.0).unwrap(),
            &SmoSettings::default(),
        )
        .unwrap();
        assert!(model.converged);
        assert_eq!(model.support_vectors.len(), 2);
        assert!((model.dual_coefficients[0] + 0.5).abs() < 1e-12);
        assert!((model.dual_coefficients[1] - 0.5).abs() < 1e-12);
        assert!(model.bias.abs() < 1e-12);
        assert!(model.decision_value(&fv(&[0.0])).unwrap().abs() < 1e-12);
        assert!((model.decision_value(&fv(&[1.0])).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn contradictory_duplicate_hits_cap() {
        let x = [fv(&[0.2, 0.4]), fv(&[0.2, 0.4])];
        let y = [1, -1];
        let caps = [3.0, 3.0];
        let sol = solve_dual(&x, &y, &Kernel::Rbf { gamma: 1.0 }, &caps, &SmoSettings::default()).unwrap();
        assert_eq!(sol.alpha, vec![3.0, 3.0]);
    }

    #[test]
    fn single_class_rejected() {
        let x = [fv(&[0.0]), fv(&[1.0])];
        let err = fit_svm(&x, &[1, 1], Kernel::Linear, PenaltyConfig::default(), &SmoSettings::default());
        assert_eq!(err.unwrap_err(), SvmError::SingleClass);
    }

    #[test]
    fn iteration_cap_returns_flagged_iterate() {
        let x: Vec<_> = (0..20).map(|i| fv(&[(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()])).collect();
        let y: Vec<i8> = (0..20).map(|i| if i % 3 == 0 { -1 } else { 1 }).collect();
        let settings = SmoSettings {
            max_passes: 0,
            ..SmoSettings::default()
        };
        let caps = vec![10.0; 20];
        let sol = solve_dual(&x, &y, &Kernel::Rbf { gamma: 0.5 }, &caps, &settings).unwrap();
        assert!(!sol.converged);
        assert_eq!(sol.iterations, 1);
    }

    #[test]
    fn zero_decision_predicts_explosion() {
        assert_eq!(sign_label(0.7), 1);
        assert_eq!(sign_label(-0.2), -1);
        assert_eq!(sign_label(0.0), 1);
    }

    #[test]
    fn model_without_support_vectors_is_rejected() {
        let err = SvmModel::new(Kernel::Linear, PenaltyConfig::default(), vec![], vec![], 0.0, true);
        assert_eq!(err.unwrap_err(), SvmError::NoSupportVectors);
    }
}
