//! Oil-gas explosion prediction from gas-concentration measurements.
//!
//! Two learners are provided: a kernel SVM with separate slack penalties
//! for missed explosions and false alarms ([`svm`]), and a logistic
//! regression ([`logistic`]) whose probability surface can be inverted at a
//! fixed oxygen level to give explosive HC intervals ([`interval`]).
//! [`eval`] holds the cross-validation harness and penalty-ratio sweep, and
//! [`synth`] generates labeled data from a closed-form explosive region.

pub mod data;
pub mod eval;
pub mod interval;
pub mod logistic;
pub mod model;
pub mod svm;
pub mod synth;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] data::DataError),
    #[error(transparent)]
    Svm(#[from] svm::SvmError),
    #[error(transparent)]
    Logistic(#[from] logistic::LogisticError),
    #[error(transparent)]
    Interval(#[from] interval::IntervalError),
    #[error(transparent)]
    Eval(#[from] eval::EvalError),
    #[error(transparent)]
    Synth(#[from] synth::SynthError),
    #[error("model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
