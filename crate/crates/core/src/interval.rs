//! Explosive HC interval at fixed oxygen: the set where the fitted logistic
//! model gives `p >= 0.5`, bracketed on a grid and refined by bisection.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::GasSample;
use crate::model::FittedLogistic;

#[derive(Debug, Error, PartialEq)]
pub enum IntervalError {
    #[error("hc search range ({0}, {1}) must satisfy 0 < low < high")]
    BadRange(f64, f64),
    #[error("grid needs at least 100 points, got {0}")]
    TooFewGridPoints(usize),
    #[error("root tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("o2 = {0} is not a valid concentration")]
    BadOxygen(f64),
    #[error("non-finite probability at hc = {hc}, o2 = {o2}")]
    NonFinite { hc: f64, o2: f64 },
    #[error("{} disjoint explosive regions at o2 = {o2}: {}", .roots.len(), format_pairs(.roots))]
    MultipleRegions { o2: f64, roots: Vec<(f64, f64)> },
    #[error("explosive region at o2 = {o2} reaches the {side} end of the search range ({edge})")]
    Unbounded { o2: f64, side: &'static str, edge: f64 },
    #[error("feature extraction failed: {0}")]
    Features(String),
}

fn format_pairs(roots: &[(f64, f64)]) -> String {
    roots
        .iter()
        .map(|(a, b)| format!("[{a}, {b}]"))
        .collect::<Vec<_>>()
        .join(", ")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalSettings {
    pub hc_low: f64,
    pub hc_high: f64,
    pub grid_points: usize,
    pub root_tol: f64,
}

impl Default for IntervalSettings {
    fn default() -> Self {
        IntervalSettings {
            hc_low: 0.1,
            hc_high: 5.0,
            grid_points: 2000,
            root_tol: 1e-6,
        }
    }
}

impl IntervalSettings {
    pub fn validate(&self) -> Result<(), IntervalError> {
        if !(self.hc_low > 0.0 && self.hc_low < self.hc_high && self.hc_high.is_finite()) {
            return Err(IntervalError::BadRange(self.hc_low, self.hc_high));
        }
        if self.grid_points < 100 {
            return Err(IntervalError::TooFewGridPoints(self.grid_points));
        }
        if self.root_tol.is_nan() || self.root_tol <= 0.0 {
            return Err(IntervalError::BadTolerance(self.root_tol));
        }
        Ok(())
    }

    fn grid(&self) -> impl Iterator<Item = f64> + '_ {
        let step = (self.hc_high - self.hc_low) / (self.grid_points - 1) as f64;
        (0..self.grid_points).map(move |i| {
            if i + 1 == self.grid_points {
                self.hc_high
            } else {
                self.hc_low + step * i as f64
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HcLimits {
    pub lower: f64,
    pub upper: f64,
}

impl HcLimits {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, other: &HcLimits) -> bool {
        self.lower <= other.lower && other.upper <= self.upper
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplosionInterval {
    pub o2: f64,
    /// `None` when no grid point is explosive at this oxygen level.
    pub limits: Option<HcLimits>,
}

impl ExplosionInterval {
    pub fn present(&self) -> bool {
        self.limits.is_some()
    }
}

/// Query point: CO and CO2 are held at zero.
fn query_sample(hc: f64, o2: f64) -> GasSample {
    GasSample {
        hc,
        o2,
        co: 0.0,
        co2: 0.0,
        exploded: false,
    }
}

fn log_odds_at(model: &FittedLogistic, hc: f64, o2: f64) -> Result<f64, IntervalError> {
    let g = model
        .log_odds(&query_sample(hc, o2))
        .map_err(|e| IntervalError::Features(e.to_string()))?;
    if g.is_nan() {
        return Err(IntervalError::NonFinite { hc, o2 });
    }
    Ok(g)
}

/// `(hc, g, p)` along the grid, for plotting the probability profile.
pub fn probability_profile(model: &FittedLogistic, o2: f64, settings: &IntervalSettings) -> Result<Vec<(f64, f64, f64)>, IntervalError> {
    settings.validate()?;
    settings
        .grid()
        .map(|hc| {
            let g = log_odds_at(model, hc, o2)?;
            Ok((hc, g, crate::logistic::sigmoid(g)))
        })
        .collect()
}

/// Bisects `g` between `below` (g <= 0) and `above` (g > 0) until the
/// probability is within `root_tol` of one half.
fn refine(model: &FittedLogistic, o2: f64, mut below: f64, mut above: f64, root_tol: f64) -> Result<f64, IntervalError> {
    loop {
        let mid = 0.5 * (below + above);
        if mid == below || mid == above {
            return Ok(mid);
        }
        let g = log_odds_at(model, mid, o2)?;
        if (crate::logistic::sigmoid(g) - 0.5).abs() <= root_tol {
            return Ok(mid);
        }
        if g > 0.0 {
            above = mid;
        } else {
            below = mid;
        }
    }
}

pub fn explosion_interval(model: &FittedLogistic, o2: f64, settings: &IntervalSettings) -> Result<ExplosionInterval, IntervalError> {
    settings.validate()?;
    if !(o2 >= 0.0 && o2.is_finite()) {
        return Err(IntervalError::BadOxygen(o2));
    }
    let grid: Vec<f64> = settings.grid().collect();
    let mut explosive = Vec::with_capacity(grid.len());
    for &hc in &grid {
        explosive.push(log_odds_at(model, hc, o2)? > 0.0);
    }

    // runs of consecutive explosive grid points, as index ranges
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for (i, &e) in explosive.iter().enumerate() {
        if !e {
            continue;
        }
        match runs.last_mut() {
            Some(run) if run.1 + 1 == i => run.1 = i,
            _ => runs.push((i, i)),
        }
    }
    if runs.is_empty() {
        return Ok(ExplosionInterval { o2, limits: None });
    }

    let last = grid.len() - 1;
    let mut roots = Vec::with_capacity(runs.len());
    for &(start, end) in &runs {
        let lower = if start == 0 {
            grid[0]
        } else {
            refine(model, o2, grid[start - 1], grid[start], settings.root_tol)?
        };
        let upper = if end == last {
            grid[last]
        } else {
            refine(model, o2, grid[end + 1], grid[end], settings.root_tol)?
        };
        roots.push((lower, upper));
    }
    if runs.len() > 1 {
        return Err(IntervalError::MultipleRegions { o2, roots });
    }
    let (start, end) = runs[0];
    if start == 0 {
        return Err(IntervalError::Unbounded {
            o2,
            side: "low",
            edge: grid[0],
        });
    }
    if end == last {
        return Err(IntervalError::Unbounded {
            o2,
            side: "high",
            edge: grid[last],
        });
    }
    let (lower, upper) = roots[0];
    Ok(ExplosionInterval {
        o2,
        limits: Some(HcLimits { lower, upper }),
    })
}
