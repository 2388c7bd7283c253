//! Closed-form explosive region in (HC, O2) space and a seeded generator of
//! labeled measurement files drawn from it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, GasSample};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("region needs at least one limit knot")]
    NoKnots,
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error("n = {0} is below the minimum of 10 samples")]
    TooFewSamples(usize),
    #[error("label noise {0} must lie in [0, 0.5)")]
    BadNoise(f64),
    #[error("positive fraction {0} must lie in (0, 1)")]
    BadFraction(f64),
    #[error("invalid hc range ({0}, {1})")]
    BadHcRange(f64, f64),
    #[error("invalid o2 sampling band ({0}, {1})")]
    BadO2Band(f64, f64),
    #[error("target positive fraction {fraction} not reached within {draws} draws")]
    FractionUnreachable { fraction: f64, draws: usize },
}

/// Lower and upper HC limits at one oxygen level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitKnot {
    pub o2: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Explosive region bounded by piecewise-linear limit curves `L(o2)` and
/// `U(o2)` through the knots, held flat beyond the outermost knots, and
/// cut off outside the oxygen window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRegion {
    pub knots: Vec<LimitKnot>,
    pub o2_min: f64,
    pub o2_max: f64,
}

impl Default for OracleRegion {
    fn default() -> Self {
        OracleRegion {
            knots: vec![
                LimitKnot { o2: 15.0, lower: 1.0668, upper: 1.5491 },
                LimitKnot { o2: 16.0, lower: 0.89729, upper: 1.9645 },
                LimitKnot { o2: 18.0, lower: 0.76653, upper: 2.5871 },
                LimitKnot { o2: 20.0, lower: 0.70066, upper: 3.1448 },
            ],
            o2_min: 12.0,
            o2_max: 21.0,
        }
    }
}

impl OracleRegion {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.knots.is_empty() {
            return Err(SynthError::NoKnots);
        }
        if self.o2_min.is_nan() || self.o2_max.is_nan() || self.o2_min >= self.o2_max {
            return Err(SynthError::InvalidRegion(format!(
                "oxygen window ({}, {}) is empty",
                self.o2_min, self.o2_max
            )));
        }
        for k in &self.knots {
            if !(k.lower < k.upper && k.lower > 0.0) {
                return Err(SynthError::InvalidRegion(format!(
                    "at o2 = {} need 0 < lower < upper, got ({}, {})",
                    k.o2, k.lower, k.upper
                )));
            }
        }
        for pair in self.knots.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if a.o2.is_nan() || b.o2.is_nan() || a.o2 >= b.o2 {
                return Err(SynthError::InvalidRegion("knots must be sorted by increasing o2".into()));
            }
            // the region widens with oxygen
            if !(b.lower < a.lower && b.upper > a.upper) {
                return Err(SynthError::InvalidRegion(format!(
                    "limits must widen between o2 = {} and o2 = {}",
                    a.o2, b.o2
                )));
            }
        }
        Ok(())
    }

    fn interpolate(&self, o2: f64, pick: impl Fn(&LimitKnot) -> f64) -> f64 {
        let first = &self.knots[0];
        let last = &self.knots[self.knots.len() - 1];
        if o2 <= first.o2 {
            return pick(first);
        }
        if o2 >= last.o2 {
            return pick(last);
        }
        let seg = self
            .knots
            .windows(2)
            .find(|w| o2 <= w[1].o2)
            .expect("o2 lies strictly inside the knot range");
        let t = (o2 - seg[0].o2) / (seg[1].o2 - seg[0].o2);
        pick(&seg[0]) + t * (pick(&seg[1]) - pick(&seg[0]))
    }

    pub fn lower_limit(&self, o2: f64) -> f64 {
        self.interpolate(o2, |k| k.lower)
    }

    pub fn upper_limit(&self, o2: f64) -> f64 {
        self.interpolate(o2, |k| k.upper)
    }

    pub fn in_window(&self, o2: f64) -> bool {
        (self.o2_min..=self.o2_max).contains(&o2)
    }

    /// True iff `o2` is inside the window and `L(o2) <= hc <= U(o2)`.
    pub fn label(&self, hc: f64, o2: f64) -> bool {
        self.in_window(o2) && self.lower_limit(o2) <= hc && hc <= self.upper_limit(o2)
    }
}

/// How the cosmetic CO2 column is filled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Co2Policy {
    /// `co2 = max(total - o2, 0)`.
    Complement { total: f64 },
    Constant { value: f64 },
}

impl Default for Co2Policy {
    fn default() -> Self {
        Co2Policy::Complement { total: 33.0 }
    }
}

impl Co2Policy {
    fn fill(&self, o2: f64) -> f64 {
        match *self {
            Co2Policy::Complement { total } => (total - o2).max(0.0),
            Co2Policy::Constant { value } => value,
        }
    }
}

pub const CO_FILL: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n: usize,
    pub seed: u64,
    /// Probability of flipping each label.
    pub noise: f64,
    /// Share of exploded rows enforced by rejection; `None` keeps the
    /// natural share of the sampling box.
    pub positive_fraction: Option<f64>,
    pub hc_range: (f64, f64),
    /// O2 is drawn from the oracle window widened by this much on each side.
    pub o2_margin: f64,
    /// Explicit O2 sampling band; overrides window and margin when set.
    #[serde(default)]
    pub o2_band: Option<(f64, f64)>,
    pub co2: Co2Policy,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n: 500,
            seed: 42,
            noise: 0.0,
            positive_fraction: Some(0.78),
            hc_range: (0.5, 3.5),
            o2_margin: 0.0,
            o2_band: None,
            co2: Co2Policy::default(),
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n < 10 {
            return Err(SynthError::TooFewSamples(self.n));
        }
        if !(0.0..0.5).contains(&self.noise) {
            return Err(SynthError::BadNoise(self.noise));
        }
        if let Some(f) = self.positive_fraction {
            if !(f > 0.0 && f < 1.0) {
                return Err(SynthError::BadFraction(f));
            }
        }
        let (lo, hi) = self.hc_range;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err(SynthError::BadHcRange(lo, hi));
        }
        if !(self.o2_margin >= 0.0 && self.o2_margin.is_finite()) {
            return Err(SynthError::BadO2Band(self.o2_margin, self.o2_margin));
        }
        if let Some((lo, hi)) = self.o2_band {
            if !(lo >= 0.0 && lo < hi && hi.is_finite()) {
                return Err(SynthError::BadO2Band(lo, hi));
            }
        }
        Ok(())
    }
}

/// Draws `n` labeled samples. With a target fraction, candidates are drawn
/// until both class quotas are filled; the quota applies to the final
/// (possibly flipped) label.
pub fn generate(region: &OracleRegion, config: &GeneratorConfig) -> Result<Dataset, SynthError> {
    region.validate()?;
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (hc_lo, hc_hi) = config.hc_range;
    let (o2_lo, o2_hi) = config.o2_band.unwrap_or((
        (region.o2_min - config.o2_margin).max(0.0),
        region.o2_max + config.o2_margin,
    ));

    let quota = config
        .positive_fraction
        .map(|f| ((config.n as f64 * f).round() as usize).clamp(1, config.n - 1));
    let mut positives = 0usize;
    let mut samples = Vec::with_capacity(config.n);
    let max_draws = 100 * config.n;
    let mut draws = 0usize;

    while samples.len() < config.n {
        if draws == max_draws {
            return Err(SynthError::FractionUnreachable {
                fraction: config.positive_fraction.unwrap_or(f64::NAN),
                draws,
            });
        }
        draws += 1;
        let hc = rng.random_range(hc_lo..hc_hi);
        let o2 = rng.random_range(o2_lo..o2_hi);
        let mut exploded = region.label(hc, o2);
        if config.noise > 0.0 && rng.random_bool(config.noise) {
            exploded = !exploded;
        }
        if let Some(target) = quota {
            let negatives = samples.len() - positives;
            let full = if exploded {
                positives >= target
            } else {
                negatives >= config.n - target
            };
            if full {
                continue;
            }
        }
        positives += usize::from(exploded);
        samples.push(GasSample {
            hc,
            o2,
            co: CO_FILL,
            co2: config.co2.fill(o2),
            exploded,
        });
    }
    Dataset::new(samples, format!("synthetic(seed={}, noise={})", config.seed, config.noise))
        .map_err(|e| SynthError::InvalidRegion(e.to_string()))
}
