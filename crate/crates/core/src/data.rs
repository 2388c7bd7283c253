//! Gas-measurement records: CSV ingestion, feature derivation, [-1, 1]
//! normalization and label encoding.

use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Header every input file must carry, in this order.
pub const CSV_HEADER: [&str; 5] = ["hc", "o2", "co", "co2", "exploded"];

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot open {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("bad header: expected `hc,o2,co,co2,exploded`, found `{0}`")]
    BadHeader(String),
    #[error("empty dataset")]
    Empty,
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("dataset must contain both classes (found {positives} exploded, {negatives} not exploded)")]
    SingleClass { positives: usize, negatives: usize },
    #[error("undefined ratio: {0} is zero")]
    UndefinedRatio(&'static str),
    #[error("train fraction {0} must lie strictly between 0 and 1")]
    BadFraction(f64),
    #[error("split of {n} samples at fraction {fraction} leaves one side empty")]
    EmptySplit { n: usize, fraction: f64 },
    #[error("feature set is empty")]
    NoFeatures,
    #[error("expected {expected} normalized values, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// One averaged measurement: concentrations in volume percent plus outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GasSample {
    pub hc: f64,
    pub o2: f64,
    pub co: f64,
    pub co2: f64,
    pub exploded: bool,
}

impl GasSample {
    pub fn new(hc: f64, o2: f64, co: f64, co2: f64, exploded: bool) -> Result<Self, DataError> {
        let sample = GasSample { hc, o2, co, co2, exploded };
        sample.validate()?;
        Ok(sample)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        for (name, v) in [("hc", self.hc), ("o2", self.o2), ("co", self.co), ("co2", self.co2)] {
            if !v.is_finite() || v < 0.0 {
                return Err(DataError::InvalidSample(format!(
                    "{name} = {v} is not a finite non-negative concentration"
                )));
            }
        }
        let total = self.hc + self.o2 + self.co + self.co2;
        if total > 100.0 {
            return Err(DataError::InvalidSample(format!(
                "concentrations sum to {total} vol %, above 100"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    samples: Vec<GasSample>,
    provenance: String,
}

impl Dataset {
    pub fn new(samples: Vec<GasSample>, provenance: impl Into<String>) -> Result<Self, DataError> {
        for s in &samples {
            s.validate()?;
        }
        Ok(Dataset { samples, provenance: provenance.into() })
    }

    pub fn samples(&self) -> &[GasSample] {
        &self.samples
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `(exploded, not exploded)` counts.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.samples.iter().filter(|s| s.exploded).count();
        (pos, self.samples.len() - pos)
    }

    /// Precondition shared by every classifier fit.
    pub fn require_both_classes(&self) -> Result<(), DataError> {
        if self.is_empty() {
            return Err(DataError::Empty);
        }
        let (positives, negatives) = self.class_counts();
        if positives == 0 || negatives == 0 {
            return Err(DataError::SingleClass { positives, negatives });
        }
        Ok(())
    }

    /// Rows picked by index, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: indices.iter().map(|&i| self.samples[i]).collect(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn exploded(&self) -> Vec<bool> {
        self.samples.iter().map(|s| s.exploded).collect()
    }
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(file, path.display().to_string())
}

/// Parses the `hc,o2,co,co2,exploded` format. Lines starting with `#` are
/// skipped; errors carry the 1-based physical line number.
pub fn read_csv<R: Read>(reader: R, provenance: impl Into<String>) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);

    let header = rdr.headers().map_err(|e| DataError::Malformed {
        line: e.position().map_or(1, |p| p.line()),
        message: e.to_string(),
    })?;
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(DataError::BadHeader(header.iter().collect::<Vec<_>>().join(",")));
    }

    let mut samples = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| DataError::Malformed {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let malformed = |message: String| DataError::Malformed { line, message };
        if record.len() != CSV_HEADER.len() {
            return Err(malformed(format!("expected 5 fields, found {}", record.len())));
        }
        let mut values = [0.0f64; 4];
        for (k, slot) in values.iter_mut().enumerate() {
            let field = &record[k];
            *slot = field
                .parse::<f64>()
                .map_err(|_| malformed(format!("{} = `{field}` is not a number", CSV_HEADER[k])))?;
        }
        let exploded = match &record[4] {
            "1" => true,
            "0" => false,
            other => return Err(malformed(format!("exploded = `{other}` must be 0 or 1"))),
        };
        let sample = GasSample::new(values[0], values[1], values[2], values[3], exploded)
            .map_err(|e| malformed(e.to_string()))?;
        samples.push(sample);
    }
    if samples.is_empty() {
        return Err(DataError::Empty);
    }
    Ok(Dataset { samples, provenance: provenance.into() })
}

pub fn write_csv<W: Write>(data: &Dataset, writer: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for s in data.samples() {
        w.write_record([
            s.hc.to_string(),
            s.o2.to_string(),
            s.co.to_string(),
            s.co2.to_string(),
            if s.exploded { "1".to_string() } else { "0".to_string() },
        ])?;
    }
    w.flush()
}

/// Which way the concentration ratio feature is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioDirection {
    #[default]
    O2OverHc,
    HcOverO2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Hc,
    O2,
    Co,
    Co2,
    Ratio,
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Attribute::Hc => "hc",
            Attribute::O2 => "o2",
            Attribute::Co => "co",
            Attribute::Co2 => "co2",
            Attribute::Ratio => "ratio",
        };
        f.write_str(name)
    }
}

/// Ordered list of raw attributes fed to the learners.
///
/// The default is HC, O2 and the O2/HC ratio; CO and CO2 are validated on
/// ingestion but left out.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub attributes: Vec<Attribute>,
    #[serde(default)]
    pub ratio: RatioDirection,
}

impl Default for FeatureSet {
    fn default() -> Self {
        FeatureSet {
            attributes: vec![Attribute::Hc, Attribute::O2, Attribute::Ratio],
            ratio: RatioDirection::O2OverHc,
        }
    }
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    /// Raw (un-normalized) attribute values. The ratio is always taken on
    /// raw concentrations.
    pub fn raw_values(&self, s: &GasSample) -> Result<Vec<f64>, DataError> {
        self.attributes
            .iter()
            .map(|attr| match attr {
                Attribute::Hc => Ok(s.hc),
                Attribute::O2 => Ok(s.o2),
                Attribute::Co => Ok(s.co),
                Attribute::Co2 => Ok(s.co2),
                Attribute::Ratio => match self.ratio {
                    RatioDirection::O2OverHc if s.hc == 0.0 => Err(DataError::UndefinedRatio("hc")),
                    RatioDirection::O2OverHc => Ok(s.o2 / s.hc),
                    RatioDirection::HcOverO2 if s.o2 == 0.0 => Err(DataError::UndefinedRatio("o2")),
                    RatioDirection::HcOverO2 => Ok(s.hc / s.o2),
                },
            })
            .collect()
    }
}

/// A normalized attribute vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl From<Vec<f64>> for FeatureVector {
    fn from(v: Vec<f64>) -> Self {
        FeatureVector(v)
    }
}

/// Observed range of one attribute over the training data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttributeRange {
    pub min: f64,
    pub max: f64,
}

impl AttributeRange {
    pub fn is_constant(&self) -> bool {
        self.max == self.min
    }

    /// `2 (v - min) / (max - min) - 1`; a constant attribute maps to 0.
    pub fn scale(&self, v: f64) -> f64 {
        if self.is_constant() {
            return 0.0;
        }
        let span = self.max - self.min;
        2.0 * (v - self.min) / span - 1.0
    }

    pub fn unscale(&self, scaled: f64) -> f64 {
        if self.is_constant() {
            return self.min;
        }
        self.min + (scaled + 1.0) * (self.max - self.min) / 2.0
    }
}

/// Per-attribute min/max fitted on training rows only, reused for held-out
/// and prediction rows. Out-of-range inputs are not clipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub features: FeatureSet,
    pub ranges: Vec<AttributeRange>,
}

pub fn fit_normalization(data: &Dataset, features: &FeatureSet) -> Result<NormalizationParams, DataError> {
    if data.is_empty() {
        return Err(DataError::Empty);
    }
    if features.is_empty() {
        return Err(DataError::NoFeatures);
    }
    let mut ranges = vec![
        AttributeRange {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        };
        features.len()
    ];
    for s in data.samples() {
        for (range, v) in ranges.iter_mut().zip(features.raw_values(s)?) {
            range.min = range.min.min(v);
            range.max = range.max.max(v);
        }
    }
    let params = NormalizationParams {
        features: features.clone(),
        ranges,
    };
    for attr in params.constant_attributes() {
        log::warn!("attribute `{attr}` is constant over the training data; it normalizes to 0");
    }
    Ok(params)
}

impl NormalizationParams {
    pub fn dim(&self) -> usize {
        self.ranges.len()
    }

    pub fn constant_attributes(&self) -> Vec<Attribute> {
        self.features
            .attributes
            .iter()
            .zip(&self.ranges)
            .filter(|(_, r)| r.is_constant())
            .map(|(a, _)| *a)
            .collect()
    }

    pub fn apply(&self, sample: &GasSample) -> Result<FeatureVector, DataError> {
        let raw = self.features.raw_values(sample)?;
        Ok(self.scale_raw(&raw))
    }

    pub fn scale_raw(&self, raw: &[f64]) -> FeatureVector {
        FeatureVector(self.ranges.iter().zip(raw).map(|(r, &v)| r.scale(v)).collect())
    }

    /// Inverse of the affine map; constant attributes come back as their value.
    pub fn invert(&self, x: &FeatureVector) -> Result<Vec<f64>, DataError> {
        if x.dim() != self.dim() {
            return Err(DataError::DimensionMismatch {
                expected: self.dim(),
                found: x.dim(),
            });
        }
        Ok(self.ranges.iter().zip(x.as_slice()).map(|(r, &v)| r.unscale(v)).collect())
    }

    pub fn apply_all(&self, data: &Dataset) -> Result<Vec<FeatureVector>, DataError> {
        data.samples().iter().map(|s| self.apply(s)).collect()
    }
}

/// Label convention per learner: explosion is always 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelScheme {
    /// 1 / 0, logistic regression.
    ZeroOne,
    /// 1 / -1, SVM.
    PlusMinusOne,
}

pub fn encode_labels(data: &Dataset, scheme: LabelScheme) -> Vec<i8> {
    let negative = match scheme {
        LabelScheme::ZeroOne => 0,
        LabelScheme::PlusMinusOne => -1,
    };
    data.samples()
        .iter()
        .map(|s| if s.exploded { 1 } else { negative })
        .collect()
}

/// Seeded shuffle, then the first `round(n * train_fraction)` rows train.
pub fn split_train_test(data: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset), DataError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DataError::BadFraction(train_fraction));
    }
    let n = data.len();
    let n_train = (n as f64 * train_fraction).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(DataError::EmptySplit {
            n,
            fraction: train_fraction,
        });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((data.subset(&idx[..n_train]), data.subset(&idx[n_train..])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(hc: f64, o2: f64, exploded: bool) -> GasSample {
        GasSample::new(hc, o2, 0.05, 10.0, exploded).unwrap()
    }

    fn dataset(rows: &[(f64, f64, bool)]) -> Dataset {
        Dataset::new(rows.iter().map(|&(h, o, e)| sample(h, o, e)).collect(), "test").unwrap()
    }

    #[test]
    fn parses_measurement_rows() {
        let text = "hc,o2,co,co2,exploded\n1.84,15.6,0.05,18.4,1\n1.81,15.3,0.61,13.3,0\n";
        let data = read_csv(text.as_bytes(), "mem").unwrap();
        assert_eq!(data.len(), 2);
        assert_eq!(
            data.samples()[0],
            GasSample { hc: 1.84, o2: 15.6, co: 0.05, co2: 18.4, exploded: true }
        );
        assert!(!data.samples()[1].exploded);
        assert_eq!(data.samples()[1].co, 0.61);
    }

    #[test]
    fn skips_comments() {
        let text = "hc,o2,co,co2,exploded\n# averaged readings\n1.0,15.0,0.0,10.0,1\n";
        assert_eq!(read_csv(text.as_bytes(), "mem").unwrap().len(), 1);
    }

    #[test]
    fn header_only_is_empty() {
        let err = read_csv("hc,o2,co,co2,exploded\n".as_bytes(), "mem").unwrap_err();
        assert_eq!(err.to_string(), "empty dataset");
    }

    #[test]
    fn malformed_row_reports_line() {
        let text = "hc,o2,co,co2,exploded\n1.0,15,0,10,1\n1.0,abc,0,10,0\n";
        match read_csv(text.as_bytes(), "mem").unwrap_err() {
            DataError::Malformed { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
        let text = "hc,o2,co,co2,exploded\n1.0,15,0,10,2\n";
        assert!(matches!(
            read_csv(text.as_bytes(), "mem").unwrap_err(),
            DataError::Malformed { line: 2, .. }
        ));
    }

    #[test]
    fn rejects_invalid_concentrations() {
        let text = "hc,o2,co,co2,exploded\n-1.0,15,0,10,1\n";
        assert!(matches!(
            read_csv(text.as_bytes(), "mem").unwrap_err(),
            DataError::Malformed { line: 2, .. }
        ));
        assert!(GasSample::new(50.0, 40.0, 5.0, 6.0, true).is_err());
        assert!(GasSample::new(f64::NAN, 1.0, 0.0, 0.0, true).is_err());
    }

    #[test]
    fn rejects_wrong_header() {
        let text = "o2,hc,co,co2,exploded\n1,1,0,0,1\n";
        assert!(matches!(read_csv(text.as_bytes(), "mem"), Err(DataError::BadHeader(_))));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(load_csv("/nonexistent/gas.csv"), Err(DataError::Io { .. })));
    }

    #[test]
    fn fit_records_min_max() {
        let data = dataset(&[(1.0, 15.0, true), (3.0, 18.0, false)]);
        let features = FeatureSet {
            attributes: vec![Attribute::Hc],
            ratio: RatioDirection::O2OverHc,
        };
        let params = fit_normalization(&data, &features).unwrap();
        assert_eq!(params.ranges[0], AttributeRange { min: 1.0, max: 3.0 });
    }

    #[test]
    fn constant_attribute_maps_to_zero() {
        let data = dataset(&[(2.0, 15.0, true), (2.0, 16.0, false), (2.0, 17.0, true)]);
        let params = fit_normalization(&data, &FeatureSet::default()).unwrap();
        assert_eq!(params.constant_attributes(), vec![Attribute::Hc]);
        let x = params.apply(&data.samples()[1]).unwrap();
        assert_eq!(x.0[0], 0.0);
    }

    #[test]
    fn endpoints_and_midpoint() {
        let r = AttributeRange { min: 0.7, max: 3.1 };
        assert_eq!(r.scale(3.1), 1.0);
        assert_eq!(r.scale(0.7), -1.0);
        assert!(r.scale((0.7 + 3.1) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn ratio_is_taken_on_raw_values() {
        let data = dataset(&[(1.0, 15.0, true), (2.0, 20.0, false), (4.0, 16.0, true)]);
        let params = fit_normalization(&data, &FeatureSet::default()).unwrap();
        // ratios 15, 10, 4
        assert_eq!(params.ranges[2], AttributeRange { min: 4.0, max: 15.0 });
        let flipped = FeatureSet {
            ratio: RatioDirection::HcOverO2,
            ..FeatureSet::default()
        };
        let params = fit_normalization(&data, &flipped).unwrap();
        assert_eq!(params.ranges[2].max, 0.25);
    }

    #[test]
    fn zero_hc_ratio_is_undefined() {
        let data = dataset(&[(0.0, 15.0, true)]);
        assert!(matches!(
            fit_normalization(&data, &FeatureSet::default()),
            Err(DataError::UndefinedRatio("hc"))
        ));
    }

    #[test]
    fn label_schemes() {
        let data = dataset(&[(1.0, 15.0, true), (1.0, 15.0, false)]);
        assert_eq!(encode_labels(&data, LabelScheme::ZeroOne), vec![1, 0]);
        assert_eq!(encode_labels(&data, LabelScheme::PlusMinusOne), vec![1, -1]);
    }

    #[test]
    fn single_class_guard() {
        let data = dataset(&[(1.0, 15.0, true), (1.2, 15.0, true)]);
        assert!(matches!(
            data.require_both_classes(),
            Err(DataError::SingleClass { positives: 2, negatives: 0 })
        ));
    }

    #[test]
    fn split_sizes() {
        let rows: Vec<_> = (0..58).map(|i| (0.5 + i as f64 * 0.05, 15.0, i % 2 == 0)).collect();
        let data = dataset(&rows);
        let (train, test) = split_train_test(&data, 0.8, 7).unwrap();
        assert_eq!((train.len(), test.len()), (46, 12));
        let (again, _) = split_train_test(&data, 0.8, 7).unwrap();
        assert_eq!(train, again);

        let small = data.subset(&[0, 1, 2, 3, 4]);
        let (train, test) = split_train_test(&small, 0.8, 1).unwrap();
        assert_eq!((train.len(), test.len()), (4, 1));

        assert!(matches!(split_train_test(&small, 0.05, 1), Err(DataError::EmptySplit { .. })));
        assert!(matches!(split_train_test(&small, 1.0, 1), Err(DataError::BadFraction(_))));
    }

    proptest! {
        #[test]
        fn normalization_is_monotone_and_invertible(
            lo in -50.0f64..50.0,
            span in 1e-3f64..100.0,
            a in 0.0f64..1.0,
            b in 0.0f64..1.0,
        ) {
            let r = AttributeRange { min: lo, max: lo + span };
            let (v, w) = (lo + a * span, lo + b * span);
            if v < w {
                prop_assert!(r.scale(v) < r.scale(w));
            }
            let back = r.unscale(r.scale(v));
            prop_assert!((back - v).abs() <= 1e-12 * v.abs().max(1.0));
        }

        #[test]
        fn split_partitions_indices(n in 2usize..80, frac in 0.2f64..0.8, seed in any::<u64>()) {
            let rows: Vec<_> = (0..n).map(|i| (0.1 + i as f64 * 0.01, 15.0, true)).collect();
            let data = dataset(&rows);
            if let Ok((train, test)) = split_train_test(&data, frac, seed) {
                let mut hcs: Vec<f64> = train.samples().iter().chain(test.samples()).map(|s| s.hc).collect();
                hcs.sort_by(f64::total_cmp);
                let expected: Vec<f64> = rows.iter().map(|r| r.0).collect();
                prop_assert_eq!(hcs, expected);
            }
        }
    }
}
