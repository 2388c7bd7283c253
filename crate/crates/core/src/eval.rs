//! v-fold cross-validation, error-type bookkeeping and the sweep over the
//! penalty ratio `w1 / w2`.
//!
//! The positive class is "exploded". A type-I error is a missed explosion
//! (false negative); a type-II error is a false alarm (false positive).

use std::fmt;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, FeatureSet};
use crate::model::{train, Classifier, LearnerConfig, SvmConfig};
use crate::svm::{Kernel, PenaltyConfig, SmoSettings};
use crate::Result;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("need 2 <= v <= n folds, got v = {v} for n = {n}")]
    BadFoldCount { v: usize, n: usize },
    #[error("training portion of fold {fold} contains a single class")]
    SingleClassFold { fold: usize },
    #[error("repeats must be >= 1")]
    NoRepeats,
    #[error("penalty ratio grid is empty")]
    EmptyGrid,
    #[error("penalty ratio {0} must be >= 1")]
    BadRatio(f64),
    #[error("base penalty must be positive, got {0}")]
    BadBasePenalty(f64),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn record(&mut self, actual: bool, predicted: bool) {
        match (actual, predicted) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Missed explosions.
    pub fn type1(&self) -> usize {
        self.fn_
    }

    /// False alarms.
    pub fn type2(&self) -> usize {
        self.fp
    }

    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            return 0.0;
        }
        (self.tp + self.tn) as f64 / self.total() as f64
    }
}

impl std::ops::AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.tn += o.tn;
        self.fn_ += o.fn_;
    }
}

impl std::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |mut acc, c| {
            acc += c;
            acc
        })
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Standard deviation with divisor `n - 1`; zero for fewer than two values.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Mixes a base seed with a unit index (splitmix64 finalizer).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn check_folds(n: usize, v: usize) -> Result<(), EvalError> {
    if v < 2 || v > n {
        return Err(EvalError::BadFoldCount { v, n });
    }
    Ok(())
}

/// Seeded partition of `0..n` into `v` folds whose sizes differ by at most
/// one. Indices within each fold are ascending.
pub fn kfold_indices(n: usize, v: usize, seed: u64) -> Result<Vec<Vec<usize>>, EvalError> {
    check_folds(n, v)?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::with_capacity(n / v + 1); v];
    for (pos, i) in idx.into_iter().enumerate() {
        folds[pos % v].push(i);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Like [`kfold_indices`] but deals each class round-robin, so every fold
/// keeps the class proportions (up to one sample).
pub fn stratified_folds(labels: &[bool], v: usize, seed: u64) -> Result<Vec<Vec<usize>>, EvalError> {
    check_folds(labels.len(), v)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positives: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let mut negatives: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    positives.shuffle(&mut rng);
    negatives.shuffle(&mut rng);
    let mut folds = vec![Vec::new(); v];
    for (pos, i) in positives.into_iter().chain(negatives).enumerate() {
        folds[pos % v].push(i);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Result of training on one fold's complement and scoring the fold.
#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub model: Classifier,
    pub counts: ConfusionCounts,
}

/// Trains on `train_idx` only (normalization included) and scores `test_idx`.
pub fn run_fold(
    data: &Dataset,
    train_idx: &[usize],
    test_idx: &[usize],
    features: &FeatureSet,
    learner: &LearnerConfig,
) -> Result<FoldOutcome> {
    let train_set = data.subset(train_idx);
    let model = train(&train_set, features, learner)?;
    let mut counts = ConfusionCounts::default();
    for &i in test_idx {
        let s = &data.samples()[i];
        counts.record(s.exploded, model.predict_exploded(s)?);
    }
    Ok(FoldOutcome { model, counts })
}

fn with_unit_seed(learner: &LearnerConfig, seed: u64) -> LearnerConfig {
    match learner {
        LearnerConfig::Svm(cfg) => LearnerConfig::Svm(SvmConfig {
            smo: SmoSettings { seed, ..cfg.smo },
            ..cfg.clone()
        }),
        other => other.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub seed: u64,
    /// Percentages.
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub folds: Vec<ConfusionCounts>,
}

impl CvReport {
    pub fn pooled(&self) -> ConfusionCounts {
        self.folds.iter().copied().sum()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        write_fold_rows(writer, std::slice::from_ref(self))
    }
}

impl fmt::Display for CvReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>6} {:>10} {:>5} {:>5} {:>5} {:>5}", "fold", "accuracy", "tp", "fp", "tn", "fn")?;
        for (k, (acc, c)) in self.fold_accuracies.iter().zip(&self.folds).enumerate() {
            writeln!(f, "{:>6} {:>10.2} {:>5} {:>5} {:>5} {:>5}", k + 1, acc, c.tp, c.fp, c.tn, c.fn_)?;
        }
        writeln!(f, "{:>6} {:>10.2}", "mean", self.mean)?;
        write!(f, "{:>6} {:>10.2}", "std", self.std)
    }
}

/// Per-fold CSV: `repeat,seed,fold,accuracy,tp,fp,tn,fn`.
pub fn write_fold_rows<W: Write>(mut w: W, reports: &[CvReport]) -> std::io::Result<()> {
    writeln!(w, "repeat,seed,fold,accuracy,tp,fp,tn,fn")?;
    for (r, report) in reports.iter().enumerate() {
        for (k, (acc, c)) in report.fold_accuracies.iter().zip(&report.folds).enumerate() {
            writeln!(w, "{},{},{},{},{},{},{},{}", r + 1, report.seed, k + 1, acc, c.tp, c.fp, c.tn, c.fn_)?;
        }
    }
    Ok(())
}

/// Stratified v-fold cross-validation. Normalization is refitted inside
/// every fold.
pub fn cross_validate(data: &Dataset, features: &FeatureSet, learner: &LearnerConfig, v: usize, seed: u64) -> Result<CvReport> {
    data.require_both_classes()?;
    let labels = data.exploded();
    let folds = stratified_folds(&labels, v, seed)?;
    let mut splits = Vec::with_capacity(v);
    for (k, test) in folds.iter().enumerate() {
        let train_idx: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != k)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        let has_pos = train_idx.iter().any(|&i| labels[i]);
        let has_neg = train_idx.iter().any(|&i| !labels[i]);
        if !(has_pos && has_neg) {
            return Err(EvalError::SingleClassFold { fold: k + 1 }.into());
        }
        splits.push((train_idx, test));
    }

    let outcomes: Vec<ConfusionCounts> = splits
        .par_iter()
        .enumerate()
        .map(|(k, (train_idx, test))| {
            let unit = with_unit_seed(learner, derive_seed(seed, k as u64));
            run_fold(data, train_idx, test, features, &unit).map(|o| o.counts)
        })
        .collect::<Result<_>>()?;

    let fold_accuracies: Vec<f64> = outcomes.iter().map(|c| 100.0 * c.accuracy()).collect();
    Ok(CvReport {
        seed,
        mean: mean(&fold_accuracies),
        std: sample_std(&fold_accuracies),
        fold_accuracies,
        folds: outcomes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatedCv {
    pub reports: Vec<CvReport>,
    /// Mean over repeats of the per-repeat mean accuracy.
    pub mean: f64,
    /// Sample std over repeats of the per-repeat mean accuracy.
    pub std: f64,
}

impl RepeatedCv {
    /// Summary CSV: `repeat,seed,mean,std`, one row per repeat.
    pub fn write_summary_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "repeat,seed,mean,std")?;
        for (r, rep) in self.reports.iter().enumerate() {
            writeln!(w, "{},{},{},{}", r + 1, rep.seed, rep.mean, rep.std)?;
        }
        Ok(())
    }
}

impl fmt::Display for RepeatedCv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>6} {:>20} {:>8} {:>8}", "repeat", "seed", "mean", "std")?;
        for (r, rep) in self.reports.iter().enumerate() {
            writeln!(f, "{:>6} {:>20} {:>8.2} {:>8.2}", r + 1, rep.seed, rep.mean, rep.std)?;
        }
        write!(f, "{:>6} {:>20} {:>8.2} {:>8.2}", "all", "", self.mean, self.std)
    }
}

/// One cross-validation per repeat, with seeds `base_seed + i`.
pub fn repeated_cv(
    data: &Dataset,
    features: &FeatureSet,
    learner: &LearnerConfig,
    v: usize,
    repeats: usize,
    base_seed: u64,
) -> Result<RepeatedCv> {
    if repeats == 0 {
        return Err(EvalError::NoRepeats.into());
    }
    let reports = (0..repeats as u64)
        .into_par_iter()
        .map(|i| cross_validate(data, features, learner, v, base_seed.wrapping_add(i)))
        .collect::<Result<Vec<_>>>()?;
    let means: Vec<f64> = reports.iter().map(|r| r.mean).collect();
    Ok(RepeatedCv {
        mean: mean(&means),
        std: sample_std(&means),
        reports,
    })
}

/// `5, 10, ..., 60`.
pub fn default_gamma_grid() -> Vec<f64> {
    (1..=12).map(|k| 5.0 * k as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub gamma: f64,
    pub counts: ConfusionCounts,
    pub type1_rate: f64,
    pub type2_rate: f64,
    pub whole_error_rate: f64,
}

impl SweepRow {
    pub fn from_counts(gamma: f64, counts: ConfusionCounts) -> Self {
        let n = counts.total().max(1) as f64;
        SweepRow {
            gamma,
            counts,
            type1_rate: counts.type1() as f64 / n,
            type2_rate: counts.type2() as f64 / n,
            whole_error_rate: (counts.type1() + counts.type2()) as f64 / n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    /// `gamma<TAB>type1<TAB>type2<TAB>whole`, rates as fractions.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "gamma\ttype1\ttype2\twhole")?;
        for r in &self.rows {
            writeln!(w, "{}\t{}\t{}\t{}", r.gamma, r.type1_rate, r.type2_rate, r.whole_error_rate)?;
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "gamma,type1_rate,type2_rate,whole_error_rate,tp,fp,tn,fn")?;
        for r in &self.rows {
            let c = r.counts;
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.gamma, r.type1_rate, r.type2_rate, r.whole_error_rate, c.tp, c.fp, c.tn, c.fn_
            )?;
        }
        Ok(())
    }
}

impl fmt::Display for SweepReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:>8} {:>8} {:>8} {:>8}", "gamma", "type1", "type2", "whole")?;
        for r in &self.rows {
            write!(
                f,
                "\n{:>8} {:>8.4} {:>8.4} {:>8.4}",
                r.gamma, r.type1_rate, r.type2_rate, r.whole_error_rate
            )?;
        }
        Ok(())
    }
}

/// Cross-validates the SVM at `w1 = gamma * base_w2`, `w2 = base_w2` for
/// each ratio. Every grid point uses the same folds; error rates are over
/// pooled held-out predictions.
#[allow(clippy::too_many_arguments)]
pub fn penalty_sweep(
    data: &Dataset,
    features: &FeatureSet,
    kernel: Kernel,
    smo: SmoSettings,
    base_w2: f64,
    gamma_grid: &[f64],
    v: usize,
    seed: u64,
) -> Result<SweepReport> {
    if gamma_grid.is_empty() {
        return Err(EvalError::EmptyGrid.into());
    }
    if let Some(&bad) = gamma_grid.iter().find(|&&g| !(g >= 1.0 && g.is_finite())) {
        return Err(EvalError::BadRatio(bad).into());
    }
    if !(base_w2 > 0.0 && base_w2.is_finite()) {
        return Err(EvalError::BadBasePenalty(base_w2).into());
    }
    let rows = gamma_grid
        .par_iter()
        .map(|&gamma| {
            let learner = LearnerConfig::Svm(SvmConfig {
                kernel,
                penalties: PenaltyConfig::from_ratio(gamma, base_w2)?,
                smo,
            });
            let report = cross_validate(data, features, &learner, v, seed)?;
            Ok(SweepRow::from_counts(gamma, report.pooled()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport { rows })
}

/// Among rows with the lowest type-I rate, the ratio with the lowest whole
/// error rate; remaining ties go to the smallest ratio.
pub fn choose_ratio(report: &SweepReport) -> Option<f64> {
    report
        .rows
        .iter()
        .min_by(|a, b| {
            a.type1_rate
                .total_cmp(&b.type1_rate)
                .then(a.whole_error_rate.total_cmp(&b.whole_error_rate))
                .then(a.gamma.total_cmp(&b.gamma))
        })
        .map(|r| r.gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::GasSample;
    use proptest::prelude::*;

    fn row(gamma: f64, t1: f64, t2: f64, whole: f64) -> SweepRow {
        SweepRow {
            gamma,
            counts: ConfusionCounts::default(),
            type1_rate: t1,
            type2_rate: t2,
            whole_error_rate: whole,
        }
    }

    #[test]
    fn fold_sizes() {
        let folds = kfold_indices(58, 5, 3).unwrap();
        let mut sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![11, 11, 12, 12, 12]);
        let loo = kfold_indices(5, 5, 3).unwrap();
        assert!(loo.iter().all(|f| f.len() == 1));
        assert_eq!(kfold_indices(58, 5, 3).unwrap(), folds);
        assert_eq!(kfold_indices(4, 5, 0).unwrap_err(), EvalError::BadFoldCount { v: 5, n: 4 });
        assert!(kfold_indices(10, 1, 0).is_err());
    }

    #[test]
    fn stratified_folds_keep_proportions() {
        let labels: Vec<bool> = (0..58).map(|i| i % 9 != 0).collect(); // 7 negatives
        let folds = stratified_folds(&labels, 5, 11).unwrap();
        for f in &folds {
            let neg = f.iter().filter(|&&i| !labels[i]).count();
            assert!((1..=2).contains(&neg), "fold has {neg} negatives");
        }
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn sample_std_divisor() {
        let acc = [85.0, 100.0, 100.0, 92.0, 90.0];
        assert!((mean(&acc) - 93.4).abs() < 1e-12);
        assert!((sample_std(&acc) - 6.5422).abs() < 1e-4);
        assert_eq!(sample_std(&[3.0]), 0.0);
    }

    #[test]
    fn confusion_identities() {
        let mut c = ConfusionCounts::default();
        for (a, p) in [(true, true), (true, false), (false, false), (false, true), (true, true)] {
            c.record(a, p);
        }
        assert_eq!(c, ConfusionCounts { tp: 2, fp: 1, tn: 1, fn_: 1 });
        assert_eq!(c.total(), 5);
        assert_eq!(c.accuracy(), 0.6);
        let row = SweepRow::from_counts(5.0, c);
        assert_eq!(row.whole_error_rate * 5.0, (c.type1() + c.type2()) as f64);
    }

    #[test]
    fn choose_ratio_prefers_type1() {
        let report = SweepReport {
            rows: vec![row(5.0, 0.03, 0.06, 0.09), row(10.0, 0.05, 0.03, 0.08)],
        };
        assert_eq!(choose_ratio(&report), Some(5.0));
        let flat = SweepReport {
            rows: vec![row(15.0, 0.1, 0.1, 0.2), row(5.0, 0.1, 0.1, 0.2), row(10.0, 0.1, 0.1, 0.2)],
        };
        assert_eq!(choose_ratio(&flat), Some(5.0));
        assert_eq!(choose_ratio(&SweepReport { rows: vec![] }), None);
    }

    #[test]
    fn default_grid() {
        assert_eq!(
            default_gamma_grid(),
            vec![5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0, 55.0, 60.0]
        );
    }

    #[test]
    fn sweep_rejects_bad_grid() {
        let data = Dataset::new(
            vec![
                GasSample::new(1.0, 15.0, 0.0, 0.0, true).unwrap(),
                GasSample::new(2.0, 15.0, 0.0, 0.0, false).unwrap(),
            ],
            "t",
        )
        .unwrap();
        let run = |grid: &[f64]| {
            penalty_sweep(&data, &FeatureSet::default(), Kernel::Linear, SmoSettings::default(), 1.0, grid, 2, 0)
                .unwrap_err()
                .to_string()
        };
        assert_eq!(run(&[]), EvalError::EmptyGrid.to_string());
        assert_eq!(run(&[0.5]), EvalError::BadRatio(0.5).to_string());
    }

    #[test]
    fn single_class_training_fold_is_an_error() {
        // one negative: its fold's complement has no negatives
        let mut samples: Vec<GasSample> = (0..10)
            .map(|i| GasSample::new(1.0 + 0.1 * i as f64, 15.0, 0.0, 0.0, true).unwrap())
            .collect();
        samples[3].exploded = false;
        let data = Dataset::new(samples, "t").unwrap();
        let learner = LearnerConfig::Svm(SvmConfig::default());
        let err = cross_validate(&data, &FeatureSet::default(), &learner, 5, 0).unwrap_err();
        assert!(matches!(err, crate::Error::Eval(EvalError::SingleClassFold { .. })), "{err}");
    }

    proptest! {
        #[test]
        fn folds_partition(n in 2usize..120, v in 2usize..12, seed in any::<u64>()) {
            prop_assume!(v <= n);
            let folds = kfold_indices(n, v, seed).unwrap();
            let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }

        #[test]
        fn stratified_folds_partition(labels in proptest::collection::vec(any::<bool>(), 5..80), seed in any::<u64>()) {
            let folds = stratified_folds(&labels, 5, seed).unwrap();
            let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        }

        #[test]
        fn choose_ratio_ignores_row_order(
            rows in proptest::collection::vec((1u32..13, 0u32..5, 0u32..5), 1..12),
            seed in any::<u64>(),
        ) {
            let rows: Vec<SweepRow> = rows
                .iter()
                .map(|&(k, a, b)| row(5.0 * k as f64, a as f64 / 10.0, b as f64 / 10.0, (a + b) as f64 / 10.0))
                .collect();
            let mut shuffled = rows.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(
                choose_ratio(&SweepReport { rows }),
                choose_ratio(&SweepReport { rows: shuffled })
            );
        }
    }
}
