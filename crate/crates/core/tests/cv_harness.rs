use gasgate::data::{fit_normalization, Dataset, FeatureSet, GasSample};
use gasgate::eval::{cross_validate, penalty_sweep, repeated_cv, run_fold, stratified_folds};
use gasgate::logistic::LogisticSettings;
use gasgate::model::{LearnerConfig, SvmConfig};
use gasgate::svm::{Kernel, SmoSettings};
use gasgate::synth::{generate, GeneratorConfig, OracleRegion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn oracle(n: usize, seed: u64) -> Dataset {
    generate(&OracleRegion::default(), &GeneratorConfig { n, seed, ..GeneratorConfig::default() }).unwrap()
}

fn svm() -> LearnerConfig {
    LearnerConfig::Svm(SvmConfig::default())
}

#[test]
fn oracle_corpus_is_learnable() {
    let data = oracle(300, 1);
    let report = cross_validate(&data, &FeatureSet::default(), &svm(), 5, 9).unwrap();
    assert!(report.mean >= 95.0, "svm mean accuracy {}", report.mean);
    assert_eq!(report.folds.iter().map(|c| c.total()).sum::<usize>(), data.len());
}

#[test]
fn random_labels_give_chance_accuracy() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let samples: Vec<GasSample> = (0..200)
        .map(|_| {
            let hc = rng.random_range(0.5..3.5);
            let o2 = rng.random_range(12.0..21.0);
            GasSample::new(hc, o2, 0.05, 33.0 - o2, rng.random::<bool>()).unwrap()
        })
        .collect();
    let data = Dataset::new(samples, "random").unwrap();
    for learner in [svm(), LearnerConfig::Logistic(LogisticSettings::default())] {
        let report = cross_validate(&data, &FeatureSet::default(), &learner, 5, 3).unwrap();
        assert!((report.mean - 50.0).abs() <= 15.0, "mean accuracy {}", report.mean);
    }
}

#[test]
fn held_out_rows_never_reach_training() {
    let data = oracle(100, 2);
    let folds = stratified_folds(&data.exploded(), 5, 4).unwrap();
    let test = folds[0].clone();
    let train: Vec<usize> = folds[1..].iter().flatten().copied().collect();
    let features = FeatureSet::default();

    // the same rows with the held-out fold pushed far outside the training range
    let mut poisoned: Vec<GasSample> = data.samples().to_vec();
    for &i in &test {
        poisoned[i].hc = 60.0;
        poisoned[i].o2 = 1.0;
        poisoned[i].co2 = 0.0;
    }
    let poisoned = Dataset::new(poisoned, "poisoned").unwrap();

    let clean = run_fold(&data, &train, &test, &features, &svm()).unwrap();
    let dirty = run_fold(&poisoned, &train, &test, &features, &svm()).unwrap();
    assert_eq!(clean.model, dirty.model);
    assert_eq!(*clean.model.normalization(), fit_normalization(&data.subset(&train), &features).unwrap());
}

#[test]
fn single_repeat_matches_plain_cross_validation() {
    let data = oracle(120, 3);
    let learner = LearnerConfig::Logistic(LogisticSettings::default());
    let single = cross_validate(&data, &FeatureSet::default(), &learner, 5, 21).unwrap();
    let repeated = repeated_cv(&data, &FeatureSet::default(), &learner, 5, 1, 21).unwrap();
    assert_eq!(repeated.reports, vec![single.clone()]);
    assert_eq!(repeated.mean, single.mean);
    assert_eq!(repeated.std, 0.0);
}

#[test]
fn reruns_are_identical() {
    let data = oracle(150, 4);
    let a = repeated_cv(&data, &FeatureSet::default(), &svm(), 5, 3, 8).unwrap();
    let b = repeated_cv(&data, &FeatureSet::default(), &svm(), 5, 3, 8).unwrap();
    assert_eq!(a, b);
    let grid = [1.0, 10.0, 40.0];
    let smo = SmoSettings::default();
    let s1 = penalty_sweep(&data, &FeatureSet::default(), Kernel::Rbf { gamma: 0.5 }, smo, 1.0, &grid, 5, 2).unwrap();
    let s2 = penalty_sweep(&data, &FeatureSet::default(), Kernel::Rbf { gamma: 0.5 }, smo, 1.0, &grid, 5, 2).unwrap();
    assert_eq!(s1, s2);
    assert_eq!(s1.rows.iter().map(|r| r.gamma).collect::<Vec<_>>(), grid);
}
