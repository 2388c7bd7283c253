use gasgate::data::FeatureVector;
use gasgate::svm::{dual_objective, fit_svm, solve_dual, Kernel, PenaltyConfig, SmoSettings};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_problem(seed: u64, n: usize) -> (Vec<FeatureVector>, Vec<i8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<FeatureVector> = (0..n)
        .map(|_| FeatureVector(vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]))
        .collect();
    let mut y: Vec<i8> = x.iter().map(|v| if v.0[0] + 0.5 * v.0[1] > 0.0 { 1 } else { -1 }).collect();
    // a few flipped labels keep some multipliers at their caps
    for _ in 0..n / 10 {
        let i = rng.random_range(0..n);
        y[i] = -y[i];
    }
    y[0] = 1;
    y[1] = -1;
    (x, y)
}

/// Largest KKT violation of a dual point with its bias.
fn kkt_residual(x: &[FeatureVector], y: &[i8], kernel: &Kernel, caps: &[f64], alpha: &[f64], bias: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let f: f64 = (0..x.len())
            .map(|j| alpha[j] * f64::from(y[j]) * kernel.eval(&x[j], &x[i]).unwrap())
            .sum::<f64>()
            + bias;
        let margin = f64::from(y[i]) * f;
        let r = if alpha[i] <= 1e-12 * caps[i] {
            (1.0 - margin).max(0.0)
        } else if alpha[i] >= caps[i] * (1.0 - 1e-12) {
            (margin - 1.0).max(0.0)
        } else {
            (margin - 1.0).abs()
        };
        worst = worst.max(r);
    }
    worst
}

#[test]
fn kkt_conditions_hold_at_solution() {
    for seed in 0..5 {
        let (x, y) = random_problem(seed, 60);
        let kernel = Kernel::Rbf { gamma: 1.0 };
        let caps: Vec<f64> = y.iter().map(|&l| if l == 1 { 5.0 } else { 1.0 }).collect();
        let sol = solve_dual(&x, &y, &kernel, &caps, &SmoSettings::default()).unwrap();
        assert!(sol.converged);
        let r = kkt_residual(&x, &y, &kernel, &caps, &sol.alpha, sol.bias);
        assert!(r <= 1e-3, "seed {seed}: KKT residual {r}");
        let eq: f64 = sol.alpha.iter().zip(&y).map(|(a, &l)| a * f64::from(l)).sum();
        assert!(eq.abs() < 1e-9, "equality constraint {eq}");
        for (a, c) in sol.alpha.iter().zip(&caps) {
            assert!(*a >= 0.0 && *a <= *c);
        }
    }
}

#[test]
fn reported_objective_matches_independent_evaluation() {
    let (x, y) = random_problem(11, 40);
    let kernel = Kernel::Polynomial {
        gamma: 0.5,
        coef0: 1.0,
        degree: 2,
    };
    let caps = vec![2.0; x.len()];
    let sol = solve_dual(&x, &y, &kernel, &caps, &SmoSettings::default()).unwrap();
    let w = dual_objective(&x, &y, &kernel, &sol.alpha);
    assert!((w - sol.objective).abs() <= 1e-8 * w.abs().max(1.0));
}

#[test]
fn objective_never_decreases() {
    for seed in 0..3 {
        let (x, y) = random_problem(100 + seed, 50);
        let settings = SmoSettings {
            record_objective: true,
            seed,
            ..SmoSettings::default()
        };
        let caps = vec![10.0; x.len()];
        let sol = solve_dual(&x, &y, &Kernel::Rbf { gamma: 2.0 }, &caps, &settings).unwrap();
        assert!(sol.objective_trace.len() >= 2);
        for w in sol.objective_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-12, "objective dropped from {} to {}", w[0], w[1]);
        }
    }
}

#[test]
fn linear_kernel_separates_separable_data() {
    let x: Vec<FeatureVector> = (0..40)
        .map(|i| {
            let t = i as f64 / 40.0;
            FeatureVector(vec![t, (7.0 * t).sin()])
        })
        .collect();
    let y: Vec<i8> = x.iter().map(|v| if v.0[0] > 0.5 { 1 } else { -1 }).collect();
    let model = fit_svm(&x, &y, Kernel::Linear, PenaltyConfig::symmetric(1000.0).unwrap(), &SmoSettings::default()).unwrap();
    for (v, &l) in x.iter().zip(&y) {
        assert_eq!(model.predict(v).unwrap(), l);
    }
}

#[test]
fn larger_positive_penalty_misses_fewer_positives() {
    // overlapping classes: raising w1 can only pull the boundary towards negatives
    let (x, y) = random_problem(7, 120);
    let mut y_noisy = y.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for l in y_noisy.iter_mut() {
        if rng.random::<f64>() < 0.2 {
            *l = -*l;
        }
    }
    let kernel = Kernel::Rbf { gamma: 1.0 };
    let missed = |w1: f64| {
        let m = fit_svm(&x, &y_noisy, kernel, PenaltyConfig::new(w1, 1.0).unwrap(), &SmoSettings::default()).unwrap();
        x.iter()
            .zip(&y_noisy)
            .filter(|(v, &l)| l == 1 && m.predict(v).unwrap() == -1)
            .count()
    };
    assert!(missed(50.0) <= missed(1.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sample_order_does_not_change_optimum(seed in 0u64..1000, shift in 1usize..20) {
        let (x, y) = random_problem(seed, 25);
        let kernel = Kernel::Rbf { gamma: 0.7 };
        let caps = vec![3.0; x.len()];
        let settings = SmoSettings { tol: 1e-5, ..SmoSettings::default() };
        let a = solve_dual(&x, &y, &kernel, &caps, &settings).unwrap();
        let mut xr = x.clone();
        let mut yr = y.clone();
        xr.rotate_left(shift);
        yr.rotate_left(shift);
        let b = solve_dual(&xr, &yr, &kernel, &caps, &settings).unwrap();
        prop_assert!((a.objective - b.objective).abs() <= 1e-3);
    }

    #[test]
    fn multipliers_stay_in_box(seed in 0u64..1000, w1 in 0.1f64..20.0, w2 in 0.1f64..20.0) {
        let (x, y) = random_problem(seed, 20);
        let caps: Vec<f64> = y.iter().map(|&l| if l == 1 { w1 } else { w2 }).collect();
        let sol = solve_dual(&x, &y, &Kernel::Linear, &caps, &SmoSettings::default()).unwrap();
        for (a, c) in sol.alpha.iter().zip(&caps) {
            prop_assert!(*a >= 0.0 && *a <= *c);
        }
        let eq: f64 = sol.alpha.iter().zip(&y).map(|(a, &l)| a * f64::from(l)).sum();
        prop_assert!(eq.abs() < 1e-9);
    }
}
