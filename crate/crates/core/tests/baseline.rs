mod common;

use friendrisk::baseline::{
    coefficient_significance, fit_multinomial, fit_multinomial_traced, read_baseline_artifact, weighted_label,
    write_baseline_artifact, BaselineLabel, ClassParams, FitOptions, MultinomialModel, MultinomialObjective,
};
use friendrisk::network::RiskLevel;
use friendrisk::Error;
use common::{cols, grid_mle, simulate, uniform_rows};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use RiskLevel::{NotRisky, Risky, VeryRisky};

fn balanced(n: usize) -> Vec<RiskLevel> {
    (0..n).map(|i| RiskLevel::ALL[i % 3]).collect()
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = uniform_rows(&mut rng, 200, 3);
    let y = simulate(&mut rng, &x, &[(NotRisky, 0.3, vec![1.0, -1.0, 0.5]), (VeryRisky, -0.2, vec![0.0, 2.0, -1.0])]);
    let obj = MultinomialObjective::new(&x, &y, Risky, 0.01).unwrap();
    let h = 1e-5;
    for _ in 0..50 {
        let theta: Vec<f64> = (0..obj.dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let g = obj.gradient(&theta);
        for i in 0..theta.len() {
            let mut up = theta.clone();
            let mut down = theta.clone();
            up[i] += h;
            down[i] -= h;
            let fd = (obj.objective(&up) - obj.objective(&down)) / (2.0 * h);
            let rel = (g[i] - fd).abs() / g[i].abs().max(1.0);
            assert!(rel < 1e-6, "coordinate {i}: analytic {} vs {fd}", g[i]);
        }
    }
}

#[test]
fn planted_two_class_fit_matches_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x: Vec<Vec<f64>> = (0..600).map(|_| vec![rng.random_range(-2.0..2.0)]).collect();
    let y = simulate(&mut rng, &x, &[(NotRisky, f64::NEG_INFINITY, vec![0.0]), (VeryRisky, 0.7, vec![1.2])]);
    assert!(y.iter().all(|&l| l != NotRisky));
    let opts = FitOptions { ridge: 0.0, max_iter: 200, ..Default::default() };
    let model = fit_multinomial(&x, &y, cols(1), &opts).unwrap();
    let c3 = model.classes.iter().find(|c| c.label == VeryRisky).unwrap();
    let xs: Vec<f64> = x.iter().map(|r| r[0]).collect();
    let ys: Vec<bool> = y.iter().map(|&l| l == VeryRisky).collect();
    let (a, b) = grid_mle(&xs, &ys);
    assert!((c3.intercept - a).abs() < 1e-3, "alpha {} vs grid {a}", c3.intercept);
    assert!((c3.coefficients[0] - b).abs() < 1e-3, "beta {} vs grid {b}", c3.coefficients[0]);
}

#[test]
fn probabilities_are_normalized_everywhere() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = uniform_rows(&mut rng, 300, 4);
    let y = simulate(&mut rng, &x, &[(NotRisky, 1.0, vec![3.0, -2.0, 0.0, 1.0]), (VeryRisky, -1.0, vec![-3.0, 0.0, 4.0, 1.0])]);
    let model = fit_multinomial(&x, &y, cols(4), &FitOptions::default()).unwrap();
    assert!(model.converged && model.gradient_norm < 1e-6);
    for _ in 0..1000 {
        let row: Vec<f64> = (0..4).map(|_| rng.random_range(-50.0..50.0)).collect();
        let p = model.predict_probs(&row).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        let b = model.baseline_label("u", "s", &row).unwrap();
        assert!((1.0..=3.0).contains(&b.value));
    }
}

fn random_model(rng: &mut ChaCha8Rng, width: usize) -> MultinomialModel<f64> {
    let classes = [NotRisky, VeryRisky]
        .into_iter()
        .map(|label| ClassParams {
            label,
            intercept: rng.random_range(-3.0..3.0),
            coefficients: (0..width).map(|_| rng.random_range(-3.0..3.0)).collect(),
            intercept_se: None,
            coefficient_se: vec![None; width],
        })
        .collect();
    MultinomialModel {
        reference: Risky,
        columns: cols(width),
        classes,
        ridge: 0.0,
        converged: true,
        iterations: 0,
        log_likelihood: 0.0,
        gradient_norm: 0.0,
    }
}

fn to_f32(m: &MultinomialModel<f64>) -> MultinomialModel<f32> {
    MultinomialModel {
        reference: m.reference,
        columns: m.columns.clone(),
        classes: m
            .classes
            .iter()
            .map(|c| ClassParams {
                label: c.label,
                intercept: c.intercept as f32,
                coefficients: c.coefficients.iter().map(|&v| v as f32).collect(),
                intercept_se: None,
                coefficient_se: vec![None; c.coefficients.len()],
            })
            .collect(),
        ridge: 0.0,
        converged: true,
        iterations: 0,
        log_likelihood: 0.0,
        gradient_norm: 0.0,
    }
}

/// Direct softmax with compensated summation of the linear predictor.
fn oracle_probs(m: &MultinomialModel<f64>, x: &[f64]) -> [f64; 3] {
    let mut eta = [0.0f64; 3];
    for c in &m.classes {
        let (mut s, mut comp) = (c.intercept, 0.0);
        for (v, b) in x.iter().zip(&c.coefficients) {
            let y = v * b - comp;
            let t = s + y;
            comp = (t - s) - y;
            s = t;
        }
        eta[c.label.index()] = s;
    }
    let e: Vec<f64> = eta.iter().map(|v| v.exp()).collect();
    let z: f64 = e.iter().sum();
    [e[0] / z, e[1] / z, e[2] / z]
}

#[test]
fn predictions_match_direct_softmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let m = random_model(&mut rng, 5);
        let m32 = to_f32(&m);
        let x: Vec<f64> = (0..5).map(|_| rng.random::<f64>()).collect();
        let x32: Vec<f32> = x.iter().map(|&v| v as f32).collect();
        let oracle = oracle_probs(&m, &x);
        let p = m.predict_probs(&x).unwrap();
        let p32 = m32.predict_probs(&x32).unwrap();
        for i in 0..3 {
            assert!((p[i] - oracle[i]).abs() < 1e-12);
            assert!((p32[i] as f64 - oracle[i]).abs() < 1e-5);
        }
    }
}

#[test]
fn trivial_predictions() {
    let mut m = random_model(&mut ChaCha8Rng::seed_from_u64(0), 2);
    for c in &mut m.classes {
        c.intercept = 0.0;
        c.coefficients = vec![0.0; 2];
    }
    let p = m.predict_probs(&[0.4, 0.9]).unwrap();
    assert!(p.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
    m.classes[0].intercept = 30.0;
    assert!(m.predict_probs(&[0.4, 0.9]).unwrap()[0] > 0.999);
    assert!(matches!(m.predict_probs(&[0.4]), Err(Error::WidthMismatch { expected: 2, got: 1 })));
}

#[test]
fn weighted_label_examples() {
    assert_eq!(weighted_label([1.0f64, 0.0, 0.0]), 1.0);
    assert_eq!(weighted_label([0.0f64, 0.0, 1.0]), 3.0);
    assert!((weighted_label([0.01f64, 0.09, 0.90]) - 2.89).abs() < 1e-12);
}

proptest! {
    #[test]
    fn weighted_label_respects_stochastic_dominance(a in 0.0f64..1.0, b in 0.0f64..1.0, shift in 0.0f64..1.0) {
        let p1 = a * (1.0 - b);
        let p3 = (1.0 - a) * b;
        let p = [p1, 1.0 - p1 - p3, p3];
        let moved = shift * p[0];
        let q = [p[0] - moved, p[1] + moved, p[2]];
        let moved2 = shift * q[1];
        let r = [q[0], q[1] - moved2, q[2] + moved2];
        prop_assert!(weighted_label(q) >= weighted_label(p) - 1e-12);
        prop_assert!(weighted_label(r) >= weighted_label(q) - 1e-12);
    }
}

#[test]
fn single_label_saturates_and_zero_ridge_rejects() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = uniform_rows(&mut rng, 100, 2);
    let y = vec![VeryRisky; 100];
    let opts = FitOptions { ridge: 1e-4, max_iter: 200, ..Default::default() };
    let model = fit_multinomial(&x, &y, cols(2), &opts).unwrap();
    for row in &x {
        assert!(model.predict_probs(row).unwrap()[2] > 0.99);
    }
    let strict = FitOptions { ridge: 0.0, ..Default::default() };
    assert!(matches!(fit_multinomial(&x, &y, cols(2), &strict), Err(Error::TooFewLabels(1))));
}

#[test]
fn independent_features_give_small_coefficients() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let normal = Normal::new(0.0, 10.0).unwrap();
    let x: Vec<Vec<f64>> = (0..2000).map(|_| (0..2).map(|_| normal.sample(&mut rng)).collect()).collect();
    let mut y = balanced(2000);
    for i in (1..y.len()).rev() {
        y.swap(i, rng.random_range(0..=i));
    }
    let opts = FitOptions { ridge: 1e-3, ..Default::default() };
    let model = fit_multinomial(&x, &y, cols(2), &opts).unwrap();
    for c in &model.classes {
        let norm = c.coefficients.iter().map(|b| b * b).sum::<f64>().sqrt();
        assert!(norm < 0.05, "{:?}: {norm}", c.label);
    }
}

#[test]
fn reference_choice_does_not_change_predictions() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = uniform_rows(&mut rng, 400, 2);
    let y = simulate(&mut rng, &x, &[(NotRisky, 0.5, vec![1.0, -1.0]), (VeryRisky, -0.5, vec![-1.0, 2.0])]);
    let fit = |reference| {
        fit_multinomial(&x, &y, cols(2), &FitOptions { ridge: 0.0, reference, tolerance: 1e-10, ..Default::default() }).unwrap()
    };
    let (m2, m1, m3) = (fit(Risky), fit(NotRisky), fit(VeryRisky));
    for row in x.iter().take(100) {
        let p = m2.predict_probs(row).unwrap();
        for other in [&m1, &m3] {
            let q = other.predict_probs(row).unwrap();
            for i in 0..3 {
                assert!((p[i] - q[i]).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn objective_never_decreases_across_iterations() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let x = uniform_rows(&mut rng, 150, 3);
        let y = simulate(&mut rng, &x, &[(NotRisky, 2.0, vec![4.0, -4.0, 0.0]), (VeryRisky, -2.0, vec![-5.0, 5.0, 3.0])]);
        let (model, trace) = fit_multinomial_traced(&x, &y, cols(3), &FitOptions::default()).unwrap();
        assert!(model.converged);
        assert!(trace.windows(2).all(|w| w[1] >= w[0]), "seed {seed}: {trace:?}");
    }
}

#[test]
fn strong_effect_is_highly_significant() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = uniform_rows(&mut rng, 2000, 1);
    let y = simulate(&mut rng, &x, &[(NotRisky, 0.0, vec![0.0]), (VeryRisky, -1.0, vec![2.0])]);
    let model = fit_multinomial(&x, &y, cols(1), &FitOptions::default()).unwrap();
    let table = coefficient_significance(&model, &x, &y).unwrap();
    let row = table.row("x0", VeryRisky).unwrap();
    assert!(row.p_value.unwrap() < 0.001, "{row:?}");
    assert!(row.significant);
    assert_eq!(table.n, 2000);
    let text = table.to_text();
    assert!(text.contains('(') && text.contains("x0"));
}

#[test]
fn null_effect_is_calibrated() {
    let mut hits = 0;
    for seed in 0..200 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let x = uniform_rows(&mut rng, 2000, 1);
        let y = simulate(&mut rng, &x, &[(NotRisky, 0.0, vec![0.0]), (VeryRisky, 0.0, vec![0.0])]);
        let model = fit_multinomial(&x, &y, cols(1), &FitOptions::default()).unwrap();
        let table = coefficient_significance(&model, &x, &y).unwrap();
        if table.row("x0", VeryRisky).unwrap().significant {
            hits += 1;
        }
    }
    let rate = hits as f64 / 200.0;
    assert!((0.02..=0.09).contains(&rate), "false positive rate {rate}");
}

#[test]
fn artifacts_round_trip_and_fail_loudly() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = uniform_rows(&mut rng, 100, 3);
    let y = simulate(&mut rng, &x, &[(NotRisky, 0.2, vec![1.0, 0.0, -1.0]), (VeryRisky, 0.1, vec![0.5, 1.0, 0.0])]);
    let model = fit_multinomial(&x, &y, cols(3), &FitOptions::default()).unwrap();
    let labels: Vec<BaselineLabel<f64>> =
        x.iter().enumerate().map(|(i, r)| model.baseline_label("u", &format!("s{i}"), r).unwrap()).collect();
    let mut buf = Vec::new();
    write_baseline_artifact(Some(&model), &labels, &mut buf).unwrap();
    let (back, back_labels) = read_baseline_artifact::<f64>(buf.as_slice()).unwrap();
    assert_eq!(back.as_ref(), Some(&model));
    assert_eq!(back_labels, labels);

    let truncated = &buf[..buf.len() / 2];
    assert!(read_baseline_artifact::<f64>(truncated).is_err());

    let mut json = Vec::new();
    model.save_json(&mut json).unwrap();
    let loaded = MultinomialModel::<f64>::load_json(json.as_slice()).unwrap();
    assert_eq!(loaded, model);
    assert!(loaded.check_columns(&cols(4)).is_err());
    assert!(loaded.check_columns(&["a".into(), "b".into(), "c".into()]).is_err());
    assert!(loaded.predict_probs(&[0.1, 0.2]).is_err());
}
