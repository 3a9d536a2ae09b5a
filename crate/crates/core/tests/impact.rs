use std::collections::BTreeMap;

use friendrisk::cluster::{ClusterAssignment, ClusterId};
use friendrisk::impact::{
    build_equations, solve_group, solve_impacts, term_coefficients, EquationInput, ImpactEquation, ImpactMode,
    LabeledPeer, PastContext, PsFormula,
};
use friendrisk::network::{NetworkBuilder, RiskLabelRecord, RiskLevel, SocialNetwork};
use friendrisk::transform::{build_sfms, SfmKind};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn assignment(kind: SfmKind, pairs: &[(&str, &str, u32)]) -> ClusterAssignment<f64> {
    let map: BTreeMap<_, _> = pairs.iter().map(|&(o, s, c)| ((o.to_string(), s.to_string()), ClusterId(c))).collect();
    ClusterAssignment::new(kind, map, None).unwrap()
}

/// u has friends m1 (FC1), m2 and m3 (FC2); stranger s knows all three.
fn worked_case() -> (SocialNetwork, ClusterAssignment<f64>, ClusterAssignment<f64>) {
    let mut b = NetworkBuilder::new(["gender"]).unwrap();
    for id in ["u", "m1", "m2", "m3", "s"] {
        b.add_node(id, [("gender", "f")]).unwrap();
    }
    for m in ["m1", "m2", "m3"] {
        b.add_edge("u", m).unwrap();
        b.add_edge("s", m).unwrap();
    }
    let fc = assignment(SfmKind::Friends, &[("u", "m1", 1), ("u", "m2", 2), ("u", "m3", 2)]);
    let sc = assignment(SfmKind::Strangers, &[("u", "s", 1)]);
    (b.build(), fc, sc)
}

fn example_input(label: f64, baseline: f64, past: f64) -> EquationInput<f64> {
    EquationInput { user: "u".into(), stranger: "s".into(), label, baseline, past }
}

#[test]
fn worked_case_equations() {
    let (net, fc, sc) = worked_case();
    let single = build_equations(&[example_input(2.3, 2.7, -0.2)], &net, &fc, &sc, ImpactMode::Single).unwrap();
    assert_eq!(single.dropped_zero_past, 0);
    let eq = &single.equations[0];
    assert_eq!(eq.stranger_cluster, ClusterId(1));
    assert!((eq.response + 0.4).abs() < 1e-15);
    assert_eq!(eq.coefficients, BTreeMap::from([(ClusterId(1), -0.2), (ClusterId(2), -0.2)]));

    let multiple = build_equations(&[example_input(2.3, 2.7, -0.2)], &net, &fc, &sc, ImpactMode::Multiple).unwrap();
    assert_eq!(multiple.equations[0].coefficients, BTreeMap::from([(ClusterId(1), -0.2), (ClusterId(2), -0.4)]));

    let m = solve_impacts(&single.equations, ImpactMode::Single);
    let sum = m.get(ClusterId(1), ClusterId(1)).unwrap().value + m.get(ClusterId(2), ClusterId(1)).unwrap().value;
    assert!((sum - 2.0).abs() < 1e-12, "{sum}");
    assert!(m.groups[&ClusterId(1)].insufficient);

    let vacuous = build_equations(&[example_input(2.5, 2.5, 0.0)], &net, &fc, &sc, ImpactMode::Single).unwrap();
    assert!(vacuous.equations.is_empty());
    assert_eq!(vacuous.dropped_zero_past, 1);
}

#[test]
fn missing_stranger_cluster_is_rejected() {
    let (net, fc, _) = worked_case();
    let other = assignment(SfmKind::Strangers, &[("u", "zz", 1)]);
    assert!(build_equations(&[example_input(2.0, 2.0, 0.1)], &net, &fc, &other, ImpactMode::Single).is_err());
}

/// Owner u with two friends sharing (x, p); strangers differ from them on `f2` only.
fn past_fixture() -> (SocialNetwork, Vec<RiskLabelRecord>) {
    let mut b = NetworkBuilder::new(["f1", "f2"]).unwrap();
    b.add_node("u", [("f1", "x"), ("f2", "p")]).unwrap();
    for (id, f2) in [("a", "p"), ("b", "p"), ("s", "q"), ("x1", "q"), ("x2", "r")] {
        b.add_node(id, [("f1", "x"), ("f2", f2)]).unwrap();
    }
    b.add_edge("u", "a").unwrap();
    b.add_edge("u", "b").unwrap();
    for s in ["s", "x1", "x2"] {
        b.add_edge("a", s).unwrap();
    }
    let records = ["s", "x1", "x2"].iter().map(|s| RiskLabelRecord::new("u", *s, RiskLevel::Risky)).collect();
    (b.build(), records)
}

fn peer(stranger: &str, diff: f64) -> LabeledPeer<f64> {
    LabeledPeer { user: "u".into(), stranger: stranger.into(), label: 2.0 + diff, baseline: 2.0 }
}

#[test]
fn past_parameter_examples() {
    let (net, records) = past_fixture();
    let sfms = build_sfms::<f64>(&net, &records).unwrap();
    let sc = assignment(SfmKind::Strangers, &[("u", "s", 1), ("u", "x1", 1), ("u", "x2", 1)]);

    let none: Vec<LabeledPeer<f64>> = vec![peer("s", 0.3)];
    let ctx = PastContext::new(&net, &sfms, &sc, &none, PsFormula::FrequencyMean).unwrap();
    let p = ctx.past_parameter("u", "s").unwrap();
    assert_eq!((p.value, p.peers), (0.0, 0));

    let one = vec![peer("x1", -0.4)];
    let ctx = PastContext::new(&net, &sfms, &sc, &one, PsFormula::FrequencyMean).unwrap();
    assert!((ctx.past_parameter("u", "s").unwrap().value + 0.4).abs() < 1e-15);

    let two = vec![peer("x2", -0.4), peer("x1", 0.2)];
    let ctx = PastContext::new(&net, &sfms, &sc, &two, PsFormula::FrequencyMean).unwrap();
    let p = ctx.past_parameter("u", "s").unwrap();
    assert_eq!(p.peers, 2);
    assert!(p.value.abs() < 1e-15, "{}", p.value);

    let split = assignment(SfmKind::Strangers, &[("u", "s", 1), ("u", "x1", 2), ("u", "x2", 1)]);
    let ctx = PastContext::new(&net, &sfms, &split, &two, PsFormula::FrequencyMean).unwrap();
    let p = ctx.past_parameter("u", "s").unwrap();
    assert_eq!(p.peers, 1);
    assert!((p.value + 0.2).abs() < 1e-15);
}

fn random_equations(rng: &mut ChaCha8Rng, sc: u32, n: usize, p: u32, truth: &[f64], sigma: f64) -> Vec<ImpactEquation<f64>> {
    let noise = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).unwrap();
    (0..n)
        .map(|i| {
            let past: f64 = rng.random_range(-1.0..1.0);
            let mut coefficients = BTreeMap::new();
            for c in 1..=p {
                if rng.random_bool(0.6) {
                    coefficients.insert(ClusterId(c), past);
                }
            }
            if coefficients.is_empty() {
                coefficients.insert(ClusterId(1 + (i as u32 % p)), past);
            }
            let mut response: f64 = coefficients.iter().map(|(c, v)| truth[c.index()] * v).sum();
            if sigma > 0.0 {
                response += noise.sample(rng);
            }
            ImpactEquation {
                user: "u".into(),
                stranger: format!("s{sc}_{i}"),
                stranger_cluster: ClusterId(sc),
                response,
                coefficients,
            }
        })
        .collect()
}

/// Each column carries its own Past draw so the design has full rank.
fn independent_equations(rng: &mut ChaCha8Rng, sc: u32, n: usize, truth: &[f64], sigma: f64) -> Vec<ImpactEquation<f64>> {
    let noise = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).unwrap();
    (0..n)
        .map(|i| {
            let mut coefficients = BTreeMap::new();
            for c in 0..truth.len() {
                if rng.random_bool(0.7) {
                    coefficients.insert(ClusterId::from_index(c), rng.random_range(-1.0..1.0) * rng.random_range(1.0..3.0));
                }
            }
            let mut response: f64 = coefficients.iter().map(|(c, v)| truth[c.index()] * v).sum();
            if sigma > 0.0 {
                response += noise.sample(rng);
            }
            ImpactEquation { user: "u".into(), stranger: format!("s{i}"), stranger_cluster: ClusterId(sc), response, coefficients }
        })
        .filter(|e| !e.coefficients.is_empty())
        .collect()
}

fn sup_error(m: &friendrisk::impact::ImpactMatrix<f64>, sc: u32, truth: &[f64]) -> f64 {
    truth
        .iter()
        .enumerate()
        .map(|(i, t)| (m.get(ClusterId::from_index(i), ClusterId(sc)).unwrap().value - t).abs())
        .fold(0.0, f64::max)
}

#[test]
fn noise_free_planted_impacts_are_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let truth = [0.5, -0.3, 1.2, 0.0, -0.8];
    let eqs = independent_equations(&mut rng, 1, 100, &truth, 0.0);
    let m = solve_impacts(&eqs, ImpactMode::Single);
    assert!(sup_error(&m, 1, &truth) < 1e-6);
    let g = &m.groups[&ClusterId(1)];
    assert_eq!((g.p, g.rank), (5, 5));
    assert!(g.rss < 1e-20);
}

#[test]
fn noisy_planted_impacts_within_tolerance() {
    let truth = [0.5, -0.3, 1.2, 0.0, -0.8];
    let good = (0..100)
        .filter(|&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let eqs = independent_equations(&mut rng, 1, 200, &truth, 0.1);
            sup_error(&solve_impacts(&eqs, ImpactMode::Single), 1, &truth) < 0.1
        })
        .count();
    assert!(good >= 95, "{good}/100");
}

#[test]
fn residuals_are_orthogonal_to_design_columns() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eqs = independent_equations(&mut rng, 1, 60, &[0.3, -0.2, 0.9, 0.1], 0.2);
        let refs: Vec<&ImpactEquation<f64>> = eqs.iter().collect();
        let sol = solve_group(ClusterId(1), &refs);
        let r = &sol.residuals;
        let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        for j in 0..sol.design.cols() {
            let col = sol.design.column(j);
            let cn = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            let dot: f64 = col.iter().zip(r).map(|(a, b)| a * b).sum();
            assert!(dot.abs() < 1e-8 * cn * rn, "seed {seed} column {j}: {dot}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scaling_past_scales_impacts_inversely(seed in 0u64..10_000, c in prop_oneof![-5.0f64..-0.1, 0.1f64..5.0]) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eqs = independent_equations(&mut rng, 1, 40, &[0.4, -0.7, 0.2], 0.1);
        let scaled: Vec<_> = eqs
            .iter()
            .map(|e| ImpactEquation { coefficients: e.coefficients.iter().map(|(&k, &v)| (k, v * c)).collect(), ..e.clone() })
            .collect();
        let a = solve_impacts(&eqs, ImpactMode::Single);
        let b = solve_impacts(&scaled, ImpactMode::Single);
        for ((k, ea), (_, eb)) in a.entries.iter().zip(&b.entries) {
            prop_assert!((ea.value - eb.value * c).abs() < 1e-9 * (1.0 + ea.value.abs()), "{:?}", k);
        }
        for (sc, coefs) in eqs.iter().map(|e| (e.stranger_cluster, &e.coefficients)) {
            let fa = a.predict_shift(sc, coefs).unwrap();
            let scaled_coefs: BTreeMap<_, _> = coefs.iter().map(|(&k, &v)| (k, v * c)).collect();
            let fb = b.predict_shift(sc, &scaled_coefs).unwrap();
            prop_assert!((fa - fb).abs() < 1e-9);
        }
    }

    #[test]
    fn modes_agree_when_every_multiplicity_is_one(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut single = Vec::new();
        let mut multiple = Vec::new();
        for i in 0..30 {
            let counts: BTreeMap<ClusterId, usize> =
                (1..=4).filter(|_| rng.random_bool(0.5)).map(|c| (ClusterId(c), 1)).collect();
            if counts.is_empty() {
                continue;
            }
            let past = rng.random_range(-1.0..1.0);
            let response = rng.random_range(-1.0..1.0);
            let sc = ClusterId(1 + i % 2);
            for (mode, out) in [(ImpactMode::Single, &mut single), (ImpactMode::Multiple, &mut multiple)] {
                out.push(ImpactEquation {
                    user: "u".into(),
                    stranger: format!("s{i}"),
                    stranger_cluster: sc,
                    response,
                    coefficients: term_coefficients(&counts, past, mode),
                });
            }
        }
        let a = solve_impacts(&single, ImpactMode::Single);
        let b = solve_impacts(&multiple, ImpactMode::Multiple);
        prop_assert_eq!(a.entries, b.entries);
    }

    #[test]
    fn dropping_a_cluster_leaves_others_unchanged(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut eqs = Vec::new();
        for sc in 1..=3 {
            eqs.extend(random_equations(&mut rng, sc, 25, 3, &[0.2, -0.1, 0.5], 0.05));
        }
        let full = solve_impacts(&eqs, ImpactMode::Single);
        let kept: Vec<_> = eqs.iter().filter(|e| e.stranger_cluster != ClusterId(2)).cloned().collect();
        let partial = solve_impacts(&kept, ImpactMode::Single);
        for ((fc, sc), entry) in &partial.entries {
            prop_assert_eq!(Some(*entry), full.get(*fc, *sc));
        }
        prop_assert!(!partial.groups.contains_key(&ClusterId(2)));
    }
}

#[test]
fn significance_follows_f_pvalue() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut eqs = independent_equations(&mut rng, 1, 80, &[1.0, -1.0], 0.05);
    eqs.extend(independent_equations(&mut rng, 2, 80, &[0.0, 0.0], 0.5));
    let m = solve_impacts(&eqs, ImpactMode::Single);
    for g in m.groups.values() {
        assert_eq!(g.significant, g.f_pvalue.is_some_and(|p| p < 0.05));
    }
    assert!(m.groups[&ClusterId(1)].significant);
    let g = &m.groups[&ClusterId(1)];
    let (n, p) = (g.n as f64, g.p as f64);
    let expected = 1.0 - (1.0 - g.r2.unwrap()) * (n - 1.0) / (n - p - 1.0);
    assert!((g.adjusted_r2.unwrap() - expected).abs() < 1e-12);
}
