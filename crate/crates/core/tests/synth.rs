mod common;

use std::collections::BTreeMap;

use friendrisk::analysis::{analyze, AnalysisConfig, Dataset};
use friendrisk::cluster::ClusterId;
use friendrisk::impact::{mutual_friend_clusters, term_coefficients, ImpactEntry, ImpactMatrix, ImpactMode};
use friendrisk::network::{parse_labels, parse_network, validate_records, write_labels, write_network};
use friendrisk::synth::{
    generate, generate_network, read_values_csv, recovery_error, PlantedBaseline, PlantedTruth, Rounding, SynthConfig,
};
use friendrisk::Error;

use common::recovery_config;

fn small(seed: u64) -> SynthConfig {
    SynthConfig { n_users: 8, seed, ..Default::default() }
}

#[test]
fn full_homophily_copies_the_user_profile() {
    let cfg = SynthConfig { homophily: 1.0, type_contrast: 0.0, ..small(1) };
    let sn = generate_network(&cfg).unwrap();
    assert!(!sn.friend_types.is_empty());
    for (u, f) in sn.friend_types.keys() {
        assert_eq!(sn.net.profile_of(u).unwrap(), sn.net.profile_of(f).unwrap());
    }
}

#[test]
fn zero_homophily_matches_at_chance() {
    let cfg = SynthConfig { homophily: 0.0, type_contrast: 0.0, n_users: 30, ..small(2) };
    let sn = generate_network(&cfg).unwrap();
    let (mut hits, mut trials) = (0usize, 0usize);
    for (u, f) in sn.friend_types.keys() {
        let (pu, pf) = (sn.net.profile_of(u).unwrap(), sn.net.profile_of(f).unwrap());
        for v in 0..cfg.n_features {
            trials += 1;
            hits += (pu.get(v) == pf.get(v)) as usize;
        }
    }
    let p = 1.0 / cfg.categories_per_feature as f64;
    let sd = (p * (1.0 - p) / trials as f64).sqrt();
    let rate = hits as f64 / trials as f64;
    assert!((rate - p).abs() <= 3.0 * sd, "rate {rate} vs {p} ± {}", 3.0 * sd);
}

#[test]
fn same_seed_same_bytes() {
    let bytes = |seed| {
        let s = generate(&small(seed)).unwrap();
        let (mut net, mut labels, mut values, mut truth) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        write_network(s.net(), &mut net).unwrap();
        write_labels(s.records(), &mut labels).unwrap();
        s.labels.write_values_csv(&mut values).unwrap();
        s.truth.save_json(&mut truth).unwrap();
        (net, labels, values, truth)
    };
    assert_eq!(bytes(5), bytes(5));
    assert_ne!(bytes(5).0, bytes(6).0);
}

#[test]
fn generated_data_passes_ingestion_checks() {
    let s = generate(&small(3)).unwrap();
    let mut net_bytes = Vec::new();
    write_network(s.net(), &mut net_bytes).unwrap();
    let (net, issues) = parse_network(net_bytes.as_slice());
    assert!(issues.is_empty(), "{issues:?}");
    let net = net.unwrap();
    let mut label_bytes = Vec::new();
    write_labels(s.records(), &mut label_bytes).unwrap();
    let (records, issues) = parse_labels(label_bytes.as_slice());
    assert!(issues.is_empty(), "{issues:?}");
    assert!(validate_records(&net, &records, |i| format!("record {i}")).is_empty());
    for u in &s.network.users {
        let ego = friendrisk::network::build_ego_graph(&net, u).unwrap();
        assert!(!ego.strangers.is_empty());
    }
    let mut values = Vec::new();
    s.labels.write_values_csv(&mut values).unwrap();
    assert_eq!(read_values_csv(values.as_slice()).unwrap(), s.labels.value_map());
}

#[test]
fn infeasible_configs_are_rejected() {
    let too_few_friends = SynthConfig { friends_min: 4, friends_max: 5, ..small(0) };
    assert!(matches!(generate_network(&too_few_friends), Err(Error::Infeasible(_))));
    let lonely = SynthConfig { max_mutual_friends: 1, ..small(0) };
    assert!(matches!(generate_network(&lonely), Err(Error::Infeasible(_))));
    let bad = SynthConfig { homophily: 1.5, ..small(0) };
    assert!(generate_network(&bad).is_err());
}

#[test]
fn without_impacts_taste_or_noise_labels_equal_baselines() {
    let cfg = SynthConfig { impact_scale: 0.0, taste_scale: 0.0, label_noise_sigma: 0.0, ..small(4) };
    let s = generate(&cfg).unwrap();
    assert_eq!(s.labels.values, s.labels.baselines);
    let expected = s.truth.baselines::<f64>(s.net(), s.records()).unwrap();
    for (r, v) in s.records().iter().zip(&s.labels.values) {
        assert_eq!(expected[&(r.user.clone(), r.stranger.clone())], *v);
    }
}

#[test]
fn worked_configuration_yields_its_label() {
    let truth = PlantedTruth {
        mode: ImpactMode::Single,
        ps_formula: Default::default(),
        impacts: vec![vec![0.8], vec![1.2]],
        baseline: PlantedBaseline { columns: Vec::new(), intercepts: [0.0, 0.0], coefficients: [Vec::new(), Vec::new()] },
        friend_clusters: Vec::new(),
        stranger_clusters: Vec::new(),
        tastes: Vec::new(),
    };
    let counts = BTreeMap::from([(ClusterId(1), 1), (ClusterId(2), 2)]);
    let shift = truth.shift(ClusterId(1), &term_coefficients(&counts, -0.2, ImpactMode::Single)).unwrap();
    assert!((2.7 + shift - 2.3).abs() < 1e-12);
    let multiple = truth.shift(ClusterId(1), &term_coefficients(&counts, -0.2, ImpactMode::Multiple)).unwrap();
    assert!((multiple - (-0.2 * 0.8 - 0.4 * 1.2)).abs() < 1e-12);
}

#[test]
fn every_label_is_reconstructible_from_truth_and_noise() {
    for mode in [ImpactMode::Single, ImpactMode::Multiple] {
        let cfg = SynthConfig { label_noise_sigma: 0.1, mode, ..small(7) };
        let s = generate(&cfg).unwrap();
        let l = &s.labels;
        let fc = s.truth.friend_assignment::<f64>().unwrap();
        let sc = s.truth.stranger_assignment::<f64>().unwrap();
        let tastes: BTreeMap<(&str, ClusterId), f64> = s.truth.tastes.iter().map(|(u, c, d)| ((u.as_str(), *c), *d)).collect();
        for (i, r) in s.records().iter().enumerate() {
            let (sj, counts) = mutual_friend_clusters(s.net(), &fc, &sc, &r.user, &r.stranger).unwrap();
            let signal = if l.first_group[i] {
                assert_eq!(counts.values().sum::<usize>(), 1);
                tastes[&(r.user.as_str(), sj)]
            } else {
                s.truth.shift(sj, &term_coefficients(&counts, l.pasts[i], mode)).unwrap()
            };
            assert!((l.latent[i] - (l.baselines[i] + signal + l.noise[i])).abs() < 1e-12);
            assert_eq!(l.values[i], l.latent[i].clamp(1.0, 3.0));
        }
    }
}

fn oracle_sup(cfg: &SynthConfig) -> f64 {
    let s = generate(cfg).unwrap();
    let ds = Dataset::with_value_map(s.net(), s.records(), &s.labels.value_map());
    let oracle = s.truth.oracle::<f64>(s.net(), s.records(), true).unwrap();
    let mut analysis = AnalysisConfig::default();
    analysis.impact.mode = cfg.mode;
    let a = analyze(&ds, &analysis, cfg.seed, &oracle).unwrap();
    recovery_error(&s.truth, &a.impact.impacts).unwrap().sup_norm
}

#[test]
fn noise_free_round_trip_in_both_modes() {
    for mode in [ImpactMode::Single, ImpactMode::Multiple] {
        let sup = oracle_sup(&SynthConfig { mode, ..recovery_config(1, 0.0) });
        assert!(sup < 1e-6, "{mode:?}: {sup}");
    }
}

#[test]
fn recovery_error_degrades_with_noise() {
    let medians: Vec<f64> = [0.0, 0.05, 0.1]
        .iter()
        .map(|&sigma| {
            let sups: Vec<f64> = (0..30).map(|seed| oracle_sup(&SynthConfig { n_users: 30, ..recovery_config(seed, sigma) })).collect();
            friendrisk::stats::median(&sups).unwrap()
        })
        .collect();
    assert!(medians.windows(2).all(|w| w[0] <= w[1]), "{medians:?}");
}

#[test]
fn discrete_labels_degrade_gracefully() {
    let continuous = oracle_sup(&recovery_config(2, 0.0));
    let discrete = oracle_sup(&SynthConfig { rounding: Rounding::Discrete, ..recovery_config(2, 0.0) });
    assert!(discrete.is_finite() && discrete > continuous, "{continuous} vs {discrete}");
    assert!(discrete < 5.0, "{discrete}");
}

fn matrix_from(truth: &PlantedTruth, offset: f64) -> ImpactMatrix<f64> {
    let mut entries = BTreeMap::new();
    for (i, row) in truth.impacts.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            entries.insert((ClusterId::from_index(i), ClusterId::from_index(j)), ImpactEntry { value: v + offset, estimable: true });
        }
    }
    ImpactMatrix { mode: truth.mode, entries, groups: BTreeMap::new() }
}

#[test]
fn recovery_error_examples() {
    let s = generate(&small(9)).unwrap();
    let exact = recovery_error(&s.truth, &matrix_from(&s.truth, 0.0)).unwrap();
    assert_eq!((exact.sup_norm, exact.rmse, exact.not_estimable), (0.0, 0.0, 0));
    let shifted = recovery_error(&s.truth, &matrix_from(&s.truth, 0.05)).unwrap();
    assert!((shifted.sup_norm - 0.05).abs() < 1e-12);
    let mut outside = matrix_from(&s.truth, 0.0);
    outside.entries.insert((ClusterId(99), ClusterId(1)), ImpactEntry { value: 0.0, estimable: true });
    assert!(matches!(recovery_error(&s.truth, &outside), Err(Error::IndexMismatch(_))));
}

#[test]
fn truth_json_round_trip() {
    let s = generate(&small(10)).unwrap();
    let mut buf = Vec::new();
    s.truth.save_json(&mut buf).unwrap();
    assert_eq!(PlantedTruth::load_json(buf.as_slice()).unwrap(), s.truth);
}
