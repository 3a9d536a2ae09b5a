#![allow(dead_code)]

use friendrisk::network::RiskLevel;
use friendrisk::synth::SynthConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn cols(n: usize) -> Vec<String> {
    (0..n).map(|j| format!("x{j}")).collect()
}

pub fn uniform_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect()
}

/// Draws labels from a multinomial logit with `eta[label] = a + b·x` and label 2 pinned at 0.
pub fn simulate(rng: &mut ChaCha8Rng, x: &[Vec<f64>], params: &[(RiskLevel, f64, Vec<f64>)]) -> Vec<RiskLevel> {
    x.iter()
        .map(|row| {
            let mut eta = [0.0f64; 3];
            for (label, a, b) in params {
                eta[label.index()] = a + row.iter().zip(b).map(|(x, b)| x * b).sum::<f64>();
            }
            let e: Vec<f64> = eta.iter().map(|v| v.exp()).collect();
            let z: f64 = e.iter().sum();
            let u: f64 = rng.random::<f64>() * z;
            if u < e[0] {
                RiskLevel::NotRisky
            } else if u < e[0] + e[1] {
                RiskLevel::Risky
            } else {
                RiskLevel::VeryRisky
            }
        })
        .collect()
}

/// Binary log-likelihood of `logit P(y) = a + b·x`.
pub fn binary_ll(x: &[f64], y: &[bool], a: f64, b: f64) -> f64 {
    x.iter()
        .zip(y)
        .map(|(&x, &y)| {
            let eta = a + b * x;
            let log1p = if eta > 0.0 { eta + (-eta).exp().ln_1p() } else { eta.exp().ln_1p() };
            if y { eta - log1p } else { -log1p }
        })
        .sum()
}

/// Grid-search maximiser over [-3, 3]²: a 0.01 grid followed by three zooms.
pub fn grid_mle(x: &[f64], y: &[bool]) -> (f64, f64) {
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    let search = |centre: (f64, f64), half: f64, steps: i32, best: &mut (f64, f64, f64)| {
        let step = half / steps as f64;
        for i in -steps..=steps {
            for j in -steps..=steps {
                let (a, b) = (centre.0 + i as f64 * step, centre.1 + j as f64 * step);
                if a.abs() > 3.0 || b.abs() > 3.0 {
                    continue;
                }
                let ll = binary_ll(x, y, a, b);
                if ll > best.0 {
                    *best = (ll, a, b);
                }
            }
        }
    };
    search((0.0, 0.0), 3.0, 300, &mut best);
    for half in [0.04, 0.002, 0.0001] {
        let c = (best.1, best.2);
        search(c, half, 40, &mut best);
    }
    (best.1, best.2)
}

/// 6 friend clusters, 26 stranger clusters, at least 240 labelled strangers per stranger cluster.
pub fn recovery_config(seed: u64, sigma: f64) -> SynthConfig {
    SynthConfig {
        n_users: 60,
        friends_min: 30,
        friends_max: 40,
        n_friend_clusters_true: 6,
        n_stranger_clusters_true: 26,
        first_group_per_type: 2,
        others_per_type: 4,
        max_mutual_friends: 3,
        impact_scale: 0.3,
        baseline_scale: 0.2,
        taste_scale: 1.0,
        label_noise_sigma: sigma,
        seed,
        ..Default::default()
    }
}

/// 6 well-separated friend types for cluster-count sweeps.
pub fn grid_config(seed: u64, sigma: f64) -> SynthConfig {
    SynthConfig {
        n_users: 40,
        friends_min: 40,
        friends_max: 50,
        n_friend_clusters_true: 6,
        n_stranger_clusters_true: 8,
        first_group_per_type: 2,
        others_per_type: 4,
        max_mutual_friends: 3,
        impact_scale: 0.3,
        baseline_scale: 0.2,
        taste_scale: 1.0,
        label_noise_sigma: sigma,
        n_features: 12,
        categories_per_feature: 20,
        seed,
        ..Default::default()
    }
}
