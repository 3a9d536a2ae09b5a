use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{canonical_labels, squared_distance, ClusterAssignment};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::transform::SocialFrequencyMatrix;

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansOptions {
    pub max_iter: usize,
    /// Largest centroid movement treated as converged.
    pub tolerance: f64,
    /// Independent k-means++ initialisations; the lowest objective wins.
    pub restarts: usize,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        KMeansOptions {
            max_iter: 300,
            tolerance: 1e-9,
            restarts: 10,
        }
    }
}

/// Result of Lloyd iteration on raw points.
#[derive(Clone, Debug, PartialEq)]
pub struct KMeansFit<T> {
    /// 0-based, numbered by first appearance.
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<T>>,
    /// Within-cluster sum of squared distances of the returned solution.
    pub objective: T,
    /// Objective after every assignment step of the winning run, then the final value.
    pub trace: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
}

pub fn kmeans<T: Real>(rows: &SocialFrequencyMatrix<T>, k: usize, seed: u64) -> Result<ClusterAssignment<T>> {
    kmeans_with(rows, k, seed, &KMeansOptions::default())
}

pub fn kmeans_with<T: Real>(
    rows: &SocialFrequencyMatrix<T>,
    k: usize,
    seed: u64,
    opts: &KMeansOptions,
) -> Result<ClusterAssignment<T>> {
    let points: Vec<&[T]> = rows.rows().iter().map(|r| r.values.as_slice()).collect();
    let fit = kmeans_points(&points, k, seed, opts)?;
    Ok(ClusterAssignment::from_labels(rows, &fit.labels, Some(fit.centroids)))
}

pub fn kmeans_points<T: Real>(points: &[&[T]], k: usize, seed: u64, opts: &KMeansOptions) -> Result<KMeansFit<T>> {
    if k == 0 || k > points.len() {
        return Err(Error::InvalidClusterCount { k, rows: points.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansFit<T>> = None;
    for _ in 0..opts.restarts.max(1) {
        let init = plus_plus_init(points, k, &mut rng);
        let fit = lloyd(points, init, opts);
        if best.as_ref().is_none_or(|b| fit.objective < b.objective) {
            best = Some(fit);
        }
    }
    let mut fit = best.expect("at least one restart");
    let (labels, order) = canonical_labels(&fit.labels);
    fit.centroids = order.iter().map(|&c| fit.centroids[c].clone()).collect();
    fit.labels = labels;
    Ok(fit)
}

/// D²-weighted seeding.
fn plus_plus_init<T: Real>(points: &[&[T]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<T>> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)].to_vec()];
    let mut d2: Vec<f64> = points.iter().map(|p| squared_distance(p, &centroids[0]).as_f64()).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = points[pick].to_vec();
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(squared_distance(p, &c).as_f64());
        }
        centroids.push(c);
    }
    centroids
}

fn nearest<T: Real>(p: &[T], centroids: &[Vec<T>]) -> usize {
    let mut best = 0;
    let mut best_d = squared_distance(p, &centroids[0]);
    for (c, centroid) in centroids.iter().enumerate().skip(1) {
        let d = squared_distance(p, centroid);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

fn objective<T: Real>(points: &[&[T]], labels: &[usize], centroids: &[Vec<T>]) -> T {
    points
        .iter()
        .zip(labels)
        .fold(T::zero(), |acc, (p, &l)| acc + squared_distance(p, &centroids[l]))
}

/// Moves the point farthest from its centroid (among clusters with ≥2 members)
/// into each empty cluster.
fn repair_empty<T: Real>(points: &[&[T]], labels: &mut [usize], centroids: &mut [Vec<T>]) {
    let k = centroids.len();
    loop {
        let mut sizes = vec![0usize; k];
        for &l in labels.iter() {
            sizes[l] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let mut far = None;
        let mut far_d = T::neg_infinity();
        for (i, p) in points.iter().enumerate() {
            if sizes[labels[i]] < 2 {
                continue;
            }
            let d = squared_distance(p, &centroids[labels[i]]);
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        let i = far.expect("k <= n leaves a cluster with two members");
        labels[i] = empty;
        centroids[empty] = points[i].to_vec();
    }
}

fn means<T: Real>(points: &[&[T]], labels: &[usize], k: usize, dim: usize) -> Vec<Vec<T>> {
    let mut sums = vec![vec![T::zero(); dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, &x) in sums[l].iter_mut().zip(p.iter()) {
            *s = *s + x;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        let c = T::count(c);
        for x in s.iter_mut() {
            *x = *x / c;
        }
    }
    sums
}

fn lloyd<T: Real>(points: &[&[T]], mut centroids: Vec<Vec<T>>, opts: &KMeansOptions) -> KMeansFit<T> {
    let k = centroids.len();
    let dim = points[0].len();
    let tol = T::lit(opts.tolerance);
    let mut labels: Vec<usize> = Vec::new();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let mut next: Vec<usize> = points.par_iter().map(|p| nearest(p, &centroids)).collect();
        repair_empty(points, &mut next, &mut centroids);
        let j = objective(points, &next, &centroids);
        debug_assert!(trace.last().is_none_or(|&prev: &T| j <= prev + prev.abs() * T::lit(1e-9)));
        trace.push(j);
        let changed = next != labels;
        labels = next;
        let updated = means(points, &labels, k, dim);
        let shift = updated
            .iter()
            .zip(&centroids)
            .map(|(a, b)| squared_distance(a, b).sqrt())
            .fold(T::zero(), T::max);
        centroids = updated;
        if !changed || shift < tol {
            converged = true;
            break;
        }
    }
    let objective = objective(points, &labels, &centroids);
    trace.push(objective);
    KMeansFit {
        labels,
        centroids,
        objective,
        trace,
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[Vec<f64>]) -> Vec<&[f64]> {
        v.iter().map(Vec::as_slice).collect()
    }

    #[test]
    fn k_one_gives_mean_centroid() {
        let data = vec![vec![0.0, 1.0], vec![2.0, 3.0], vec![4.0, 2.0]];
        let fit = kmeans_points(&pts(&data), 1, 3, &KMeansOptions::default()).unwrap();
        assert_eq!(fit.labels, vec![0, 0, 0]);
        assert_eq!(fit.centroids[0], vec![2.0, 2.0]);
    }

    #[test]
    fn k_equal_rows_gives_singletons() {
        let data = vec![vec![0.0], vec![0.3], vec![0.9], vec![0.5]];
        let fit = kmeans_points(&pts(&data), 4, 11, &KMeansOptions::default()).unwrap();
        assert_eq!(fit.labels, vec![0, 1, 2, 3]);
        assert_eq!(fit.objective, 0.0);
    }

    #[test]
    fn invalid_k_rejected() {
        let data = vec![vec![0.0]];
        assert!(kmeans_points(&pts(&data), 0, 1, &KMeansOptions::default()).is_err());
        assert!(kmeans_points(&pts(&data), 2, 1, &KMeansOptions::default()).is_err());
    }

    #[test]
    fn duplicates_still_fill_every_cluster() {
        let data = vec![vec![0.5]; 5];
        let fit = kmeans_points(&pts(&data), 3, 2, &KMeansOptions::default()).unwrap();
        let mut used = fit.labels.clone();
        used.sort();
        used.dedup();
        assert_eq!(used, vec![0, 1, 2]);
    }

    #[test]
    fn same_seed_same_answer() {
        let data: Vec<Vec<f64>> = (0..40).map(|i| vec![(i * 7 % 13) as f64, (i * 5 % 11) as f64]).collect();
        let a = kmeans_points(&pts(&data), 4, 99, &KMeansOptions::default()).unwrap();
        let b = kmeans_points(&pts(&data), 4, 99, &KMeansOptions::default()).unwrap();
        assert_eq!(a, b);
    }
}
