use super::{canonical_labels, squared_distance, ClusterAssignment};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::transform::SocialFrequencyMatrix;

/// One merge: node ids follow the usual convention (leaves `0..n`, the i-th
/// merge creates node `n + i`).
#[derive(Clone, Debug, PartialEq)]
pub struct Merge<T> {
    pub left: usize,
    pub right: usize,
    pub distance: T,
    pub size: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dendrogram<T> {
    pub leaves: usize,
    /// Sorted by non-decreasing distance.
    pub merges: Vec<Merge<T>>,
}

impl<T: Real> Dendrogram<T> {
    /// Flat 0-based labels (first-appearance order) after applying the first
    /// `leaves - k` merges.
    pub fn cut(&self, k: usize) -> Vec<usize> {
        assert!(k >= 1 && k <= self.leaves.max(1));
        let n = self.leaves;
        let mut parent: Vec<usize> = (0..2 * n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (i, m) in self.merges.iter().take(n - k).enumerate() {
            let node = n + i;
            let a = find(&mut parent, m.left);
            let b = find(&mut parent, m.right);
            parent[a] = node;
            parent[b] = node;
        }
        let roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
        canonical_labels(&roots).0
    }
}

fn condensed_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i < j { (i, j) } else { (j, i) };
    n * i - i * (i + 1) / 2 + (j - i - 1)
}

/// Complete-linkage hierarchy via the nearest-neighbour chain algorithm.
pub fn complete_linkage<T: Real>(points: &[&[T]]) -> Dendrogram<T> {
    let n = points.len();
    if n < 2 {
        return Dendrogram {
            leaves: n,
            merges: Vec::new(),
        };
    }
    let mut dist = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            dist.push(squared_distance(points[i], points[j]).sqrt());
        }
    }
    let mut active = vec![true; n];
    let mut size = vec![1usize; n];
    let mut chain: Vec<usize> = Vec::with_capacity(n);
    // (representative a, representative b, distance), in discovery order
    let mut raw: Vec<(usize, usize, T)> = Vec::with_capacity(n - 1);
    for _ in 0..n - 1 {
        if chain.is_empty() {
            chain.push(active.iter().position(|&a| a).expect("active cluster remains"));
        }
        let (x, y, d) = loop {
            let x = *chain.last().unwrap();
            let (mut y, mut best) = if chain.len() >= 2 {
                let prev = chain[chain.len() - 2];
                (prev, dist[condensed_index(n, x, prev)])
            } else {
                (usize::MAX, T::infinity())
            };
            for i in 0..n {
                if active[i] && i != x {
                    let d = dist[condensed_index(n, x, i)];
                    if d < best {
                        best = d;
                        y = i;
                    }
                }
            }
            if chain.len() >= 2 && y == chain[chain.len() - 2] {
                chain.pop();
                chain.pop();
                break (x, y, best);
            }
            chain.push(y);
        };
        let (keep, drop) = (x.max(y), x.min(y));
        for i in 0..n {
            if active[i] && i != keep && i != drop {
                let a = dist[condensed_index(n, drop, i)];
                let b = dist[condensed_index(n, keep, i)];
                dist[condensed_index(n, keep, i)] = a.max(b);
            }
        }
        active[drop] = false;
        size[keep] += size[drop];
        raw.push((drop, keep, d));
    }
    raw.sort_by(|a, b| a.2.partial_cmp(&b.2).expect("finite distances"));

    let mut parent: Vec<usize> = (0..n).collect();
    let mut node_of: Vec<usize> = (0..n).collect();
    let mut node_size = vec![1usize; n];
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let merges = raw
        .into_iter()
        .enumerate()
        .map(|(i, (a, b, d))| {
            let ra = find(&mut parent, a);
            let rb = find(&mut parent, b);
            let (na, nb) = (node_of[ra], node_of[rb]);
            let sz = node_size[ra] + node_size[rb];
            parent[ra] = rb;
            node_of[rb] = n + i;
            node_size[rb] = sz;
            Merge {
                left: na.min(nb),
                right: na.max(nb),
                distance: d,
                size: sz,
            }
        })
        .collect();
    Dendrogram { leaves: n, merges }
}

/// Complete-linkage clustering of the rows, cut at exactly `target_k` clusters.
pub fn agglomerative<T: Real>(rows: &SocialFrequencyMatrix<T>, target_k: usize) -> Result<ClusterAssignment<T>> {
    if target_k == 0 || target_k > rows.len() {
        return Err(Error::InvalidClusterCount {
            k: target_k,
            rows: rows.len(),
        });
    }
    let points: Vec<&[T]> = rows.rows().iter().map(|r| r.values.as_slice()).collect();
    let labels = complete_linkage(&points).cut(target_k);
    Ok(ClusterAssignment::from_labels(rows, &labels, None))
}
