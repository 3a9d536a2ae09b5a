//! Global friend and stranger clusters over frequency rows.

mod agglomerative;
mod kmeans;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::NodeId;
use crate::scalar::Real;
use crate::transform::{SfmKind, SocialFrequencyMatrix};

pub use agglomerative::{agglomerative, complete_linkage, Dendrogram, Merge};
pub use kmeans::{kmeans, kmeans_points, kmeans_with, KMeansFit, KMeansOptions};

/// 1-based cluster identifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClusterId(pub u32);

impl ClusterId {
    pub fn from_index(i: usize) -> Self {
        ClusterId(i as u32 + 1)
    }

    pub fn index(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for ClusterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Kmeans,
    Agglomerative,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kmeans" => Ok(Algorithm::Kmeans),
            "agglomerative" => Ok(Algorithm::Agglomerative),
            other => Err(Error::InvalidConfig(format!("unknown clustering algorithm `{other}`"))),
        }
    }
}

/// Runs the chosen algorithm with its default options.
pub fn cluster<T: Real>(
    rows: &SocialFrequencyMatrix<T>,
    algorithm: Algorithm,
    k: usize,
    seed: u64,
) -> Result<ClusterAssignment<T>> {
    match algorithm {
        Algorithm::Kmeans => kmeans(rows, k, seed),
        Algorithm::Agglomerative => agglomerative(rows, k),
    }
}

/// Cluster membership of every (owner, subject) row.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterAssignment<T> {
    kind: SfmKind,
    k: usize,
    assign: BTreeMap<(NodeId, NodeId), ClusterId>,
    centroids: Option<Vec<Vec<T>>>,
}

impl<T: Real> ClusterAssignment<T> {
    /// Validates that ids are exactly 1..=k with no empty cluster.
    pub fn new(
        kind: SfmKind,
        assign: BTreeMap<(NodeId, NodeId), ClusterId>,
        centroids: Option<Vec<Vec<T>>>,
    ) -> Result<Self> {
        let k = assign.values().map(|c| c.0 as usize).max().unwrap_or(0);
        let mut seen = vec![false; k];
        for c in assign.values() {
            if c.0 == 0 {
                return Err(Error::InvalidConfig("cluster ids start at 1".into()));
            }
            seen[c.index()] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidConfig(format!("cluster {} is empty", missing + 1)));
        }
        if let Some(c) = &centroids {
            if c.len() != k {
                return Err(Error::InvalidConfig(format!("{} centroids for {k} clusters", c.len())));
            }
        }
        Ok(ClusterAssignment {
            kind,
            k,
            assign,
            centroids,
        })
    }

    /// Builds from 0-based labels aligned with `rows`.
    pub(crate) fn from_labels(
        rows: &SocialFrequencyMatrix<T>,
        labels: &[usize],
        centroids: Option<Vec<Vec<T>>>,
    ) -> Self {
        let assign = rows
            .rows()
            .iter()
            .zip(labels)
            .map(|(r, &l)| ((r.owner.clone(), r.subject.clone()), ClusterId::from_index(l)))
            .collect();
        Self::new(rows.kind(), assign, centroids).expect("labels cover 0..k")
    }

    pub fn kind(&self) -> SfmKind {
        self.kind
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, owner: &str, subject: &str) -> Option<ClusterId> {
        self.assign.get(&(owner.to_string(), subject.to_string())).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(NodeId, NodeId), ClusterId)> {
        self.assign.iter().map(|(k, &v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.assign.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assign.is_empty()
    }

    pub fn centroids(&self) -> Option<&[Vec<T>]> {
        self.centroids.as_deref()
    }

    /// Member count per cluster, indexed by `ClusterId::index`.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for c in self.assign.values() {
            sizes[c.index()] += 1;
        }
        sizes
    }

    /// Restricts to the given keys; ids are compacted so no cluster is empty.
    pub fn restrict<'a>(&self, keys: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut assign = BTreeMap::new();
        for (o, s) in keys {
            let c = self
                .get(o, s)
                .ok_or_else(|| Error::IndexMismatch(format!("({o}, {s}) has no cluster")))?;
            assign.insert((o.to_string(), s.to_string()), c);
        }
        let mut used: Vec<ClusterId> = assign.values().copied().collect();
        used.sort();
        used.dedup();
        let remap: HashMap<ClusterId, ClusterId> =
            used.iter().enumerate().map(|(i, &c)| (c, ClusterId::from_index(i))).collect();
        let centroids = self
            .centroids
            .as_ref()
            .map(|cs| used.iter().map(|c| cs[c.index()].clone()).collect());
        Self::new(
            self.kind,
            assign.into_iter().map(|(k, c)| (k, remap[&c])).collect(),
            centroids,
        )
    }

    /// `owner_id,subject_id,cluster_id`.
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["owner_id", "subject_id", "cluster_id"])?;
        for ((o, s), c) in &self.assign {
            w.write_record([o.as_str(), s.as_str(), &c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(kind: SfmKind, reader: impl Read) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.iter().ne(["owner_id", "subject_id", "cluster_id"]) {
            return Err(Error::parse("line 1", "expected header owner_id,subject_id,cluster_id"));
        }
        let mut assign = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let id: u32 = rec[2]
                .parse()
                .ok()
                .filter(|&c| c > 0)
                .ok_or_else(|| Error::parse(format!("line {line}"), format!("bad cluster id `{}`", &rec[2])))?;
            if assign
                .insert((rec[0].to_string(), rec[1].to_string()), ClusterId(id))
                .is_some()
            {
                return Err(Error::parse(format!("line {line}"), "duplicate row"));
            }
        }
        Self::new(kind, assign, None)
    }
}

/// Relabels 0-based labels in order of first appearance.
pub(crate) fn canonical_labels(labels: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut map: HashMap<usize, usize> = HashMap::new();
    let mut order = Vec::new();
    let out = labels
        .iter()
        .map(|&l| {
            *map.entry(l).or_insert_with(|| {
                order.push(l);
                order.len() - 1
            })
        })
        .collect();
    (out, order)
}

pub(crate) fn squared_distance<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
}

/// Adjusted Rand index between two partitions of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let choose2 = |x: usize| (x * x.saturating_sub(1)) as f64 / 2.0;
    let mut table: HashMap<(usize, usize), usize> = HashMap::new();
    let mut ra: HashMap<usize, usize> = HashMap::new();
    let mut rb: HashMap<usize, usize> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *ra.entry(x).or_default() += 1;
        *rb.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sa: f64 = ra.values().map(|&c| choose2(c)).sum();
    let sb: f64 = rb.values().map(|&c| choose2(c)).sum();
    let expected = sa * sb / choose2(n).max(1.0);
    let max = (sa + sb) / 2.0;
    if (max - expected).abs() < f64::EPSILON {
        return 1.0;
    }
    (index - expected) / (max - expected)
}
