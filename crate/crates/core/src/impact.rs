//! Friend-cluster impacts on stranger clusters.
//!
//! Each labeled stranger contributes one linear equation
//! `l − b = Σ_i I[FC_i, SC_j] · c_i` where `c_i` is the Past value (single
//! mode) or the number of mutual friends in `FC_i` times the Past value
//! (multiple mode). Equations are solved per stranger cluster by
//! minimum-norm least squares.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterAssignment, ClusterId};
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix, Svd};
use crate::network::{NodeId, Profile, SocialNetwork};
use crate::persist;
use crate::scalar::Real;
use crate::stats;
use crate::transform::{FrequencyVector, SocialFrequencyMatrix};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImpactMode {
    /// One term per friend cluster with at least one mutual friend.
    #[default]
    Single,
    /// Terms scaled by the number of mutual friends in the cluster.
    Multiple,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsFormula {
    /// Equal values score 1; others score the mean of the two frequencies, capped below 1.
    #[default]
    FrequencyMean,
    /// Fraction of features with equal values.
    ExactMatchFraction,
}

const UNEQUAL_CAP: f64 = 0.999;

/// Similarity of two strangers of the same owner in [0, 1]; identical profiles score 1.
pub fn profile_similarity<T: Real>(
    s: &FrequencyVector<T>,
    x: &FrequencyVector<T>,
    raw_s: &Profile,
    raw_x: &Profile,
    formula: PsFormula,
) -> Result<T> {
    if s.owner != x.owner {
        return Err(Error::OwnerMismatch(s.owner.clone(), x.owner.clone()));
    }
    let n = s.values.len();
    if x.values.len() != n || raw_s.len() != n || raw_x.len() != n {
        return Err(Error::WidthMismatch {
            expected: n,
            got: x.values.len().min(raw_s.len()).min(raw_x.len()),
        });
    }
    if n == 0 {
        return Ok(T::one());
    }
    let cap = T::lit(UNEQUAL_CAP);
    let half = T::lit(0.5);
    let total = (0..n).fold(T::zero(), |acc, v| {
        let m = if raw_s.get(v) == raw_x.get(v) {
            T::one()
        } else {
            match formula {
                PsFormula::FrequencyMean => ((s.values[v] + x.values[v]) * half).min(cap),
                PsFormula::ExactMatchFraction => T::zero(),
            }
        };
        acc + m
    });
    Ok(total / T::count(n))
}

/// A first-group stranger label with its baseline, usable as a Past peer.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledPeer<T> {
    pub user: NodeId,
    pub stranger: NodeId,
    pub label: T,
    pub baseline: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PastValue<T> {
    pub user: NodeId,
    pub stranger: NodeId,
    pub value: T,
    /// Number of peers averaged; 0 means the value is 0 by definition.
    pub peers: usize,
}

/// Everything needed to evaluate Past values: stranger rows and profiles,
/// stranger clusters, and peers indexed by (user, stranger cluster).
pub struct PastContext<'a, T> {
    net: &'a SocialNetwork,
    sfms: &'a SocialFrequencyMatrix<T>,
    sc: &'a ClusterAssignment<T>,
    formula: PsFormula,
    peers: HashMap<(&'a str, ClusterId), Vec<&'a LabeledPeer<T>>>,
}

impl<'a, T: Real> PastContext<'a, T> {
    pub fn new(
        net: &'a SocialNetwork,
        sfms: &'a SocialFrequencyMatrix<T>,
        sc: &'a ClusterAssignment<T>,
        peers: &'a [LabeledPeer<T>],
        formula: PsFormula,
    ) -> Result<Self> {
        let mut by_key: HashMap<(&str, ClusterId), Vec<&LabeledPeer<T>>> = HashMap::new();
        for p in peers {
            let c = sc.get(&p.user, &p.stranger).ok_or_else(|| Error::MissingCluster {
                user: p.user.clone(),
                stranger: p.stranger.clone(),
            })?;
            by_key.entry((p.user.as_str(), c)).or_default().push(p);
        }
        Ok(PastContext {
            net,
            sfms,
            sc,
            formula,
            peers: by_key,
        })
    }

    fn row(&self, user: &str, stranger: &str) -> Result<&'a FrequencyVector<T>> {
        self.sfms
            .get(user, stranger)
            .ok_or_else(|| Error::IndexMismatch(format!("no stranger frequency row for ({user}, {stranger})")))
    }

    /// Mean of `PS(s, x)·(l_ux − b_ux)` over peers `x ≠ s` of the same user in
    /// the same stranger cluster; 0 without peers.
    pub fn past_parameter(&self, user: &str, stranger: &str) -> Result<PastValue<T>> {
        let c = self.sc.get(user, stranger).ok_or_else(|| Error::MissingCluster {
            user: user.to_string(),
            stranger: stranger.to_string(),
        })?;
        let row_s = self.row(user, stranger)?;
        let prof_s = self.net.profile_of(stranger)?;
        let mut sum = T::zero();
        let mut count = 0usize;
        for peer in self.peers.get(&(user, c)).map(Vec::as_slice).unwrap_or(&[]) {
            if peer.stranger == stranger {
                continue;
            }
            let ps = profile_similarity(
                row_s,
                self.row(user, &peer.stranger)?,
                prof_s,
                self.net.profile_of(&peer.stranger)?,
                self.formula,
            )?;
            sum = sum + ps * (peer.label - peer.baseline);
            count += 1;
        }
        Ok(PastValue {
            user: user.to_string(),
            stranger: stranger.to_string(),
            value: if count == 0 { T::zero() } else { sum / T::count(count) },
            peers: count,
        })
    }
}

/// Inputs for one labeled stranger.
#[derive(Clone, Debug, PartialEq)]
pub struct EquationInput<T> {
    pub user: NodeId,
    pub stranger: NodeId,
    pub label: T,
    pub baseline: T,
    pub past: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImpactEquation<T> {
    pub user: NodeId,
    pub stranger: NodeId,
    pub stranger_cluster: ClusterId,
    /// `l − b`.
    pub response: T,
    /// Friend cluster → coefficient of `I[FC, SC]`.
    pub coefficients: BTreeMap<ClusterId, T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquationSet<T> {
    pub equations: Vec<ImpactEquation<T>>,
    /// Equations with a zero Past value, which carry no information about impacts.
    pub dropped_zero_past: usize,
}

/// Stranger cluster of the pair and the number of mutual friends per friend cluster.
pub fn mutual_friend_clusters<T: Real>(
    net: &SocialNetwork,
    fc: &ClusterAssignment<T>,
    sc: &ClusterAssignment<T>,
    user: &str,
    stranger: &str,
) -> Result<(ClusterId, BTreeMap<ClusterId, usize>)> {
    let sj = sc.get(user, stranger).ok_or_else(|| Error::MissingCluster {
        user: user.to_string(),
        stranger: stranger.to_string(),
    })?;
    let (u, s) = (net.require(user)?, net.require(stranger)?);
    let mut counts = BTreeMap::new();
    for m in net.mutual_friends_ix(u, s) {
        let friend = net.id(m);
        let c = fc.get(user, friend).ok_or_else(|| Error::MissingFriendCluster {
            owner: user.to_string(),
            friend: friend.to_string(),
        })?;
        *counts.entry(c).or_insert(0) += 1;
    }
    Ok((sj, counts))
}

/// Coefficients of the impact unknowns for one stranger.
pub fn term_coefficients<T: Real>(counts: &BTreeMap<ClusterId, usize>, past: T, mode: ImpactMode) -> BTreeMap<ClusterId, T> {
    counts
        .iter()
        .map(|(&c, &n)| {
            let coef = match mode {
                ImpactMode::Single => past,
                ImpactMode::Multiple => T::count(n) * past,
            };
            (c, coef)
        })
        .collect()
}

pub fn build_equations<T: Real>(
    inputs: &[EquationInput<T>],
    net: &SocialNetwork,
    fc: &ClusterAssignment<T>,
    sc: &ClusterAssignment<T>,
    mode: ImpactMode,
) -> Result<EquationSet<T>> {
    let mut equations = Vec::with_capacity(inputs.len());
    let mut dropped = 0;
    for inp in inputs {
        let (sj, counts) = mutual_friend_clusters(net, fc, sc, &inp.user, &inp.stranger)?;
        if inp.past == T::zero() || counts.is_empty() {
            dropped += 1;
            continue;
        }
        equations.push(ImpactEquation {
            user: inp.user.clone(),
            stranger: inp.stranger.clone(),
            stranger_cluster: sj,
            response: inp.label - inp.baseline,
            coefficients: term_coefficients(&counts, inp.past, mode),
        });
    }
    Ok(EquationSet {
        equations,
        dropped_zero_past: dropped,
    })
}

/// Fit diagnostics of one stranger cluster's system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupDiagnostics {
    pub n: usize,
    pub p: usize,
    pub rank: usize,
    /// Uncentred R² (the model has no intercept); `None` when all responses are 0.
    pub r2: Option<f64>,
    pub adjusted_r2: Option<f64>,
    pub f_statistic: Option<f64>,
    pub f_pvalue: Option<f64>,
    pub significant: bool,
    /// `n ≤ p`: adjusted R² and the F test are not available.
    pub insufficient: bool,
    pub rss: f64,
}

/// Least-squares solution for one stranger cluster.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupSolution<T> {
    pub stranger_cluster: ClusterId,
    pub columns: Vec<ClusterId>,
    pub coefficients: Vec<T>,
    pub estimable: Vec<bool>,
    pub design: Matrix<T>,
    pub response: Vec<T>,
    pub residuals: Vec<T>,
    pub diagnostics: GroupDiagnostics,
}

pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

/// Solves one stranger cluster's equations.
pub fn solve_group<T: Real>(stranger_cluster: ClusterId, equations: &[&ImpactEquation<T>]) -> GroupSolution<T> {
    let mut columns: Vec<ClusterId> = equations.iter().flat_map(|e| e.coefficients.keys().copied()).collect();
    columns.sort();
    columns.dedup();
    let (n, p) = (equations.len(), columns.len());
    let mut design = Matrix::zeros(n, p);
    let mut response = Vec::with_capacity(n);
    for (i, e) in equations.iter().enumerate() {
        for (&c, &v) in &e.coefficients {
            let j = columns.binary_search(&c).expect("column collected above");
            design[(i, j)] = v;
        }
        response.push(e.response);
    }
    let svd = Svd::new(&design);
    let coefficients = svd.solve(&response);
    let rank = svd.rank();
    let estimable = (0..p).map(|j| svd.coordinate_identifiable(j)).collect();
    let fitted = design.mul_vec(&coefficients);
    let residuals: Vec<T> = response.iter().zip(&fitted).map(|(&y, &f)| y - f).collect();
    let rss = dot(&residuals, &residuals).as_f64();
    let tss = dot(&response, &response).as_f64();
    let r2 = (tss > 0.0).then(|| 1.0 - rss / tss);
    let insufficient = n <= p;
    let (adjusted_r2, f_statistic, f_pvalue) = if insufficient || rank == 0 {
        (None, None, None)
    } else {
        let adj = r2.and_then(|r2| {
            let denom = n as f64 - p as f64 - 1.0;
            (denom > 0.0).then(|| 1.0 - (1.0 - r2) * (n as f64 - 1.0) / denom)
        });
        let df2 = n - rank;
        let f = if rss == 0.0 {
            f64::INFINITY
        } else {
            ((tss - rss) / rank as f64) / (rss / df2 as f64)
        };
        (adj, Some(f), stats::f_upper_p(f, rank, df2))
    };
    GroupSolution {
        stranger_cluster,
        columns,
        coefficients,
        estimable,
        design,
        response,
        residuals,
        diagnostics: GroupDiagnostics {
            n,
            p,
            rank,
            r2,
            adjusted_r2,
            f_statistic,
            f_pvalue,
            significant: f_pvalue.is_some_and(|pv| pv < SIGNIFICANCE_LEVEL),
            insufficient,
            rss,
        },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpactEntry<T> {
    pub value: T,
    pub estimable: bool,
}

/// Learned impacts `I[FC, SC]` with per-stranger-cluster diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct ImpactMatrix<T> {
    pub mode: ImpactMode,
    /// Keyed by (friend cluster, stranger cluster).
    pub entries: BTreeMap<(ClusterId, ClusterId), ImpactEntry<T>>,
    pub groups: BTreeMap<ClusterId, GroupDiagnostics>,
}

/// Solves every stranger cluster independently.
pub fn solve_impacts<T: Real>(equations: &[ImpactEquation<T>], mode: ImpactMode) -> ImpactMatrix<T> {
    let mut groups: BTreeMap<ClusterId, Vec<&ImpactEquation<T>>> = BTreeMap::new();
    for e in equations {
        groups.entry(e.stranger_cluster).or_default().push(e);
    }
    let solutions: Vec<GroupSolution<T>> = groups
        .into_par_iter()
        .map(|(sc, eqs)| solve_group(sc, &eqs))
        .collect();
    let mut entries = BTreeMap::new();
    let mut diagnostics = BTreeMap::new();
    for sol in solutions {
        for ((&fc, &value), &estimable) in sol.columns.iter().zip(&sol.coefficients).zip(&sol.estimable) {
            entries.insert((fc, sol.stranger_cluster), ImpactEntry { value, estimable });
        }
        diagnostics.insert(sol.stranger_cluster, sol.diagnostics);
    }
    ImpactMatrix {
        mode,
        entries,
        groups: diagnostics,
    }
}

const IMPACT_KIND: &str = "impact-matrix";

#[derive(Serialize, Deserialize)]
struct ImpactFile {
    mode: ImpactMode,
    entries: Vec<(ClusterId, ClusterId, f64, bool)>,
    groups: Vec<(ClusterId, GroupDiagnostics)>,
}

impl<T: Real> ImpactMatrix<T> {
    pub fn get(&self, fc: ClusterId, sc: ClusterId) -> Option<ImpactEntry<T>> {
        self.entries.get(&(fc, sc)).copied()
    }

    /// Friend clusters that appear in any entry.
    pub fn friend_clusters(&self) -> Vec<ClusterId> {
        let mut v: Vec<ClusterId> = self.entries.keys().map(|k| k.0).collect();
        v.sort();
        v.dedup();
        v
    }

    /// `Σ I·c` for the given terms; `None` if a needed impact is unknown or not estimable.
    pub fn predict_shift(&self, sc: ClusterId, coefficients: &BTreeMap<ClusterId, T>) -> Option<T> {
        let mut total = T::zero();
        for (&fc, &c) in coefficients {
            if c == T::zero() {
                continue;
            }
            let e = self.get(fc, sc)?;
            if !e.estimable {
                return None;
            }
            total = total + e.value * c;
        }
        Some(total)
    }

    /// `friend_cluster,stranger_cluster,value,estimable,adjusted_r2,f_pvalue,n`.
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["friend_cluster", "stranger_cluster", "value", "estimable", "adjusted_r2", "f_pvalue", "n"])?;
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| format!("{v:.9e}"));
        for (&(fc, sc), e) in &self.entries {
            let g = &self.groups[&sc];
            w.write_record([
                fc.to_string(),
                sc.to_string(),
                format!("{:.9e}", e.value.as_f64()),
                e.estimable.to_string(),
                opt(g.adjusted_r2),
                opt(g.f_pvalue),
                g.n.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_json(&self, writer: impl Write) -> Result<()> {
        let file = ImpactFile {
            mode: self.mode,
            entries: self
                .entries
                .iter()
                .map(|(&(fc, sc), e)| (fc, sc, e.value.as_f64(), e.estimable))
                .collect(),
            groups: self.groups.iter().map(|(&k, g)| (k, g.clone())).collect(),
        };
        persist::save(IMPACT_KIND, &file, writer)
    }

    pub fn load_json(reader: impl Read) -> Result<Self> {
        let file: ImpactFile = persist::load(IMPACT_KIND, reader)?;
        let groups: BTreeMap<ClusterId, GroupDiagnostics> = file.groups.into_iter().collect();
        let mut entries = BTreeMap::new();
        for (fc, sc, value, estimable) in file.entries {
            if !groups.contains_key(&sc) {
                return Err(Error::parse("impact.entries", format!("stranger cluster {sc} has no diagnostics")));
            }
            entries.insert(
                (fc, sc),
                ImpactEntry {
                    value: T::lit(value),
                    estimable,
                },
            );
        }
        Ok(ImpactMatrix {
            mode: file.mode,
            entries,
            groups,
        })
    }
}
