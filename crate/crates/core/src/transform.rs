//! Social frequency matrices: each categorical profile value is replaced by the
//! fraction of the owner's friends sharing that value.

use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{NodeId, RiskLabelRecord, SocialNetwork};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SfmKind {
    Friends,
    Strangers,
}

/// Frequency representation of `subject` relative to `owner`'s friend set.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyVector<T> {
    pub owner: NodeId,
    pub subject: NodeId,
    pub values: Vec<T>,
}

/// Rows keyed by (owner, subject), sorted by that key.
#[derive(Clone, Debug)]
pub struct SocialFrequencyMatrix<T> {
    kind: SfmKind,
    features: Vec<String>,
    rows: Vec<FrequencyVector<T>>,
    index: HashMap<(NodeId, NodeId), usize>,
}

impl<T: Real> SocialFrequencyMatrix<T> {
    /// Assembles a matrix from rows, checking width, range and key uniqueness.
    pub fn from_rows(kind: SfmKind, features: Vec<String>, mut rows: Vec<FrequencyVector<T>>) -> Result<Self> {
        rows.sort_by(|a, b| (&a.owner, &a.subject).cmp(&(&b.owner, &b.subject)));
        let mut index = HashMap::with_capacity(rows.len());
        for (i, r) in rows.iter().enumerate() {
            let locus = format!("row ({}, {})", r.owner, r.subject);
            if r.values.len() != features.len() {
                return Err(Error::WidthMismatch {
                    expected: features.len(),
                    got: r.values.len(),
                });
            }
            if let Some(v) = r.values.iter().find(|v| !(**v >= T::zero() && **v <= T::one())) {
                return Err(Error::parse(locus, format!("frequency {v} outside [0, 1]")));
            }
            if index.insert((r.owner.clone(), r.subject.clone()), i).is_some() {
                return Err(Error::parse(locus, "duplicate (owner, subject) row"));
            }
        }
        Ok(SocialFrequencyMatrix {
            kind,
            features,
            rows,
            index,
        })
    }

    pub fn kind(&self) -> SfmKind {
        self.kind
    }

    pub fn features(&self) -> &[String] {
        &self.features
    }

    pub fn width(&self) -> usize {
        self.features.len()
    }

    pub fn rows(&self) -> &[FrequencyVector<T>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn position(&self, owner: &str, subject: &str) -> Option<usize> {
        self.index.get(&(owner.to_string(), subject.to_string())).copied()
    }

    pub fn get(&self, owner: &str, subject: &str) -> Option<&FrequencyVector<T>> {
        self.position(owner, subject).map(|i| &self.rows[i])
    }

    /// Keeps only the rows accepted by `keep`.
    pub fn filter(&self, keep: impl Fn(&FrequencyVector<T>) -> bool) -> Self {
        let rows = self.rows.iter().filter(|r| keep(r)).cloned().collect();
        Self::from_rows(self.kind, self.features.clone(), rows).expect("subset of a valid matrix")
    }

    /// Writes `owner_id,subject_id,<features>` with 9 decimal digits.
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["owner_id".to_string(), "subject_id".to_string()];
        header.extend(self.features.iter().cloned());
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.owner.clone(), r.subject.clone()];
            rec.extend(r.values.iter().map(|v| format!("{:.9}", v.as_f64())));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(kind: SfmKind, reader: impl Read) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.len() < 2 || &header[0] != "owner_id" || &header[1] != "subject_id" {
            return Err(Error::parse("line 1", "header must start with owner_id,subject_id"));
        }
        let features: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let mut values = Vec::with_capacity(features.len());
            for field in rec.iter().skip(2) {
                let v: f64 = field
                    .parse()
                    .map_err(|_| Error::parse(format!("line {line}"), format!("not a number: `{field}`")))?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::parse(format!("line {line}"), format!("frequency {v} outside [0, 1]")));
                }
                values.push(T::lit(v));
            }
            rows.push(FrequencyVector {
                owner: rec[0].to_string(),
                subject: rec[1].to_string(),
                values,
            });
        }
        Self::from_rows(kind, features, rows)
    }
}

/// Per-feature value counts over one owner's friends.
struct FriendValueCounts<'a> {
    friends: usize,
    counts: Vec<HashMap<&'a str, usize>>,
}

impl<'a> FriendValueCounts<'a> {
    fn new(net: &'a SocialNetwork, owner: usize) -> Result<Self> {
        let friends = net.neighbors(owner);
        if friends.is_empty() {
            return Err(Error::FriendlessOwner(net.id(owner).to_string()));
        }
        let mut counts = vec![HashMap::new(); net.feature_count()];
        for &g in friends {
            for (v, value) in net.profile(g).values().iter().enumerate() {
                *counts[v].entry(value.as_str()).or_insert(0) += 1;
            }
        }
        Ok(FriendValueCounts {
            friends: friends.len(),
            counts,
        })
    }

    fn frequency<T: Real>(&self, feature: usize, value: &str) -> T {
        let sup = self.counts[feature].get(value).copied().unwrap_or(0);
        T::count(sup) / T::count(self.friends)
    }

    fn row<T: Real>(&self, values: &[String]) -> Vec<T> {
        values.iter().enumerate().map(|(v, value)| self.frequency(v, value)).collect()
    }
}

/// Fraction of `u`'s friends whose `feature` equals `value`.
pub fn feature_frequency<T: Real>(net: &SocialNetwork, u: &str, feature: &str, value: &str) -> Result<T> {
    let ui = net.require(u)?;
    let fi = net
        .feature_index(feature)
        .ok_or_else(|| Error::InvalidConfig(format!("unknown feature `{feature}`")))?;
    Ok(FriendValueCounts::new(net, ui)?.frequency(fi, value))
}

/// Friend matrix: one row per (owner, friend) for every given owner.
pub fn build_sfmf<T: Real>(net: &SocialNetwork, owners: &[NodeId]) -> Result<SocialFrequencyMatrix<T>> {
    let owners: BTreeSet<&str> = owners.iter().map(String::as_str).collect();
    let per_owner: Vec<Vec<FrequencyVector<T>>> = owners
        .into_par_iter()
        .map(|u| {
            let ui = net.require(u)?;
            let counts = FriendValueCounts::new(net, ui)?;
            Ok(net
                .neighbors(ui)
                .iter()
                .map(|&f| FrequencyVector {
                    owner: u.to_string(),
                    subject: net.id(f).to_string(),
                    values: counts.row(net.profile(f).values()),
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    SocialFrequencyMatrix::from_rows(SfmKind::Friends, net.features().to_vec(), per_owner.into_iter().flatten().collect())
}

/// Stranger matrix: one row per labeled (user, stranger) pair. The denominator
/// is still the size of the user's friend set.
pub fn build_sfms<T: Real>(net: &SocialNetwork, records: &[RiskLabelRecord]) -> Result<SocialFrequencyMatrix<T>> {
    let mut by_user: Vec<(&str, Vec<&str>)> = Vec::new();
    let mut slot: HashMap<&str, usize> = HashMap::new();
    for r in records {
        let i = *slot.entry(r.user.as_str()).or_insert_with(|| {
            by_user.push((r.user.as_str(), Vec::new()));
            by_user.len() - 1
        });
        by_user[i].1.push(r.stranger.as_str());
    }
    let per_user: Vec<Vec<FrequencyVector<T>>> = by_user
        .into_par_iter()
        .map(|(u, strangers)| {
            let ui = net.require(u)?;
            let counts = FriendValueCounts::new(net, ui)?;
            strangers
                .into_iter()
                .map(|s| {
                    let si = net.require(s)?;
                    Ok(FrequencyVector {
                        owner: u.to_string(),
                        subject: s.to_string(),
                        values: counts.row(net.profile(si).values()),
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    SocialFrequencyMatrix::from_rows(SfmKind::Strangers, net.features().to_vec(), per_user.into_iter().flatten().collect())
}
