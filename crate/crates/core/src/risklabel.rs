//! Friend risk labels from the signs of significant impacts.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterAssignment, ClusterId};
use crate::error::{Error, Result};
use crate::impact::ImpactMatrix;
use crate::network::{NodeId, RiskLevel};
use crate::persist;
use crate::scalar::Real;

/// Im⁻ thresholds: not risky below `x`, very risky from `y` on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub x: f64,
    pub y: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { x: 0.2, y: 0.5 }
    }
}

impl Thresholds {
    /// Requires `0 ≤ x < y`; `y > 1` makes "very risky" unreachable.
    pub fn new(x: f64, y: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && 0.0 <= x && x < y) {
            return Err(Error::InvalidThresholds { x, y });
        }
        Ok(Thresholds { x, y })
    }

    pub fn validate(&self) -> Result<()> {
        Thresholds::new(self.x, self.y).map(|_| ())
    }
}

pub fn assign_friend_label(im_minus: f64, t: &Thresholds) -> RiskLevel {
    if im_minus < t.x {
        RiskLevel::NotRisky
    } else if im_minus < t.y {
        RiskLevel::Risky
    } else {
        RiskLevel::VeryRisky
    }
}

/// Sign counts over the estimable entries of a friend cluster that lie in significant groups.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImpactSigns {
    pub n_significant: usize,
    pub n_negative: usize,
}

impl ImpactSigns {
    /// `None` (undetermined) without significant entries.
    pub fn im_minus(&self) -> Option<f64> {
        (self.n_significant > 0).then(|| self.n_negative as f64 / self.n_significant as f64)
    }

    pub fn im_plus(&self) -> Option<f64> {
        (self.n_significant > 0).then(|| (self.n_significant - self.n_negative) as f64 / self.n_significant as f64)
    }
}

/// Zero impacts count as positive.
pub fn impact_sign_percentages<T: Real>(m: &ImpactMatrix<T>, fc: ClusterId) -> ImpactSigns {
    let mut signs = ImpactSigns::default();
    for (&(f, sc), e) in &m.entries {
        if f != fc || !e.estimable || !m.groups.get(&sc).is_some_and(|g| g.significant) {
            continue;
        }
        signs.n_significant += 1;
        if e.value < T::zero() {
            signs.n_negative += 1;
        }
    }
    signs
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterRisk {
    pub cluster: ClusterId,
    pub im_plus: Option<f64>,
    pub im_minus: Option<f64>,
    pub n_significant: usize,
    /// `None` when undetermined.
    pub label: Option<RiskLevel>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FriendRisk {
    pub owner: NodeId,
    pub friend: NodeId,
    pub cluster: ClusterId,
    pub label: Option<RiskLevel>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FriendRiskReport {
    pub thresholds: Thresholds,
    pub clusters: Vec<ClusterRisk>,
    pub friends: Vec<FriendRisk>,
}

const REPORT_KIND: &str = "friend-risk-report";

pub fn build_report<T: Real>(
    m: &ImpactMatrix<T>,
    friend_clusters: &ClusterAssignment<T>,
    thresholds: Thresholds,
) -> Result<FriendRiskReport> {
    thresholds.validate()?;
    let clusters: Vec<ClusterRisk> = (0..friend_clusters.k())
        .map(|i| {
            let cluster = ClusterId::from_index(i);
            let signs = impact_sign_percentages(m, cluster);
            ClusterRisk {
                cluster,
                im_plus: signs.im_plus(),
                im_minus: signs.im_minus(),
                n_significant: signs.n_significant,
                label: signs.im_minus().map(|v| assign_friend_label(v, &thresholds)),
            }
        })
        .collect();
    let friends = friend_clusters
        .iter()
        .map(|((owner, friend), c)| FriendRisk {
            owner: owner.clone(),
            friend: friend.clone(),
            cluster: c,
            label: clusters[c.index()].label,
        })
        .collect();
    Ok(FriendRiskReport {
        thresholds,
        clusters,
        friends,
    })
}

fn label_text(l: Option<RiskLevel>) -> String {
    l.map_or_else(|| "undetermined".to_string(), |l| l.name().to_string())
}

impl FriendRiskReport {
    pub fn cluster(&self, c: ClusterId) -> Option<&ClusterRisk> {
        self.clusters.iter().find(|r| r.cluster == c)
    }

    pub fn friend_label(&self, owner: &str, friend: &str) -> Option<&FriendRisk> {
        self.friends.iter().find(|f| f.owner == owner && f.friend == friend)
    }

    pub fn save_json(&self, writer: impl Write) -> Result<()> {
        persist::save(REPORT_KIND, self, writer)
    }

    pub fn load_json(reader: impl Read) -> Result<Self> {
        persist::load(REPORT_KIND, reader)
    }

    pub fn write_clusters_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["friend_cluster", "im_plus", "im_minus", "n_significant", "label"])?;
        let pct = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| format!("{v:.9}"));
        for c in &self.clusters {
            w.write_record([
                c.cluster.to_string(),
                pct(c.im_plus),
                pct(c.im_minus),
                c.n_significant.to_string(),
                label_text(c.label),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_friends_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["owner_id", "friend_id", "friend_cluster", "label"])?;
        for f in &self.friends {
            w.write_record([f.owner.clone(), f.friend.clone(), f.cluster.to_string(), label_text(f.label)])?;
        }
        w.flush()?;
        Ok(())
    }
}
