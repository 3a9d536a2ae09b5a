//! Social network data model: categorical profiles, undirected friendships,
//! 2-hop ego graphs and user-supplied stranger risk labels.

mod io;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{
    load_network, parse_labels, parse_labels_located, parse_network, read_labels, read_network, write_labels,
    write_network, Issue, NetworkFile, NodeEntry,
};

/// Opaque node identifier.
pub type NodeId = String;

/// Sentinel category for a withheld or absent profile attribute.
pub const HIDDEN: &str = "hidden";
pub const VISIBLE: &str = "visible";

/// True for privacy-setting features, which may only take `visible`/`hidden`.
pub fn is_visibility_feature(name: &str) -> bool {
    name.ends_with("visibility")
}

/// Three-level risk scale used both for stranger labels and friend labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum RiskLevel {
    NotRisky = 1,
    Risky = 2,
    VeryRisky = 3,
}

impl RiskLevel {
    pub const ALL: [RiskLevel; 3] = [RiskLevel::NotRisky, RiskLevel::Risky, RiskLevel::VeryRisky];

    pub fn from_value(v: i64) -> Option<Self> {
        match v {
            1 => Some(RiskLevel::NotRisky),
            2 => Some(RiskLevel::Risky),
            3 => Some(RiskLevel::VeryRisky),
            _ => None,
        }
    }

    pub fn value(self) -> u8 {
        self as u8
    }

    /// Position in `ALL`.
    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn name(self) -> &'static str {
        match self {
            RiskLevel::NotRisky => "not risky",
            RiskLevel::Risky => "risky",
            RiskLevel::VeryRisky => "very risky",
        }
    }
}

impl From<RiskLevel> for u8 {
    fn from(l: RiskLevel) -> u8 {
        l.value()
    }
}

impl TryFrom<u8> for RiskLevel {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        RiskLevel::from_value(v as i64).ok_or_else(|| format!("risk label must be 1, 2 or 3, got {v}"))
    }
}

impl fmt::Display for RiskLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Categorical profile aligned with the network's feature list.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Profile {
    values: Vec<String>,
}

impl Profile {
    pub fn new(values: Vec<String>) -> Self {
        Profile { values }
    }

    pub fn get(&self, feature: usize) -> &str {
        &self.values[feature]
    }

    pub fn values(&self) -> &[String] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Immutable undirected social graph with one profile per node.
#[derive(Clone, Debug)]
pub struct SocialNetwork {
    features: Vec<String>,
    ids: Vec<NodeId>,
    index: HashMap<NodeId, usize>,
    profiles: Vec<Profile>,
    adj: Vec<Vec<usize>>,
    edges: Vec<(usize, usize)>,
}

/// Incremental, validating constructor for [`SocialNetwork`].
#[derive(Debug)]
pub struct NetworkBuilder {
    features: Vec<String>,
    feature_pos: HashMap<String, usize>,
    ids: Vec<NodeId>,
    index: HashMap<NodeId, usize>,
    profiles: Vec<Profile>,
    edge_set: HashSet<(usize, usize)>,
}

impl NetworkBuilder {
    pub fn new<S: Into<String>>(features: impl IntoIterator<Item = S>) -> Result<Self> {
        let features: Vec<String> = features.into_iter().map(Into::into).collect();
        let mut feature_pos = HashMap::new();
        for (i, f) in features.iter().enumerate() {
            if f.is_empty() {
                return Err(Error::parse(format!("features[{i}]"), "empty feature name"));
            }
            if feature_pos.insert(f.clone(), i).is_some() {
                return Err(Error::parse(format!("features[{i}]"), format!("duplicate feature `{f}`")));
            }
        }
        Ok(NetworkBuilder {
            features,
            feature_pos,
            ids: Vec::new(),
            index: HashMap::new(),
            profiles: Vec::new(),
            edge_set: HashSet::new(),
        })
    }

    pub fn features(&self) -> &[String] {
        &self.features
    }

    /// Adds a node. Features missing from `profile` become [`HIDDEN`].
    pub fn add_node<K, V>(&mut self, id: impl Into<String>, profile: impl IntoIterator<Item = (K, V)>) -> Result<()>
    where
        K: AsRef<str>,
        V: Into<String>,
    {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::parse("node", "empty node id"));
        }
        if self.index.contains_key(&id) {
            return Err(Error::parse(format!("node `{id}`"), "duplicate node id"));
        }
        let mut values = vec![None; self.features.len()];
        for (k, v) in profile {
            let k = k.as_ref();
            let pos = *self
                .feature_pos
                .get(k)
                .ok_or_else(|| Error::parse(format!("node `{id}`"), format!("undeclared feature `{k}`")))?;
            let v: String = v.into();
            if v.is_empty() {
                return Err(Error::parse(format!("node `{id}`.{k}"), "empty category"));
            }
            if is_visibility_feature(k) && v != VISIBLE && v != HIDDEN {
                return Err(Error::parse(
                    format!("node `{id}`.{k}"),
                    format!("visibility feature must be `visible` or `hidden`, got `{v}`"),
                ));
            }
            if values[pos].replace(v).is_some() {
                return Err(Error::parse(format!("node `{id}`.{k}"), "feature given twice"));
            }
        }
        let values = values.into_iter().map(|v| v.unwrap_or_else(|| HIDDEN.to_string())).collect();
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.profiles.push(Profile { values });
        Ok(())
    }

    pub fn add_edge(&mut self, a: &str, b: &str) -> Result<()> {
        let ia = *self.index.get(a).ok_or_else(|| Error::UnknownNode(a.to_string()))?;
        let ib = *self.index.get(b).ok_or_else(|| Error::UnknownNode(b.to_string()))?;
        if ia == ib {
            return Err(Error::parse(format!("edge ({a}, {b})"), "self loop"));
        }
        let key = (ia.min(ib), ia.max(ib));
        if !self.edge_set.insert(key) {
            return Err(Error::parse(format!("edge ({a}, {b})"), "duplicate edge"));
        }
        Ok(())
    }

    pub fn build(self) -> SocialNetwork {
        let n = self.ids.len();
        let mut adj = vec![Vec::new(); n];
        let mut edges: Vec<(usize, usize)> = self
            .edge_set
            .into_iter()
            .map(|(a, b)| if self.ids[a] <= self.ids[b] { (a, b) } else { (b, a) })
            .collect();
        edges.sort_by(|x, y| (&self.ids[x.0], &self.ids[x.1]).cmp(&(&self.ids[y.0], &self.ids[y.1])));
        for &(a, b) in &edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        SocialNetwork {
            features: self.features,
            ids: self.ids,
            index: self.index,
            profiles: self.profiles,
            adj,
            edges,
        }
    }
}

impl SocialNetwork {
    pub fn features(&self) -> &[String] {
        &self.features
    }

    pub fn feature_count(&self) -> usize {
        self.features.len()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f == name)
    }

    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Node ids in insertion order.
    pub fn node_ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub(crate) fn require(&self, id: &str) -> Result<usize> {
        self.index_of(id).ok_or_else(|| Error::UnknownNode(id.to_string()))
    }

    pub fn id(&self, ix: usize) -> &str {
        &self.ids[ix]
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn profile(&self, ix: usize) -> &Profile {
        &self.profiles[ix]
    }

    pub fn profile_of(&self, id: &str) -> Result<&Profile> {
        Ok(&self.profiles[self.require(id)?])
    }

    /// Sorted neighbor indices.
    pub fn neighbors(&self, ix: usize) -> &[usize] {
        &self.adj[ix]
    }

    pub fn degree(&self, ix: usize) -> usize {
        self.adj[ix].len()
    }

    pub fn are_adjacent(&self, a: usize, b: usize) -> bool {
        self.adj[a].binary_search(&b).is_ok()
    }

    /// Canonical edges: smaller id first, sorted.
    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.edges.iter().map(|&(a, b)| (self.ids[a].as_str(), self.ids[b].as_str()))
    }

    /// Sorted indices of common neighbors.
    pub fn mutual_friends_ix(&self, u: usize, s: usize) -> Vec<usize> {
        let (a, b) = (&self.adj[u], &self.adj[s]);
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    out.push(a[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        out
    }

    pub fn mutual_friend_count_ix(&self, u: usize, s: usize) -> usize {
        self.mutual_friends_ix(u, s).len()
    }

    /// Hop distance from `u` to `s` is exactly two.
    pub fn is_stranger_ix(&self, u: usize, s: usize) -> bool {
        u != s && !self.are_adjacent(u, s) && !self.mutual_friends_ix(u, s).is_empty()
    }

    /// Hop distance between two nodes, `None` if disconnected.
    pub fn distance(&self, from: usize, to: usize) -> Option<usize> {
        if from == to {
            return Some(0);
        }
        let mut dist = vec![usize::MAX; self.node_count()];
        let mut queue = std::collections::VecDeque::new();
        dist[from] = 0;
        queue.push_back(from);
        while let Some(x) = queue.pop_front() {
            for &y in &self.adj[x] {
                if dist[y] == usize::MAX {
                    dist[y] = dist[x] + 1;
                    if y == to {
                        return Some(dist[y]);
                    }
                    queue.push_back(y);
                }
            }
        }
        None
    }
}

/// Owner-centred subgraph of nodes within two hops.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EgoGraph {
    pub owner: NodeId,
    pub friends: BTreeSet<NodeId>,
    pub strangers: BTreeSet<NodeId>,
    /// Induced edges among owner, friends and strangers, canonical order.
    pub edges: Vec<(NodeId, NodeId)>,
}

pub fn build_ego_graph(net: &SocialNetwork, u: &str) -> Result<EgoGraph> {
    let ui = net.require(u)?;
    let mut member = vec![false; net.node_count()];
    member[ui] = true;
    let friends: BTreeSet<NodeId> = net.neighbors(ui).iter().map(|&f| net.id(f).to_string()).collect();
    for &f in net.neighbors(ui) {
        member[f] = true;
    }
    let mut strangers = BTreeSet::new();
    for &f in net.neighbors(ui) {
        for &s in net.neighbors(f) {
            if !member[s] {
                strangers.insert(net.id(s).to_string());
            }
        }
    }
    for s in &strangers {
        member[net.index_of(s).expect("stranger is a network node")] = true;
    }
    let edges = net
        .edges
        .iter()
        .filter(|&&(a, b)| member[a] && member[b])
        .map(|&(a, b)| (net.id(a).to_string(), net.id(b).to_string()))
        .collect();
    Ok(EgoGraph {
        owner: u.to_string(),
        friends,
        strangers,
        edges,
    })
}

/// Common neighbors of two distinct nodes.
pub fn mutual_friends(net: &SocialNetwork, u: &str, s: &str) -> Result<BTreeSet<NodeId>> {
    if u == s {
        return Err(Error::SameNode(u.to_string()));
    }
    let (ui, si) = (net.require(u)?, net.require(s)?);
    Ok(net.mutual_friends_ix(ui, si).into_iter().map(|m| net.id(m).to_string()).collect())
}

/// A user's risk label for one of their strangers.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RiskLabelRecord {
    pub user: NodeId,
    pub stranger: NodeId,
    pub label: RiskLevel,
}

impl RiskLabelRecord {
    pub fn new(user: impl Into<String>, stranger: impl Into<String>, label: RiskLevel) -> Self {
        RiskLabelRecord {
            user: user.into(),
            stranger: stranger.into(),
            label,
        }
    }
}

/// Checks every record against the network: known nodes, distance exactly two, no duplicates.
/// `locus` names each record for the report (e.g. a CSV line).
pub fn validate_records(
    net: &SocialNetwork,
    records: &[RiskLabelRecord],
    locus: impl Fn(usize) -> String,
) -> Vec<Issue> {
    let mut issues = Vec::new();
    let mut seen = HashSet::new();
    for (i, r) in records.iter().enumerate() {
        let (Some(u), Some(s)) = (net.index_of(&r.user), net.index_of(&r.stranger)) else {
            for id in [&r.user, &r.stranger] {
                if !net.contains(id) {
                    issues.push(Issue::new(locus(i), format!("unknown node `{id}`")));
                }
            }
            continue;
        };
        if !net.is_stranger_ix(u, s) {
            let d = net
                .distance(u, s)
                .map_or_else(|| "unreachable".to_string(), |d| d.to_string());
            issues.push(Issue::new(
                locus(i),
                format!("`{}` is not a stranger of `{}` (distance {d}, expected 2)", r.stranger, r.user),
            ));
        }
        if !seen.insert((u, s)) {
            issues.push(Issue::new(
                locus(i),
                format!("duplicate label for ({}, {})", r.user, r.stranger),
            ));
        }
    }
    issues
}

/// Records whose user and stranger share exactly one mutual friend, in input order.
pub fn first_group(records: &[RiskLabelRecord], net: &SocialNetwork) -> Vec<RiskLabelRecord> {
    records
        .iter()
        .filter(|r| is_first_group(net, r))
        .cloned()
        .collect()
}

pub fn is_first_group(net: &SocialNetwork, r: &RiskLabelRecord) -> bool {
    match (net.index_of(&r.user), net.index_of(&r.stranger)) {
        (Some(u), Some(s)) => net.mutual_friend_count_ix(u, s) == 1,
        _ => false,
    }
}

/// Owners appearing in `records`, sorted.
pub fn labeling_users(records: &[RiskLabelRecord]) -> Vec<NodeId> {
    let set: BTreeSet<&str> = records.iter().map(|r| r.user.as_str()).collect();
    set.into_iter().map(str::to_string).collect()
}

/// Summary counts printed by ingestion.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct DatasetCounts {
    pub nodes: usize,
    pub edges: usize,
    pub users: usize,
    pub friends: usize,
    pub strangers: usize,
    pub labels: usize,
    pub first_group: usize,
    pub labels_per_level: BTreeMap<u8, usize>,
}

pub fn dataset_counts(net: &SocialNetwork, records: &[RiskLabelRecord]) -> DatasetCounts {
    let users = labeling_users(records);
    let mut friends = 0;
    let mut strangers = 0;
    for u in &users {
        if let Ok(ego) = build_ego_graph(net, u) {
            friends += ego.friends.len();
            strangers += ego.strangers.len();
        }
    }
    let mut per_level = BTreeMap::new();
    for r in records {
        *per_level.entry(r.label.value()).or_insert(0) += 1;
    }
    DatasetCounts {
        nodes: net.node_count(),
        edges: net.edge_count(),
        users: users.len(),
        friends,
        strangers,
        labels: records.len(),
        first_group: records.iter().filter(|r| is_first_group(net, r)).count(),
        labels_per_level: per_level,
    }
}
