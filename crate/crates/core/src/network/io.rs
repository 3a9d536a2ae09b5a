//! Network JSON and label CSV formats.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{NetworkBuilder, RiskLabelRecord, RiskLevel, SocialNetwork};
use crate::error::{Error, Result};

/// One validation finding with its location in the input.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub locus: String,
    pub message: String,
}

impl Issue {
    pub fn new(locus: impl Into<String>, message: impl Into<String>) -> Self {
        Issue {
            locus: locus.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.locus, self.message)
    }
}

impl From<Issue> for Error {
    fn from(i: Issue) -> Self {
        Error::Parse {
            locus: i.locus,
            message: i.message,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub features: Vec<String>,
    pub nodes: Vec<NodeEntry>,
    pub edges: Vec<Vec<String>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeEntry {
    pub id: String,
    pub profile: BTreeMap<String, String>,
}

impl NetworkFile {
    pub fn from_network(net: &SocialNetwork) -> Self {
        let nodes = (0..net.node_count())
            .map(|i| NodeEntry {
                id: net.id(i).to_string(),
                profile: net
                    .features()
                    .iter()
                    .cloned()
                    .zip(net.profile(i).values().iter().cloned())
                    .collect(),
            })
            .collect();
        let edges = net.edges().map(|(a, b)| vec![a.to_string(), b.to_string()]).collect();
        NetworkFile {
            features: net.features().to_vec(),
            nodes,
            edges,
        }
    }

    /// Builds the network, collecting every violation with its element locus.
    pub fn into_network(self) -> (Option<SocialNetwork>, Vec<Issue>) {
        let mut issues = Vec::new();
        let mut builder = match NetworkBuilder::new(self.features) {
            Ok(b) => b,
            Err(e) => return (None, vec![error_issue(e, "features")]),
        };
        for (i, node) in self.nodes.into_iter().enumerate() {
            if let Err(e) = builder.add_node(node.id, node.profile) {
                issues.push(error_issue(e, &format!("nodes[{i}]")));
            }
        }
        for (i, edge) in self.edges.iter().enumerate() {
            let locus = format!("edges[{i}]");
            if edge.len() != 2 {
                issues.push(Issue::new(locus, format!("edge must have 2 endpoints, got {}", edge.len())));
                continue;
            }
            if let Err(e) = builder.add_edge(&edge[0], &edge[1]) {
                issues.push(error_issue(e, &locus));
            }
        }
        if issues.is_empty() {
            (Some(builder.build()), issues)
        } else {
            (None, issues)
        }
    }
}

fn error_issue(e: Error, locus: &str) -> Issue {
    match e {
        Error::Parse { locus: inner, message } => Issue::new(format!("{locus} ({inner})"), message),
        other => Issue::new(locus, other.to_string()),
    }
}

/// Parses network JSON, returning every problem found.
pub fn parse_network(reader: impl Read) -> (Option<SocialNetwork>, Vec<Issue>) {
    match serde_json::from_reader::<_, NetworkFile>(reader) {
        Ok(file) => file.into_network(),
        Err(e) => (
            None,
            vec![Issue::new(format!("line {} column {}", e.line(), e.column()), e.to_string())],
        ),
    }
}

pub fn read_network(reader: impl Read) -> Result<SocialNetwork> {
    match parse_network(reader) {
        (Some(net), _) => Ok(net),
        (None, mut issues) => Err(issues.remove(0).into()),
    }
}

pub fn load_network(path: impl AsRef<Path>) -> Result<SocialNetwork> {
    let path = path.as_ref();
    read_network(BufReader::new(File::open(path)?)).map_err(|e| match e {
        Error::Parse { locus, message } => Error::Parse {
            locus: format!("{}: {locus}", path.display()),
            message,
        },
        other => other,
    })
}

pub fn write_network(net: &SocialNetwork, writer: impl Write) -> Result<()> {
    let mut w = writer;
    serde_json::to_writer_pretty(&mut w, &NetworkFile::from_network(net))?;
    writeln!(w)?;
    Ok(())
}

const LABEL_HEADER: [&str; 3] = ["user_id", "stranger_id", "label"];

/// Parses `user_id,stranger_id,label` CSV. Every malformed row and duplicate
/// (user, stranger) pair is reported by line; valid rows are still returned.
pub fn parse_labels(reader: impl Read) -> (Vec<RiskLabelRecord>, Vec<Issue>) {
    let (located, issues) = parse_labels_located(reader);
    (located.into_iter().map(|(_, r)| r).collect(), issues)
}

/// As [`parse_labels`], pairing each record with its CSV line number.
pub fn parse_labels_located(reader: impl Read) -> (Vec<(u64, RiskLabelRecord)>, Vec<Issue>) {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let mut issues = Vec::new();
    match rdr.headers() {
        Ok(h) if h.iter().eq(LABEL_HEADER) => {}
        Ok(h) => issues.push(Issue::new(
            "line 1",
            format!("expected header `{}`, got `{}`", LABEL_HEADER.join(","), h.iter().collect::<Vec<_>>().join(",")),
        )),
        Err(e) => return (Vec::new(), vec![Issue::new("line 1", e.to_string())]),
    }
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for rec in rdr.records() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                issues.push(Issue::new(format!("line {line}"), e.to_string()));
                continue;
            }
        };
        let line = rec.position().map_or(0, |p| p.line());
        let locus = format!("line {line}");
        let (user, stranger, label) = (&rec[0], &rec[1], &rec[2]);
        if user.is_empty() || stranger.is_empty() {
            issues.push(Issue::new(locus, "empty node id"));
            continue;
        }
        let level = match label.parse::<i64>().ok().and_then(RiskLevel::from_value) {
            Some(l) => l,
            None => {
                issues.push(Issue::new(locus, format!("label must be 1, 2 or 3, got `{label}`")));
                continue;
            }
        };
        if !seen.insert((user.to_string(), stranger.to_string())) {
            issues.push(Issue::new(locus, format!("duplicate label for ({user}, {stranger})")));
            continue;
        }
        out.push((line, RiskLabelRecord::new(user, stranger, level)));
    }
    (out, issues)
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<RiskLabelRecord>> {
    let path = path.as_ref();
    let (records, mut issues) = parse_labels(BufReader::new(File::open(path)?));
    if issues.is_empty() {
        Ok(records)
    } else {
        let first = issues.remove(0);
        Err(Error::parse(format!("{}: {}", path.display(), first.locus), first.message))
    }
}

pub fn write_labels(records: &[RiskLabelRecord], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(LABEL_HEADER)?;
    for r in records {
        w.write_record([r.user.as_str(), r.stranger.as_str(), &r.label.value().to_string()])?;
    }
    w.flush()?;
    Ok(())
}
