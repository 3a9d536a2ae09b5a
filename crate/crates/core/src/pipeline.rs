//! Config-driven end-to-end runs with hashed artifacts.

use std::collections::HashMap;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    baseline_stage, cluster_stage, derive_seed, impact_stage, AnalysisConfig, BaselineConfig, ClusterConfig, Dataset,
    ImpactConfig, Oracle,
};
use crate::baseline::{write_baseline_artifact, BaselineLabel};
use crate::error::{Error, Result};
use crate::eval::{cross_validate, grid_search, validate_assumption, validate_deletions, EvaluationReport};
use crate::network::{parse_labels_located, parse_network, Issue};
use crate::network::{dataset_counts, validate_records, DatasetCounts, NodeId, RiskLabelRecord, SocialNetwork};
use crate::persist;
use crate::risklabel::{build_report, Thresholds};
use crate::synth::{read_values_csv, PlantedTruth};
use crate::transform::SfmKind;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub network: PathBuf,
    pub labels: PathBuf,
    /// Optional `user_id,stranger_id,value` file with real-valued labels.
    pub label_values: Option<PathBuf>,
    /// Planted truth, required by oracle switches.
    pub truth: Option<PathBuf>,
    /// Optional `user_id,friend_id` list of deleted friendships.
    pub deletions: Option<PathBuf>,
    pub output: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Clustering {
    pub friend: ClusterConfig,
    pub stranger: ClusterConfig,
}

impl Default for Clustering {
    fn default() -> Self {
        let a = AnalysisConfig::default();
        Clustering {
            friend: a.friend,
            stranger: a.stranger,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub friend_ks: Vec<usize>,
    pub stranger_ks: Vec<usize>,
}

fn parse_ks(spec: &str) -> Result<Vec<usize>> {
    let bad = || Error::InvalidConfig(format!("cannot read cluster counts `{spec}`"));
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let b = b.strip_prefix('=').unwrap_or(b);
            let (a, b): (usize, usize) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
            if a > b {
                return Err(bad());
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

impl GridConfig {
    /// Parses `friend_ks=2..9 stranger_ks=8,26,49` style assignments (ranges inclusive).
    pub fn parse<S: AsRef<str>>(assignments: &[S]) -> Result<Self> {
        let (mut f, mut s) = (None, None);
        for a in assignments {
            let a = a.as_ref();
            let (key, value) = a
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("grid entry `{a}` is not key=value")))?;
            match key.trim() {
                "friend_ks" => f = Some(parse_ks(value)?),
                "stranger_ks" => s = Some(parse_ks(value)?),
                other => return Err(Error::InvalidConfig(format!("unknown grid key `{other}`"))),
            }
        }
        match (f, s) {
            (Some(friend_ks), Some(stranger_ks)) => Ok(GridConfig { friend_ks, stranger_ks }),
            _ => Err(Error::InvalidConfig("grid needs both friend_ks and stranger_ks".into())),
        }
    }
}

impl FromStr for GridConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GridConfig::parse(&s.split_whitespace().collect::<Vec<_>>())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Fraction of strangers withheld per cluster; 0 evaluates in-sample.
    pub holdout: f64,
    pub seed: Option<u64>,
    pub grid: Option<GridConfig>,
    pub assumption: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            holdout: 0.1,
            seed: None,
            grid: None,
            assumption: true,
        }
    }
}

/// Replace fitted stages with the planted truth.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub friend_clusters: bool,
    pub stranger_clusters: bool,
    pub baselines: bool,
}

impl OracleConfig {
    fn any(&self) -> bool {
        self.friend_clusters || self.stranger_clusters || self.baselines
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed; every stage seed not given explicitly is derived from it.
    pub seed: u64,
    pub paths: Paths,
    pub clustering: Clustering,
    pub baseline: BaselineConfig,
    pub impact: ImpactConfig,
    pub risklabel: Thresholds,
    pub eval: EvalConfig,
    pub oracle: OracleConfig,
}

impl PipelineConfig {
    /// Reads TOML; relative paths are taken relative to the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg: PipelineConfig = toml::from_str(&fs::read_to_string(path)?)?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        cfg.paths.resolve(dir);
        Ok(cfg)
    }

    pub fn analysis(&self) -> AnalysisConfig {
        AnalysisConfig {
            friend: self.clustering.friend.clone(),
            stranger: self.clustering.stranger.clone(),
            baseline: self.baseline.clone(),
            impact: self.impact.clone(),
        }
    }

    /// Range checks and input existence, before any computation.
    pub fn validate(&self) -> Result<()> {
        self.risklabel.validate()?;
        self.baseline.fit_options()?;
        if !(0.0..1.0).contains(&self.eval.holdout) {
            return Err(Error::InvalidConfig(format!("eval.holdout must lie in [0, 1), got {}", self.eval.holdout)));
        }
        for (name, c) in [("friend", &self.clustering.friend), ("stranger", &self.clustering.stranger)] {
            if c.k == 0 {
                return Err(Error::InvalidConfig(format!("clustering.{name}.k must be positive")));
            }
        }
        if let Some(g) = &self.eval.grid {
            if g.friend_ks.is_empty() || g.stranger_ks.is_empty() || g.friend_ks.iter().chain(&g.stranger_ks).any(|&k| k == 0) {
                return Err(Error::InvalidConfig("eval.grid needs non-empty lists of positive counts".into()));
            }
        }
        if self.oracle.any() && self.paths.truth.is_none() {
            return Err(Error::InvalidConfig("oracle switches need paths.truth".into()));
        }
        if self.paths.output.as_os_str().is_empty() {
            return Err(Error::InvalidConfig("paths.output is required".into()));
        }
        let inputs = [Some(&self.paths.network), Some(&self.paths.labels)]
            .into_iter()
            .chain([self.paths.label_values.as_ref(), self.paths.truth.as_ref(), self.paths.deletions.as_ref()]);
        for p in inputs.flatten() {
            if !p.is_file() {
                return Err(Error::InvalidConfig(format!("input file `{}` does not exist", p.display())));
            }
        }
        Ok(())
    }
}

impl Paths {
    fn resolve(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if !p.as_os_str().is_empty() && p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        fix(&mut self.network);
        fix(&mut self.labels);
        fix(&mut self.output);
        for p in [&mut self.label_values, &mut self.truth, &mut self.deletions].into_iter().flatten() {
            fix(p);
        }
    }
}

/// Validation findings and summary counts of an input pair.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct IngestReport {
    pub issues: Vec<Issue>,
    pub counts: Option<DatasetCounts>,
}

impl IngestReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }
}

impl fmt::Display for IngestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in &self.issues {
            writeln!(f, "error: {i}")?;
        }
        writeln!(f, "{} errors", self.issues.len())?;
        if let Some(c) = &self.counts {
            writeln!(
                f,
                "users {}  friends {}  strangers {}  labels {}  first group {}",
                c.users, c.friends, c.strangers, c.labels, c.first_group
            )?;
            let levels: Vec<String> = c.labels_per_level.iter().map(|(l, n)| format!("{l}: {n}")).collect();
            writeln!(f, "labels per level  {}", levels.join("  "))?;
        }
        Ok(())
    }
}

/// Loaded, validated inputs.
pub struct Inputs {
    pub net: SocialNetwork,
    pub records: Vec<RiskLabelRecord>,
}

fn ingest_inner(network_path: &Path, labels_path: &Path) -> Result<(IngestReport, Option<Inputs>)> {
    let (net, mut issues) = parse_network(BufReader::new(File::open(network_path)?));
    for i in &mut issues {
        i.locus = format!("{}: {}", network_path.display(), i.locus);
    }
    let (located, label_issues) = parse_labels_located(BufReader::new(File::open(labels_path)?));
    issues.extend(
        label_issues
            .into_iter()
            .map(|i| Issue::new(format!("{}: {}", labels_path.display(), i.locus), i.message)),
    );
    let Some(net) = net else {
        return Ok((IngestReport { issues, counts: None }, None));
    };
    let records: Vec<RiskLabelRecord> = located.iter().map(|(_, r)| r.clone()).collect();
    issues.extend(validate_records(&net, &records, |i| {
        format!("{}: line {}", labels_path.display(), located[i].0)
    }));
    let counts = dataset_counts(&net, &records);
    let ok = issues.is_empty();
    Ok((
        IngestReport {
            issues,
            counts: Some(counts),
        },
        ok.then_some(Inputs { net, records }),
    ))
}

/// Schema and invariant checks with per-locus findings.
pub fn ingest(network_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<IngestReport> {
    ingest_inner(network_path.as_ref(), labels_path.as_ref()).map(|(r, _)| r)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ingest,
    Transform,
    Cluster,
    Baseline,
    Impact,
    Label,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::Transform,
        Stage::Cluster,
        Stage::Baseline,
        Stage::Impact,
        Stage::Label,
        Stage::Evaluate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Transform => "transform",
            Stage::Cluster => "cluster",
            Stage::Baseline => "baseline",
            Stage::Impact => "impact",
            Stage::Label => "label",
            Stage::Evaluate => "evaluate",
        }
    }

    /// Declared inputs (files and upstream artifacts) and outputs.
    pub fn io(self) -> (&'static [&'static str], &'static [&'static str]) {
        match self {
            Stage::Ingest => (&["network", "labels"], &[]),
            Stage::Transform => (&["network", "labels"], &[SFM_FRIENDS, SFM_STRANGERS]),
            Stage::Cluster => (&[SFM_FRIENDS, SFM_STRANGERS], &[CLUSTERS]),
            Stage::Baseline => (&["network", "labels", SFM_STRANGERS], &[BASELINE]),
            Stage::Impact => (&["network", "labels", SFM_STRANGERS, CLUSTERS, BASELINE], &[IMPACTS]),
            Stage::Label => (&[IMPACTS, CLUSTERS], &[FRIEND_RISK]),
            Stage::Evaluate => (
                &["network", "labels", SFM_STRANGERS, CLUSTERS, FRIEND_RISK],
                &[EVALUATION],
            ),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const SFM_FRIENDS: &str = "sfm_friends.csv";
pub const SFM_STRANGERS: &str = "sfm_strangers.csv";
pub const CLUSTERS: &str = "clusters.csv";
pub const BASELINE: &str = "baseline.json";
pub const IMPACTS: &str = "impacts.csv";
pub const FRIEND_RISK: &str = "friend_risk.json";
pub const EVALUATION: &str = "evaluation.json";
pub const MANIFEST: &str = "manifest.json";
pub const LOCK: &str = ".friendrisk.lock";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub name: String,
    pub stage: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub stage: String,
    pub cause: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    /// True iff every requested stage succeeded.
    pub complete: bool,
    pub stages: Vec<StageRecord>,
    pub artifacts: Vec<ArtifactRecord>,
    pub failure: Option<Failure>,
}

const MANIFEST_KIND: &str = "manifest";

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        persist::load(MANIFEST_KIND, BufReader::new(File::open(path)?))
    }

    pub fn artifact(&self, name: &str) -> Option<&ArtifactRecord> {
        self.artifacts.iter().find(|a| a.name == name)
    }
}

struct LockGuard(PathBuf);

impl LockGuard {
    fn acquire(dir: &Path) -> Result<Self> {
        let path = dir.join(LOCK);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(LockGuard(path)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(path.display().to_string())),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

struct Run<'a> {
    dir: &'a Path,
    manifest: Manifest,
}

impl Run<'_> {
    fn write(&mut self, stage: Stage, name: &str, fill: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        fill(&mut buf)?;
        fs::write(self.dir.join(name), &buf)?;
        self.manifest.artifacts.push(ArtifactRecord {
            name: name.to_string(),
            stage: stage.name().to_string(),
            sha256: hex::encode(Sha256::digest(&buf)),
            bytes: buf.len(),
        });
        Ok(())
    }

    fn record(&mut self, stage: Stage) {
        let (i, o) = stage.io();
        self.manifest.stages.push(StageRecord {
            name: stage.name().to_string(),
            inputs: i.iter().map(|s| s.to_string()).collect(),
            outputs: o.iter().map(|s| s.to_string()).collect(),
        });
    }

    fn save_manifest(&self) -> Result<()> {
        let mut buf = Vec::new();
        persist::save(MANIFEST_KIND, &self.manifest, &mut buf)?;
        fs::write(self.dir.join(MANIFEST), buf)?;
        Ok(())
    }
}

fn stage_err(stage: Stage) -> impl FnOnce(Error) -> Error {
    move |e| Error::Stage {
        stage: stage.name().to_string(),
        source: Box::new(e),
    }
}

fn read_deletions(path: &Path) -> Result<Vec<(NodeId, NodeId)>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    if r.headers()?.iter().collect::<Vec<_>>() != ["user_id", "friend_id"] {
        return Err(Error::parse(format!("{}: line 1", path.display()), "expected header `user_id,friend_id`"));
    }
    r.records()
        .map(|row| {
            let row = row?;
            Ok((row[0].to_string(), row[1].to_string()))
        })
        .collect()
}

/// Runs every stage.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Manifest> {
    run_until(cfg, Stage::Evaluate)
}

/// Runs stages up to and including `last`, writing their artifacts and the manifest.
/// On failure the manifest lists the artifacts written so far and the failing stage.
pub fn run_until(cfg: &PipelineConfig, last: Stage) -> Result<Manifest> {
    cfg.validate()?;
    let dir = cfg.paths.output.as_path();
    fs::create_dir_all(dir)?;
    let _lock = LockGuard::acquire(dir)?;
    let mut run = Run {
        dir,
        manifest: Manifest {
            seed: cfg.seed,
            complete: false,
            stages: Vec::new(),
            artifacts: Vec::new(),
            failure: None,
        },
    };
    let outcome = execute(cfg, last, &mut run);
    match &outcome {
        Ok(()) => run.manifest.complete = true,
        Err(Error::Stage { stage, source }) => {
            run.manifest.failure = Some(Failure {
                stage: stage.clone(),
                cause: source.to_string(),
            })
        }
        Err(e) => {
            run.manifest.failure = Some(Failure {
                stage: "setup".into(),
                cause: e.to_string(),
            })
        }
    }
    run.save_manifest()?;
    outcome.map(|()| run.manifest)
}

fn execute(cfg: &PipelineConfig, last: Stage, run: &mut Run<'_>) -> Result<()> {
    let acfg = cfg.analysis();

    let (report, inputs) = ingest_inner(&cfg.paths.network, &cfg.paths.labels).map_err(stage_err(Stage::Ingest))?;
    let Some(Inputs { net, records }) = inputs else {
        let first = report.issues.first().cloned().unwrap_or_else(|| Issue::new("input", "invalid"));
        return Err(stage_err(Stage::Ingest)(Error::parse(
            first.locus,
            format!("{} ({} errors in total)", first.message, report.issues.len()),
        )));
    };
    run.record(Stage::Ingest);
    log::info!("ingested {} labels", records.len());

    let value_map: Option<HashMap<(NodeId, NodeId), f64>> = cfg
        .paths
        .label_values
        .as_ref()
        .map(|p| read_values_csv(BufReader::new(File::open(p)?)))
        .transpose()
        .map_err(stage_err(Stage::Ingest))?;
    let ds = match &value_map {
        Some(m) => Dataset::with_value_map(&net, &records, m),
        None => Dataset::new(&net, &records),
    };
    let oracle: Oracle<f64> = match &cfg.paths.truth {
        Some(p) if cfg.oracle.any() => {
            let truth = PlantedTruth::load_json(BufReader::new(File::open(p)?)).map_err(stage_err(Stage::Ingest))?;
            let full = truth.oracle::<f64>(&net, &records, cfg.oracle.baselines).map_err(stage_err(Stage::Ingest))?;
            Oracle {
                friend_clusters: full.friend_clusters.filter(|_| cfg.oracle.friend_clusters),
                stranger_clusters: full.stranger_clusters.filter(|_| cfg.oracle.stranger_clusters),
                baselines: full.baselines,
            }
        }
        _ => Oracle::default(),
    };

    macro_rules! stop_after {
        ($s:expr) => {
            if last == $s {
                return Ok(());
            }
        };
    }

    let st = Stage::Transform;
    let t = crate::analysis::transform_stage(&ds).map_err(stage_err(st))?;
    run.write(st, SFM_FRIENDS, |w| t.sfmf.write_csv(w)).map_err(stage_err(st))?;
    run.write(st, SFM_STRANGERS, |w| t.sfms.write_csv(w)).map_err(stage_err(st))?;
    run.record(st);
    stop_after!(st);

    let st = Stage::Cluster;
    let cl = cluster_stage(&t, &acfg, cfg.seed, &oracle).map_err(stage_err(st))?;
    run.write(st, CLUSTERS, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["kind", "owner_id", "subject_id", "cluster_id"])?;
        for (kind, a) in [(SfmKind::Friends, &cl.friends), (SfmKind::Strangers, &cl.strangers)] {
            let kind = match kind {
                SfmKind::Friends => "friend",
                SfmKind::Strangers => "stranger",
            };
            for ((o, s), c) in a.iter() {
                csv.write_record([kind, o.as_str(), s.as_str(), &c.to_string()])?;
            }
        }
        csv.flush()?;
        Ok(())
    })
    .map_err(stage_err(st))?;
    run.record(st);
    stop_after!(st);

    let st = Stage::Baseline;
    let all = vec![true; ds.len()];
    let base = baseline_stage(&ds, &t, &acfg.baseline, &oracle, &all).map_err(stage_err(st))?;
    let labels: Vec<BaselineLabel<f64>> = records
        .iter()
        .zip(base.values.iter().zip(&base.probs))
        .map(|(r, (&value, probs))| BaselineLabel {
            user: r.user.clone(),
            stranger: r.stranger.clone(),
            value,
            probs: probs.unwrap_or([0.0; 3]),
        })
        .collect();
    run.write(st, BASELINE, |w| write_baseline_artifact(base.model.as_ref(), &labels, w))
        .map_err(stage_err(st))?;
    run.record(st);
    stop_after!(st);

    let st = Stage::Impact;
    let fit = impact_stage(&ds, &t, &cl, &base.values, &acfg.impact, &all, &[]).map_err(stage_err(st))?;
    log::info!(
        "{} impact equations, {} dropped with zero Past",
        fit.equations.equations.len(),
        fit.equations.dropped_zero_past
    );
    run.write(st, IMPACTS, |w| fit.impacts.write_csv(w)).map_err(stage_err(st))?;
    run.record(st);
    stop_after!(st);

    let st = Stage::Label;
    let report = build_report(&fit.impacts, &cl.friends, cfg.risklabel).map_err(stage_err(st))?;
    run.write(st, FRIEND_RISK, |w| report.save_json(w)).map_err(stage_err(st))?;
    run.record(st);
    stop_after!(st);

    let st = Stage::Evaluate;
    let eval_seed = cfg.eval.seed.unwrap_or_else(|| derive_seed(cfg.seed, "evaluation", &[]));
    let evaluation = (|| -> Result<EvaluationReport> {
        let mut ev = EvaluationReport {
            cross_validation: Some(cross_validate(&ds, &t, &cl, &acfg, &oracle, cfg.eval.holdout, eval_seed)?),
            ..Default::default()
        };
        if let Some(g) = &cfg.eval.grid {
            ev.grid = grid_search(&ds, &t, &acfg, &oracle, &g.friend_ks, &g.stranger_ks, eval_seed, cfg.eval.holdout)?;
        }
        if cfg.eval.assumption {
            ev.assumption = Some(validate_assumption(&ds, &t, &acfg.baseline)?);
        }
        if let Some(p) = &cfg.paths.deletions {
            ev.deletions = Some(validate_deletions(&report, &read_deletions(p)?));
        }
        Ok(ev)
    })()
    .map_err(stage_err(st))?;
    run.write(st, EVALUATION, |w| evaluation.save_json(w)).map_err(stage_err(st))?;
    run.record(st);
    Ok(())
}
