//! Stage composition shared by the pipeline and the evaluation harness.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::baseline::{fit_multinomial, DesignSpec, FitOptions, MultinomialModel};
use crate::cluster::{cluster, Algorithm, ClusterAssignment};
use crate::error::{Error, Result};
use crate::impact::{
    build_equations, mutual_friend_clusters, solve_impacts, term_coefficients, EquationInput, EquationSet,
    ImpactMatrix, ImpactMode, LabeledPeer, PastContext, PastValue, PsFormula,
};
use crate::network::{is_first_group, labeling_users, NodeId, RiskLabelRecord, RiskLevel, SocialNetwork};
use crate::scalar::Real;
use crate::transform::{build_sfmf, build_sfms, SocialFrequencyMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub algorithm: Algorithm,
    pub k: usize,
    /// Derived from the master seed when absent.
    pub seed: Option<u64>,
}

impl ClusterConfig {
    fn with_k(k: usize) -> Self {
        ClusterConfig {
            algorithm: Algorithm::Kmeans,
            k,
            seed: None,
        }
    }
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self::with_k(6)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub ridge: f64,
    pub max_iter: usize,
    pub tolerance: f64,
    pub reference_label: u8,
    /// Features used as frequency columns; all when absent.
    pub features: Option<Vec<String>>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        let o = FitOptions::default();
        BaselineConfig {
            ridge: o.ridge,
            max_iter: o.max_iter,
            tolerance: o.tolerance,
            reference_label: o.reference.value(),
            features: None,
        }
    }
}

impl BaselineConfig {
    pub fn fit_options(&self) -> Result<FitOptions> {
        let reference = RiskLevel::from_value(self.reference_label as i64)
            .ok_or_else(|| Error::InvalidConfig(format!("reference label {} is not 1, 2 or 3", self.reference_label)))?;
        let ridge_ok = self.ridge.is_finite() && self.ridge >= 0.0;
        let tol_ok = self.tolerance.is_finite() && self.tolerance > 0.0;
        if !ridge_ok || !tol_ok || self.max_iter == 0 {
            return Err(Error::InvalidConfig(
                "baseline needs ridge ≥ 0, tolerance > 0 and max_iter > 0".into(),
            ));
        }
        Ok(FitOptions {
            ridge: self.ridge,
            max_iter: self.max_iter,
            tolerance: self.tolerance,
            reference,
        })
    }
}

/// Which labeled strangers contribute impact equations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquationScope {
    /// Strangers with at least two mutual friends; first-group labels feed the baseline and Past values.
    #[default]
    BeyondFirstGroup,
    All,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImpactConfig {
    pub mode: ImpactMode,
    pub ps_formula: PsFormula,
    pub scope: EquationScope,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub friend: ClusterConfig,
    pub stranger: ClusterConfig,
    pub baseline: BaselineConfig,
    pub impact: ImpactConfig,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            friend: ClusterConfig::with_k(6),
            stranger: ClusterConfig::with_k(8),
            baseline: BaselineConfig::default(),
            impact: ImpactConfig::default(),
        }
    }
}

/// Mixes a master seed with a tag and integers (splitmix64 finalizer over FNV-1a of the tag).
pub fn derive_seed(master: u64, tag: &str, parts: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    let mut h = tag
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    h = mix(h ^ master);
    for &p in parts {
        h = mix(h ^ p);
    }
    h
}

/// Truth injected in place of fitted stages.
#[derive(Clone, Debug, Default)]
pub struct Oracle<T> {
    pub friend_clusters: Option<ClusterAssignment<T>>,
    pub stranger_clusters: Option<ClusterAssignment<T>>,
    pub baselines: Option<HashMap<(NodeId, NodeId), T>>,
}

/// Labeled records with the label values used for impacts (integer labels unless overridden).
#[derive(Clone, Debug)]
pub struct Dataset<'a, T> {
    pub net: &'a SocialNetwork,
    pub records: &'a [RiskLabelRecord],
    pub values: Vec<T>,
    first_group: Vec<bool>,
}

impl<'a, T: Real> Dataset<'a, T> {
    pub fn new(net: &'a SocialNetwork, records: &'a [RiskLabelRecord]) -> Self {
        let values = records.iter().map(|r| T::count(r.label.value() as usize)).collect();
        Self::with_values(net, records, values).expect("one value per record")
    }

    pub fn with_values(net: &'a SocialNetwork, records: &'a [RiskLabelRecord], values: Vec<T>) -> Result<Self> {
        if values.len() != records.len() {
            return Err(Error::IndexMismatch(format!(
                "{} label values for {} records",
                values.len(),
                records.len()
            )));
        }
        let first_group = records.iter().map(|r| is_first_group(net, r)).collect();
        Ok(Dataset {
            net,
            records,
            values,
            first_group,
        })
    }

    /// Continuous values keyed by (user, stranger); records without a value keep their integer label.
    pub fn with_value_map(
        net: &'a SocialNetwork,
        records: &'a [RiskLabelRecord],
        map: &HashMap<(NodeId, NodeId), T>,
    ) -> Self {
        let values = records
            .iter()
            .map(|r| {
                map.get(&(r.user.clone(), r.stranger.clone()))
                    .copied()
                    .unwrap_or_else(|| T::count(r.label.value() as usize))
            })
            .collect();
        Self::with_values(net, records, values).expect("one value per record")
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn is_first_group(&self, i: usize) -> bool {
        self.first_group[i]
    }

    pub fn in_scope(&self, i: usize, scope: EquationScope) -> bool {
        match scope {
            EquationScope::BeyondFirstGroup => !self.first_group[i],
            EquationScope::All => true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Transformed<T> {
    pub users: Vec<NodeId>,
    pub sfmf: SocialFrequencyMatrix<T>,
    pub sfms: SocialFrequencyMatrix<T>,
}

pub fn transform_stage<T: Real>(ds: &Dataset<'_, T>) -> Result<Transformed<T>> {
    let users = labeling_users(ds.records);
    Ok(Transformed {
        sfmf: build_sfmf(ds.net, &users)?,
        sfms: build_sfms(ds.net, ds.records)?,
        users,
    })
}

#[derive(Clone, Debug)]
pub struct Clustered<T> {
    pub friends: ClusterAssignment<T>,
    pub strangers: ClusterAssignment<T>,
}

pub fn cluster_stage<T: Real>(
    t: &Transformed<T>,
    cfg: &AnalysisConfig,
    master_seed: u64,
    oracle: &Oracle<T>,
) -> Result<Clustered<T>> {
    let run = |c: &ClusterConfig, rows: &SocialFrequencyMatrix<T>, tag: &str| {
        let seed = c.seed.unwrap_or_else(|| derive_seed(master_seed, tag, &[]));
        cluster(rows, c.algorithm, c.k, seed)
    };
    let friends = match &oracle.friend_clusters {
        Some(fc) => fc.clone(),
        None => run(&cfg.friend, &t.sfmf, "friend-clusters")?,
    };
    let strangers = match &oracle.stranger_clusters {
        Some(sc) => sc.clone(),
        None => run(&cfg.stranger, &t.sfms, "stranger-clusters")?,
    };
    Ok(Clustered { friends, strangers })
}

#[derive(Clone, Debug)]
pub struct BaselineFit<T> {
    /// `None` when baselines are injected.
    pub model: Option<MultinomialModel<T>>,
    pub design: DesignSpec,
    /// Baseline label per record.
    pub values: Vec<T>,
    pub probs: Vec<Option<[T; 3]>>,
    pub training_size: usize,
}

/// Fits the baseline on first-group records with `train[i]` and evaluates it on every record.
pub fn baseline_stage<T: Real>(
    ds: &Dataset<'_, T>,
    t: &Transformed<T>,
    cfg: &BaselineConfig,
    oracle: &Oracle<T>,
    train: &[bool],
) -> Result<BaselineFit<T>> {
    let design = DesignSpec::standard(ds.net, cfg.features.as_deref())?;
    if let Some(map) = &oracle.baselines {
        let values = ds
            .records
            .iter()
            .map(|r| {
                map.get(&(r.user.clone(), r.stranger.clone())).copied().ok_or_else(|| {
                    Error::IndexMismatch(format!("no injected baseline for ({}, {})", r.user, r.stranger))
                })
            })
            .collect::<Result<Vec<T>>>()?;
        return Ok(BaselineFit {
            model: None,
            design,
            probs: vec![None; values.len()],
            values,
            training_size: 0,
        });
    }
    let opts = cfg.fit_options()?;
    let rows = ds
        .records
        .iter()
        .map(|r| {
            let f = t
                .sfms
                .get(&r.user, &r.stranger)
                .ok_or_else(|| Error::IndexMismatch(format!("no stranger row for ({}, {})", r.user, r.stranger)))?;
            design.row(ds.net, f)
        })
        .collect::<Result<Vec<Vec<T>>>>()?;
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (i, r) in ds.records.iter().enumerate() {
        if train[i] && ds.is_first_group(i) {
            x.push(rows[i].clone());
            y.push(r.label);
        }
    }
    let model = fit_multinomial(&x, &y, design.names(), &opts)?;
    let probs = rows.iter().map(|r| model.predict_probs(r).map(Some)).collect::<Result<Vec<_>>>()?;
    let values = probs
        .iter()
        .map(|p| crate::baseline::weighted_label(p.expect("fitted")))
        .collect();
    Ok(BaselineFit {
        model: Some(model),
        design,
        values,
        probs,
        training_size: x.len(),
    })
}

#[derive(Clone, Debug)]
pub struct ImpactFit<T> {
    /// Past value per in-scope training record.
    pub pasts: Vec<Option<PastValue<T>>>,
    pub equations: EquationSet<T>,
    pub impacts: ImpactMatrix<T>,
    /// `ℓ̂` per requested target; `None` when a needed impact is not estimable.
    pub predictions: Vec<Option<T>>,
}

/// Solves impacts from in-scope training records and predicts `targets`.
/// Past peers are first-group training records.
pub fn impact_stage<T: Real>(
    ds: &Dataset<'_, T>,
    t: &Transformed<T>,
    cl: &Clustered<T>,
    baseline: &[T],
    cfg: &ImpactConfig,
    train: &[bool],
    targets: &[usize],
) -> Result<ImpactFit<T>> {
    let peers: Vec<LabeledPeer<T>> = (0..ds.len())
        .filter(|&i| train[i] && ds.is_first_group(i))
        .map(|i| LabeledPeer {
            user: ds.records[i].user.clone(),
            stranger: ds.records[i].stranger.clone(),
            label: ds.values[i],
            baseline: baseline[i],
        })
        .collect();
    let ctx = PastContext::new(ds.net, &t.sfms, &cl.strangers, &peers, cfg.ps_formula)?;
    let mut pasts = vec![None; ds.len()];
    let mut inputs = Vec::new();
    for i in 0..ds.len() {
        if !(train[i] && ds.in_scope(i, cfg.scope)) {
            continue;
        }
        let r = &ds.records[i];
        let past = ctx.past_parameter(&r.user, &r.stranger)?;
        inputs.push(EquationInput {
            user: r.user.clone(),
            stranger: r.stranger.clone(),
            label: ds.values[i],
            baseline: baseline[i],
            past: past.value,
        });
        pasts[i] = Some(past);
    }
    let equations = build_equations(&inputs, ds.net, &cl.friends, &cl.strangers, cfg.mode)?;
    let impacts = solve_impacts(&equations.equations, cfg.mode);
    let predictions = targets
        .iter()
        .map(|&i| {
            let r = &ds.records[i];
            let past = ctx.past_parameter(&r.user, &r.stranger)?;
            let (sc, counts) = mutual_friend_clusters(ds.net, &cl.friends, &cl.strangers, &r.user, &r.stranger)?;
            let terms = term_coefficients(&counts, past.value, cfg.mode);
            Ok(impacts.predict_shift(sc, &terms).map(|shift| baseline[i] + shift))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ImpactFit {
        pasts,
        equations,
        impacts,
        predictions,
    })
}

/// Every stage on the full dataset.
#[derive(Clone, Debug)]
pub struct Analysis<T> {
    pub transformed: Transformed<T>,
    pub clusters: Clustered<T>,
    pub baseline: BaselineFit<T>,
    pub impact: ImpactFit<T>,
}

pub fn analyze<T: Real>(
    ds: &Dataset<'_, T>,
    cfg: &AnalysisConfig,
    master_seed: u64,
    oracle: &Oracle<T>,
) -> Result<Analysis<T>> {
    let transformed = transform_stage(ds)?;
    let clusters = cluster_stage(&transformed, cfg, master_seed, oracle)?;
    let all = vec![true; ds.len()];
    let baseline = baseline_stage(ds, &transformed, &cfg.baseline, oracle, &all)?;
    let impact = impact_stage(ds, &transformed, &clusters, &baseline.values, &cfg.impact, &all, &[])?;
    Ok(Analysis {
        transformed,
        clusters,
        baseline,
        impact,
    })
}
