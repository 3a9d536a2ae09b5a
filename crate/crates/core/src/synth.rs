//! Synthetic networks with homophilous profiles and labels drawn from a planted
//! baseline-plus-impacts model.
//!
//! Layout: every user owns private friends and private strangers. Friend `j`
//! of a user has true type `j mod F`; each type has a feature mask on which the
//! friend tends to copy the user's value and off which it tends to differ. Strangers have a
//! true type too, copy the user on their type's mask and take a type-specific
//! value elsewhere. First-group strangers hang off one friend, the others off
//! two or more.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::analysis::{derive_seed, Oracle};
use crate::baseline::{weighted_label, ClassParams, DesignSpec, MultinomialModel};
use crate::cluster::{ClusterAssignment, ClusterId};
use crate::error::{Error, Result};
use crate::impact::{term_coefficients, ImpactMatrix, ImpactMode, LabeledPeer, PastContext, PsFormula};
use crate::network::{NetworkBuilder, NodeId, RiskLabelRecord, RiskLevel, SocialNetwork};
use crate::persist;
use crate::scalar::Real;
use crate::transform::{build_sfms, SfmKind};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rounding {
    /// Labels clamped to [1, 3].
    #[default]
    Continuous,
    /// Labels rounded to the nearest level.
    Discrete,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_users: usize,
    pub friends_min: usize,
    pub friends_max: usize,
    pub n_features: usize,
    pub categories_per_feature: usize,
    /// Probability that a friend copies the user's value on a feature; otherwise the value is uniform.
    pub homophily: f64,
    /// Probability that a feature follows the friend's type instead: the user's value on the
    /// type's mask, a different value off it.
    pub type_contrast: f64,
    pub n_friend_clusters_true: usize,
    pub n_stranger_clusters_true: usize,
    /// First-group strangers per (user, stranger type).
    pub first_group_per_type: usize,
    /// Strangers with two or more mutual friends per (user, stranger type).
    pub others_per_type: usize,
    pub max_mutual_friends: usize,
    /// Probability that a stranger's off-mask feature is random instead of its type value.
    pub stranger_profile_noise: f64,
    /// Planted impacts are uniform on `[-impact_scale, impact_scale]`.
    pub impact_scale: f64,
    /// Standard deviation of the planted baseline coefficients.
    pub baseline_scale: f64,
    /// Per (user, stranger type) taste shift of first-group labels, uniform on `[-taste_scale, taste_scale]`.
    pub taste_scale: f64,
    pub label_noise_sigma: f64,
    pub rounding: Rounding,
    pub mode: ImpactMode,
    pub ps_formula: PsFormula,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_users: 20,
            friends_min: 30,
            friends_max: 40,
            n_features: 8,
            categories_per_feature: 10,
            homophily: 0.3,
            type_contrast: 1.0,
            n_friend_clusters_true: 6,
            n_stranger_clusters_true: 8,
            first_group_per_type: 2,
            others_per_type: 3,
            max_mutual_friends: 3,
            stranger_profile_noise: 0.0,
            impact_scale: 0.3,
            baseline_scale: 0.3,
            taste_scale: 0.8,
            label_noise_sigma: 0.0,
            rounding: Rounding::Continuous,
            mode: ImpactMode::Single,
            ps_formula: PsFormula::FrequencyMean,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if self.n_users == 0 || self.n_features == 0 || self.n_friend_clusters_true == 0 || self.n_stranger_clusters_true == 0 {
            return bad("user, feature and true cluster counts must be positive");
        }
        if self.categories_per_feature < 2 {
            return bad("categories_per_feature must be at least 2");
        }
        if !unit(self.homophily) || !unit(self.type_contrast) || !unit(self.stranger_profile_noise) {
            return bad("homophily, type_contrast and stranger_profile_noise must lie in [0, 1]");
        }
        if self.friends_min > self.friends_max {
            return bad("friends_min exceeds friends_max");
        }
        if self.friends_min < self.n_friend_clusters_true {
            return Err(Error::Infeasible(format!(
                "friends_min = {} cannot cover {} friend types",
                self.friends_min, self.n_friend_clusters_true
            )));
        }
        if self.first_group_per_type + self.others_per_type == 0 {
            return Err(Error::Infeasible("no strangers per type".into()));
        }
        if self.others_per_type > 0 && (self.max_mutual_friends < 2 || self.max_mutual_friends > self.friends_min) {
            return Err(Error::Infeasible(format!(
                "max_mutual_friends = {} must lie in 2..={} (friends_min)",
                self.max_mutual_friends, self.friends_min
            )));
        }
        for (name, v) in [
            ("impact_scale", self.impact_scale),
            ("baseline_scale", self.baseline_scale),
            ("taste_scale", self.taste_scale),
            ("label_noise_sigma", self.label_noise_sigma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be finite and non-negative")));
            }
        }
        Ok(())
    }

    pub fn features(&self) -> Vec<String> {
        (1..=self.n_features).map(|v| format!("feature_{v}")).collect()
    }
}

fn category(c: usize) -> String {
    format!("v{}", c + 1)
}

/// `n` distinct non-empty masks, pairwise Hamming distance 2 where possible.
fn distinct_masks(n: usize, width: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<bool>>> {
    for min_dist in [2usize, 1] {
        let mut masks: Vec<Vec<bool>> = Vec::with_capacity(n);
        for _ in 0..20_000 {
            if masks.len() == n {
                break;
            }
            let m: Vec<bool> = (0..width).map(|_| rng.random::<bool>()).collect();
            if !m.iter().any(|&b| b) {
                continue;
            }
            let far = masks
                .iter()
                .all(|o| o.iter().zip(&m).filter(|(a, b)| a != b).count() >= min_dist);
            if far {
                masks.push(m);
            }
        }
        if masks.len() == n {
            return Ok(masks);
        }
    }
    Err(Error::Infeasible(format!("cannot draw {n} distinct feature masks over {width} features")))
}

/// Network plus the generator's hidden layout.
#[derive(Clone, Debug)]
pub struct SyntheticNetwork {
    pub net: SocialNetwork,
    pub users: Vec<NodeId>,
    /// (user, friend) → 0-based friend type.
    pub friend_types: BTreeMap<(NodeId, NodeId), usize>,
    /// (user, stranger) → 0-based stranger type, in generation order.
    pub strangers: Vec<(NodeId, NodeId, usize)>,
}

pub fn generate_network(cfg: &SynthConfig) -> Result<SyntheticNetwork> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "synth-network", &[]));
    let (nf, nc) = (cfg.n_features, cfg.categories_per_feature);
    let friend_masks = distinct_masks(cfg.n_friend_clusters_true, nf, &mut rng)?;
    let stranger_masks = distinct_masks(cfg.n_stranger_clusters_true, nf, &mut rng)?;
    let stranger_values: Vec<Vec<usize>> = (0..cfg.n_stranger_clusters_true)
        .map(|_| (0..nf).map(|_| rng.random_range(0..nc)).collect())
        .collect();
    let features = cfg.features();
    let mut b = NetworkBuilder::new(features.iter().cloned())?;
    let profile = |vals: &[usize]| -> Vec<(String, String)> {
        features.iter().cloned().zip(vals.iter().map(|&c| category(c))).collect()
    };

    let mut users = Vec::new();
    let mut friend_types = BTreeMap::new();
    let mut strangers = Vec::new();
    for i in 0..cfg.n_users {
        let user = format!("u{}", i + 1);
        let uv: Vec<usize> = (0..nf).map(|_| rng.random_range(0..nc)).collect();
        b.add_node(user.clone(), profile(&uv))?;
        let n_friends = rng.random_range(cfg.friends_min..=cfg.friends_max);
        let mut friends = Vec::with_capacity(n_friends);
        for j in 0..n_friends {
            let t = j % cfg.n_friend_clusters_true;
            let fv: Vec<usize> = (0..nf)
                .map(|v| {
                    if rng.random::<f64>() < cfg.type_contrast {
                        if friend_masks[t][v] {
                            uv[v]
                        } else {
                            (uv[v] + rng.random_range(1..nc)) % nc
                        }
                    } else if rng.random::<f64>() < cfg.homophily {
                        uv[v]
                    } else {
                        rng.random_range(0..nc)
                    }
                })
                .collect();
            let id = format!("{user}_f{}", j + 1);
            b.add_node(id.clone(), profile(&fv))?;
            b.add_edge(&user, &id)?;
            friend_types.insert((user.clone(), id.clone()), t);
            friends.push(id);
        }
        let per_type = cfg.first_group_per_type + cfg.others_per_type;
        let mut k = 0;
        for t in 0..cfg.n_stranger_clusters_true {
            for r in 0..per_type {
                k += 1;
                let sv: Vec<usize> = (0..nf)
                    .map(|v| {
                        if stranger_masks[t][v] {
                            uv[v]
                        } else if rng.random::<f64>() < cfg.stranger_profile_noise {
                            rng.random_range(0..nc)
                        } else {
                            stranger_values[t][v]
                        }
                    })
                    .collect();
                let id = format!("{user}_s{k}");
                b.add_node(id.clone(), profile(&sv))?;
                let m = if r < cfg.first_group_per_type {
                    1
                } else {
                    rng.random_range(2..=cfg.max_mutual_friends)
                };
                for f in sample(&mut rng, friends.len(), m).into_vec() {
                    b.add_edge(&friends[f], &id)?;
                }
                strangers.push((user.clone(), id, t));
            }
        }
        users.push(user);
    }
    Ok(SyntheticNetwork {
        net: b.build(),
        users,
        friend_types,
        strangers,
    })
}

/// Planted baseline: a multinomial logit over the standard design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedBaseline {
    pub columns: Vec<String>,
    /// Intercepts of labels 1 and 3 (label 2 is the reference).
    pub intercepts: [f64; 2],
    pub coefficients: [Vec<f64>; 2],
}

impl PlantedBaseline {
    pub fn model<T: Real>(&self) -> MultinomialModel<T> {
        let class = |k: usize, label| ClassParams {
            label,
            intercept: T::lit(self.intercepts[k]),
            coefficients: self.coefficients[k].iter().map(|&c| T::lit(c)).collect(),
            intercept_se: None,
            coefficient_se: vec![None; self.columns.len()],
        };
        MultinomialModel {
            reference: RiskLevel::Risky,
            columns: self.columns.clone(),
            classes: vec![class(0, RiskLevel::NotRisky), class(1, RiskLevel::VeryRisky)],
            ridge: T::zero(),
            converged: true,
            iterations: 0,
            log_likelihood: T::zero(),
            gradient_norm: T::zero(),
        }
    }
}

/// Ground truth of a synthetic dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub mode: ImpactMode,
    pub ps_formula: PsFormula,
    /// `impacts[fc][sc]` over 0-based true types.
    pub impacts: Vec<Vec<f64>>,
    pub baseline: PlantedBaseline,
    /// (user, friend, 1-based cluster).
    pub friend_clusters: Vec<(NodeId, NodeId, ClusterId)>,
    /// (user, stranger, 1-based cluster).
    pub stranger_clusters: Vec<(NodeId, NodeId, ClusterId)>,
    /// Taste shift per (user, 1-based stranger cluster).
    pub tastes: Vec<(NodeId, ClusterId, f64)>,
}

impl PlantedTruth {
    pub fn impact(&self, fc: ClusterId, sc: ClusterId) -> Option<f64> {
        self.impacts.get(fc.index())?.get(sc.index()).copied()
    }

    pub fn friend_k(&self) -> usize {
        self.impacts.len()
    }

    pub fn stranger_k(&self) -> usize {
        self.impacts.first().map_or(0, Vec::len)
    }

    fn assignment<T: Real>(kind: SfmKind, rows: &[(NodeId, NodeId, ClusterId)]) -> Result<ClusterAssignment<T>> {
        ClusterAssignment::new(kind, rows.iter().map(|(u, x, c)| ((u.clone(), x.clone()), *c)).collect(), None)
    }

    pub fn friend_assignment<T: Real>(&self) -> Result<ClusterAssignment<T>> {
        Self::assignment(SfmKind::Friends, &self.friend_clusters)
    }

    pub fn stranger_assignment<T: Real>(&self) -> Result<ClusterAssignment<T>> {
        Self::assignment(SfmKind::Strangers, &self.stranger_clusters)
    }

    /// Planted baseline label of every stranger in the network's stranger rows.
    pub fn baselines<T: Real>(&self, net: &SocialNetwork, records: &[RiskLabelRecord]) -> Result<HashMap<(NodeId, NodeId), T>> {
        let sfms = build_sfms::<T>(net, records)?;
        let design = DesignSpec::standard(net, None)?;
        let model = self.baseline.model::<T>();
        sfms.rows()
            .iter()
            .map(|row| {
                let p = model.predict_probs(&design.row(net, row)?)?;
                Ok(((row.owner.clone(), row.subject.clone()), weighted_label(p)))
            })
            .collect()
    }

    /// Truth clusters only (`with_baselines = false`) or clusters and baselines.
    pub fn oracle<T: Real>(&self, net: &SocialNetwork, records: &[RiskLabelRecord], with_baselines: bool) -> Result<Oracle<T>> {
        Ok(Oracle {
            friend_clusters: Some(self.friend_assignment()?),
            stranger_clusters: Some(self.stranger_assignment()?),
            baselines: if with_baselines { Some(self.baselines(net, records)?) } else { None },
        })
    }

    /// Shift `Σ I*·c` for a stranger in true cluster `sc`.
    pub fn shift(&self, sc: ClusterId, terms: &BTreeMap<ClusterId, f64>) -> Result<f64> {
        terms.iter().try_fold(0.0, |acc, (&fc, &c)| {
            let i = self
                .impact(fc, sc)
                .ok_or_else(|| Error::IndexMismatch(format!("no planted impact for ({fc}, {sc})")))?;
            Ok(acc + i * c)
        })
    }

    pub fn save_json(&self, writer: impl Write) -> Result<()> {
        persist::save(TRUTH_KIND, self, writer)
    }

    pub fn load_json(reader: impl Read) -> Result<Self> {
        persist::load(TRUTH_KIND, reader)
    }
}

const TRUTH_KIND: &str = "planted-truth";

/// Draws impacts, baseline parameters and tastes for a generated network.
pub fn plant_truth(sn: &SyntheticNetwork, cfg: &SynthConfig) -> Result<PlantedTruth> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "synth-truth", &[]));
    let (nfc, nsc) = (cfg.n_friend_clusters_true, cfg.n_stranger_clusters_true);
    let impacts = (0..nfc)
        .map(|_| (0..nsc).map(|_| cfg.impact_scale * rng.random_range(-1.0..=1.0)).collect())
        .collect();
    let design = DesignSpec::standard(&sn.net, None)?;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut coef = || -> Vec<f64> {
        (0..design.width())
            .map(|_| cfg.baseline_scale * normal.sample(&mut rng))
            .collect()
    };
    let coefficients = [coef(), coef()];
    let baseline = PlantedBaseline {
        columns: design.names(),
        intercepts: [0.0, 0.0],
        coefficients,
    };
    let mut tastes = Vec::new();
    for u in &sn.users {
        for t in 0..nsc {
            let d = if cfg.taste_scale > 0.0 {
                rng.random_range(-cfg.taste_scale..=cfg.taste_scale)
            } else {
                0.0
            };
            tastes.push((u.clone(), ClusterId::from_index(t), d));
        }
    }
    Ok(PlantedTruth {
        mode: cfg.mode,
        ps_formula: cfg.ps_formula,
        impacts,
        baseline,
        friend_clusters: sn
            .friend_types
            .iter()
            .map(|((u, f), &t)| (u.clone(), f.clone(), ClusterId::from_index(t)))
            .collect(),
        stranger_clusters: sn
            .strangers
            .iter()
            .map(|(u, s, t)| (u.clone(), s.clone(), ClusterId::from_index(*t)))
            .collect(),
        tastes,
    })
}

/// Generated labels with every quantity needed to reconstruct them.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedLabels {
    pub records: Vec<RiskLabelRecord>,
    /// Emitted label value per record (continuous, or the rounded level).
    pub values: Vec<f64>,
    /// Unclamped label per record.
    pub latent: Vec<f64>,
    pub baselines: Vec<f64>,
    /// Past value per record (0 for first-group records).
    pub pasts: Vec<f64>,
    pub noise: Vec<f64>,
    pub first_group: Vec<bool>,
    /// Records whose latent label fell outside [1, 3].
    pub clamped: usize,
}

impl GeneratedLabels {
    pub fn value_map(&self) -> HashMap<(NodeId, NodeId), f64> {
        self.records
            .iter()
            .zip(&self.values)
            .map(|(r, &v)| ((r.user.clone(), r.stranger.clone()), v))
            .collect()
    }

    /// `user_id,stranger_id,value`, values in shortest round-trip form.
    pub fn write_values_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["user_id", "stranger_id", "value"])?;
        for (r, v) in self.records.iter().zip(&self.values) {
            w.write_record([r.user.as_str(), r.stranger.as_str(), &format!("{v:?}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads `user_id,stranger_id,value` rows.
pub fn read_values_csv(reader: impl Read) -> Result<HashMap<(NodeId, NodeId), f64>> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["user_id", "stranger_id", "value"] {
        return Err(Error::parse("header", "expected `user_id,stranger_id,value`"));
    }
    let mut out = HashMap::new();
    for (i, row) in r.records().enumerate() {
        let row = row?;
        let locus = format!("line {}", i + 2);
        let v: f64 = row[2]
            .trim()
            .parse()
            .map_err(|_| Error::parse(locus.clone(), format!("`{}` is not a number", &row[2])))?;
        if out.insert((row[0].to_string(), row[1].to_string()), v).is_some() {
            return Err(Error::parse(locus, "duplicate (user, stranger)"));
        }
    }
    Ok(out)
}

fn emit(latent: f64, rounding: Rounding) -> (f64, bool) {
    let clamped = !(1.0..=3.0).contains(&latent);
    let v = latent.clamp(1.0, 3.0);
    match rounding {
        Rounding::Continuous => (v, clamped),
        Rounding::Discrete => (v.round(), clamped),
    }
}

/// Labels first-group strangers (`b* + taste + noise`), then computes Past values from
/// those labels and labels the rest (`b* + Σ I*·c + noise`).
pub fn generate_labels(sn: &SyntheticNetwork, truth: &PlantedTruth, cfg: &SynthConfig) -> Result<GeneratedLabels> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "synth-labels", &[]));
    let net = &sn.net;
    let placeholder: Vec<RiskLabelRecord> = sn
        .strangers
        .iter()
        .map(|(u, s, _)| RiskLabelRecord::new(u.clone(), s.clone(), RiskLevel::Risky))
        .collect();
    let base_map = truth.baselines::<f64>(net, &placeholder)?;
    let taste: HashMap<(&str, ClusterId), f64> =
        truth.tastes.iter().map(|(u, c, d)| ((u.as_str(), *c), *d)).collect();
    let n = placeholder.len();
    let baselines: Vec<f64> = placeholder
        .iter()
        .map(|r| base_map[&(r.user.clone(), r.stranger.clone())])
        .collect();
    let noise: Vec<f64> = if cfg.label_noise_sigma > 0.0 {
        let d = Normal::new(0.0, cfg.label_noise_sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        (0..n).map(|_| d.sample(&mut rng)).collect()
    } else {
        vec![0.0; n]
    };
    let first_group: Vec<bool> = placeholder
        .iter()
        .map(|r| crate::network::is_first_group(net, r))
        .collect();

    let mut latent = vec![0.0; n];
    let mut values = vec![0.0; n];
    let mut pasts = vec![0.0; n];
    let mut clamped = 0;
    let mut peers = Vec::new();
    for i in (0..n).filter(|&i| first_group[i]) {
        let (u, s, t) = &sn.strangers[i];
        latent[i] = baselines[i] + taste[&(u.as_str(), ClusterId::from_index(*t))] + noise[i];
        let (v, c) = emit(latent[i], cfg.rounding);
        values[i] = v;
        clamped += c as usize;
        peers.push(LabeledPeer {
            user: u.clone(),
            stranger: s.clone(),
            label: v,
            baseline: baselines[i],
        });
    }

    let sfms = build_sfms::<f64>(net, &placeholder)?;
    let fc = truth.friend_assignment::<f64>()?;
    let sc = truth.stranger_assignment::<f64>()?;
    let ctx = PastContext::new(net, &sfms, &sc, &peers, cfg.ps_formula)?;
    for i in (0..n).filter(|&i| !first_group[i]) {
        let (u, s, _) = &sn.strangers[i];
        let past = ctx.past_parameter(u, s)?.value;
        let (sj, counts) = crate::impact::mutual_friend_clusters(net, &fc, &sc, u, s)?;
        let terms = term_coefficients(&counts, past, cfg.mode);
        pasts[i] = past;
        latent[i] = baselines[i] + truth.shift(sj, &terms)? + noise[i];
        let (v, c) = emit(latent[i], cfg.rounding);
        values[i] = v;
        clamped += c as usize;
    }
    if clamped > 0 {
        log::info!("{clamped} of {n} synthetic labels clamped to [1, 3]");
    }
    let records = placeholder
        .into_iter()
        .zip(&values)
        .map(|(mut r, &v)| {
            r.label = RiskLevel::from_value(v.round().clamp(1.0, 3.0) as i64).expect("level in 1..=3");
            r
        })
        .collect();
    Ok(GeneratedLabels {
        records,
        values,
        latent,
        baselines,
        pasts,
        noise,
        first_group,
        clamped,
    })
}

#[derive(Clone, Debug)]
pub struct Synthetic {
    pub network: SyntheticNetwork,
    pub truth: PlantedTruth,
    pub labels: GeneratedLabels,
}

impl Synthetic {
    pub fn net(&self) -> &SocialNetwork {
        &self.network.net
    }

    pub fn records(&self) -> &[RiskLabelRecord] {
        &self.labels.records
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<Synthetic> {
    let network = generate_network(cfg)?;
    let truth = plant_truth(&network, cfg)?;
    let labels = generate_labels(&network, &truth, cfg)?;
    Ok(Synthetic { network, truth, labels })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecoveryEntry {
    pub friend_cluster: ClusterId,
    pub stranger_cluster: ClusterId,
    pub truth: f64,
    pub estimate: f64,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecoveryError {
    pub sup_norm: f64,
    pub rmse: f64,
    pub entries: Vec<RecoveryEntry>,
    /// Planted entries without an estimable estimate.
    pub not_estimable: usize,
}

/// Element-wise error over estimable entries; cluster ids must be the truth's.
pub fn recovery_error<T: Real>(truth: &PlantedTruth, est: &ImpactMatrix<T>) -> Result<RecoveryError> {
    let mut entries = Vec::new();
    for (&(fc, sc), e) in &est.entries {
        let t = truth.impact(fc, sc).ok_or_else(|| {
            Error::IndexMismatch(format!(
                "estimated impact ({fc}, {sc}) outside the planted {}×{} matrix",
                truth.friend_k(),
                truth.stranger_k()
            ))
        })?;
        if !e.estimable {
            continue;
        }
        let estimate = e.value.as_f64();
        entries.push(RecoveryEntry {
            friend_cluster: fc,
            stranger_cluster: sc,
            truth: t,
            estimate,
            error: estimate - t,
        });
    }
    let sup_norm = entries.iter().map(|e| e.error.abs()).fold(0.0, f64::max);
    let rmse = if entries.is_empty() {
        0.0
    } else {
        (entries.iter().map(|e| e.error * e.error).sum::<f64>() / entries.len() as f64).sqrt()
    };
    Ok(RecoveryError {
        sup_norm,
        rmse,
        not_estimable: truth.friend_k() * truth.stranger_k() - entries.len(),
        entries,
    })
}
