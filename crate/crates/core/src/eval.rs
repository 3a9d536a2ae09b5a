//! Evaluation protocol: assumption check, hold-out RMSE, cluster-count grid
//! and deleted-friendship check.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{
    baseline_stage, cluster_stage, derive_seed, impact_stage, AnalysisConfig, BaselineConfig, Clustered, Dataset,
    Oracle, Transformed,
};
use crate::baseline::{coefficient_significance, fit_multinomial, DesignSpec, SignificanceTable};
use crate::cluster::ClusterId;
use crate::error::{Error, Result};
use crate::network::{NodeId, RiskLevel};
use crate::persist;
use crate::risklabel::FriendRiskReport;
use crate::scalar::Real;
use crate::stats::median;

/// Clusters with fewer eligible strangers than this contribute no validation points.
pub const MIN_CLUSTER_FOR_HOLDOUT: usize = 10;

/// Fits the baseline on every record with the mutual-friend count appended.
pub fn validate_assumption<T: Real>(
    ds: &Dataset<'_, T>,
    t: &Transformed<T>,
    cfg: &BaselineConfig,
) -> Result<SignificanceTable> {
    let design = DesignSpec::standard(ds.net, cfg.features.as_deref())?.with_mutual_friends();
    let x = ds
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
    let y: Vec<RiskLevel> = ds.records.iter().map(|r| r.label).collect();
    let model = fit_multinomial(&x, &y, design.names(), &cfg.fit_options()?)?;
    coefficient_significance(&model, &x, &y)
}

/// Test mask: per stranger cluster, `⌈holdout·size⌉` in-scope records drawn without replacement.
pub fn select_holdout<T: Real>(
    ds: &Dataset<'_, T>,
    cl: &Clustered<T>,
    cfg: &AnalysisConfig,
    holdout: f64,
    seed: u64,
) -> Result<Vec<bool>> {
    if !(0.0..1.0).contains(&holdout) {
        return Err(Error::InvalidConfig(format!("holdout must lie in [0, 1), got {holdout}")));
    }
    let mut by_cluster: BTreeMap<ClusterId, Vec<usize>> = BTreeMap::new();
    for (i, r) in ds.records.iter().enumerate() {
        if !ds.in_scope(i, cfg.impact.scope) {
            continue;
        }
        let c = cl.strangers.get(&r.user, &r.stranger).ok_or_else(|| Error::MissingCluster {
            user: r.user.clone(),
            stranger: r.stranger.clone(),
        })?;
        by_cluster.entry(c).or_default().push(i);
    }
    let mut test = vec![false; ds.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for members in by_cluster.values_mut() {
        if members.len() < MIN_CLUSTER_FOR_HOLDOUT {
            continue;
        }
        let take = (holdout * members.len() as f64).ceil() as usize;
        members.shuffle(&mut rng);
        for &i in members.iter().take(take) {
            test[i] = true;
        }
    }
    Ok(test)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CrossValidation {
    pub holdout: f64,
    pub seed: u64,
    /// `None` when there are no validation points.
    pub rmse: Option<f64>,
    pub validation_points: usize,
    /// Test records whose prediction needs an impact that is not estimable.
    pub skipped_not_estimable: usize,
    pub adjusted_r2: BTreeMap<ClusterId, Option<f64>>,
    pub mean_adjusted_r2: Option<f64>,
    pub significant_clusters: usize,
    pub stranger_clusters: usize,
    pub median_cluster_size: Option<f64>,
}

/// Hold-out RMSE; `holdout = 0` evaluates in-sample on every in-scope record.
pub fn cross_validate<T: Real>(
    ds: &Dataset<'_, T>,
    t: &Transformed<T>,
    cl: &Clustered<T>,
    cfg: &AnalysisConfig,
    oracle: &Oracle<T>,
    holdout: f64,
    seed: u64,
) -> Result<CrossValidation> {
    let (train, targets): (Vec<bool>, Vec<usize>) = if holdout == 0.0 {
        let targets = (0..ds.len()).filter(|&i| ds.in_scope(i, cfg.impact.scope)).collect();
        (vec![true; ds.len()], targets)
    } else {
        let test = select_holdout(ds, cl, cfg, holdout, seed)?;
        let targets = (0..ds.len()).filter(|&i| test[i]).collect();
        (test.iter().map(|&t| !t).collect(), targets)
    };
    let baseline = baseline_stage(ds, t, &cfg.baseline, oracle, &train)?;
    let fit = impact_stage(ds, t, cl, &baseline.values, &cfg.impact, &train, &targets)?;

    let mut sq = 0.0;
    let mut points = 0;
    for (&i, pred) in targets.iter().zip(&fit.predictions) {
        if let Some(p) = pred {
            let e = (ds.values[i] - *p).as_f64();
            sq += e * e;
            points += 1;
        }
    }
    let adjusted_r2: BTreeMap<ClusterId, Option<f64>> =
        fit.impacts.groups.iter().map(|(&c, g)| (c, g.adjusted_r2)).collect();
    let known: Vec<f64> = adjusted_r2.values().flatten().copied().collect();
    let sizes: Vec<f64> = cl.strangers.sizes().into_iter().map(|s| s as f64).collect();
    Ok(CrossValidation {
        holdout,
        seed,
        rmse: (points > 0).then(|| (sq / points as f64).sqrt()),
        validation_points: points,
        skipped_not_estimable: targets.len() - points,
        mean_adjusted_r2: (!known.is_empty()).then(|| known.iter().sum::<f64>() / known.len() as f64),
        adjusted_r2,
        significant_clusters: fit.impacts.groups.values().filter(|g| g.significant).count(),
        stranger_clusters: cl.strangers.k(),
        median_cluster_size: median(&sizes),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridRow {
    pub friend_k: usize,
    pub stranger_k: usize,
    pub seed: u64,
    pub mean_adjusted_r2: Option<f64>,
    pub median_cluster_size: Option<f64>,
    pub validation_points: usize,
    pub rmse: Option<f64>,
    pub significant_clusters: usize,
    pub stranger_clusters: usize,
    pub error: Option<String>,
}

/// Seed of grid cell `(friend_k, stranger_k)`.
pub fn cell_seed(master: u64, friend_k: usize, stranger_k: usize) -> u64 {
    derive_seed(master, "grid-cell", &[friend_k as u64, stranger_k as u64])
}

/// One grid cell: clustering with the given counts, then cross-validation.
/// Injected clusters in `oracle` take precedence over the counts.
#[allow(clippy::too_many_arguments)]
pub fn run_cell<T: Real>(
    ds: &Dataset<'_, T>,
    t: &Transformed<T>,
    cfg: &AnalysisConfig,
    oracle: &Oracle<T>,
    friend_k: usize,
    stranger_k: usize,
    master_seed: u64,
    holdout: f64,
) -> GridRow {
    let seed = cell_seed(master_seed, friend_k, stranger_k);
    let mut cell = cfg.clone();
    cell.friend.k = friend_k;
    cell.friend.seed = Some(derive_seed(seed, "friend-clusters", &[]));
    cell.stranger.k = stranger_k;
    cell.stranger.seed = Some(derive_seed(seed, "stranger-clusters", &[]));
    let outcome = cluster_stage(t, &cell, seed, oracle)
        .and_then(|cl| cross_validate(ds, t, &cl, &cell, oracle, holdout, derive_seed(seed, "holdout", &[])));
    match outcome {
        Ok(cv) => GridRow {
            friend_k,
            stranger_k,
            seed,
            mean_adjusted_r2: cv.mean_adjusted_r2,
            median_cluster_size: cv.median_cluster_size,
            validation_points: cv.validation_points,
            rmse: cv.rmse,
            significant_clusters: cv.significant_clusters,
            stranger_clusters: cv.stranger_clusters,
            error: None,
        },
        Err(e) => GridRow {
            friend_k,
            stranger_k,
            seed,
            mean_adjusted_r2: None,
            median_cluster_size: None,
            validation_points: 0,
            rmse: None,
            significant_clusters: 0,
            stranger_clusters: 0,
            error: Some(e.to_string()),
        },
    }
}

/// Full cross product of cluster counts; cells run in parallel and failures stay in their row.
#[allow(clippy::too_many_arguments)]
pub fn grid_search<T: Real>(
    ds: &Dataset<'_, T>,
    t: &Transformed<T>,
    cfg: &AnalysisConfig,
    oracle: &Oracle<T>,
    friend_ks: &[usize],
    stranger_ks: &[usize],
    master_seed: u64,
    holdout: f64,
) -> Result<Vec<GridRow>> {
    if friend_ks.is_empty() || stranger_ks.is_empty() {
        return Err(Error::InvalidConfig("grid needs at least one friend_k and one stranger_k".into()));
    }
    let cells: Vec<(usize, usize)> = friend_ks
        .iter()
        .flat_map(|&f| stranger_ks.iter().map(move |&s| (f, s)))
        .collect();
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = cells.iter().find(|c| !seen.insert(**c)) {
        return Err(Error::InvalidConfig(format!("grid cell {dup:?} listed twice")));
    }
    Ok(cells
        .into_par_iter()
        .map(|(f, s)| run_cell(ds, t, cfg, oracle, f, s, master_seed, holdout))
        .collect())
}

/// Index of the row with the largest mean adjusted R²; earliest row wins ties.
pub fn best_row(rows: &[GridRow]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in rows.iter().enumerate() {
        if let Some(v) = r.mean_adjusted_r2 {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, _)| i)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeletionCheck {
    pub total: usize,
    pub hits_in_very_risky: usize,
    /// `hits / total`, 0 without deletions.
    pub fraction: f64,
    /// Deleted friendships missing from the report.
    pub skipped: usize,
}

pub fn validate_deletions(report: &FriendRiskReport, deleted: &[(NodeId, NodeId)]) -> DeletionCheck {
    let index: HashMap<(&str, &str), Option<RiskLevel>> = report
        .friends
        .iter()
        .map(|f| ((f.owner.as_str(), f.friend.as_str()), f.label))
        .collect();
    let (mut total, mut hits, mut skipped) = (0, 0, 0);
    for (u, f) in deleted {
        match index.get(&(u.as_str(), f.as_str())) {
            Some(label) => {
                total += 1;
                if *label == Some(RiskLevel::VeryRisky) {
                    hits += 1;
                }
            }
            None => {
                log::warn!("deleted friendship ({u}, {f}) is not in the friend risk report; skipped");
                skipped += 1;
            }
        }
    }
    DeletionCheck {
        total,
        hits_in_very_risky: hits,
        fraction: if total == 0 { 0.0 } else { hits as f64 / total as f64 },
        skipped,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvaluationReport {
    /// Residual degrees of freedom convention of the impact F tests.
    pub f_test_residual_df: String,
    pub cross_validation: Option<CrossValidation>,
    pub grid: Vec<GridRow>,
    pub assumption: Option<SignificanceTable>,
    pub deletions: Option<DeletionCheck>,
}

impl Default for EvaluationReport {
    fn default() -> Self {
        EvaluationReport {
            f_test_residual_df: "n - rank(design)".into(),
            cross_validation: None,
            grid: Vec::new(),
            assumption: None,
            deletions: None,
        }
    }
}

const REPORT_KIND: &str = "evaluation-report";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |v| format!("{v:.9}"))
}

impl EvaluationReport {
    pub fn save_json(&self, writer: impl Write) -> Result<()> {
        persist::save(REPORT_KIND, self, writer)
    }

    pub fn write_grid_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "friend_k",
            "stranger_k",
            "mean_adjusted_r2",
            "median_cluster_size",
            "validation_points",
            "rmse",
            "significant_clusters",
            "stranger_clusters",
            "error",
        ])?;
        for r in &self.grid {
            w.write_record([
                r.friend_k.to_string(),
                r.stranger_k.to_string(),
                opt(r.mean_adjusted_r2),
                opt(r.median_cluster_size),
                r.validation_points.to_string(),
                opt(r.rmse),
                r.significant_clusters.to_string(),
                r.stranger_clusters.to_string(),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Grid as a fixed-width table: cluster counts, R², median size, validation points, RMSE.
    pub fn grid_table(&self) -> String {
        let mut out = format!(
            "{:>9} {:>11} {:>12} {:>12} {:>17} {:>10}\n",
            "Friend k", "Stranger k", "R²", "Median Size", "Validation points", "RMSE"
        );
        for r in &self.grid {
            let f = |v: Option<f64>, p: usize| v.map_or_else(|| "NA".into(), |v| format!("{v:.p$}"));
            out.push_str(&format!(
                "{:>9} {:>11} {:>12} {:>12} {:>17} {:>10}\n",
                r.friend_k,
                r.stranger_k,
                f(r.mean_adjusted_r2, 4),
                f(r.median_cluster_size, 1),
                r.validation_points,
                f(r.rmse, 4)
            ));
        }
        out
    }
}
