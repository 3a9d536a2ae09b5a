//! Baseline labels: a multinomial logit over stranger features, fitted by
//! penalised maximum likelihood, turned into a real-valued label by weighting
//! each risk level with its probability.

use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_solve, Matrix, Svd};
use crate::network::{is_visibility_feature, NodeId, RiskLevel, SocialNetwork, VISIBLE};
use crate::persist;
use crate::scalar::Real;
use crate::stats;
use crate::transform::FrequencyVector;

/// One explanatory column of the baseline design.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "feature", rename_all = "snake_case")]
pub enum DesignColumn {
    /// Frequency of the stranger's value among the user's friends.
    Frequency(String),
    /// 1 when a visibility feature is `visible`, else 0.
    Visible(String),
    /// Raw number of mutual friends between user and stranger.
    MutualFriends,
}

impl DesignColumn {
    pub fn name(&self) -> String {
        match self {
            DesignColumn::Frequency(f) => f.clone(),
            DesignColumn::Visible(f) => format!("{f}=visible"),
            DesignColumn::MutualFriends => "mutual_friends".to_string(),
        }
    }
}

/// Maps a (user, stranger) pair to its explanatory vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub columns: Vec<DesignColumn>,
}

impl DesignSpec {
    /// Frequency columns for `features` (all network features when `None`) plus
    /// visibility indicators for the visibility features among them.
    pub fn standard(net: &SocialNetwork, features: Option<&[String]>) -> Result<Self> {
        let chosen: Vec<String> = match features {
            Some(f) => {
                for name in f {
                    if net.feature_index(name).is_none() {
                        return Err(Error::InvalidConfig(format!("unknown baseline feature `{name}`")));
                    }
                }
                f.to_vec()
            }
            None => net.features().to_vec(),
        };
        let mut columns: Vec<DesignColumn> = chosen.iter().cloned().map(DesignColumn::Frequency).collect();
        columns.extend(
            chosen
                .iter()
                .filter(|f| is_visibility_feature(f))
                .cloned()
                .map(DesignColumn::Visible),
        );
        Ok(DesignSpec { columns })
    }

    pub fn with_mutual_friends(mut self) -> Self {
        self.columns.push(DesignColumn::MutualFriends);
        self
    }

    pub fn names(&self) -> Vec<String> {
        self.columns.iter().map(DesignColumn::name).collect()
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn row<T: Real>(&self, net: &SocialNetwork, freq: &FrequencyVector<T>) -> Result<Vec<T>> {
        let u = net.require(&freq.owner)?;
        let s = net.require(&freq.subject)?;
        self.columns
            .iter()
            .map(|c| {
                Ok(match c {
                    DesignColumn::Frequency(f) => freq.values[feature(net, f)?],
                    DesignColumn::Visible(f) => {
                        if net.profile(s).get(feature(net, f)?) == VISIBLE {
                            T::one()
                        } else {
                            T::zero()
                        }
                    }
                    DesignColumn::MutualFriends => T::count(net.mutual_friend_count_ix(u, s)),
                })
            })
            .collect()
    }
}

fn feature(net: &SocialNetwork, name: &str) -> Result<usize> {
    net.feature_index(name)
        .ok_or_else(|| Error::InvalidConfig(format!("unknown feature `{name}`")))
}

/// Parameters of one non-reference label.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassParams<T> {
    pub label: RiskLevel,
    pub intercept: T,
    pub coefficients: Vec<T>,
    /// `None` where the information matrix is singular.
    pub intercept_se: Option<T>,
    pub coefficient_se: Vec<Option<T>>,
}

/// Multinomial logit with the reference label's parameters pinned at zero.
#[derive(Clone, Debug, PartialEq)]
pub struct MultinomialModel<T> {
    pub reference: RiskLevel,
    pub columns: Vec<String>,
    /// The two non-reference labels in ascending order.
    pub classes: Vec<ClassParams<T>>,
    pub ridge: T,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: T,
    pub gradient_norm: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitOptions {
    pub ridge: f64,
    pub max_iter: usize,
    /// Sup-norm of the penalised gradient accepted as converged.
    pub tolerance: f64,
    pub reference: RiskLevel,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            ridge: 1e-4,
            max_iter: 100,
            tolerance: 1e-6,
            reference: RiskLevel::Risky,
        }
    }
}

fn non_reference(reference: RiskLevel) -> [RiskLevel; 2] {
    let mut out = [RiskLevel::NotRisky; 2];
    let mut i = 0;
    for l in RiskLevel::ALL {
        if l != reference {
            out[i] = l;
            i += 1;
        }
    }
    out
}

/// Softmax over three linear predictors, stable for large magnitudes.
fn softmax3<T: Real>(eta: [T; 3]) -> [T; 3] {
    let m = eta[0].max(eta[1]).max(eta[2]);
    let e = [(eta[0] - m).exp(), (eta[1] - m).exp(), (eta[2] - m).exp()];
    let z = e[0] + e[1] + e[2];
    [e[0] / z, e[1] / z, e[2] / z]
}

fn log_sum_exp3<T: Real>(eta: [T; 3]) -> T {
    let m = eta[0].max(eta[1]).max(eta[2]);
    m + ((eta[0] - m).exp() + (eta[1] - m).exp() + (eta[2] - m).exp()).ln()
}

/// Penalised multinomial log-likelihood over a fixed design, exposed so the
/// optimiser's derivatives can be checked independently.
///
/// Parameters are laid out as `[α₁, β₁…, α₂, β₂…]` for the two non-reference
/// labels in ascending order. The ridge penalty `ridge·‖θ‖²/2` covers the
/// intercepts too, so a label absent from the data still has a finite optimum.
pub struct MultinomialObjective<'a, T> {
    x: &'a [Vec<T>],
    y: &'a [RiskLevel],
    reference: RiskLevel,
    ridge: T,
    width: usize,
}

impl<'a, T: Real> MultinomialObjective<'a, T> {
    pub fn new(x: &'a [Vec<T>], y: &'a [RiskLevel], reference: RiskLevel, ridge: T) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::WidthMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        let width = x.first().map_or(0, Vec::len);
        if let Some(bad) = x.iter().find(|r| r.len() != width) {
            return Err(Error::WidthMismatch {
                expected: width,
                got: bad.len(),
            });
        }
        Ok(MultinomialObjective {
            x,
            y,
            reference,
            ridge,
            width,
        })
    }

    pub fn dim(&self) -> usize {
        2 * (self.width + 1)
    }

    fn eta(&self, theta: &[T], row: &[T]) -> [T; 3] {
        let block = self.width + 1;
        let mut eta = [T::zero(); 3];
        for (k, label) in non_reference(self.reference).into_iter().enumerate() {
            let p = &theta[k * block..(k + 1) * block];
            eta[label.index()] = p[0] + row.iter().zip(&p[1..]).fold(T::zero(), |a, (&x, &b)| a + x * b);
        }
        eta
    }

    /// Unpenalised log-likelihood.
    pub fn log_likelihood(&self, theta: &[T]) -> T {
        self.x
            .iter()
            .zip(self.y)
            .fold(T::zero(), |acc, (row, &label)| {
                let eta = self.eta(theta, row);
                acc + eta[label.index()] - log_sum_exp3(eta)
            })
    }

    /// Log-likelihood minus the ridge penalty.
    pub fn objective(&self, theta: &[T]) -> T {
        let sq = theta.iter().fold(T::zero(), |a, &t| a + t * t);
        self.log_likelihood(theta) - self.ridge * sq / T::lit(2.0)
    }

    /// Gradient of [`Self::objective`].
    pub fn gradient(&self, theta: &[T]) -> Vec<T> {
        let block = self.width + 1;
        let classes = non_reference(self.reference);
        let mut g: Vec<T> = theta.iter().map(|&t| -self.ridge * t).collect();
        for (row, &label) in self.x.iter().zip(self.y) {
            let p = softmax3(self.eta(theta, row));
            for (k, c) in classes.into_iter().enumerate() {
                let r = if label == c { T::one() } else { T::zero() } - p[c.index()];
                g[k * block] = g[k * block] + r;
                for (j, &xj) in row.iter().enumerate() {
                    g[k * block + 1 + j] = g[k * block + 1 + j] + r * xj;
                }
            }
        }
        g
    }

    /// Observed information: negative Hessian of the unpenalised log-likelihood.
    pub fn information(&self, theta: &[T]) -> Matrix<T> {
        let block = self.width + 1;
        let classes = non_reference(self.reference);
        let n = self.dim();
        let mut info = Matrix::zeros(n, n);
        let mut xt = vec![T::one(); block];
        for row in self.x {
            xt[1..].copy_from_slice(row);
            let p = softmax3(self.eta(theta, row));
            for (k, ck) in classes.into_iter().enumerate() {
                for (l, cl) in classes.into_iter().enumerate() {
                    let pk = p[ck.index()];
                    let w = if k == l { pk * (T::one() - pk) } else { -pk * p[cl.index()] };
                    for a in 0..block {
                        let wa = w * xt[a];
                        for b in 0..block {
                            info[(k * block + a, l * block + b)] = info[(k * block + a, l * block + b)] + wa * xt[b];
                        }
                    }
                }
            }
        }
        info
    }
}

/// Fits the model by damped Newton ascent with step halving.
pub fn fit_multinomial<T: Real>(
    x: &[Vec<T>],
    labels: &[RiskLevel],
    columns: Vec<String>,
    opts: &FitOptions,
) -> Result<MultinomialModel<T>> {
    fit_multinomial_traced(x, labels, columns, opts).map(|(m, _)| m)
}

/// As [`fit_multinomial`], also returning the penalized objective after every iteration
/// (starting from the zero vector).
pub fn fit_multinomial_traced<T: Real>(
    x: &[Vec<T>],
    labels: &[RiskLevel],
    columns: Vec<String>,
    opts: &FitOptions,
) -> Result<(MultinomialModel<T>, Vec<T>)> {
    if opts.ridge.is_nan() || opts.ridge < 0.0 {
        return Err(Error::InvalidConfig(format!("ridge must be non-negative, got {}", opts.ridge)));
    }
    let objective = MultinomialObjective::new(x, labels, opts.reference, T::lit(opts.ridge))?;
    if objective.width != columns.len() && !x.is_empty() {
        return Err(Error::WidthMismatch {
            expected: columns.len(),
            got: objective.width,
        });
    }
    let width = columns.len();
    let mut distinct: Vec<RiskLevel> = labels.to_vec();
    distinct.sort();
    distinct.dedup();
    if x.is_empty() || (distinct.len() < 2 && opts.ridge == 0.0) {
        return Err(Error::TooFewLabels(distinct.len()));
    }
    for j in 0..width {
        let first = x[0][j];
        if x.iter().all(|r| r[j] == first) {
            log::warn!("baseline column `{}` has zero variance; its coefficient is left to the ridge", columns[j]);
        }
    }

    let dim = objective.dim();
    let mut theta = vec![T::zero(); dim];
    let mut value = objective.objective(&theta);
    let mut grad = objective.gradient(&theta);
    let tol = T::lit(opts.tolerance);
    let ridge = T::lit(opts.ridge);
    let mut converged = sup_norm(&grad) < tol;
    let mut iterations = 0;
    let mut trace = vec![value];
    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let mut a = objective.information(&theta);
        for i in 0..dim {
            a[(i, i)] = a[(i, i)] + ridge;
        }
        let step = newton_direction(&a, &grad);
        let mut t = T::one();
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<T> = theta.iter().zip(&step).map(|(&th, &d)| th + t * d).collect();
            let trial_value = objective.objective(&trial);
            if trial_value >= value {
                theta = trial;
                value = trial_value;
                accepted = true;
                break;
            }
            t = t / T::lit(2.0);
        }
        grad = objective.gradient(&theta);
        converged = sup_norm(&grad) < tol;
        trace.push(value);
        if !accepted {
            break;
        }
    }
    if !converged {
        log::warn!(
            "multinomial fit stopped after {iterations} iterations with gradient sup-norm {}",
            sup_norm(&grad)
        );
    }
    let se = standard_errors(&objective.information(&theta));
    let block = width + 1;
    let classes = non_reference(opts.reference)
        .into_iter()
        .enumerate()
        .map(|(k, label)| ClassParams {
            label,
            intercept: theta[k * block],
            coefficients: theta[k * block + 1..(k + 1) * block].to_vec(),
            intercept_se: se[k * block],
            coefficient_se: se[k * block + 1..(k + 1) * block].to_vec(),
        })
        .collect();
    let model = MultinomialModel {
        reference: opts.reference,
        columns,
        classes,
        ridge,
        converged,
        iterations,
        log_likelihood: objective.log_likelihood(&theta),
        gradient_norm: sup_norm(&grad),
    };
    Ok((model, trace))
}

fn sup_norm<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

fn newton_direction<T: Real>(a: &Matrix<T>, g: &[T]) -> Vec<T> {
    if let Some(d) = cholesky_solve(a, g) {
        return d;
    }
    // Singular curvature (no ridge, collinear columns): Levenberg damping.
    let scale = (0..a.rows()).fold(T::zero(), |m, i| m.max(a[(i, i)].abs())).max(T::one());
    let mut lambda = scale * T::epsilon().sqrt();
    loop {
        let mut damped = a.clone();
        for i in 0..a.rows() {
            damped[(i, i)] = damped[(i, i)] + lambda;
        }
        if let Some(d) = cholesky_solve(&damped, g) {
            return d;
        }
        lambda = lambda * T::lit(10.0);
    }
}

/// Square roots of the pseudo-inverse diagonal; `None` for non-identifiable parameters.
fn standard_errors<T: Real>(info: &Matrix<T>) -> Vec<Option<T>> {
    let svd = Svd::new(info);
    let inv = svd.pseudo_inverse();
    (0..info.rows())
        .map(|i| {
            if svd.coordinate_identifiable(i) && inv[(i, i)] > T::zero() {
                Some(inv[(i, i)].sqrt())
            } else {
                None
            }
        })
        .collect()
}

impl<T: Real> MultinomialModel<T> {
    pub fn width(&self) -> usize {
        self.columns.len()
    }

    /// Label probabilities `(p1, p2, p3)`.
    pub fn predict_probs(&self, x: &[T]) -> Result<[T; 3]> {
        if x.len() != self.width() {
            return Err(Error::WidthMismatch {
                expected: self.width(),
                got: x.len(),
            });
        }
        let mut eta = [T::zero(); 3];
        for c in &self.classes {
            eta[c.label.index()] = c.intercept + x.iter().zip(&c.coefficients).fold(T::zero(), |a, (&v, &b)| a + v * b);
        }
        Ok(softmax3(eta))
    }

    pub fn baseline_label(&self, user: &str, stranger: &str, x: &[T]) -> Result<BaselineLabel<T>> {
        let probs = self.predict_probs(x)?;
        Ok(BaselineLabel {
            user: user.to_string(),
            stranger: stranger.to_string(),
            value: weighted_label(probs),
            probs,
        })
    }

    /// Refuses use with a design whose columns differ from the training design.
    pub fn check_columns(&self, columns: &[String]) -> Result<()> {
        if columns.len() != self.columns.len() {
            return Err(Error::WidthMismatch {
                expected: self.columns.len(),
                got: columns.len(),
            });
        }
        if let Some((a, b)) = self.columns.iter().zip(columns).find(|(a, b)| a != b) {
            return Err(Error::InvalidConfig(format!("model column `{a}` does not match design column `{b}`")));
        }
        Ok(())
    }

    pub fn save_json(&self, writer: impl Write) -> Result<()> {
        persist::save(MODEL_KIND, &ModelFile::from_model(self), writer)
    }

    pub fn load_json(reader: impl Read) -> Result<Self> {
        persist::load::<ModelFile>(MODEL_KIND, reader)?.into_model()
    }
}

/// `Σ c·p_c` over the three levels.
pub fn weighted_label<T: Real>(probs: [T; 3]) -> T {
    probs[0] + T::lit(2.0) * probs[1] + T::lit(3.0) * probs[2]
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineLabel<T> {
    pub user: NodeId,
    pub stranger: NodeId,
    pub value: T,
    pub probs: [T; 3],
}

const MODEL_KIND: &str = "multinomial-model";

#[derive(Serialize, Deserialize)]
struct ClassFile {
    label: RiskLevel,
    intercept: f64,
    coefficients: Vec<f64>,
    intercept_se: Option<f64>,
    coefficient_se: Vec<Option<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    reference_label: RiskLevel,
    columns: Vec<String>,
    classes: Vec<ClassFile>,
    ridge: f64,
    converged: bool,
    iterations: usize,
    log_likelihood: f64,
    gradient_norm: f64,
}

impl ModelFile {
    fn from_model<T: Real>(m: &MultinomialModel<T>) -> Self {
        ModelFile {
            reference_label: m.reference,
            columns: m.columns.clone(),
            classes: m
                .classes
                .iter()
                .map(|c| ClassFile {
                    label: c.label,
                    intercept: c.intercept.as_f64(),
                    coefficients: c.coefficients.iter().map(|v| v.as_f64()).collect(),
                    intercept_se: c.intercept_se.map(Real::as_f64),
                    coefficient_se: c.coefficient_se.iter().map(|s| s.map(Real::as_f64)).collect(),
                })
                .collect(),
            ridge: m.ridge.as_f64(),
            converged: m.converged,
            iterations: m.iterations,
            log_likelihood: m.log_likelihood.as_f64(),
            gradient_norm: m.gradient_norm.as_f64(),
        }
    }

    fn into_model<T: Real>(self) -> Result<MultinomialModel<T>> {
        let expected = non_reference(self.reference_label);
        if self.classes.len() != 2 || self.classes.iter().zip(expected).any(|(c, l)| c.label != l) {
            return Err(Error::parse("model.classes", "must list the two non-reference labels in order"));
        }
        for c in &self.classes {
            if c.coefficients.len() != self.columns.len() || c.coefficient_se.len() != self.columns.len() {
                return Err(Error::WidthMismatch {
                    expected: self.columns.len(),
                    got: c.coefficients.len(),
                });
            }
        }
        Ok(MultinomialModel {
            reference: self.reference_label,
            columns: self.columns,
            classes: self
                .classes
                .into_iter()
                .map(|c| ClassParams {
                    label: c.label,
                    intercept: T::lit(c.intercept),
                    coefficients: c.coefficients.into_iter().map(T::lit).collect(),
                    intercept_se: c.intercept_se.map(T::lit),
                    coefficient_se: c.coefficient_se.into_iter().map(|s| s.map(T::lit)).collect(),
                })
                .collect(),
            ridge: T::lit(self.ridge),
            converged: self.converged,
            iterations: self.iterations,
            log_likelihood: T::lit(self.log_likelihood),
            gradient_norm: T::lit(self.gradient_norm),
        })
    }
}

/// One Wald test of a model parameter.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SignificanceRow {
    pub parameter: String,
    pub label: RiskLevel,
    pub estimate: f64,
    /// `None` when not estimable.
    pub std_error: Option<f64>,
    pub z_value: Option<f64>,
    pub p_value: Option<f64>,
    pub significant: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SignificanceTable {
    pub reference: RiskLevel,
    /// Parameter-major, label-minor.
    pub rows: Vec<SignificanceRow>,
    pub n: usize,
}

pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

/// Wald tests with standard errors from the observed information at the fitted parameters.
pub fn coefficient_significance<T: Real>(
    model: &MultinomialModel<T>,
    x: &[Vec<T>],
    labels: &[RiskLevel],
) -> Result<SignificanceTable> {
    if !model.converged {
        log::warn!("significance computed for a model that did not converge");
    }
    if let Some(r) = x.iter().find(|r| r.len() != model.width()) {
        return Err(Error::WidthMismatch {
            expected: model.width(),
            got: r.len(),
        });
    }
    let objective = MultinomialObjective::new(x, labels, model.reference, model.ridge)?;
    let theta: Vec<T> = model
        .classes
        .iter()
        .flat_map(|c| std::iter::once(c.intercept).chain(c.coefficients.iter().copied()))
        .collect();
    let se = standard_errors(&objective.information(&theta));
    let block = model.width() + 1;
    let mut names = vec!["Intercept".to_string()];
    names.extend(model.columns.iter().cloned());
    let mut rows = Vec::with_capacity(theta.len());
    for (j, name) in names.iter().enumerate() {
        for (k, class) in model.classes.iter().enumerate() {
            let estimate = theta[k * block + j].as_f64();
            let std_error = se[k * block + j].map(Real::as_f64);
            let z_value = std_error.map(|s| estimate / s);
            let p_value = z_value.map(stats::normal_two_sided_p);
            rows.push(SignificanceRow {
                parameter: name.clone(),
                label: class.label,
                estimate,
                std_error,
                z_value,
                p_value,
                significant: p_value.is_some_and(|p| p < SIGNIFICANCE_LEVEL),
            });
        }
    }
    Ok(SignificanceTable {
        reference: model.reference,
        rows,
        n: x.len(),
    })
}

impl SignificanceTable {
    pub fn row(&self, parameter: &str, label: RiskLevel) -> Option<&SignificanceRow> {
        self.rows.iter().find(|r| r.parameter == parameter && r.label == label)
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["parameter", "label", "estimate", "std_error", "z_value", "p_value", "significant"])?;
        let fmt = |v: Option<f64>| v.map_or_else(|| "not estimable".to_string(), |v| format!("{v:.9e}"));
        for r in &self.rows {
            w.write_record([
                r.parameter.clone(),
                r.label.value().to_string(),
                format!("{:.9e}", r.estimate),
                fmt(r.std_error),
                fmt(r.z_value),
                fmt(r.p_value),
                r.significant.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Regression-table layout: one column per non-reference label, estimate
    /// with significance stars and the standard error in parentheses beneath.
    pub fn to_text(&self) -> String {
        let mut labels: Vec<RiskLevel> = self.rows.iter().map(|r| r.label).collect();
        labels.sort();
        labels.dedup();
        let mut params: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !params.contains(&r.parameter.as_str()) {
                params.push(&r.parameter);
            }
        }
        let mut out = String::new();
        let _ = write!(out, "{:<28}", "");
        for l in &labels {
            let _ = write!(out, "{:>18}", format!("Label {}", l.value()));
        }
        out.push('\n');
        for p in params {
            let _ = write!(out, "{p:<28}");
            for l in &labels {
                let cell = self.row(p, *l).map_or(String::new(), |r| {
                    format!("{:.7}{}", r.estimate, r.p_value.map_or("", stats::stars))
                });
                let _ = write!(out, "{cell:>18}");
            }
            out.push('\n');
            let _ = write!(out, "{:<28}", "");
            for l in &labels {
                let cell = self.row(p, *l).map_or(String::new(), |r| {
                    r.std_error.map_or("(not estimable)".to_string(), |s| format!("({s:.4})"))
                });
                let _ = write!(out, "{cell:>18}");
            }
            out.push('\n');
        }
        let _ = writeln!(
            out,
            "N = {}. Reference category is label {}. Standard errors in parentheses.",
            self.n,
            self.reference.value()
        );
        out.push_str("Significance codes: '***' 0.001 '**' 0.01 '*' 0.05 '.' 0.1\n");
        out
    }
}

const ARTIFACT_KIND: &str = "baseline";

#[derive(Serialize, Deserialize)]
struct LabelRow {
    user: NodeId,
    stranger: NodeId,
    value: f64,
    probs: Option<[f64; 3]>,
}

#[derive(Serialize, Deserialize)]
struct BaselineArtifact {
    model: Option<ModelFile>,
    labels: Vec<LabelRow>,
}

/// Writes the fitted model (absent for injected baselines) with every baseline label.
pub fn write_baseline_artifact<T: Real>(
    model: Option<&MultinomialModel<T>>,
    labels: &[BaselineLabel<T>],
    writer: impl Write,
) -> Result<()> {
    let artifact = BaselineArtifact {
        model: model.map(ModelFile::from_model),
        labels: labels
            .iter()
            .map(|l| LabelRow {
                user: l.user.clone(),
                stranger: l.stranger.clone(),
                value: l.value.as_f64(),
                probs: (l.probs != [T::zero(); 3]).then(|| l.probs.map(Real::as_f64)),
            })
            .collect(),
    };
    persist::save(ARTIFACT_KIND, &artifact, writer)
}

/// A stored model (absent when labels were injected) and its per-record labels.
pub type BaselineArtifactContents<T> = (Option<MultinomialModel<T>>, Vec<BaselineLabel<T>>);

pub fn read_baseline_artifact<T: Real>(reader: impl Read) -> Result<BaselineArtifactContents<T>> {
    let a: BaselineArtifact = persist::load(ARTIFACT_KIND, reader)?;
    let model = a.model.map(ModelFile::into_model).transpose()?;
    let labels = a
        .labels
        .into_iter()
        .map(|r| BaselineLabel {
            user: r.user,
            stranger: r.stranger,
            value: T::lit(r.value),
            probs: r.probs.map_or([T::zero(); 3], |p| p.map(T::lit)),
        })
        .collect();
    Ok((model, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(alpha1: f64, alpha3: f64) -> MultinomialModel<f64> {
        MultinomialModel {
            reference: RiskLevel::Risky,
            columns: vec!["x".into()],
            classes: vec![
                ClassParams {
                    label: RiskLevel::NotRisky,
                    intercept: alpha1,
                    coefficients: vec![0.0],
                    intercept_se: None,
                    coefficient_se: vec![None],
                },
                ClassParams {
                    label: RiskLevel::VeryRisky,
                    intercept: alpha3,
                    coefficients: vec![0.0],
                    intercept_se: None,
                    coefficient_se: vec![None],
                },
            ],
            ridge: 0.0,
            converged: true,
            iterations: 0,
            log_likelihood: 0.0,
            gradient_norm: 0.0,
        }
    }

    #[test]
    fn zero_model_is_uniform() {
        let p = model(0.0, 0.0).predict_probs(&[0.7]).unwrap();
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn saturated_intercept() {
        let p = model(30.0, 0.0).predict_probs(&[0.2]).unwrap();
        assert!(p[0] > 0.999);
        let p = model(800.0, -800.0).predict_probs(&[0.2]).unwrap();
        assert!(p.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn width_mismatch_rejected() {
        assert!(matches!(model(0.0, 0.0).predict_probs(&[0.1, 0.2]), Err(Error::WidthMismatch { .. })));
    }

    #[test]
    fn weighted_label_values() {
        assert_eq!(weighted_label([1.0, 0.0, 0.0]), 1.0);
        assert_eq!(weighted_label([0.0, 0.0, 1.0]), 3.0);
        assert!((weighted_label([0.01f64, 0.09, 0.90]) - 2.89).abs() < 1e-12);
    }

    #[test]
    fn degenerate_labels() {
        let x: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64 / 50.0]).collect();
        for c in RiskLevel::ALL {
            let y = vec![c; 50];
            let opts = FitOptions { ridge: 1e-4, ..FitOptions::default() };
            let m = fit_multinomial(&x, &y, vec!["x".into()], &opts).unwrap();
            for row in &x {
                assert!(m.predict_probs(row).unwrap()[c.index()] > 0.99);
            }
            let opts = FitOptions { ridge: 0.0, ..FitOptions::default() };
            assert!(matches!(fit_multinomial(&x, &y, vec!["x".into()], &opts), Err(Error::TooFewLabels(1))));
        }
    }

    #[test]
    fn model_json_roundtrip_is_exact() {
        let mut m = model(0.123456789012345, -1.0 / 3.0);
        m.classes[0].coefficients[0] = std::f64::consts::PI;
        let mut buf = Vec::new();
        m.save_json(&mut buf).unwrap();
        let back = MultinomialModel::<f64>::load_json(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        assert!(back.check_columns(&["x".into(), "y".into()]).is_err());
    }

    #[test]
    fn significance_table_layout() {
        let x: Vec<Vec<f64>> = (0..90).map(|i| vec![(i % 10) as f64 / 10.0]).collect();
        let y: Vec<RiskLevel> = (0..90).map(|i| RiskLevel::ALL[(i * 7 + i / 10) % 3]).collect();
        let m = fit_multinomial(&x, &y, vec!["hometown".into()], &FitOptions::default()).unwrap();
        let t = coefficient_significance(&m, &x, &y).unwrap();
        assert_eq!(t.rows.len(), 4);
        let text = t.to_text();
        assert!(text.contains("Label 1") && text.contains("Label 3") && text.contains("hometown"));
        assert!(text.contains("Reference category is label 2"));
        let mut csv = Vec::new();
        t.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 5);
    }
}
