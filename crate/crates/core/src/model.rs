//! Logistic-regression asymmetry detector.
//!
//! Maximum-likelihood fitting by IRLS on z-scored predictors, coefficients
//! reported in raw feature units, exhaustive BIC subset search, ROC curves
//! and false-alarm-constrained thresholds.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::features::{Feature, FeatureRow};
use crate::sim::Direction;

/// `exp(eta) / (1 + exp(eta))` without overflow.
pub fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + exp(eta))` without overflow.
fn softplus(eta: f64) -> f64 {
    eta.max(0.0) + (-eta.abs()).exp().ln_1p()
}

/// Decision rule: asymmetric when `p >= tau`.
pub fn detect(p: f64, tau: f64) -> bool {
    p >= tau
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Stop when every standardized coefficient moves less than this.
    pub tolerance: f64,
    /// Standardized coefficient norm taken as evidence of separation.
    pub separation_norm: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            tolerance: 1e-8,
            separation_norm: 1e3,
        }
    }
}

/// Fitted model `p(X) = logistic(b_0 + sum_i b_i X_i)` in raw feature units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub predictors: Vec<Feature>,
    /// `b_0` first, then one coefficient per predictor.
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub p_values: Vec<f64>,
    pub log_likelihood: f64,
    pub n_train: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Log-likelihood after each accepted IRLS step, starting value first.
    #[serde(skip)]
    pub log_likelihood_trace: Vec<f64>,
}

/// One line of a coefficient table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub predictor: String,
    pub coefficient: f64,
    pub std_error: f64,
    pub p_value: f64,
}

impl LogisticModel {
    /// Model with given coefficients and no fit statistics.
    pub fn from_coefficients(predictors: Vec<Feature>, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != predictors.len() + 1 {
            return Err(Error::InvalidConfig(format!(
                "{} predictors need {} coefficients, got {}",
                predictors.len(),
                predictors.len() + 1,
                coefficients.len()
            )));
        }
        let k = coefficients.len();
        Ok(Self {
            predictors,
            coefficients,
            standard_errors: vec![f64::NAN; k],
            p_values: vec![f64::NAN; k],
            log_likelihood: f64::NAN,
            n_train: 0,
            converged: true,
            iterations: 0,
            log_likelihood_trace: Vec::new(),
        })
    }

    pub fn order(&self) -> usize {
        self.predictors.len()
    }

    pub fn linear_predictor(&self, x: &[f64; 8]) -> f64 {
        self.coefficients[0]
            + self
                .predictors
                .iter()
                .zip(&self.coefficients[1..])
                .map(|(f, b)| b * x[f.index()])
                .sum::<f64>()
    }

    pub fn predict(&self, x: &[f64; 8]) -> f64 {
        logistic(self.linear_predictor(x))
    }

    /// Probability from a partial assignment; every predictor must be present.
    pub fn predict_with(&self, value: impl Fn(Feature) -> Option<f64>) -> Result<f64> {
        let mut eta = self.coefficients[0];
        for (f, b) in self.predictors.iter().zip(&self.coefficients[1..]) {
            let v = value(*f).ok_or_else(|| Error::MissingPredictor(f.name().to_string()))?;
            eta += b * v;
        }
        Ok(logistic(eta))
    }

    pub fn summary(&self) -> Vec<CoefficientRow> {
        std::iter::once("intercept".to_string())
            .chain(self.predictors.iter().map(|f| f.name().to_string()))
            .enumerate()
            .map(|(i, predictor)| CoefficientRow {
                predictor,
                coefficient: self.coefficients[i],
                std_error: self.standard_errors[i],
                p_value: self.p_values[i],
            })
            .collect()
    }
}

/// `-2 ll + (d + 1) ln n`, counting the intercept.
pub fn bic_value(log_likelihood: f64, order: usize, n: usize) -> f64 {
    -2.0 * log_likelihood + (order as f64 + 1.0) * (n as f64).ln()
}

/// BIC of a fitted model; `+inf` when the fit did not converge.
pub fn bic(model: &LogisticModel) -> f64 {
    if !model.converged || !model.log_likelihood.is_finite() {
        return f64::INFINITY;
    }
    bic_value(model.log_likelihood, model.order(), model.n_train)
}

fn log_likelihood(z: &DMatrix<f64>, y: &[f64], b: &DVector<f64>) -> f64 {
    let eta = z * b;
    eta.iter().zip(y).map(|(e, yi)| yi * e - softplus(*e)).sum()
}

fn information(z: &DMatrix<f64>, b: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let p = (z * b).map(logistic);
    let w = p.map(|pi| pi * (1.0 - pi));
    let mut zw = z.clone();
    for (mut row, wi) in zw.row_iter_mut().zip(w.iter()) {
        row *= *wi;
    }
    (z.transpose() * zw, p)
}

/// Inverse of a symmetric positive definite matrix, `None` if numerically singular.
fn spd_inverse(h: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let scale = h.diagonal().max();
    let chol = h.clone().cholesky()?;
    let min_pivot = chol.l_dirty().diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v * v));
    if !(scale > 0.0) || min_pivot < 1e-13 * scale {
        return None;
    }
    Some(chol.inverse())
}

/// Normal-approximation two-sided p-value of a Wald statistic.
fn wald_p_value(coefficient: f64, std_error: f64) -> f64 {
    if !(std_error > 0.0) || !std_error.is_finite() {
        return f64::NAN;
    }
    let z = (coefficient / std_error).abs();
    libm::erfc(z / std::f64::consts::SQRT_2)
}

/// Fits a logistic model using the `predictors` columns of `rows`.
pub fn fit_logistic(rows: &[[f64; 8]], labels: &[bool], predictors: &[Feature]) -> Result<LogisticModel> {
    fit_logistic_with(rows, labels, predictors, &FitOptions::default())
}

pub fn fit_logistic_with(
    rows: &[[f64; 8]],
    labels: &[bool],
    predictors: &[Feature],
    opts: &FitOptions,
) -> Result<LogisticModel> {
    if rows.len() != labels.len() {
        return Err(Error::InvalidConfig(format!(
            "{} rows but {} labels",
            rows.len(),
            labels.len()
        )));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::SingleClass);
    }
    let n = rows.len();
    let d = predictors.len();
    if rows.iter().any(|r| predictors.iter().any(|f| !r[f.index()].is_finite())) {
        return Err(Error::Degenerate("non-finite feature value".into()));
    }

    // z-score each predictor
    let mut mean = vec![0.0; d];
    let mut sd = vec![0.0; d];
    for (j, f) in predictors.iter().enumerate() {
        let col = rows.iter().map(|r| r[f.index()]);
        mean[j] = col.clone().sum::<f64>() / n as f64;
        sd[j] = (col.map(|v| (v - mean[j]).powi(2)).sum::<f64>() / n as f64).sqrt();
        if !(sd[j] > 1e-12 * mean[j].abs().max(1.0)) {
            return Err(Error::Degenerate(format!("predictor {} is constant", f.name())));
        }
    }
    let z = DMatrix::from_fn(n, d + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            (rows[i][predictors[j - 1].index()] - mean[j - 1]) / sd[j - 1]
        }
    });
    let y: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();

    let mut b = DVector::<f64>::zeros(d + 1);
    let mut ll = log_likelihood(&z, &y, &b);
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        iterations += 1;
        let (h, p) = information(&z, &b);
        let Some(h_inv) = spd_inverse(&h) else {
            break;
        };
        let y_vec = DVector::from_column_slice(&y);
        let delta = &h_inv * (z.transpose() * (y_vec - p));
        // step halving keeps the likelihood from decreasing
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand = &b + &delta * t;
            let ll_cand = log_likelihood(&z, &y, &cand);
            if ll_cand >= ll {
                accepted = Some((cand, ll_cand));
                break;
            }
            t *= 0.5;
        }
        let step = delta.amax() * t;
        match accepted {
            Some((cand, ll_cand)) => {
                b = cand;
                ll = ll_cand;
                trace.push(ll);
            }
            None => {
                // no ascent possible: at the optimum to working precision
                converged = delta.amax() < opts.tolerance.sqrt();
                break;
            }
        }
        if step < opts.tolerance {
            converged = true;
            break;
        }
        if b.norm() > opts.separation_norm {
            break;
        }
    }

    // back to raw units: beta = A b
    let mut a = DMatrix::<f64>::identity(d + 1, d + 1);
    for j in 0..d {
        a[(0, j + 1)] = -mean[j] / sd[j];
        a[(j + 1, j + 1)] = 1.0 / sd[j];
    }
    let beta = &a * &b;
    let (h, _) = information(&z, &b);
    let cov = spd_inverse(&h).map(|c| &a * c * a.transpose());
    if cov.is_none() {
        converged = false;
    }
    let standard_errors: Vec<f64> = match &cov {
        Some(c) => (0..=d).map(|i| c[(i, i)].max(0.0).sqrt()).collect(),
        None => vec![f64::NAN; d + 1],
    };
    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let p_values = coefficients
        .iter()
        .zip(&standard_errors)
        .map(|(c, s)| wald_p_value(*c, *s))
        .collect();
    Ok(LogisticModel {
        predictors: predictors.to_vec(),
        coefficients,
        standard_errors,
        p_values,
        log_likelihood: ll,
        n_train: n,
        converged,
        iterations,
        log_likelihood_trace: trace,
    })
}

/// Which measurements a model is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Toward,
    Away,
    Both,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Toward, Scenario::Away, Scenario::Both];

    pub fn includes(self, direction: Direction) -> bool {
        match self {
            Scenario::Toward => direction == Direction::Toward,
            Scenario::Away => direction == Direction::Away,
            Scenario::Both => true,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Toward => "toward",
            Scenario::Away => "away",
            Scenario::Both => "both",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toward" => Ok(Scenario::Toward),
            "away" => Ok(Scenario::Away),
            "both" => Ok(Scenario::Both),
            other => Err(Error::InvalidConfig(format!("unknown scenario '{other}'"))),
        }
    }
}

/// Feature values and labels of the rows in `scenario`.
pub fn scenario_data(table: &[FeatureRow], scenario: Scenario) -> (Vec<[f64; 8]>, Vec<bool>) {
    table
        .iter()
        .filter(|r| scenario.includes(r.direction))
        .map(|r| (r.values, r.label.is_positive()))
        .unzip()
}

/// Predictor subset encoded as a bit mask over `Feature::ALL`.
pub fn subset_of(mask: u8) -> Vec<Feature> {
    Feature::ALL
        .into_iter()
        .filter(|f| mask & (1 << f.index()) != 0)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetScore {
    pub predictors: Vec<Feature>,
    pub bic: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderMinimum {
    pub order: usize,
    pub predictors: Vec<Feature>,
    pub bic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSelectionResult {
    pub n: usize,
    /// All 255 nonempty subsets, indexed by mask - 1.
    pub subsets: Vec<SubsetScore>,
    /// Smallest BIC for each order 1..=8.
    pub per_order: Vec<OrderMinimum>,
    /// Argmin over all subsets; empty when nothing converged.
    pub best: Vec<Feature>,
    pub best_bic: f64,
}

/// Fits every nonempty predictor subset and ranks them by BIC.
pub fn select_model(rows: &[[f64; 8]], labels: &[bool], exec: Exec) -> Result<ModelSelectionResult> {
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::SingleClass);
    }
    let subsets: Vec<SubsetScore> = exec.map_range(255, |i| {
        let predictors = subset_of(i as u8 + 1);
        match fit_logistic(rows, labels, &predictors) {
            Ok(m) => SubsetScore {
                bic: bic(&m),
                converged: m.converged,
                predictors,
            },
            Err(_) => SubsetScore {
                bic: f64::INFINITY,
                converged: false,
                predictors,
            },
        }
    });
    let per_order = (1..=8)
        .map(|order| {
            let best = subsets
                .iter()
                .filter(|s| s.predictors.len() == order)
                .min_by(|a, b| a.bic.total_cmp(&b.bic))
                .expect("every order has subsets");
            OrderMinimum {
                order,
                predictors: best.predictors.clone(),
                bic: best.bic,
            }
        })
        .collect::<Vec<_>>();
    let overall = per_order
        .iter()
        .filter(|o| o.bic.is_finite())
        .min_by(|a, b| a.bic.total_cmp(&b.bic));
    let (best, best_bic) = match overall {
        Some(o) => (o.predictors.clone(), o.bic),
        None => (Vec::new(), f64::INFINITY),
    };
    Ok(ModelSelectionResult {
        n: rows.len(),
        subsets,
        per_order,
        best,
        best_bic,
    })
}

pub fn select_scenario(table: &[FeatureRow], scenario: Scenario, exec: Exec) -> Result<ModelSelectionResult> {
    let (rows, labels) = scenario_data(table, scenario);
    select_model(&rows, &labels, exec)
}

fn rates(probs: &[f64], labels: &[bool], tau: f64) -> (Option<f64>, Option<f64>) {
    let (mut fa, mut neg, mut det, mut pos) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &l) in probs.iter().zip(labels) {
        if l {
            pos += 1;
            det += detect(p, tau) as usize;
        } else {
            neg += 1;
            fa += detect(p, tau) as usize;
        }
    }
    let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
    (ratio(fa, neg), ratio(det, pos))
}

/// False-alarm rate (over negatives) and detection rate (over positives) at
/// `tau`; `None` when a class is absent.
pub fn error_rates(probs: &[f64], labels: &[bool], tau: f64) -> (Option<f64>, Option<f64>) {
    rates(probs, labels, tau)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChoice {
    pub tau: f64,
    pub fa_rate: f64,
    pub detection_rate: f64,
}

/// Candidate thresholds: midpoints of adjacent distinct probabilities plus
/// one bound below the smallest and one above the largest.
pub fn threshold_candidates(probs: &[f64]) -> Vec<f64> {
    let mut sorted: Vec<f64> = probs.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let Some((&lo, &hi)) = sorted.first().zip(sorted.last()) else {
        return Vec::new();
    };
    let mut out = Vec::with_capacity(sorted.len() + 1);
    out.push(if lo > 0.0 { lo / 2.0 } else { f64::MIN_POSITIVE });
    for w in sorted.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        // adjacent floats: the midpoint may round onto the lower value
        out.push(if mid > w[0] { mid } else { w[1] });
    }
    out.push(if hi < 1.0 { 0.5 * (hi + 1.0) } else { 1.0f64.next_up() });
    out
}

/// Smallest candidate threshold whose training false-alarm rate is within `fa_bound`.
pub fn choose_threshold(probs: &[f64], labels: &[bool], fa_bound: f64) -> Result<ThresholdChoice> {
    if probs.len() != labels.len() {
        return Err(Error::InvalidConfig("probabilities and labels differ in length".into()));
    }
    if !(0.0..=1.0).contains(&fa_bound) {
        return Err(Error::InvalidConfig(format!("fa_bound {fa_bound} outside [0, 1]")));
    }
    if !labels.iter().any(|&l| l) || labels.iter().all(|&l| l) {
        return Err(Error::SingleClass);
    }
    for tau in threshold_candidates(probs) {
        let (fa, det) = rates(probs, labels, tau);
        let (fa, det) = (fa.unwrap_or(0.0), det.unwrap_or(0.0));
        if fa <= fa_bound {
            return Ok(ThresholdChoice {
                tau,
                fa_rate: fa,
                detection_rate: det,
            });
        }
    }
    unreachable!("the upper bound candidate has zero false alarms")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fa: f64,
    pub detection: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// From `(0, 0)` at an infinite threshold down to `(1, 1)`.
    pub points: Vec<RocPoint>,
}

impl RocCurve {
    /// Trapezoidal area under the curve.
    pub fn auc(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].fa - w[0].fa) * 0.5 * (w[1].detection + w[0].detection))
            .sum()
    }
}

/// ROC over every distinct probability used as threshold.
pub fn roc(probs: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if probs.len() != labels.len() {
        return Err(Error::InvalidConfig("probabilities and labels differ in length".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]));
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fa: 0.0,
        detection: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let tau = probs[order[i]];
        while i < order.len() && probs[order[i]] == tau {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: tau,
            fa: fp as f64 / neg as f64,
            detection: tp as f64 / pos as f64,
        });
    }
    Ok(RocCurve { points })
}

/// A fitted model with its decision threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detector {
    pub model: LogisticModel,
    pub tau: f64,
    pub train_fa_rate: f64,
    pub train_detection_rate: f64,
}

impl Detector {
    pub fn train(rows: &[[f64; 8]], labels: &[bool], predictors: &[Feature], fa_bound: f64) -> Result<Self> {
        let model = fit_logistic(rows, labels, predictors)?;
        let probs: Vec<f64> = rows.iter().map(|r| model.predict(r)).collect();
        let choice = choose_threshold(&probs, labels, fa_bound)?;
        Ok(Self {
            model,
            tau: choice.tau,
            train_fa_rate: choice.fa_rate,
            train_detection_rate: choice.detection_rate,
        })
    }

    pub fn decide(&self, x: &[f64; 8]) -> bool {
        detect(self.model.predict(x), self.tau)
    }
}

/// Held-out evaluation of one subject in one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LosoReport {
    pub held_out: String,
    pub scenario: Scenario,
    pub predictors: Vec<Feature>,
    pub tau: f64,
    pub train_fa: f64,
    pub train_detection: f64,
    /// `None` when the held-out rows contain no asymmetric samples.
    pub test_detection: Option<f64>,
    /// `None` when the held-out rows contain no symmetric samples.
    pub test_fa: Option<f64>,
    pub n_test_positive: usize,
    pub n_test_negative: usize,
    /// Held-out `(probability, label)` pairs, for pooled ROC curves.
    pub test_scores: Vec<(f64, bool)>,
    pub model: LogisticModel,
}

/// Select, fit and threshold on every subject but `held_out`, then test on it.
pub fn evaluate_loso(
    table: &[FeatureRow],
    held_out: &str,
    scenario: Scenario,
    fa_bound: f64,
    exec: Exec,
) -> Result<LosoReport> {
    if !table.iter().any(|r| r.subject == held_out) {
        return Err(Error::UnknownSubject(held_out.to_string()));
    }
    let in_scenario = |r: &&FeatureRow| scenario.includes(r.direction);
    let (train, test): (Vec<&FeatureRow>, Vec<&FeatureRow>) =
        table.iter().filter(in_scenario).partition(|r| r.subject != held_out);
    let rows: Vec<[f64; 8]> = train.iter().map(|r| r.values).collect();
    let labels: Vec<bool> = train.iter().map(|r| r.label.is_positive()).collect();
    let selection = select_model(&rows, &labels, exec)?;
    if selection.best.is_empty() {
        return Err(Error::Degenerate("no predictor subset converged".into()));
    }
    let detector = Detector::train(&rows, &labels, &selection.best, fa_bound)?;
    let test_scores: Vec<(f64, bool)> = test
        .iter()
        .map(|r| (detector.model.predict(&r.values), r.label.is_positive()))
        .collect();
    let (probs, test_labels): (Vec<f64>, Vec<bool>) = test_scores.iter().copied().unzip();
    let (test_fa, test_detection) = rates(&probs, &test_labels, detector.tau);
    let n_test_positive = test_labels.iter().filter(|&&l| l).count();
    Ok(LosoReport {
        held_out: held_out.to_string(),
        scenario,
        predictors: selection.best,
        tau: detector.tau,
        train_fa: detector.train_fa_rate,
        train_detection: detector.train_detection_rate,
        test_detection,
        test_fa,
        n_test_positive,
        n_test_negative: test_labels.len() - n_test_positive,
        test_scores,
        model: detector.model,
    })
}
