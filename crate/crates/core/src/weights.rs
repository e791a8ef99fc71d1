//! Metric weights, their fitting against binary human labels, and the
//! agreement statistics used to validate scores and ratings.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{sigmoid, softplus};

#[derive(Debug, Error, PartialEq)]
pub enum WeightsError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("labels contain a single class")]
    SingleClass,
    #[error("label {0} is not 0 or 1")]
    InvalidLabel(u8),
    #[error("non-finite value in input")]
    NonFinite,
    #[error("not enough units with two or more ratings")]
    InsufficientOverlap,
}

/// Every trainable weight of the four component scores and the comprehensive
/// score. Serialized as a flat object keyed by the weight names plus
/// `fitted`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSet {
    #[serde(rename = "w1_I")]
    pub w1_i: f64,
    #[serde(rename = "w2_I")]
    pub w2_i: f64,
    #[serde(rename = "w1_R")]
    pub w1_r: f64,
    #[serde(rename = "w2_R")]
    pub w2_r: f64,
    #[serde(rename = "w1_C")]
    pub w1_c: f64,
    #[serde(rename = "w2_C")]
    pub w2_c: f64,
    #[serde(rename = "w1_U")]
    pub w1_u: f64,
    #[serde(rename = "w2_U")]
    pub w2_u: f64,
    #[serde(rename = "w_I")]
    pub w_i: f64,
    #[serde(rename = "w_R")]
    pub w_r: f64,
    #[serde(rename = "w_C")]
    pub w_c: f64,
    #[serde(rename = "w_U")]
    pub w_u: f64,
    #[serde(default)]
    pub fitted: bool,
    #[serde(skip)]
    pub fit_log: Option<Vec<PairReport>>,
}

impl Default for WeightSet {
    fn default() -> Self {
        Self {
            w1_i: 0.6,
            w2_i: 0.6,
            w1_r: 0.6,
            w2_r: 0.6,
            w1_c: 0.6,
            w2_c: 0.6,
            w1_u: 0.5,
            w2_u: 0.5,
            w_i: 0.2,
            w_r: 0.2,
            w_c: 0.2,
            w_u: 0.4,
            fitted: false,
            fit_log: None,
        }
    }
}

impl WeightSet {
    pub fn is_finite(&self) -> bool {
        [
            self.w1_i, self.w2_i, self.w1_r, self.w2_r, self.w1_c, self.w2_c, self.w1_u, self.w2_u, self.w_i, self.w_r,
            self.w_c, self.w_u,
        ]
        .iter()
        .all(|w| w.is_finite())
    }
}

// ---------------------------------------------------------------------------
// Logistic fitting
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticConfig {
    /// Initial step; halved whenever a step would raise the loss.
    pub learning_rate: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub seed: u64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            max_iters: 5000,
            grad_tol: 1e-8,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Converged,
    MaxIterations,
    /// Single-class labels; defaults were kept.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub loss_trace: Vec<f64>,
    pub iterations: usize,
    pub status: FitStatus,
}

impl LogisticFit {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        sigmoid(self.decision(x))
    }

    /// Fraction of samples classified correctly at probability 0.5.
    pub fn accuracy(&self, features: &[Vec<f64>], labels: &[u8]) -> f64 {
        let hits = features
            .iter()
            .zip(labels)
            .filter(|(x, &y)| (self.predict_proba(x) >= 0.5) == (y == 1))
            .count();
        hits as f64 / labels.len().max(1) as f64
    }
}

/// Mean logistic loss and its gradient. `params` holds the feature weights
/// followed by the bias.
pub fn logistic_loss_grad(params: &[f64], features: &[Vec<f64>], labels: &[u8]) -> (f64, Vec<f64>) {
    let d = params.len() - 1;
    let n = labels.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; d + 1];
    for (x, &y) in features.iter().zip(labels) {
        let z = params[..d].iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + params[d];
        let y = f64::from(y);
        loss += softplus(z) - y * z;
        let r = sigmoid(z) - y;
        for (g, v) in grad.iter_mut().zip(x) {
            *g += r * v;
        }
        grad[d] += r;
    }
    grad.iter_mut().for_each(|g| *g /= n);
    (loss / n, grad)
}

fn check_labels(labels: &[u8]) -> Result<(), WeightsError> {
    match labels.iter().find(|&&y| y > 1) {
        Some(&y) => Err(WeightsError::InvalidLabel(y)),
        None => Ok(()),
    }
}

/// Full-batch gradient descent on the mean logistic loss of
/// `sigmoid(w . x + b)`. Stops when the gradient norm drops below
/// `grad_tol` or after `max_iters`. The loss trace is non-increasing.
///
/// Single-class labels give status [`FitStatus::Degenerate`] with zero
/// weights.
pub fn fit_logistic(features: &[Vec<f64>], labels: &[u8], cfg: &LogisticConfig) -> Result<LogisticFit, WeightsError> {
    if features.len() != labels.len() {
        return Err(WeightsError::LengthMismatch(features.len(), labels.len()));
    }
    if labels.len() < 2 {
        return Err(WeightsError::TooFewSamples {
            needed: 2,
            got: labels.len(),
        });
    }
    check_labels(labels)?;
    let d = features[0].len();
    if let Some(bad) = features.iter().find(|x| x.len() != d) {
        return Err(WeightsError::LengthMismatch(d, bad.len()));
    }
    if features.iter().flatten().any(|v| !v.is_finite()) {
        return Err(WeightsError::NonFinite);
    }
    let positives = labels.iter().filter(|&&y| y == 1).count();
    if positives == 0 || positives == labels.len() {
        return Ok(LogisticFit {
            weights: vec![0.0; d],
            bias: 0.0,
            loss_trace: Vec::new(),
            iterations: 0,
            status: FitStatus::Degenerate,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params: Vec<f64> = (0..=d).map(|_| rng.gen_range(-0.01..0.01)).collect();
    let (mut loss, mut grad) = logistic_loss_grad(&params, features, labels);
    let mut trace = vec![loss];
    let mut step = cfg.learning_rate;
    let mut status = FitStatus::MaxIterations;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm < cfg.grad_tol {
            status = FitStatus::Converged;
            break;
        }
        let mut candidate: Vec<f64>;
        let mut next;
        loop {
            candidate = params.iter().zip(&grad).map(|(p, g)| p - step * g).collect();
            next = logistic_loss_grad(&candidate, features, labels);
            if next.0 <= loss || step < 1e-12 {
                break;
            }
            step *= 0.5;
        }
        if next.0 > loss {
            // no descent step exists at this resolution
            status = FitStatus::Converged;
            break;
        }
        params = candidate;
        (loss, grad) = next;
        trace.push(loss);
        iterations += 1;
    }

    Ok(LogisticFit {
        bias: params[d],
        weights: params[..d].to_vec(),
        loss_trace: trace,
        iterations,
        status,
    })
}

/// Fit of one weight pair; single-class input keeps `defaults` and logs a
/// warning.
pub fn fit_weight_pair(
    samples: &[([f64; 2], u8)],
    defaults: (f64, f64),
    cfg: &LogisticConfig,
) -> Result<(f64, f64, LogisticFit), WeightsError> {
    let features: Vec<Vec<f64>> = samples.iter().map(|(x, _)| x.to_vec()).collect();
    let labels: Vec<u8> = samples.iter().map(|(_, y)| *y).collect();
    let fit = fit_logistic(&features, &labels, cfg)?;
    if fit.status == FitStatus::Degenerate {
        log::warn!("all labels identical; keeping default weights {defaults:?}");
        return Ok((defaults.0, defaults.1, fit));
    }
    Ok((fit.weights[0], fit.weights[1], fit))
}

/// Component values and binary labels for one comment, as read by
/// `fit-weights`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledComponents {
    #[serde(default)]
    pub comment_id: String,
    #[serde(rename = "L_p")]
    pub l_p: f64,
    #[serde(rename = "V_d")]
    pub v_d: f64,
    #[serde(rename = "D_k")]
    pub d_k: f64,
    #[serde(rename = "D_c")]
    pub d_c: f64,
    #[serde(rename = "S_r")]
    pub s_r: f64,
    #[serde(rename = "S_t")]
    pub s_t: f64,
    #[serde(rename = "N_l")]
    pub n_l: f64,
    #[serde(rename = "N_r")]
    pub n_r: f64,
    #[serde(rename = "I")]
    pub i: f64,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "U")]
    pub u: f64,
    /// Keys `I`, `R`, `C`, `U` and optionally `F`.
    pub labels: BTreeMap<String, u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub metric: String,
    pub samples: usize,
    pub status: FitStatus,
    pub iterations: usize,
    /// AUC of the metric under default weights.
    pub auc_default: Option<f64>,
    /// AUC of the fitted linear score.
    pub auc_fitted: Option<f64>,
    pub accuracy: f64,
}

fn pair_report(
    metric: &str,
    fit: &LogisticFit,
    features: &[Vec<f64>],
    labels: &[u8],
    default_scores: &[f64],
) -> PairReport {
    let fitted_scores: Vec<f64> = features.iter().map(|x| fit.decision(x)).collect();
    PairReport {
        metric: metric.to_string(),
        samples: labels.len(),
        status: fit.status,
        iterations: fit.iterations,
        auc_default: auc(default_scores, labels).ok(),
        auc_fitted: if fit.status == FitStatus::Degenerate {
            None
        } else {
            auc(&fitted_scores, labels).ok()
        },
        accuracy: fit.accuracy(features, labels),
    }
}

/// Fits each component pair against its label, and the four top-level
/// weights against label `F` when `fit_top_level` is set. Pairs with fewer
/// than two labeled rows keep the weights of `base`.
pub fn fit_weight_set(
    rows: &[LabeledComponents],
    base: &WeightSet,
    fit_top_level: bool,
    cfg: &LogisticConfig,
) -> Result<WeightSet, WeightsError> {
    let mut out = base.clone();
    let mut log = Vec::new();
    type Extract = fn(&LabeledComponents) -> [f64; 2];
    let pairs: [(&str, Extract); 4] = [
        ("I", |r| [r.l_p, r.v_d]),
        ("R", |r| [r.d_k, r.d_c]),
        ("C", |r| [r.s_r, r.s_t]),
        ("U", |r| [r.n_l, r.n_r]),
    ];
    for (metric, extract) in pairs {
        let labeled: Vec<&LabeledComponents> = rows.iter().filter(|r| r.labels.contains_key(metric)).collect();
        if labeled.len() < 2 {
            log::warn!("metric {metric}: {} labeled rows, keeping weights", labeled.len());
            continue;
        }
        let samples: Vec<([f64; 2], u8)> = labeled.iter().map(|r| (extract(r), r.labels[metric])).collect();
        check_labels(&samples.iter().map(|s| s.1).collect::<Vec<_>>())?;
        let (slot1, slot2) = match metric {
            "I" => (&mut out.w1_i, &mut out.w2_i),
            "R" => (&mut out.w1_r, &mut out.w2_r),
            "C" => (&mut out.w1_c, &mut out.w2_c),
            _ => (&mut out.w1_u, &mut out.w2_u),
        };
        let defaults = (*slot1, *slot2);
        let (w1, w2, fit) = fit_weight_pair(&samples, defaults, cfg)?;
        *slot1 = w1;
        *slot2 = w2;
        let features: Vec<Vec<f64>> = samples.iter().map(|s| s.0.to_vec()).collect();
        let labels: Vec<u8> = samples.iter().map(|s| s.1).collect();
        let default_scores: Vec<f64> = samples
            .iter()
            .map(|s| defaults.0 * s.0[0] + defaults.1 * s.0[1])
            .collect();
        log.push(pair_report(metric, &fit, &features, &labels, &default_scores));
    }
    if fit_top_level {
        let labeled: Vec<&LabeledComponents> = rows.iter().filter(|r| r.labels.contains_key("F")).collect();
        if labeled.len() >= 2 {
            let features: Vec<Vec<f64>> = labeled.iter().map(|r| vec![r.i, r.r, r.c, r.u]).collect();
            let labels: Vec<u8> = labeled.iter().map(|r| r.labels["F"]).collect();
            let fit = fit_logistic(&features, &labels, cfg)?;
            let default_scores: Vec<f64> = features
                .iter()
                .map(|x| base.w_i * x[0] + base.w_r * x[1] + base.w_c * x[2] + base.w_u * x[3])
                .collect();
            if fit.status != FitStatus::Degenerate {
                out.w_i = fit.weights[0];
                out.w_r = fit.weights[1];
                out.w_c = fit.weights[2];
                out.w_u = fit.weights[3];
            } else {
                log::warn!("top-level labels single-class; keeping weights");
            }
            log.push(pair_report("F", &fit, &features, &labels, &default_scores));
        }
    }
    out.fitted = log.iter().any(|p| p.status != FitStatus::Degenerate);
    out.fit_log = Some(log);
    if !out.is_finite() {
        return Err(WeightsError::NonFinite);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// AUC
// ---------------------------------------------------------------------------

/// Probability that a random positive scores above a random negative, ties
/// counting one half. Exact pair enumeration.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64, WeightsError> {
    if scores.len() != labels.len() {
        return Err(WeightsError::LengthMismatch(scores.len(), labels.len()));
    }
    check_labels(labels)?;
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(WeightsError::NonFinite);
    }
    let pos: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y == 1)
        .map(|(s, _)| *s)
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y == 0)
        .map(|(s, _)| *s)
        .collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(WeightsError::SingleClass);
    }
    // counts of wins and ties are integers, so the sum is exact
    let mut wins = 0u64;
    let mut ties = 0u64;
    for p in &pos {
        for n in &neg {
            if p > n {
                wins += 1;
            } else if p == n {
                ties += 1;
            }
        }
    }
    Ok((2 * wins + ties) as f64 / (2 * pos.len() * neg.len()) as f64)
}

// ---------------------------------------------------------------------------
// Krippendorff's alpha
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphaMetric {
    #[default]
    Interval,
    Nominal,
}

impl AlphaMetric {
    fn delta(self, a: f64, b: f64) -> f64 {
        match self {
            AlphaMetric::Interval => (a - b) * (a - b),
            AlphaMetric::Nominal => {
                if a == b {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }
}

/// Pairable values per item: columns of the annotator x item matrix with at
/// least two ratings.
fn units(ratings: &[Vec<Option<f64>>]) -> Result<Vec<Vec<f64>>, WeightsError> {
    let items = ratings.first().map_or(0, Vec::len);
    if let Some(row) = ratings.iter().find(|r| r.len() != items) {
        return Err(WeightsError::LengthMismatch(items, row.len()));
    }
    let mut out = Vec::with_capacity(items);
    for item in 0..items {
        let vals: Vec<f64> = ratings.iter().filter_map(|r| r[item]).collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(WeightsError::NonFinite);
        }
        out.push(vals);
    }
    Ok(out)
}

/// Distinct values, the coincidence matrix over them and its marginals.
struct Coincidences {
    values: Vec<f64>,
    matrix: Vec<Vec<f64>>,
    marginals: Vec<f64>,
    total: f64,
}

fn coincidences(units: &[Vec<f64>]) -> Coincidences {
    let mut values: Vec<f64> = units.iter().filter(|u| u.len() >= 2).flatten().copied().collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let index = |v: f64| values.binary_search_by(|x| x.total_cmp(&v)).expect("value present");
    let k = values.len();
    let mut matrix = vec![vec![0.0; k]; k];
    for unit in units.iter().filter(|u| u.len() >= 2) {
        let weight = 1.0 / (unit.len() - 1) as f64;
        for (i, &a) in unit.iter().enumerate() {
            for (j, &b) in unit.iter().enumerate() {
                if i != j {
                    matrix[index(a)][index(b)] += weight;
                }
            }
        }
    }
    let marginals: Vec<f64> = matrix.iter().map(|row| row.iter().sum()).collect();
    let total = marginals.iter().sum();
    Coincidences {
        values,
        matrix,
        marginals,
        total,
    }
}

/// Expected disagreement per pair of pairable values.
fn expected_disagreement(c: &Coincidences, metric: AlphaMetric) -> f64 {
    let mut de = 0.0;
    for (a, &va) in c.values.iter().enumerate() {
        for (b, &vb) in c.values.iter().enumerate() {
            de += c.marginals[a] * c.marginals[b] * metric.delta(va, vb);
        }
    }
    de / (c.total * (c.total - 1.0))
}

/// Krippendorff's alpha over an annotator x item matrix (`None` = missing).
/// Returns 1.0 when there is no expected disagreement at all.
pub fn krippendorff_alpha(ratings: &[Vec<Option<f64>>], metric: AlphaMetric) -> Result<f64, WeightsError> {
    let units = units(ratings)?;
    if units.iter().filter(|u| u.len() >= 2).count() < 2 {
        return Err(WeightsError::InsufficientOverlap);
    }
    let c = coincidences(&units);
    let mut observed = 0.0;
    for (a, &va) in c.values.iter().enumerate() {
        for (b, &vb) in c.values.iter().enumerate() {
            observed += c.matrix[a][b] * metric.delta(va, vb);
        }
    }
    observed /= c.total;
    let expected = expected_disagreement(&c, metric);
    if expected == 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 - observed / expected)
}

/// Per-item agreement: `1 - D_o(item) / D_e`, where `D_e` is the expected
/// disagreement of the whole matrix and `D_o(item)` the mean pairwise
/// disagreement among the item's own ratings. The value-weighted mean of
/// item alphas equals the overall alpha. Items with fewer than two ratings
/// get `None`.
pub fn item_alphas(ratings: &[Vec<Option<f64>>], metric: AlphaMetric) -> Result<Vec<Option<f64>>, WeightsError> {
    let units = units(ratings)?;
    if units.iter().filter(|u| u.len() >= 2).count() < 2 {
        return Err(WeightsError::InsufficientOverlap);
    }
    let expected = expected_disagreement(&coincidences(&units), metric);
    Ok(units
        .iter()
        .map(|u| {
            if u.len() < 2 {
                return None;
            }
            if expected == 0.0 {
                return Some(1.0);
            }
            let m = u.len() as f64;
            let mut d = 0.0;
            for (i, &a) in u.iter().enumerate() {
                for (j, &b) in u.iter().enumerate() {
                    if i != j {
                        d += metric.delta(a, b);
                    }
                }
            }
            Some(1.0 - d / (m * (m - 1.0)) / expected)
        })
        .collect())
}

/// Keeps items whose alpha is at least `threshold` (the comparison that
/// drops is strict `<`). Items without an alpha are dropped.
pub fn filter_low_agreement<T>(items: Vec<T>, alphas: &[Option<f64>], threshold: f64) -> Vec<T> {
    items
        .into_iter()
        .zip(alphas)
        .filter(|(_, a)| a.is_some_and(|a| a.partial_cmp(&threshold) != Some(std::cmp::Ordering::Less)))
        .map(|(item, _)| item)
        .collect()
}

/// Agreement threshold below which rated items are discarded.
pub const DEFAULT_AGREEMENT_THRESHOLD: f64 = 0.7;
