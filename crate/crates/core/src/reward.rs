//! Reward mathematics: pairwise ranking loss over ranked comment sequences,
//! a linear reward scorer trained on it, correlation-derived auxiliary
//! weights and the basic + auxiliary reward composition.

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CommentRecord;
use crate::metrics::ScoreBreakdown;
use crate::{sigmoid, softplus};

#[derive(Debug, Error, PartialEq)]
pub enum RewardError {
    #[error("no ranking pairs")]
    EmptyPairs,
    #[error("no sequences")]
    NoSequences,
    #[error("sequence {video_id}: {message}")]
    InvalidSequence { video_id: String, message: String },
    #[error("feature dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("zero variance; correlation undefined")]
    ZeroVariance,
}

/// A best-first comment ranking for one video, with a feature vector per
/// comment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedSequence {
    pub video_id: String,
    pub ranking: Vec<String>,
    pub features: BTreeMap<String, Vec<f64>>,
}

impl RankedSequence {
    /// Checks length, uniqueness and feature coverage; returns the feature
    /// dimension.
    pub fn validate(&self) -> Result<usize, RewardError> {
        let invalid = |message: &str| RewardError::InvalidSequence {
            video_id: self.video_id.clone(),
            message: message.to_string(),
        };
        if self.ranking.len() < 2 {
            return Err(invalid("needs at least 2 comments"));
        }
        let unique: HashSet<&String> = self.ranking.iter().collect();
        if unique.len() != self.ranking.len() {
            return Err(invalid("ranking repeats a comment"));
        }
        let mut dim = None;
        for id in &self.ranking {
            let f = self
                .features
                .get(id)
                .ok_or_else(|| invalid(&format!("no features for {id}")))?;
            if f.iter().any(|v| !v.is_finite()) {
                return Err(invalid(&format!("non-finite feature for {id}")));
            }
            match dim {
                None => dim = Some(f.len()),
                Some(d) if d != f.len() => return Err(RewardError::DimensionMismatch(d, f.len())),
                _ => {}
            }
        }
        Ok(dim.unwrap_or(0))
    }

    /// All `C(k, 2)` (winner, loser) feature pairs.
    pub fn pairs(&self) -> Vec<(&[f64], &[f64])> {
        enumerate_pairs(self.ranking.len())
            .into_iter()
            .map(|(w, l)| {
                (
                    self.features[&self.ranking[w]].as_slice(),
                    self.features[&self.ranking[l]].as_slice(),
                )
            })
            .collect()
    }
}

/// Index pairs `(i, j)` with `i < j` for a best-first list of length `k`;
/// position `i` is the winner.
pub fn enumerate_pairs(k: usize) -> Vec<(usize, usize)> {
    (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearScorer {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearScorer {
    pub fn zeros(dim: usize) -> Self {
        Self {
            weights: vec![0.0; dim],
            bias: 0.0,
        }
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }
}

/// `-(1/|pairs|) * sum log sigmoid(r(winner) - r(loser))`.
pub fn pairwise_ranking_loss(scorer: &LinearScorer, pairs: &[(&[f64], &[f64])]) -> Result<f64, RewardError> {
    if pairs.is_empty() {
        return Err(RewardError::EmptyPairs);
    }
    for (w, l) in pairs {
        for x in [w, l] {
            if x.len() != scorer.weights.len() {
                return Err(RewardError::DimensionMismatch(scorer.weights.len(), x.len()));
            }
        }
    }
    Ok(margin_loss(
        pairs.iter().map(|(w, l)| scorer.score(w) - scorer.score(l)),
    ))
}

/// Mean of `-log sigmoid(margin)` over the given margins.
pub fn margin_loss(margins: impl IntoIterator<Item = f64>) -> f64 {
    let mut n = 0usize;
    let total: f64 = margins
        .into_iter()
        .map(|m| {
            n += 1;
            softplus(-m)
        })
        .sum();
    total / n as f64
}

/// Pair feature differences (winner - loser), grouped per sequence.
struct PairSet {
    diffs: Vec<Vec<Vec<f64>>>,
}

impl PairSet {
    fn new(sequences: &[RankedSequence]) -> Result<(Self, usize), RewardError> {
        if sequences.is_empty() {
            return Err(RewardError::NoSequences);
        }
        let mut dim = None;
        let mut diffs = Vec::with_capacity(sequences.len());
        for s in sequences {
            let d = s.validate()?;
            match dim {
                None => dim = Some(d),
                Some(prev) if prev != d => return Err(RewardError::DimensionMismatch(prev, d)),
                _ => {}
            }
            diffs.push(
                s.pairs()
                    .into_iter()
                    .map(|(w, l)| w.iter().zip(l).map(|(a, b)| a - b).collect())
                    .collect(),
            );
        }
        Ok((Self { diffs }, dim.unwrap_or(0)))
    }

    /// Sequence-averaged loss and its gradient in the weights. The bias
    /// cancels in every margin, so it has no gradient.
    fn loss_grad(&self, weights: &[f64]) -> (f64, Vec<f64>) {
        let mut loss = 0.0;
        let mut grad = vec![0.0; weights.len()];
        for seq in &self.diffs {
            let n = seq.len() as f64;
            for d in seq {
                let m: f64 = weights.iter().zip(d).map(|(w, x)| w * x).sum();
                loss += softplus(-m) / n;
                let coef = -sigmoid(-m) / n;
                for (g, x) in grad.iter_mut().zip(d) {
                    *g += coef * x;
                }
            }
        }
        let s = self.diffs.len() as f64;
        grad.iter_mut().for_each(|g| *g /= s);
        (loss / s, grad)
    }
}

/// Ranking loss averaged over each sequence's pairs, then over sequences,
/// with its analytic gradient in the scorer weights.
pub fn sequence_loss_grad(weights: &[f64], sequences: &[RankedSequence]) -> Result<(f64, Vec<f64>), RewardError> {
    let (pairs, dim) = PairSet::new(sequences)?;
    if dim != weights.len() {
        return Err(RewardError::DimensionMismatch(dim, weights.len()));
    }
    Ok(pairs.loss_grad(weights))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardTrainConfig {
    pub learning_rate: f64,
    pub max_iters: usize,
    /// Stop once the loss changes by less than this between iterations.
    pub loss_tol: f64,
    pub seed: u64,
}

impl Default for RewardTrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            max_iters: 10_000,
            loss_tol: 1e-9,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub iterations: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub converged: bool,
    pub degenerate: bool,
}

/// Gradient descent on the pairwise ranking loss with step halving on any
/// loss increase. Identical features everywhere give a zero scorer and a
/// warning.
pub fn train_reward_scorer(
    sequences: &[RankedSequence],
    cfg: &RewardTrainConfig,
) -> Result<(LinearScorer, TrainReport), RewardError> {
    let (pairs, dim) = PairSet::new(sequences)?;
    if pairs.diffs.iter().flatten().flatten().all(|&x| x == 0.0) {
        log::warn!("all ranked comments share identical features; returning a zero scorer");
        let loss = pairs.loss_grad(&vec![0.0; dim]).0;
        return Ok((
            LinearScorer::zeros(dim),
            TrainReport {
                iterations: 0,
                initial_loss: loss,
                final_loss: loss,
                converged: true,
                degenerate: true,
            },
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w: Vec<f64> = (0..dim).map(|_| rng.gen_range(-0.01..0.01)).collect();
    let (mut loss, mut grad) = pairs.loss_grad(&w);
    let initial_loss = loss;
    let mut step = cfg.learning_rate;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        let mut candidate: Vec<f64>;
        let mut next;
        loop {
            candidate = w.iter().zip(&grad).map(|(p, g)| p - step * g).collect();
            next = pairs.loss_grad(&candidate);
            if next.0 <= loss || step < 1e-12 {
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        if next.0 > loss {
            converged = true;
            break;
        }
        let change = loss - next.0;
        w = candidate;
        (loss, grad) = next;
        if change < cfg.loss_tol {
            converged = true;
            break;
        }
    }
    Ok((
        LinearScorer { weights: w, bias: 0.0 },
        TrainReport {
            iterations,
            initial_loss,
            final_loss: loss,
            converged,
            degenerate: false,
        },
    ))
}

/// Share of all pairs in `sequences` that `scorer` orders like the ranking.
pub fn pairwise_accuracy(scorer: &LinearScorer, sequences: &[RankedSequence]) -> f64 {
    let (mut hit, mut total) = (0usize, 0usize);
    for s in sequences {
        for (w, l) in s.pairs() {
            total += 1;
            if scorer.score(w) > scorer.score(l) {
                hit += 1;
            }
        }
    }
    hit as f64 / total.max(1) as f64
}

/// Best-first sequences per video, ranked by `F` (earlier comment wins a
/// tie), with `[I, R, C, U]` features. Videos with fewer than two comments
/// are skipped.
pub fn sequences_from_scores(comments: &[CommentRecord], scores: &[ScoreBreakdown]) -> Vec<RankedSequence> {
    let mut per_video: BTreeMap<&str, Vec<(usize, &CommentRecord, &ScoreBreakdown)>> = BTreeMap::new();
    for (i, (c, s)) in comments.iter().zip(scores).enumerate() {
        per_video.entry(c.video_id.as_str()).or_default().push((i, c, s));
    }
    per_video
        .into_iter()
        .filter(|(_, v)| v.len() >= 2)
        .map(|(video_id, mut v)| {
            v.sort_by(|a, b| b.2.f.total_cmp(&a.2.f).then(a.0.cmp(&b.0)));
            RankedSequence {
                video_id: video_id.to_string(),
                ranking: v.iter().map(|(_, c, _)| c.comment_id.clone()).collect(),
                features: v
                    .iter()
                    .map(|(_, c, s)| (c.comment_id.clone(), vec![s.i, s.r, s.c, s.u]))
                    .collect(),
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Correlation-derived weights and reward composition
// ---------------------------------------------------------------------------

/// Pearson correlation, clamped to `[-1, 1]`.
pub fn pearson_corr(xs: &[f64], ys: &[f64]) -> Result<f64, RewardError> {
    if xs.len() != ys.len() {
        return Err(RewardError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(RewardError::TooFewPoints(xs.len()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(RewardError::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Per-comment scores used for the auxiliary weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreTuple {
    pub i: f64,
    pub r: f64,
    pub c: f64,
    pub u: f64,
}

impl From<&ScoreBreakdown> for ScoreTuple {
    fn from(s: &ScoreBreakdown) -> Self {
        Self {
            i: s.i,
            r: s.r,
            c: s.c,
            u: s.u,
        }
    }
}

/// Correlation of I, R and C with U within one video; undefined
/// correlations map to 0.
pub fn video_correlations(tuples: &[ScoreTuple]) -> [f64; 3] {
    let u: Vec<f64> = tuples.iter().map(|t| t.u).collect();
    let pick: [fn(&ScoreTuple) -> f64; 3] = [|t| t.i, |t| t.r, |t| t.c];
    pick.map(|f| {
        let xs: Vec<f64> = tuples.iter().map(f).collect();
        pearson_corr(&xs, &u).unwrap_or(0.0)
    })
}

/// Floors negatives at 0 and divides by the sum; uniform thirds when the
/// floored sum is 0.
pub fn normalize_correlations(corrs: [f64; 3]) -> [f64; 3] {
    let floored = corrs.map(|c| if c.is_finite() { c.max(0.0) } else { 0.0 });
    let sum: f64 = floored.iter().sum();
    if sum == 0.0 {
        return [1.0 / 3.0; 3];
    }
    floored.map(|c| c / sum)
}

/// Auxiliary weights for I, R, C: per-video correlations with U, averaged
/// over videos with at least two comments, then floored and normalized.
pub fn auxiliary_weights(per_video: &BTreeMap<String, Vec<ScoreTuple>>) -> [f64; 3] {
    let usable: Vec<[f64; 3]> = per_video
        .values()
        .filter(|t| t.len() >= 2)
        .map(|t| video_correlations(t))
        .collect();
    if usable.is_empty() {
        return [1.0 / 3.0; 3];
    }
    let n = usable.len() as f64;
    let mean = [0, 1, 2].map(|k| usable.iter().map(|c| c[k]).sum::<f64>() / n);
    normalize_correlations(mean)
}

/// `r = BR + sum w_i * AR_i`.
pub fn compose_reward(basic: f64, auxiliary: &[f64], weights: &[f64]) -> Result<f64, RewardError> {
    if auxiliary.len() != weights.len() {
        return Err(RewardError::LengthMismatch(auxiliary.len(), weights.len()));
    }
    Ok(basic + auxiliary.iter().zip(weights).map(|(a, w)| a * w).sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasicRewardSource {
    /// The engagement score `U`.
    #[default]
    Engagement,
    /// Mean annotator rating mapped from 1..=5 onto 0..=1.
    HumanRating,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub basic_source: BasicRewardSource,
}

/// Basic reward of a comment; `None` for [`BasicRewardSource::HumanRating`]
/// when the comment carries no ratings.
pub fn basic_reward(comment: &CommentRecord, score: &ScoreBreakdown, source: BasicRewardSource) -> Option<f64> {
    match source {
        BasicRewardSource::Engagement => Some(score.u),
        BasicRewardSource::HumanRating => {
            let ratings = comment.human_rating.as_ref().filter(|r| !r.is_empty())?;
            let mean = ratings.iter().map(|&r| f64::from(r)).sum::<f64>() / ratings.len() as f64;
            Some((mean - 1.0) / 4.0)
        }
    }
}

/// Final reward with `[I, R, C]` as auxiliary rewards.
pub fn final_reward(
    comment: &CommentRecord,
    score: &ScoreBreakdown,
    aux_weights: &[f64; 3],
    cfg: &RewardConfig,
) -> Option<f64> {
    let basic = basic_reward(comment, score, cfg.basic_source)?;
    Some(compose_reward(basic, &[score.i, score.r, score.c], aux_weights).expect("equal lengths"))
}
