//! Ranking metrics (R@k, MR, MRR) and n-gram reference metrics (BLEU,
//! ROUGE-L).
//!
//! Tokenization for BLEU and ROUGE-L is [`crate::text::tokenize`]: one token
//! per CJK character, whitespace-split words elsewhere. Scores depend on
//! this choice. BLEU adds one to numerator and denominator of any n-gram
//! precision whose clipped count is zero, which keeps short comments from
//! collapsing to 0 but is not strict corpus BLEU.

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::tokenize;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no tasks")]
    NoTasks,
    #[error("task {index}: {message}")]
    InvalidTask { index: usize, message: String },
    #[error("no references")]
    NoReferences,
    #[error("distractor pool too small: need {needed}, have {have}")]
    PoolTooSmall { needed: usize, have: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingTask {
    pub candidates: Vec<String>,
    pub relevant: BTreeSet<usize>,
    pub scores: Vec<f64>,
}

impl RankingTask {
    pub fn validate(&self) -> Result<(), String> {
        if self.scores.len() != self.candidates.len() {
            return Err(format!(
                "{} scores for {} candidates",
                self.scores.len(),
                self.candidates.len()
            ));
        }
        if self.relevant.is_empty() {
            return Err("no relevant candidate".into());
        }
        if let Some(&i) = self.relevant.iter().find(|&&i| i >= self.candidates.len()) {
            return Err(format!("relevant index {i} out of range"));
        }
        if self.scores.iter().any(|s| s.is_nan()) {
            return Err("NaN score".into());
        }
        Ok(())
    }

    /// Candidate indices best-first: score descending, ties by index.
    pub fn order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.scores.len()).collect();
        idx.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]).then(a.cmp(&b)));
        idx
    }

    /// 1-based rank of the best-placed relevant candidate.
    pub fn best_rank(&self) -> usize {
        self.order()
            .iter()
            .position(|i| self.relevant.contains(i))
            .map_or(usize::MAX, |p| p + 1)
    }
}

fn check(tasks: &[RankingTask]) -> Result<(), EvalError> {
    if tasks.is_empty() {
        return Err(EvalError::NoTasks);
    }
    for (index, t) in tasks.iter().enumerate() {
        t.validate()
            .map_err(|message| EvalError::InvalidTask { index, message })?;
    }
    Ok(())
}

/// 1 when a relevant candidate is in the top `k`, else 0.
pub fn recall_at_k(task: &RankingTask, k: usize) -> f64 {
    f64::from(u8::from(task.best_rank() <= k))
}

pub fn mean_recall_at_k(tasks: &[RankingTask], k: usize) -> Result<f64, EvalError> {
    check(tasks)?;
    Ok(tasks.iter().map(|t| recall_at_k(t, k)).sum::<f64>() / tasks.len() as f64)
}

pub fn mean_rank(tasks: &[RankingTask]) -> Result<f64, EvalError> {
    check(tasks)?;
    Ok(tasks.iter().map(|t| t.best_rank() as f64).sum::<f64>() / tasks.len() as f64)
}

pub fn mrr(tasks: &[RankingTask]) -> Result<f64, EvalError> {
    check(tasks)?;
    Ok(tasks.iter().map(|t| 1.0 / t.best_rank() as f64).sum::<f64>() / tasks.len() as f64)
}

/// Candidate-set size for sampled ranking tasks.
pub const DEFAULT_CANDIDATES: usize = 100;

/// One relevant text among `n - 1` distractors drawn without replacement
/// from `pool`, shuffled. Returns the candidates and the relevant index.
pub fn sample_candidates<R: Rng>(
    relevant: &str,
    pool: &[String],
    n: usize,
    rng: &mut R,
) -> Result<(Vec<String>, usize), EvalError> {
    let distractors: Vec<&String> = pool.iter().filter(|p| p.as_str() != relevant).collect();
    let needed = n.saturating_sub(1);
    if distractors.len() < needed {
        return Err(EvalError::PoolTooSmall {
            needed,
            have: distractors.len(),
        });
    }
    let mut candidates: Vec<String> = distractors.choose_multiple(rng, needed).map(|s| (*s).clone()).collect();
    candidates.push(relevant.to_string());
    candidates.shuffle(rng);
    let idx = candidates
        .iter()
        .position(|c| c == relevant)
        .expect("relevant was inserted");
    Ok((candidates, idx))
}

// ---------------------------------------------------------------------------
// BLEU
// ---------------------------------------------------------------------------

pub const DEFAULT_MAX_N: usize = 4;

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut out = HashMap::new();
    if n == 0 || tokens.len() < n {
        return out;
    }
    for w in tokens.windows(n) {
        *out.entry(w).or_insert(0) += 1;
    }
    out
}

/// Clipped matches and total candidate n-grams of order `n`.
fn clipped(cand: &[String], refs: &[Vec<String>], n: usize) -> (usize, usize) {
    let counts = ngram_counts(cand, n);
    let ref_counts: Vec<_> = refs.iter().map(|r| ngram_counts(r, n)).collect();
    let matched = counts
        .iter()
        .map(|(g, &c)| {
            let max_ref = ref_counts
                .iter()
                .map(|rc| rc.get(g).copied().unwrap_or(0))
                .max()
                .unwrap_or(0);
            c.min(max_ref)
        })
        .sum();
    (matched, cand.len().saturating_sub(n - 1))
}

/// Reference length closest to `c`; ties go to the shorter one.
fn closest_ref_len(c: usize, refs: &[Vec<String>]) -> usize {
    refs.iter()
        .map(Vec::len)
        .min_by_key(|&r| (r.abs_diff(c), r))
        .unwrap_or(0)
}

#[derive(Debug, Clone, Default, PartialEq)]
struct BleuStats {
    matched: Vec<usize>,
    total: Vec<usize>,
    cand_len: usize,
    ref_len: usize,
}

impl BleuStats {
    fn new(candidate: &str, references: &[&str], max_n: usize) -> Self {
        let cand = tokenize(candidate);
        let refs: Vec<Vec<String>> = references.iter().map(|r| tokenize(r)).collect();
        let (matched, total) = (1..=max_n).map(|n| clipped(&cand, &refs, n)).unzip();
        Self {
            matched,
            total,
            cand_len: cand.len(),
            ref_len: closest_ref_len(cand.len(), &refs),
        }
    }

    fn add(&mut self, other: &Self) {
        if self.matched.is_empty() {
            *self = other.clone();
            return;
        }
        for n in 0..self.matched.len() {
            self.matched[n] += other.matched[n];
            self.total[n] += other.total[n];
        }
        self.cand_len += other.cand_len;
        self.ref_len += other.ref_len;
    }

    /// Geometric mean of the precisions over orders with at least one
    /// candidate n-gram, times the brevity penalty.
    fn score(&self) -> f64 {
        if self.cand_len == 0 {
            return 0.0;
        }
        let mut log_sum = 0.0;
        let mut orders = 0usize;
        for (&m, &t) in self.matched.iter().zip(&self.total) {
            if t == 0 {
                continue;
            }
            let p = if m == 0 {
                1.0 / (t as f64 + 1.0)
            } else {
                m as f64 / t as f64
            };
            log_sum += p.ln();
            orders += 1;
        }
        if orders == 0 {
            return 0.0;
        }
        let (c, r) = (self.cand_len as f64, self.ref_len as f64);
        let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
        bp * (log_sum / orders as f64).exp()
    }
}

/// Sentence BLEU against one or more references.
pub fn bleu(candidate: &str, references: &[&str], max_n: usize) -> Result<f64, EvalError> {
    if references.is_empty() {
        return Err(EvalError::NoReferences);
    }
    Ok(BleuStats::new(candidate, references, max_n).score())
}

/// Corpus BLEU: n-gram counts and lengths summed over all segments first.
pub fn corpus_bleu(segments: &[(&str, Vec<&str>)], max_n: usize) -> Result<f64, EvalError> {
    if segments.is_empty() {
        return Err(EvalError::NoTasks);
    }
    let mut total = BleuStats::default();
    for (cand, refs) in segments {
        if refs.is_empty() {
            return Err(EvalError::NoReferences);
        }
        total.add(&BleuStats::new(cand, refs, max_n));
    }
    Ok(total.score())
}

// ---------------------------------------------------------------------------
// ROUGE-L
// ---------------------------------------------------------------------------

pub const ROUGE_BETA: f64 = 1.2;

/// Longest common subsequence length.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS-based F-measure with `beta = 1.2`; 0 when either side is empty.
pub fn rouge_l(candidate: &str, reference: &str) -> f64 {
    let (c, r) = (tokenize(candidate), tokenize(reference));
    let lcs = lcs_len(&c, &r);
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / c.len() as f64;
    let rec = lcs as f64 / r.len() as f64;
    let b2 = ROUGE_BETA * ROUGE_BETA;
    (1.0 + b2) * p * rec / (rec + b2 * p)
}

/// Best ROUGE-L over several references.
pub fn rouge_l_multi(candidate: &str, references: &[&str]) -> Result<f64, EvalError> {
    if references.is_empty() {
        return Err(EvalError::NoReferences);
    }
    Ok(references.iter().map(|r| rouge_l(candidate, r)).fold(0.0, f64::max))
}

/// Mean multi-reference ROUGE-L over segments.
pub fn corpus_rouge_l(segments: &[(&str, Vec<&str>)]) -> Result<f64, EvalError> {
    if segments.is_empty() {
        return Err(EvalError::NoTasks);
    }
    let mut sum = 0.0;
    for (cand, refs) in segments {
        sum += rouge_l_multi(cand, refs)?;
    }
    Ok(sum / segments.len() as f64)
}
