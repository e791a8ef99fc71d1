//! Per-comment score components and the comprehensive score `F`.
//!
//! ```text
//! I = w1_I * L_p + w2_I * V_d
//! R = w1_R * D_k + w2_R * D_c
//! C = w1_C * sigmoid(k_r (x_r - b_r)) + w2_C * sigmoid(k_t (x_t - b_t))
//! U = sigmoid(k_u (w1_U * N_l + w2_U * N_r - b_u))
//! F = w_I * I + w_R * R + w_C * C + w_U * U
//! ```
//!
//! Known quirks, implemented literally:
//!
//! - With `k = 1, b = -1` a zero count gives `sigmoid(1) ~= 0.731`, not a
//!   score near 0.1. Both parameters are configurable.
//! - `V_d` is total over unique bigrams, which grows with repetition.
//!   [`DiversityMode::UniqueOverTotal`] inverts it on request.
//! - `L_p` jumps at `L_min` (from `L/L_min -> 1` to `L_min/L_max`). The long
//!   branch is clamped at 0.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CommentRecord, VideoRecord};
use crate::providers::{cosine, KeywordSet, ProviderError, Providers};
use crate::weights::WeightSet;
use crate::{sigmoid, text};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("zero vector in cosine similarity")]
    ZeroVector,
    #[error("vector dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("invalid metric parameters: {0}")]
    InvalidParams(String),
    #[error("video {0} has no caption, description or title to embed")]
    EmptyVideoText(String),
    #[error("comment {0} has no text")]
    EmptyComment(String),
    #[error("comment {0} refers to unknown video {1}")]
    UnknownVideo(String, String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiversityMode {
    /// `T_n / U_n`, as defined.
    #[default]
    TotalOverUnique,
    /// `U_n / T_n`.
    UniqueOverTotal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricParams {
    #[serde(rename = "L_min")]
    pub l_min: u32,
    #[serde(rename = "L_max")]
    pub l_max: u32,
    /// Penalty per character beyond `L_max`.
    pub alpha_len: f64,
    pub k_r: f64,
    pub k_t: f64,
    pub k_u: f64,
    pub b_r: f64,
    pub b_t: f64,
    pub b_u: f64,
    pub diversity_mode: DiversityMode,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self {
            l_min: 1,
            l_max: 50,
            alpha_len: 0.05,
            k_r: 1.0,
            k_t: 1.0,
            k_u: 1.0,
            b_r: -1.0,
            b_t: -1.0,
            b_u: -1.0,
            diversity_mode: DiversityMode::TotalOverUnique,
        }
    }
}

impl MetricParams {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.l_min == 0 || self.l_max == 0 {
            return Err(MetricsError::InvalidParams("L_min and L_max must be positive".into()));
        }
        if self.l_min > self.l_max {
            return Err(MetricsError::InvalidParams("L_min must not exceed L_max".into()));
        }
        if !(self.alpha_len > 0.0 && self.alpha_len < 1.0) {
            return Err(MetricsError::InvalidParams("alpha_len must lie in (0, 1)".into()));
        }
        let reals = [self.k_r, self.k_t, self.k_u, self.b_r, self.b_t, self.b_u];
        if reals.iter().any(|v| !v.is_finite()) {
            return Err(MetricsError::InvalidParams("sigmoid parameters must be finite".into()));
        }
        Ok(())
    }
}

/// All score components of one comment. Field order is the serialization
/// order.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    #[serde(rename = "L_p")]
    pub l_p: f64,
    #[serde(rename = "V_d")]
    pub v_d: f64,
    #[serde(rename = "I")]
    pub i: f64,
    #[serde(rename = "D_k")]
    pub d_k: f64,
    #[serde(rename = "D_c")]
    pub d_c: f64,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "S_r")]
    pub s_r: f64,
    #[serde(rename = "S_t")]
    pub s_t: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "U_raw")]
    pub u_raw: f64,
    #[serde(rename = "U")]
    pub u: f64,
    #[serde(rename = "F")]
    pub f: f64,
}

impl ScoreBreakdown {
    pub const FIELDS: [&'static str; 12] = [
        "L_p", "V_d", "I", "D_k", "D_c", "R", "S_r", "S_t", "C", "U_raw", "U", "F",
    ];

    pub fn values(&self) -> [f64; 12] {
        [
            self.l_p, self.v_d, self.i, self.d_k, self.d_c, self.r, self.s_r, self.s_t, self.c, self.u_raw, self.u,
            self.f,
        ]
    }

    /// One JSON object with the fields in [`Self::FIELDS`] order, each value
    /// rounded to 9 significant digits.
    pub fn to_json_line(&self) -> String {
        let mut out = String::from("{");
        for (i, (name, v)) in Self::FIELDS.iter().zip(self.values()).enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "\"{name}\":{}", format_sig9(v));
        }
        out.push('}');
        out
    }
}

/// `x` rounded to 9 significant digits, printed as a plain JSON number
/// (`null` when not finite).
pub fn format_sig9(x: f64) -> String {
    if !x.is_finite() {
        return "null".to_string();
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("round trip");
    if rounded == 0.0 {
        return "0".to_string();
    }
    format!("{rounded}")
}

/// Length penalty `L_p` for a comment of `len` characters, clamped to
/// `[0, 1]`.
pub fn length_penalty(len: usize, params: &MetricParams) -> f64 {
    let l = len as f64;
    let (lo, hi) = (f64::from(params.l_min), f64::from(params.l_max));
    let raw = if l < lo {
        l / lo
    } else if l <= hi {
        l / hi
    } else {
        1.0 - params.alpha_len * (l - hi)
    };
    raw.clamp(0.0, 1.0)
}

/// Total and unique character bigrams of the trimmed text.
pub fn bigram_counts(comment: &str) -> (usize, usize) {
    let chars: Vec<char> = comment.trim().chars().collect();
    let total = chars.len().saturating_sub(1);
    let unique: HashSet<(char, char)> = chars.windows(2).map(|w| (w[0], w[1])).collect();
    (total, unique.len())
}

/// Vocabulary diversity `V_d`; 0 when the comment has no bigrams.
pub fn vocab_diversity(comment: &str, mode: DiversityMode) -> f64 {
    let (total, unique) = bigram_counts(comment);
    if total == 0 {
        return 0.0;
    }
    match mode {
        DiversityMode::TotalOverUnique => total as f64 / unique as f64,
        DiversityMode::UniqueOverTotal => unique as f64 / total as f64,
    }
}

pub fn informativeness(l_p: f64, v_d: f64, w: &WeightSet) -> f64 {
    w.w1_i * l_p + w.w2_i * v_d
}

/// Keyword matching degree `D_k = N_x / N_k`: share of keywords contained
/// in the comment (NFC, ASCII case-insensitive). 0 for an empty set.
pub fn keyword_match(comment: &str, keywords: &KeywordSet) -> f64 {
    if keywords.is_empty() {
        return 0.0;
    }
    let normalized = text::normalize(comment);
    let hits = keywords
        .keywords()
        .iter()
        .filter(|k| normalized.contains(k.as_str()))
        .count();
    hits as f64 / keywords.len() as f64
}

/// Context matching degree `D_c`: cosine similarity, not rescaled.
pub fn context_match(comment_vec: &[f64], video_vec: &[f64]) -> Result<f64, MetricsError> {
    if comment_vec.len() != video_vec.len() {
        return Err(MetricsError::DimensionMismatch(comment_vec.len(), video_vec.len()));
    }
    cosine(comment_vec, video_vec).ok_or(MetricsError::ZeroVector)
}

pub fn relevance(d_k: f64, d_c: f64, w: &WeightSet) -> f64 {
    w.w1_r * d_k + w.w2_r * d_c
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Creativity {
    pub s_r: f64,
    pub s_t: f64,
    pub c: f64,
}

pub fn creativity(x_r: f64, x_t: f64, params: &MetricParams, w: &WeightSet) -> Creativity {
    let s_r = sigmoid(params.k_r * (x_r - params.b_r));
    let s_t = sigmoid(params.k_t * (x_t - params.b_t));
    Creativity {
        s_r,
        s_t,
        c: w.w1_c * s_r + w.w2_c * s_t,
    }
}

/// Returns `(U', U)`.
pub fn engagement(likes: f64, replies: f64, params: &MetricParams, w: &WeightSet) -> (f64, f64) {
    let raw = w.w1_u * likes + w.w2_u * replies;
    (raw, sigmoid(params.k_u * (raw - params.b_u)))
}

pub fn comprehensive_score(i: f64, r: f64, c: f64, u: f64, w: &WeightSet) -> f64 {
    w.w_i * i + w.w_r * r + w.w_c * c + w.w_u * u
}

/// Per-video inputs shared by all of its comments.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoContext {
    pub keywords: KeywordSet,
    pub embedding: Vec<f64>,
}

impl VideoContext {
    /// Keywords come from the caption (empty set when there is none); the
    /// embedding from the caption, else the description, else the title.
    pub fn build(video: &VideoRecord, providers: &Providers) -> Result<Self, MetricsError> {
        let keywords = if video.caption_text.trim().is_empty() {
            KeywordSet::empty()
        } else {
            providers.keywords.extract(&video.caption_text)?
        };
        let source = [&video.caption_text, &video.description, &video.title]
            .into_iter()
            .find(|t| !t.trim().is_empty())
            .ok_or_else(|| MetricsError::EmptyVideoText(video.video_id.clone()))?;
        Ok(Self {
            keywords,
            embedding: providers.embedder.embed(source)?,
        })
    }
}

/// Every component for one comment, given its video's context.
pub fn score_comment(
    comment: &CommentRecord,
    video: &VideoContext,
    providers: &Providers,
    params: &MetricParams,
    w: &WeightSet,
) -> Result<ScoreBreakdown, MetricsError> {
    if comment.text.trim().is_empty() {
        return Err(MetricsError::EmptyComment(comment.comment_id.clone()));
    }
    let l_p = length_penalty(text::char_len(&comment.text), params);
    let v_d = vocab_diversity(&comment.text, params.diversity_mode);
    let i = informativeness(l_p, v_d, w);

    let d_k = keyword_match(&comment.text, &video.keywords);
    let d_c = context_match(&providers.embedder.embed(&comment.text)?, &video.embedding)?;
    let r = relevance(d_k, d_c, w);

    let x_r = providers.rhetoric.count(&comment.text);
    let x_t = providers.trending.count(&comment.text);
    let cr = creativity(f64::from(x_r), f64::from(x_t), params, w);

    let (u_raw, u) = engagement(comment.likes as f64, comment.replies as f64, params, w);
    let f = comprehensive_score(i, r, cr.c, u, w);
    Ok(ScoreBreakdown {
        l_p,
        v_d,
        i,
        d_k,
        d_c,
        r,
        s_r: cr.s_r,
        s_t: cr.s_t,
        c: cr.c,
        u_raw,
        u,
        f,
    })
}

/// Scores every comment, in input order. Video contexts are built once per
/// referenced video; comments are scored on up to `parallelism` threads.
pub fn score_comments(
    videos: &[VideoRecord],
    comments: &[CommentRecord],
    providers: &Providers,
    params: &MetricParams,
    w: &WeightSet,
    parallelism: usize,
) -> Result<Vec<ScoreBreakdown>, MetricsError> {
    params.validate()?;
    let by_id: BTreeMap<&str, &VideoRecord> = videos.iter().map(|v| (v.video_id.as_str(), v)).collect();
    let mut contexts: BTreeMap<&str, VideoContext> = BTreeMap::new();
    for c in comments {
        if contexts.contains_key(c.video_id.as_str()) {
            continue;
        }
        let video = by_id
            .get(c.video_id.as_str())
            .ok_or_else(|| MetricsError::UnknownVideo(c.comment_id.clone(), c.video_id.clone()))?;
        contexts.insert(c.video_id.as_str(), VideoContext::build(video, providers)?);
    }
    let score = |c: &CommentRecord| score_comment(c, &contexts[c.video_id.as_str()], providers, params, w);

    let threads = parallelism.max(1);
    if threads == 1 || comments.len() < 2 * threads {
        return comments.iter().map(score).collect();
    }
    let chunk = comments.len().div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = comments
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(score).collect::<Result<Vec<_>, _>>()))
            .collect();
        let mut out = Vec::with_capacity(comments.len());
        for h in handles {
            out.extend(h.join().expect("scoring thread panicked")?);
        }
        Ok(out)
    })
}
