//! Fusion and loss-composition algebra for the training stages, on plain
//! vectors.
//!
//! Sign convention for [`rl_loss`]: the reward enters positively and the
//! policy log-ratio enters negated, so *ascending* `L_RL` raises reward and
//! pulls the RL policy back toward the SFT policy. The log-ratio is the
//! per-sample `logp_rl - logp_sft`, not a full KL expectation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TrainingMathError {
    #[error("no frames")]
    NoFrames,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("projection matrix has ragged rows")]
    RaggedProjection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionParams {
    pub alpha: f64,
    pub beta: f64,
    #[serde(rename = "w1_S")]
    pub w1_s: f64,
    #[serde(rename = "w2_S")]
    pub w2_s: f64,
    #[serde(rename = "w1_RL")]
    pub w1_rl: f64,
    #[serde(rename = "w2_RL")]
    pub w2_rl: f64,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.5,
            w1_s: 0.8,
            w2_s: 0.2,
            w1_rl: 0.3,
            w2_rl: 0.7,
        }
    }
}

impl FusionParams {
    pub fn validate(&self) -> Result<(), TrainingMathError> {
        let all = [self.alpha, self.beta, self.w1_s, self.w2_s, self.w1_rl, self.w2_rl];
        if all.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(TrainingMathError::NonFinite("fusion params"))
        }
    }
}

/// Standard transformer sinusoidal embedding for position `pos`:
/// `sin(pos / 10000^(2i/d))` on even indices, `cos` on odd ones.
pub fn positional_embedding(pos: usize, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|j| {
            let pair = (j / 2 * 2) as f64;
            let angle = pos as f64 / 10_000f64.powf(pair / dim as f64);
            if j % 2 == 0 {
                angle.sin()
            } else {
                angle.cos()
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombineMode {
    /// `F_k + P_k` element-wise.
    #[default]
    Add,
    /// `[F_k ; P_k]`, doubling the dimension.
    Concat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyframeSequence {
    pub frames: Vec<Vec<f64>>,
    pub positions: Vec<Vec<f64>>,
}

impl KeyframeSequence {
    /// Pairs frames with sinusoidal positions of the same dimension.
    pub fn new(frames: Vec<Vec<f64>>) -> Result<Self, TrainingMathError> {
        let dim = uniform_dim(&frames)?;
        let positions = (0..frames.len()).map(|k| positional_embedding(k, dim)).collect();
        Ok(Self { frames, positions })
    }

    pub fn combine(&self, mode: CombineMode) -> Vec<Vec<f64>> {
        self.frames
            .iter()
            .zip(&self.positions)
            .map(|(f, p)| match mode {
                CombineMode::Add => f.iter().zip(p).map(|(a, b)| a + b).collect(),
                CombineMode::Concat => f.iter().chain(p).copied().collect(),
            })
            .collect()
    }
}

fn uniform_dim(frames: &[Vec<f64>]) -> Result<usize, TrainingMathError> {
    let dim = frames.first().ok_or(TrainingMathError::NoFrames)?.len();
    for f in frames {
        if f.len() != dim {
            return Err(TrainingMathError::DimensionMismatch {
                expected: dim,
                got: f.len(),
            });
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(TrainingMathError::NonFinite("frame"));
        }
    }
    Ok(dim)
}

/// Keyframes with positional information, in order.
pub fn serialize_keyframes(frames: &[Vec<f64>], mode: CombineMode) -> Result<Vec<Vec<f64>>, TrainingMathError> {
    Ok(KeyframeSequence::new(frames.to_vec())?.combine(mode))
}

/// Stored linear map standing in for the fully connected projection of the
/// serialized video features into the text embedding space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProjection {
    /// Row-major, `out_dim x in_dim`.
    pub matrix: Vec<Vec<f64>>,
}

impl LinearProjection {
    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: (0..dim)
                .map(|i| (0..dim).map(|j| f64::from(u8::from(i == j))).collect())
                .collect(),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.matrix.first().map_or(0, Vec::len)
    }

    pub fn out_dim(&self) -> usize {
        self.matrix.len()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, TrainingMathError> {
        let n = self.in_dim();
        if self.matrix.iter().any(|r| r.len() != n) {
            return Err(TrainingMathError::RaggedProjection);
        }
        if x.len() != n {
            return Err(TrainingMathError::DimensionMismatch {
                expected: n,
                got: x.len(),
            });
        }
        Ok(self
            .matrix
            .iter()
            .map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }
}

/// Pools a serialized sequence into one vector (mean over frames).
pub fn mean_pool(seq: &[Vec<f64>]) -> Result<Vec<f64>, TrainingMathError> {
    let dim = uniform_dim(seq)?;
    let n = seq.len() as f64;
    Ok((0..dim).map(|j| seq.iter().map(|f| f[j]).sum::<f64>() / n).collect())
}

/// `E_m = alpha * T_e + beta * S_t`, with `S_t` already projected.
pub fn fuse_features(t_e: &[f64], s_t: &[f64], params: &FusionParams) -> Result<Vec<f64>, TrainingMathError> {
    if t_e.len() != s_t.len() {
        return Err(TrainingMathError::DimensionMismatch {
            expected: t_e.len(),
            got: s_t.len(),
        });
    }
    Ok(t_e
        .iter()
        .zip(s_t)
        .map(|(t, s)| params.alpha * t + params.beta * s)
        .collect())
}

/// Squared difference between predicted and reference comprehensive scores.
pub fn score_mse(predicted: f64, reference: f64) -> f64 {
    (predicted - reference).powi(2)
}

/// `w1_S * L_CE + w2_S * L_F`.
pub fn sft_loss(l_ce: f64, l_f: f64, params: &FusionParams) -> f64 {
    params.w1_s * l_ce + params.w2_s * l_f
}

/// `w1_RL * reward + w2_RL * -(logp_rl - logp_sft)`.
pub fn rl_loss(reward: f64, logp_rl: f64, logp_sft: f64, params: &FusionParams) -> f64 {
    params.w1_rl * reward + params.w2_rl * -(logp_rl - logp_sft)
}
