//! Hot-comment scoring toolkit.
//!
//! The crate is organised around the stages of a video hot-comment pipeline:
//!
//! - [`corpus`]: JSONL ingestion, rule-based comment/video filtering and
//!   descriptive statistics.
//! - [`providers`]: pluggable keyword, embedding, marker-counting, entity
//!   linking and text generation backends with deterministic offline defaults.
//! - [`metrics`]: informativeness, relevance, creativity, engagement and the
//!   comprehensive score `F`.
//! - [`weights`]: the weight set, logistic fitting against binary labels, AUC
//!   and Krippendorff's alpha.
//! - [`reward`]: pairwise ranking loss, a linear reward scorer, correlation
//!   derived auxiliary weights and reward composition.
//! - [`training_math`]: keyframe serialization, feature fusion and the SFT/RL
//!   loss compositions.
//! - [`tot`]: the five-node tree-of-thought refinement with knowledge
//!   enhancement and weight optimization.
//! - [`evalharness`]: R@k, MR, MRR, BLEU and ROUGE-L.

pub mod corpus;
pub mod evalharness;
pub mod metrics;
pub mod providers;
pub mod reward;
pub mod stats;
pub mod text;
pub mod tot;
pub mod training_math;
pub mod weights;

/// Logistic function, evaluated without overflow for large `|x|`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_matches_naive_form() {
        for &x in &[-30.0f64, -2.5, -1.0, 0.0, 0.5, 1.0, 7.0, 30.0] {
            let naive = 1.0 / (1.0 + (-x).exp());
            assert!((sigmoid(x) - naive).abs() < 1e-15, "x = {x}");
        }
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!(sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn softplus_matches_naive_form() {
        for &x in &[-20.0f64, -1.0, 0.0, 1.0, 20.0] {
            let naive = (1.0 + x.exp()).ln();
            assert!((softplus(x) - naive).abs() < 1e-12);
        }
        assert!((softplus(800.0) - 800.0).abs() < 1e-9);
    }
}
