//! Browser bindings for the demo page in `www/`. Every export returns plain
//! numbers or JSON strings so the page needs no glue beyond `JSON.parse`.

use hotscore::corpus::{CommentRecord, VideoRecord};
use hotscore::metrics::{length_penalty, score_comment, MetricParams, VideoContext};
use hotscore::providers::Providers;
use hotscore::sigmoid;
use hotscore::tot::{optimize_tot_weights, Direction, Origin, ToTTree, TotOptimizerConfig};
use hotscore::weights::WeightSet;
use wasm_bindgen::prelude::*;

fn video(title: &str, caption: &str) -> VideoRecord {
    VideoRecord {
        video_id: "demo".into(),
        title: title.into(),
        description: String::new(),
        caption_text: caption.into(),
        audio_text: String::new(),
        theme: "unknown".into(),
        duration_s: 0.0,
        keyframe_count: 0,
        likes: 0,
        comments_count: 1,
        favorites: 0,
        shares: 0,
        created_at: String::new(),
    }
}

/// Scores one comment under the default weights and offline providers.
/// Returns the score line: twelve fields, 9 significant digits.
#[wasm_bindgen]
pub fn score(title: &str, caption: &str, comment: &str, likes: u32, replies: u32) -> Result<String, String> {
    if comment.trim().is_empty() {
        return Err("comment is empty".into());
    }
    let providers = Providers::offline();
    let ctx = VideoContext::build(&video(title, caption), &providers).map_err(|e| e.to_string())?;
    let record = CommentRecord {
        comment_id: "demo".into(),
        video_id: "demo".into(),
        text: comment.into(),
        likes: likes.into(),
        replies: replies.into(),
        human_labels: None,
        human_rating: None,
    };
    score_comment(
        &record,
        &ctx,
        &providers,
        &MetricParams::default(),
        &WeightSet::default(),
    )
    .map(|s| s.to_json_line())
    .map_err(|e| e.to_string())
}

/// `L_p` for lengths `0..=max_len`.
#[wasm_bindgen]
pub fn length_penalty_curve(l_min: u32, l_max: u32, alpha: f64, max_len: usize) -> Result<Vec<f64>, String> {
    let params = MetricParams {
        l_min,
        l_max,
        alpha_len: alpha,
        ..MetricParams::default()
    };
    params.validate().map_err(|e| e.to_string())?;
    Ok((0..=max_len).map(|n| length_penalty(n, &params)).collect())
}

/// `σ(k(x - b))` for counts `0..=max_count`.
#[wasm_bindgen]
pub fn sigmoid_curve(k: f64, b: f64, max_count: u32) -> Vec<f64> {
    (0..=max_count).map(|x| sigmoid(k * (f64::from(x) - b))).collect()
}

/// Weight history of the five thought nodes, all starting at `w0`, under
/// per-dimension gradients `f` (JSON array of five numbers).
/// Returns `{"iterations", "stop", "history"}`.
#[wasm_bindgen]
pub fn tot_trajectory(w0: f64, lr: f64, f_json: &str, ascent: bool, max_iters: usize) -> Result<String, String> {
    let f: [f64; 5] = serde_json::from_str(f_json).map_err(|e| format!("gradients: {e}"))?;
    if !(0.0..=1.0).contains(&w0) {
        return Err("initial weight must lie in [0, 1]".into());
    }
    let mut tree = ToTTree::new(Default::default(), Origin::Merged);
    tree.set_weights([w0; 5]);
    let cfg = TotOptimizerConfig {
        learning_rate: lr,
        max_iters,
        direction: if ascent {
            Direction::Ascent
        } else {
            Direction::DescentAsWritten
        },
    };
    let (_, trace) = optimize_tot_weights(&tree, &f, &cfg).map_err(|e| e.to_string())?;
    serde_json::to_string(&trace).map_err(|e| e.to_string())
}
