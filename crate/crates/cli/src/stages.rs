//! Pipeline stages as plain functions over in-memory data. Subcommands and
//! `run` share them; only the callers touch the file system.

use std::collections::{BTreeMap, BTreeSet};

use hotscore::corpus::{
    filter_comments, filter_videos, retain_joined, CommentRecord, Corpus, FilterReport, SchemaError,
};
use hotscore::evalharness::{
    corpus_bleu, corpus_rouge_l, mean_rank, mean_recall_at_k, mrr, sample_candidates, RankingTask,
};
use hotscore::metrics::{score_comment, score_comments, ScoreBreakdown, VideoContext};
use hotscore::providers::{EntityLinker, Providers};
use hotscore::reward::{
    auxiliary_weights, basic_reward, final_reward, pairwise_accuracy, train_reward_scorer, LinearScorer,
    RankedSequence, ScoreTuple, TrainReport,
};
use hotscore::tot::{run_tot_pipeline, StopReason, ToTTree};
use hotscore::training_math::{
    fuse_features, mean_pool, rl_loss, score_mse, serialize_keyframes, sft_loss, CombineMode, FusionParams,
};
use hotscore::weights::{fit_weight_set, item_alphas, krippendorff_alpha, LabeledComponents, PairReport, WeightSet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Classify, CliError, CliResult};

// ---------------------------------------------------------------------------
// ingest / filter
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub videos: usize,
    pub comments: usize,
    pub malformed: Vec<SchemaError>,
}

impl IngestSummary {
    pub fn of(corpus: &Corpus) -> Self {
        Self {
            videos: corpus.videos.len(),
            comments: corpus.comments.len(),
            malformed: corpus.malformed.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSummary {
    pub comments: FilterReport,
    pub videos: FilterReport,
    /// Comments dropped because their video did not survive.
    pub orphaned_comments: usize,
}

pub fn filter(corpus: Corpus, cfg: &RunConfig) -> CliResult<(Corpus, FilterSummary)> {
    let lexicons = cfg.load_lexicons()?;
    let (comments, comment_report) = filter_comments(corpus.comments, &cfg.filter, &lexicons);
    let (videos, video_report) = filter_videos(corpus.videos, &comments, &cfg.filter);
    let before = comments.len();
    let comments = retain_joined(&videos, comments);
    let summary = FilterSummary {
        comments: comment_report,
        videos: video_report,
        orphaned_comments: before - comments.len(),
    };
    let kept = Corpus {
        videos,
        comments,
        malformed: Vec::new(),
    };
    Ok((kept, summary))
}

// ---------------------------------------------------------------------------
// score
// ---------------------------------------------------------------------------

pub fn score(corpus: &Corpus, providers: &Providers, cfg: &RunConfig) -> CliResult<Vec<ScoreBreakdown>> {
    let params = cfg.load_params()?;
    let weights = cfg.load_weights()?;
    Ok(score_comments(
        &corpus.videos,
        &corpus.comments,
        providers,
        &params,
        &weights,
        cfg.parallelism,
    )?)
}

pub fn scores_jsonl(scores: &[ScoreBreakdown]) -> String {
    scores.iter().map(|s| s.to_json_line() + "\n").collect()
}

// ---------------------------------------------------------------------------
// fit-weights
// ---------------------------------------------------------------------------

/// One labeled row per comment carrying `human_labels`, in corpus order.
pub fn labeled_rows(comments: &[CommentRecord], scores: &[ScoreBreakdown]) -> Vec<LabeledComponents> {
    comments
        .iter()
        .zip(scores)
        .filter_map(|(c, s)| {
            let labels = c.human_labels.clone()?;
            Some(LabeledComponents {
                comment_id: c.comment_id.clone(),
                l_p: s.l_p,
                v_d: s.v_d,
                d_k: s.d_k,
                d_c: s.d_c,
                s_r: s.s_r,
                s_t: s.s_t,
                n_l: c.likes as f64,
                n_r: c.replies as f64,
                i: s.i,
                r: s.r,
                c: s.c,
                u: s.u,
                labels,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementSummary {
    pub rated_items: usize,
    /// Alpha over every rated item; `None` without enough overlap.
    pub alpha: Option<f64>,
    pub threshold: f64,
    pub dropped: Vec<String>,
}

/// Drops labeled rows whose comment's annotator ratings disagree (item alpha
/// below the threshold). Rows whose comment has no ratings are kept.
pub fn agreement_filter(
    rows: Vec<LabeledComponents>,
    comments: &[CommentRecord],
    cfg: &RunConfig,
) -> CliResult<(Vec<LabeledComponents>, AgreementSummary)> {
    let rated: Vec<&CommentRecord> = comments
        .iter()
        .filter(|c| c.human_rating.as_ref().is_some_and(|r| !r.is_empty()))
        .collect();
    let annotators = rated
        .iter()
        .map(|c| c.human_rating.as_ref().map_or(0, Vec::len))
        .max()
        .unwrap_or(0);
    let matrix: Vec<Vec<Option<f64>>> = (0..annotators)
        .map(|a| {
            rated
                .iter()
                .map(|c| c.human_rating.as_ref().and_then(|r| r.get(a)).map(|&v| f64::from(v)))
                .collect()
        })
        .collect();
    let mut summary = AgreementSummary {
        rated_items: rated.len(),
        alpha: None,
        threshold: cfg.agreement_threshold,
        dropped: Vec::new(),
    };
    let Ok(alphas) = item_alphas(&matrix, cfg.alpha_metric) else {
        log::warn!("too few rated comments for agreement filtering; keeping all labeled rows");
        return Ok((rows, summary));
    };
    summary.alpha = krippendorff_alpha(&matrix, cfg.alpha_metric).ok();
    let low: BTreeSet<&str> = rated
        .iter()
        .zip(&alphas)
        .filter(|(_, a)| a.is_none_or(|a| a < cfg.agreement_threshold))
        .map(|(c, _)| c.comment_id.as_str())
        .collect();
    let (kept, dropped): (Vec<_>, Vec<_>) = rows.into_iter().partition(|r| !low.contains(r.comment_id.as_str()));
    summary.dropped = dropped.into_iter().map(|r| r.comment_id).collect();
    Ok((kept, summary))
}

pub fn fit(rows: &[LabeledComponents], cfg: &RunConfig) -> CliResult<(WeightSet, Vec<PairReport>)> {
    let base = cfg.load_weights()?;
    let fitted = fit_weight_set(rows, &base, cfg.fit_top_level, &cfg.logistic).data_err("fitting weights")?;
    let log = fitted.fit_log.clone().unwrap_or_default();
    Ok((fitted, log))
}

// ---------------------------------------------------------------------------
// train-reward and reward composition
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardTraining {
    #[serde(flatten)]
    pub report: TrainReport,
    pub sequences: usize,
    pub pairwise_accuracy: f64,
}

pub fn train(sequences: &[RankedSequence], cfg: &RunConfig) -> CliResult<(LinearScorer, RewardTraining)> {
    let (scorer, report) = train_reward_scorer(sequences, &cfg.reward_train).data_err("training reward scorer")?;
    let training = RewardTraining {
        report,
        sequences: sequences.len(),
        pairwise_accuracy: pairwise_accuracy(&scorer, sequences),
    };
    Ok((scorer, training))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommentReward {
    pub comment_id: String,
    pub basic: Option<f64>,
    #[serde(rename = "final")]
    pub final_reward: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSummary {
    /// Weights of the `I`, `R`, `C` auxiliary rewards.
    pub aux_weights: BTreeMap<String, f64>,
    pub basic_source: hotscore::reward::BasicRewardSource,
    pub rewards: Vec<CommentReward>,
}

pub fn rewards(comments: &[CommentRecord], scores: &[ScoreBreakdown], cfg: &RunConfig) -> RewardSummary {
    let mut per_video: BTreeMap<String, Vec<ScoreTuple>> = BTreeMap::new();
    for (c, s) in comments.iter().zip(scores) {
        per_video
            .entry(c.video_id.clone())
            .or_default()
            .push(ScoreTuple::from(s));
    }
    let w = auxiliary_weights(&per_video);
    RewardSummary {
        aux_weights: ["I", "R", "C"].iter().map(|k| k.to_string()).zip(w).collect(),
        basic_source: cfg.reward.basic_source,
        rewards: comments
            .iter()
            .zip(scores)
            .map(|(c, s)| CommentReward {
                comment_id: c.comment_id.clone(),
                basic: basic_reward(c, s, cfg.reward.basic_source),
                final_reward: final_reward(c, s, &w, &cfg.reward),
            })
            .collect(),
    }
}

// ---------------------------------------------------------------------------
// tot-refine
// ---------------------------------------------------------------------------

/// Output of `tot-refine`.
#[derive(Debug, Clone, Serialize)]
pub struct Refinement {
    pub tree: ToTTree,
    pub refined_comment: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VideoRefinement {
    pub video_id: String,
    pub comment_id: String,
    pub tree: ToTTree,
    pub refined_comment: String,
    pub utilities: [f64; 5],
    pub iterations: usize,
    pub stop: StopReason,
    /// Linked entity ids, first occurrence order.
    pub knowledge_links: Vec<String>,
}

pub fn refine(
    video: &hotscore::corpus::VideoRecord,
    comment: &str,
    providers: &Providers,
    linker: Option<&dyn EntityLinker>,
    cfg: &RunConfig,
) -> CliResult<hotscore::tot::TotOutcome> {
    Ok(run_tot_pipeline(
        video,
        comment,
        linker,
        providers.embedder.as_ref(),
        providers.generator.as_ref(),
        &cfg.tot,
    )?)
}

/// Index of the highest-`F` comment of each video (earliest on ties), in
/// video order.
pub fn best_per_video(corpus: &Corpus, scores: &[ScoreBreakdown]) -> Vec<(usize, usize)> {
    corpus
        .videos
        .iter()
        .enumerate()
        .filter_map(|(vi, v)| {
            corpus
                .comments
                .iter()
                .enumerate()
                .filter(|(_, c)| c.video_id == v.video_id)
                .fold(None, |best: Option<usize>, (ci, _)| match best {
                    Some(b) if scores[b].f >= scores[ci].f => Some(b),
                    _ => Some(ci),
                })
                .map(|ci| (vi, ci))
        })
        .collect()
}

pub fn refine_corpus(
    corpus: &Corpus,
    scores: &[ScoreBreakdown],
    providers: &Providers,
    linker: Option<&dyn EntityLinker>,
    cfg: &RunConfig,
) -> CliResult<Vec<VideoRefinement>> {
    best_per_video(corpus, scores)
        .into_iter()
        .map(|(vi, ci)| {
            let (video, comment) = (&corpus.videos[vi], &corpus.comments[ci]);
            let out = refine(video, &comment.text, providers, linker, cfg)?;
            Ok(VideoRefinement {
                video_id: video.video_id.clone(),
                comment_id: comment.comment_id.clone(),
                tree: out.tree,
                refined_comment: out.refined_comment,
                utilities: out.utilities,
                iterations: out.trace.iterations,
                stop: out.trace.stop,
                knowledge_links: out.enhancement.links.into_iter().fold(Vec::new(), |mut ids, l| {
                    if !ids.contains(&l.entity_id) {
                        ids.push(l.entity_id);
                    }
                    ids
                }),
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

/// One line of an evaluation task file. The ranking part needs
/// `candidates`, `relevant` and `scores`; the generation part `generated`
/// and `references`. Either part may be absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskLine {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevant: Option<BTreeSet<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub references: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    RecallAt(usize),
    MeanRank,
    Mrr,
    Bleu,
    RougeL,
}

impl Metric {
    pub fn parse(name: &str) -> CliResult<Metric> {
        let name = name.trim().to_ascii_lowercase();
        Ok(match name.as_str() {
            "mr" => Metric::MeanRank,
            "mrr" => Metric::Mrr,
            "bleu" => Metric::Bleu,
            "rouge_l" | "rouge-l" => Metric::RougeL,
            _ => match name.strip_prefix("r@").and_then(|k| k.parse().ok()) {
                Some(k) if k > 0 => Metric::RecallAt(k),
                _ => return Err(CliError::config(format!("unknown metric {name:?}"))),
            },
        })
    }

    pub fn name(self) -> String {
        match self {
            Metric::RecallAt(k) => format!("r@{k}"),
            Metric::MeanRank => "mr".into(),
            Metric::Mrr => "mrr".into(),
            Metric::Bleu => "bleu".into(),
            Metric::RougeL => "rouge_l".into(),
        }
    }
}

pub const DEFAULT_METRICS: &str = "r@1,r@5,r@10,mr,mrr,bleu,rouge_l";

pub fn parse_metrics(list: &str) -> CliResult<Vec<Metric>> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(Metric::parse)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ranking_tasks: usize,
    pub generation_tasks: usize,
    /// `null` when no task of the needed kind exists.
    pub metrics: BTreeMap<String, Option<f64>>,
}

pub fn evaluate(lines: &[TaskLine], metrics: &[Metric], max_n: usize) -> CliResult<EvalReport> {
    if lines.is_empty() {
        return Err(CliError::data("no evaluation tasks"));
    }
    let mut ranking = Vec::new();
    let mut generation: Vec<(&str, Vec<&str>)> = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        let label = line.id.clone().unwrap_or_else(|| format!("line {}", i + 1));
        match (&line.candidates, &line.relevant, &line.scores) {
            (Some(candidates), Some(relevant), Some(scores)) => {
                let task = RankingTask {
                    candidates: candidates.clone(),
                    relevant: relevant.clone(),
                    scores: scores.clone(),
                };
                task.validate()
                    .map_err(|m| CliError::data(format!("task {label}: {m}")))?;
                ranking.push(task);
            }
            (None, None, None) => {}
            _ => return Err(CliError::data(format!("task {label}: incomplete ranking fields"))),
        }
        match (&line.generated, &line.references) {
            (Some(g), Some(refs)) if !refs.is_empty() => {
                generation.push((g.as_str(), refs.iter().map(String::as_str).collect()))
            }
            (None, None) => {}
            _ => return Err(CliError::data(format!("task {label}: incomplete generation fields"))),
        }
    }
    let mut out = BTreeMap::new();
    for &m in metrics {
        let value = match m {
            Metric::RecallAt(k) => mean_recall_at_k(&ranking, k).ok(),
            Metric::MeanRank => mean_rank(&ranking).ok(),
            Metric::Mrr => mrr(&ranking).ok(),
            Metric::Bleu => corpus_bleu(&generation, max_n).ok(),
            Metric::RougeL => corpus_rouge_l(&generation).ok(),
        };
        if value.is_none() {
            log::warn!("metric {}: no applicable tasks", m.name());
        }
        out.insert(m.name(), value);
    }
    Ok(EvalReport {
        ranking_tasks: ranking.len(),
        generation_tasks: generation.len(),
        metrics: out,
    })
}

/// Per video: a ranking task whose relevant candidate is the video's most
/// liked comment, hidden among distractors drawn from every other kept
/// comment and all scored in this video's context; and, when the video was
/// refined, a generation task with its other comments as references.
pub fn build_tasks(
    corpus: &Corpus,
    refinements: &[VideoRefinement],
    providers: &Providers,
    cfg: &RunConfig,
) -> CliResult<Vec<TaskLine>> {
    let params = cfg.load_params()?;
    let weights = cfg.load_weights()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let by_id: BTreeMap<&str, &CommentRecord> = corpus.comments.iter().map(|c| (c.comment_id.as_str(), c)).collect();
    let all_ids: Vec<String> = corpus.comments.iter().map(|c| c.comment_id.clone()).collect();
    let mut lines = Vec::new();
    for video in &corpus.videos {
        let own: Vec<&CommentRecord> = corpus
            .comments
            .iter()
            .filter(|c| c.video_id == video.video_id)
            .collect();
        let Some(top) = own.iter().copied().reduce(|a, b| if b.likes > a.likes { b } else { a }) else {
            continue;
        };
        let n = cfg.eval.candidates.min(all_ids.len());
        let (ids, idx) = sample_candidates(&top.comment_id, &all_ids, n, &mut rng).data_err("sampling candidates")?;
        let ctx = VideoContext::build(video, providers)?;
        let mut scores = Vec::with_capacity(ids.len());
        for id in &ids {
            scores.push(score_comment(by_id[id.as_str()], &ctx, providers, &params, &weights)?.f);
        }
        let mut line = TaskLine {
            id: Some(video.video_id.clone()),
            candidates: Some(ids.iter().map(|id| by_id[id.as_str()].text.clone()).collect()),
            relevant: Some([idx].into()),
            scores: Some(scores),
            ..Default::default()
        };
        if let Some(r) = refinements.iter().find(|r| r.video_id == video.video_id) {
            let refs: Vec<String> = own
                .iter()
                .filter(|c| c.comment_id != r.comment_id)
                .map(|c| c.text.clone())
                .collect();
            if !refs.is_empty() {
                line.generated = Some(r.refined_comment.clone());
                line.references = Some(refs);
            }
        }
        lines.push(line);
    }
    Ok(lines)
}

// ---------------------------------------------------------------------------
// explain-losses
// ---------------------------------------------------------------------------

/// Inputs of the loss walk-through. Every field has a small built-in
/// default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossInputs {
    pub keyframes: Vec<Vec<f64>>,
    pub combine: CombineMode,
    /// Projected speech features `S_t`.
    pub speech: Vec<f64>,
    pub l_ce: f64,
    pub predicted_score: f64,
    pub reference_score: f64,
    pub reward: f64,
    pub logp_rl: f64,
    pub logp_sft: f64,
}

impl Default for LossInputs {
    fn default() -> Self {
        Self {
            keyframes: vec![
                vec![0.1, 0.2, 0.3, 0.4],
                vec![0.5, 0.4, 0.3, 0.2],
                vec![0.0, 0.1, 0.0, 0.1],
            ],
            combine: CombineMode::Add,
            speech: vec![0.3, -0.1, 0.2, 0.0],
            l_ce: 1.25,
            predicted_score: 0.75,
            reference_score: 0.5,
            reward: 0.6,
            logp_rl: -1.5,
            logp_sft: -2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossTrace {
    pub params: FusionParams,
    pub inputs: LossInputs,
    pub serialized_keyframes: Vec<Vec<f64>>,
    /// Mean-pooled serialized keyframes.
    pub t_e: Vec<f64>,
    pub fused: Vec<f64>,
    pub l_f: f64,
    pub sft_terms: [f64; 2],
    pub sft_loss: f64,
    pub log_ratio: f64,
    pub rl_terms: [f64; 2],
    pub rl_loss: f64,
}

pub fn explain_losses(inputs: LossInputs, params: &FusionParams) -> CliResult<LossTrace> {
    let serialized = serialize_keyframes(&inputs.keyframes, inputs.combine).data_err("keyframes")?;
    let t_e = mean_pool(&serialized).data_err("pooling keyframes")?;
    let fused = fuse_features(&t_e, &inputs.speech, params).data_err("fusing features")?;
    let l_f = score_mse(inputs.predicted_score, inputs.reference_score);
    let log_ratio = inputs.logp_rl - inputs.logp_sft;
    Ok(LossTrace {
        params: *params,
        serialized_keyframes: serialized,
        t_e,
        fused,
        l_f,
        sft_terms: [params.w1_s * inputs.l_ce, params.w2_s * l_f],
        sft_loss: sft_loss(inputs.l_ce, l_f, params),
        log_ratio,
        rl_terms: [params.w1_rl * inputs.reward, params.w2_rl * -log_ratio],
        rl_loss: rl_loss(inputs.reward, inputs.logp_rl, inputs.logp_sft, params),
        inputs,
    })
}
