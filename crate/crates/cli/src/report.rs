//! Run summary rebuilt from the artifacts of a pipeline directory. Missing
//! artifacts leave their section `null`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use hotscore::corpus::{corpus_stats, parse_corpus, StatsTable};
use hotscore::metrics::ScoreBreakdown;
use hotscore::stats::mean;
use hotscore::weights::{PairReport, WeightSet};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::artifacts as a;
use crate::config::{read_json, read_jsonl};
use crate::error::{Classify, CliResult};
use crate::stages::{AgreementSummary, EvalReport, FilterSummary, IngestSummary, RewardSummary, RewardTraining};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub videos_in: usize,
    pub comments_in: usize,
    pub malformed_lines: usize,
    pub videos_kept: usize,
    pub comments_kept: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreAggregates {
    pub count: usize,
    /// Mean of each score field; empty when there are no scores.
    pub mean: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsSection {
    pub weights: WeightSet,
    pub fits: Vec<PairReport>,
    pub agreement: Option<AgreementSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSection {
    pub aux_weights: BTreeMap<String, f64>,
    pub rewarded_comments: usize,
    pub mean_final_reward: Option<f64>,
    pub training: Option<RewardTraining>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TotSection {
    pub refined: usize,
    pub mean_iterations: Option<f64>,
    pub knowledge_links: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub counts: Counts,
    pub filter: Option<FilterSummary>,
    pub stats: Option<StatsTable>,
    pub scores: Option<ScoreAggregates>,
    pub weights: Option<WeightsSection>,
    pub reward: Option<RewardSection>,
    pub tot: Option<TotSection>,
    pub evaluation: Option<EvalReport>,
}

fn optional<T: DeserializeOwned>(dir: &Path, name: &str) -> CliResult<Option<T>> {
    let p = dir.join(name);
    if p.exists() {
        read_json(&p).map(Some)
    } else {
        Ok(None)
    }
}

fn optional_lines<T: DeserializeOwned>(dir: &Path, name: &str) -> CliResult<Option<Vec<T>>> {
    let p = dir.join(name);
    if p.exists() {
        read_jsonl(&p).map(Some)
    } else {
        Ok(None)
    }
}

/// Just the fields the report needs from a `tot.jsonl` line.
#[derive(Deserialize)]
struct TotLine {
    iterations: usize,
    knowledge_links: Vec<String>,
}

pub fn aggregate_scores(scores: &[ScoreBreakdown]) -> ScoreAggregates {
    let mut means = BTreeMap::new();
    if !scores.is_empty() {
        for (j, name) in ScoreBreakdown::FIELDS.iter().enumerate() {
            let col: Vec<f64> = scores.iter().map(|s| s.values()[j]).collect();
            means.insert(name.to_string(), mean(&col).expect("non-empty"));
        }
    }
    ScoreAggregates {
        count: scores.len(),
        mean: means,
    }
}

pub fn build(dir: &Path) -> CliResult<Report> {
    let ingest: Option<IngestSummary> = optional(dir, a::INGEST_REPORT)?;
    let filtered_path = dir.join(a::FILTERED);
    let filtered = if filtered_path.exists() {
        Some(
            parse_corpus(&filtered_path)
                .data_err("reading filtered corpus")?
                .strict()
                .data_err("filtered corpus")?,
        )
    } else {
        None
    };
    let counts = Counts {
        videos_in: ingest.as_ref().map_or(0, |i| i.videos),
        comments_in: ingest.as_ref().map_or(0, |i| i.comments),
        malformed_lines: ingest.as_ref().map_or(0, |i| i.malformed.len()),
        videos_kept: filtered.as_ref().map_or(0, |c| c.videos.len()),
        comments_kept: filtered.as_ref().map_or(0, |c| c.comments.len()),
    };
    let stats = match &filtered {
        Some(c) if !c.videos.is_empty() => Some(corpus_stats(&c.videos, &c.comments).data_err("statistics")?),
        _ => None,
    };
    let scores = optional_lines::<ScoreBreakdown>(dir, a::SCORES)?.map(|s| aggregate_scores(&s));
    let weights = match optional::<WeightSet>(dir, a::WEIGHTS)? {
        Some(w) => Some(WeightsSection {
            weights: w,
            fits: optional(dir, a::FIT_LOG)?.unwrap_or_default(),
            agreement: optional(dir, a::AGREEMENT)?,
        }),
        None => None,
    };
    let reward = match optional::<RewardSummary>(dir, a::REWARDS)? {
        Some(r) => {
            let finals: Vec<f64> = r.rewards.iter().filter_map(|c| c.final_reward).collect();
            Some(RewardSection {
                aux_weights: r.aux_weights,
                rewarded_comments: finals.len(),
                mean_final_reward: mean(&finals),
                training: optional(dir, a::REWARD_TRAIN)?,
            })
        }
        None => None,
    };
    let tot = optional_lines::<TotLine>(dir, a::TOT)?.map(|lines| {
        let iters: Vec<f64> = lines.iter().map(|l| l.iterations as f64).collect();
        TotSection {
            refined: lines.len(),
            mean_iterations: mean(&iters),
            knowledge_links: lines.iter().map(|l| l.knowledge_links.len()).sum(),
        }
    });
    Ok(Report {
        counts,
        filter: optional(dir, a::FILTER_REPORT)?,
        stats,
        scores,
        weights,
        reward,
        tot,
        evaluation: optional(dir, a::EVAL)?,
    })
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

/// The statistics table followed by a few run totals.
pub fn render_text(report: &Report) -> String {
    let mut out = String::new();
    match &report.stats {
        Some(s) => out.push_str(&s.render_text()),
        None => out.push_str("No videos survived filtering; statistics table is empty.\n"),
    }
    let c = &report.counts;
    let _ = writeln!(out);
    let _ = writeln!(out, "videos: {} in, {} kept", c.videos_in, c.videos_kept);
    let _ = writeln!(out, "comments: {} in, {} kept", c.comments_in, c.comments_kept);
    if c.malformed_lines > 0 {
        let _ = writeln!(out, "malformed lines: {}", c.malformed_lines);
    }
    if let Some(f) = &report.filter {
        for (rule, n) in &f.comments.rejected {
            let _ = writeln!(out, "rejected by {rule}: {n}");
        }
        for (rule, n) in &f.videos.rejected {
            let _ = writeln!(out, "videos rejected by {rule}: {n}");
        }
    }
    if let Some(s) = &report.scores {
        if let Some(f) = s.mean.get("F") {
            let _ = writeln!(out, "mean F: {f:.4}");
        }
    }
    if let Some(r) = &report.reward {
        let w = |k: &str| r.aux_weights.get(k).copied();
        let _ = writeln!(
            out,
            "aux weights I/R/C: {} / {} / {}",
            opt(w("I")),
            opt(w("R")),
            opt(w("C"))
        );
    }
    if let Some(e) = &report.evaluation {
        for (name, v) in &e.metrics {
            let _ = writeln!(out, "{name}: {}", opt(*v));
        }
    }
    out
}
