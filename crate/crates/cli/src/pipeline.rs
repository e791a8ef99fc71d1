//! `hotscore run`: every stage in order, writing artifacts into one
//! directory. `manifest.json` records each stage's status; after a failure it
//! marks the directory incomplete and names the failed stage.

use std::path::Path;

use hotscore::corpus::parse_corpus;
use hotscore::providers::EntityLinker;
use hotscore::reward::sequences_from_scores;
use serde::Serialize;

use crate::artifacts::{self as a, write_json, write_jsonl, write_text};
use crate::config::RunConfig;
use crate::error::{Classify, CliResult};
use crate::report::{self, Report};
use crate::stages::{self, IngestSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ok,
    Skipped,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageEntry {
    pub stage: &'static str,
    pub status: StageStatus,
    pub artifacts: Vec<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub complete: bool,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<&'static str>,
    pub stages: Vec<StageEntry>,
}

struct Recorder<'a> {
    dir: &'a Path,
    manifest: Manifest,
}

impl Recorder<'_> {
    fn ok(&mut self, stage: &'static str, artifacts: Vec<&'static str>) {
        self.push(stage, StageStatus::Ok, artifacts, None);
    }

    fn skip(&mut self, stage: &'static str, why: &str) {
        log::info!("{stage}: skipped ({why})");
        self.push(stage, StageStatus::Skipped, Vec::new(), Some(why.to_string()));
    }

    fn push(&mut self, stage: &'static str, status: StageStatus, artifacts: Vec<&'static str>, note: Option<String>) {
        self.manifest.stages.push(StageEntry {
            stage,
            status,
            artifacts,
            note,
        });
    }

    fn write(&self) -> CliResult<()> {
        write_json(&self.dir.join(a::MANIFEST), &self.manifest)
    }

    /// Runs one stage; on error records it, writes the manifest and passes
    /// the error on.
    fn stage<T>(&mut self, name: &'static str, f: impl FnOnce() -> CliResult<T>) -> CliResult<T> {
        f().inspect_err(|e| {
            self.push(name, StageStatus::Failed, Vec::new(), Some(e.to_string()));
            self.manifest.failed_stage = Some(name);
            let _ = self.write();
        })
    }
}

pub fn run(cfg: &RunConfig, dir: &Path) -> CliResult<Report> {
    std::fs::create_dir_all(dir).data_err(format!("creating {}", dir.display()))?;
    let mut rec = Recorder {
        dir,
        manifest: Manifest {
            complete: false,
            seed: cfg.seed,
            failed_stage: None,
            stages: Vec::new(),
        },
    };
    write_json(&dir.join(a::CONFIG), cfg)?;
    rec.write()?;

    let corpus = rec.stage("ingest", || {
        let path = cfg.corpus_path()?;
        let corpus = parse_corpus(path).data_err("reading corpus")?;
        for e in &corpus.malformed {
            log::warn!("{}: {e}", path.display());
        }
        write_text(&dir.join(a::INGESTED), &corpus.to_jsonl())?;
        write_json(&dir.join(a::INGEST_REPORT), &IngestSummary::of(&corpus))?;
        Ok(corpus)
    })?;
    rec.ok("ingest", vec![a::INGESTED, a::INGEST_REPORT]);

    let kept = rec.stage("filter", || {
        let (kept, summary) = stages::filter(corpus, cfg)?;
        write_text(&dir.join(a::FILTERED), &kept.to_jsonl())?;
        write_json(&dir.join(a::FILTER_REPORT), &summary)?;
        Ok(kept)
    })?;
    rec.ok("filter", vec![a::FILTERED, a::FILTER_REPORT]);

    let providers = rec.stage("score", || cfg.providers())?;
    let scores = rec.stage("score", || {
        let scores = stages::score(&kept, &providers, cfg)?;
        write_text(&dir.join(a::SCORES), &stages::scores_jsonl(&scores))?;
        Ok(scores)
    })?;
    rec.ok("score", vec![a::SCORES]);

    let rows = stages::labeled_rows(&kept.comments, &scores);
    if rows.is_empty() {
        rec.skip("fit-weights", "no labeled comments");
    } else {
        rec.stage("fit-weights", || {
            write_jsonl(&dir.join(a::LABELS), &rows)?;
            let (rows, agreement) = stages::agreement_filter(rows, &kept.comments, cfg)?;
            let (weights, log) = stages::fit(&rows, cfg)?;
            write_json(&dir.join(a::AGREEMENT), &agreement)?;
            write_json(&dir.join(a::WEIGHTS), &weights)?;
            write_json(&dir.join(a::FIT_LOG), &log)
        })?;
        rec.ok("fit-weights", vec![a::LABELS, a::AGREEMENT, a::WEIGHTS, a::FIT_LOG]);
    }

    let sequences = sequences_from_scores(&kept.comments, &scores);
    if sequences.is_empty() {
        rec.skip("train-reward", "no video with two or more comments");
    } else {
        rec.stage("train-reward", || {
            write_jsonl(&dir.join(a::SEQUENCES), &sequences)?;
            let (scorer, training) = stages::train(&sequences, cfg)?;
            write_json(&dir.join(a::SCORER), &scorer)?;
            write_json(&dir.join(a::REWARD_TRAIN), &training)?;
            write_json(&dir.join(a::REWARDS), &stages::rewards(&kept.comments, &scores, cfg))
        })?;
        rec.ok(
            "train-reward",
            vec![a::SEQUENCES, a::SCORER, a::REWARD_TRAIN, a::REWARDS],
        );
    }

    let refinements = rec.stage("tot-refine", || {
        let linker = cfg.linker()?;
        let linker = linker.as_ref().map(|l| l as &dyn EntityLinker);
        let out = stages::refine_corpus(&kept, &scores, &providers, linker, cfg)?;
        write_jsonl(&dir.join(a::TOT), &out)?;
        Ok(out)
    })?;
    rec.ok("tot-refine", vec![a::TOT]);

    if kept.comments.len() < 2 {
        rec.skip("evaluate", "fewer than two comments");
    } else {
        rec.stage("evaluate", || {
            let tasks = stages::build_tasks(&kept, &refinements, &providers, cfg)?;
            write_jsonl(&dir.join(a::TASKS), &tasks)?;
            let metrics = stages::parse_metrics(stages::DEFAULT_METRICS)?;
            write_json(&dir.join(a::EVAL), &stages::evaluate(&tasks, &metrics, cfg.eval.max_n)?)
        })?;
        rec.ok("evaluate", vec![a::TASKS, a::EVAL]);
    }

    let report = rec.stage("report", || {
        let report = report::build(dir)?;
        write_json(&dir.join(a::REPORT), &report)?;
        write_text(&dir.join(a::REPORT_TABLE), &report::render_text(&report))?;
        Ok(report)
    })?;
    rec.ok("report", vec![a::REPORT, a::REPORT_TABLE]);

    rec.manifest.complete = true;
    rec.write()?;
    Ok(report)
}
