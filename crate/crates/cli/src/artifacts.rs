//! Artifact names and deterministic writers.

use std::path::Path;

use serde::Serialize;

use crate::error::{Classify, CliResult};

pub const CONFIG: &str = "config.json";
pub const INGESTED: &str = "ingested.jsonl";
pub const INGEST_REPORT: &str = "ingest.json";
pub const FILTERED: &str = "filtered.jsonl";
pub const FILTER_REPORT: &str = "filter.json";
pub const SCORES: &str = "scores.jsonl";
pub const LABELS: &str = "labels.jsonl";
pub const AGREEMENT: &str = "agreement.json";
pub const WEIGHTS: &str = "weights.json";
pub const FIT_LOG: &str = "fit_log.json";
pub const SEQUENCES: &str = "sequences.jsonl";
pub const SCORER: &str = "scorer.json";
pub const REWARD_TRAIN: &str = "reward_train.json";
pub const REWARDS: &str = "rewards.json";
pub const TOT: &str = "tot.jsonl";
pub const TASKS: &str = "tasks.jsonl";
pub const EVAL: &str = "eval.json";
pub const REPORT: &str = "report.json";
pub const REPORT_TABLE: &str = "report.txt";
pub const MANIFEST: &str = "manifest.json";

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifact serializes");
    s.push('\n');
    s
}

pub fn to_jsonl<T: Serialize>(values: &[T]) -> String {
    values
        .iter()
        .map(|v| serde_json::to_string(v).expect("artifact serializes") + "\n")
        .collect()
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).data_err(format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).data_err(format!("writing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write_text(path, &to_json(value))
}

pub fn write_jsonl<T: Serialize>(path: &Path, values: &[T]) -> CliResult<()> {
    write_text(path, &to_jsonl(values))
}
