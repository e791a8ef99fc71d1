//! Corpus ingestion, comment/video filtering and Table-1 style statistics.
//!
//! A corpus is a single JSONL file that mixes video lines and comment lines.
//! A line carrying a `comment_id` key is a comment, anything else is a video.
//! Malformed lines are collected with their line number and offending field
//! instead of aborting the whole parse.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::stats::Summary;
use crate::text;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Schema(SchemaError),
    #[error("corpus has no videos")]
    EmptyCorpus,
}

/// A schema violation at a 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaError {
    pub line: usize,
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for SchemaError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: field `{}`: {}", self.line, self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub video_id: String,
    pub title: String,
    pub description: String,
    pub caption_text: String,
    pub audio_text: String,
    /// One of the platform themes, or `"unknown"`.
    pub theme: String,
    pub duration_s: f64,
    pub keyframe_count: u64,
    pub likes: u64,
    pub comments_count: u64,
    pub favorites: u64,
    pub shares: u64,
    pub created_at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommentRecord {
    pub comment_id: String,
    pub video_id: String,
    pub text: String,
    pub likes: u64,
    pub replies: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human_labels: Option<BTreeMap<String, u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human_rating: Option<Vec<u8>>,
}

/// Result of parsing a corpus file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub videos: Vec<VideoRecord>,
    pub comments: Vec<CommentRecord>,
    pub malformed: Vec<SchemaError>,
}

impl Corpus {
    /// Fails with the first collected schema error, if any.
    pub fn strict(self) -> Result<Corpus, CorpusError> {
        match self.malformed.first() {
            Some(e) => Err(CorpusError::Schema(e.clone())),
            None => Ok(self),
        }
    }

    pub fn video(&self, video_id: &str) -> Option<&VideoRecord> {
        self.videos.iter().find(|v| v.video_id == video_id)
    }

    /// Serializes videos then comments, one JSON object per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for v in &self.videos {
            out.push_str(&serde_json::to_string(v).expect("video serializes"));
            out.push('\n');
        }
        for c in &self.comments {
            out.push_str(&serde_json::to_string(c).expect("comment serializes"));
            out.push('\n');
        }
        out
    }
}

pub fn parse_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    let data = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(parse_corpus_str(&data))
}

pub fn parse_corpus_str(data: &str) -> Corpus {
    let mut corpus = Corpus::default();
    let mut video_ids = HashSet::new();
    let mut comment_ids = HashSet::new();
    let mut pending: Vec<(usize, CommentRecord)> = Vec::new();

    for (idx, raw) in data.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let obj = match serde_json::from_str::<Value>(raw) {
            Ok(Value::Object(obj)) => obj,
            Ok(_) => {
                corpus.malformed.push(schema(line, "<line>", "expected a JSON object"));
                continue;
            }
            Err(e) => {
                corpus
                    .malformed
                    .push(schema(line, "<line>", &format!("invalid JSON: {e}")));
                continue;
            }
        };
        if obj.contains_key("comment_id") {
            match comment_from(&obj, line) {
                Ok(c) if !comment_ids.insert(c.comment_id.clone()) => {
                    corpus
                        .malformed
                        .push(schema(line, "comment_id", "duplicate comment_id"))
                }
                Ok(c) => pending.push((line, c)),
                Err(e) => corpus.malformed.push(e),
            }
        } else {
            match video_from(&obj, line) {
                Ok(v) if !video_ids.insert(v.video_id.clone()) => {
                    corpus.malformed.push(schema(line, "video_id", "duplicate video_id"))
                }
                Ok(v) => corpus.videos.push(v),
                Err(e) => corpus.malformed.push(e),
            }
        }
    }

    // comments may precede their video in the file, so the join runs last
    for (line, c) in pending {
        if video_ids.contains(&c.video_id) {
            corpus.comments.push(c);
        } else {
            corpus.malformed.push(schema(
                line,
                "video_id",
                &format!("references unknown video `{}`", c.video_id),
            ));
        }
    }
    corpus.malformed.sort_by_key(|e| e.line);
    corpus
}

fn schema(line: usize, field: &str, message: &str) -> SchemaError {
    SchemaError {
        line,
        field: field.to_string(),
        message: message.to_string(),
    }
}

fn get<'a>(obj: &'a Map<String, Value>, field: &str, line: usize) -> Result<&'a Value, SchemaError> {
    obj.get(field).ok_or_else(|| schema(line, field, "missing"))
}

fn get_str(obj: &Map<String, Value>, field: &str, line: usize) -> Result<String, SchemaError> {
    get(obj, field, line)?
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| schema(line, field, "expected a string"))
}

fn get_count(obj: &Map<String, Value>, field: &str, line: usize) -> Result<u64, SchemaError> {
    get(obj, field, line)?
        .as_u64()
        .ok_or_else(|| schema(line, field, "expected a non-negative integer"))
}

fn video_from(obj: &Map<String, Value>, line: usize) -> Result<VideoRecord, SchemaError> {
    let video_id = get_str(obj, "video_id", line)?;
    if video_id.is_empty() {
        return Err(schema(line, "video_id", "must be non-empty"));
    }
    let duration_s = get(obj, "duration_s", line)?
        .as_f64()
        .filter(|d| d.is_finite() && *d >= 0.0)
        .ok_or_else(|| schema(line, "duration_s", "expected a non-negative number"))?;
    let created_at = get_str(obj, "created_at", line)?;
    if chrono::DateTime::parse_from_rfc3339(&created_at).is_err() {
        return Err(schema(line, "created_at", "expected an RFC 3339 timestamp"));
    }
    Ok(VideoRecord {
        video_id,
        title: get_str(obj, "title", line)?,
        description: get_str(obj, "description", line)?,
        caption_text: get_str(obj, "caption_text", line)?,
        audio_text: get_str(obj, "audio_text", line)?,
        theme: get_str(obj, "theme", line)?,
        duration_s,
        keyframe_count: get_count(obj, "keyframe_count", line)?,
        likes: get_count(obj, "likes", line)?,
        comments_count: get_count(obj, "comments_count", line)?,
        favorites: get_count(obj, "favorites", line)?,
        shares: get_count(obj, "shares", line)?,
        created_at,
    })
}

fn comment_from(obj: &Map<String, Value>, line: usize) -> Result<CommentRecord, SchemaError> {
    let human_labels = match obj.get("human_labels") {
        None | Some(Value::Null) => None,
        Some(Value::Object(map)) => {
            let mut labels = BTreeMap::new();
            for (k, v) in map {
                match v.as_u64() {
                    Some(b @ (0 | 1)) => {
                        labels.insert(k.clone(), b as u8);
                    }
                    _ => return Err(schema(line, "human_labels", &format!("label `{k}` must be 0 or 1"))),
                }
            }
            Some(labels)
        }
        Some(_) => return Err(schema(line, "human_labels", "expected an object")),
    };
    let human_rating = match obj.get("human_rating") {
        None | Some(Value::Null) => None,
        Some(Value::Array(items)) => {
            let mut ratings = Vec::with_capacity(items.len());
            for v in items {
                match v.as_u64() {
                    Some(r @ 1..=5) => ratings.push(r as u8),
                    _ => return Err(schema(line, "human_rating", "ratings must be integers in 1..=5")),
                }
            }
            Some(ratings)
        }
        Some(_) => return Err(schema(line, "human_rating", "expected an array")),
    };
    Ok(CommentRecord {
        comment_id: get_str(obj, "comment_id", line)?,
        video_id: get_str(obj, "video_id", line)?,
        text: get_str(obj, "text", line)?,
        likes: get_count(obj, "likes", line)?,
        replies: get_count(obj, "replies", line)?,
        human_labels,
        human_rating,
    })
}

// ---------------------------------------------------------------------------
// Filtering
// ---------------------------------------------------------------------------

/// Rejection rules, in the order they are checked. A comment violating
/// several rules is reported under the first one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FilterRule {
    Length,
    Emoji,
    Ascii,
    Lexicon,
}

impl FilterRule {
    pub const ORDER: [FilterRule; 4] = [
        FilterRule::Length,
        FilterRule::Emoji,
        FilterRule::Ascii,
        FilterRule::Lexicon,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FilterRule::Length => "length",
            FilterRule::Emoji => "emoji",
            FilterRule::Ascii => "ascii",
            FilterRule::Lexicon => "lexicon",
        }
    }
}

/// Rule name used by [`filter_videos`].
pub const MIN_COMMENTS_RULE: &str = "min_comments";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub min_chars: usize,
    pub max_chars: usize,
    /// Videos need at least this many surviving comments.
    pub min_comments_per_video: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            min_chars: 1,
            max_chars: 50,
            min_comments_per_video: 2,
        }
    }
}

/// Word lists keyed by category (profanity, political, negative,
/// promotional, ...). Terms are stored normalized.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FilterLexicons {
    lists: BTreeMap<String, Vec<String>>,
}

impl FilterLexicons {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, category: &str, terms: impl IntoIterator<Item = String>) {
        let entry = self.lists.entry(category.to_string()).or_default();
        entry.extend(terms.into_iter().map(|t| text::normalize(&t)).filter(|t| !t.is_empty()));
    }

    /// Loads a lexicon file under `category`.
    pub fn load_file(&mut self, category: &str, path: &Path) -> Result<(), CorpusError> {
        let data = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.insert(category, parse_lexicon(&data));
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.lists.values().all(Vec::is_empty)
    }

    pub fn categories(&self) -> impl Iterator<Item = &str> {
        self.lists.keys().map(String::as_str)
    }

    /// First matching `(category, term)`, if any.
    pub fn find_match(&self, comment: &str) -> Option<(&str, &str)> {
        let normalized = text::normalize(comment);
        self.lists.iter().find_map(|(cat, terms)| {
            terms
                .iter()
                .find(|t| normalized.contains(t.as_str()))
                .map(|t| (cat.as_str(), t.as_str()))
        })
    }
}

/// One term per line; blank lines and lines starting with `#` are ignored.
pub fn parse_lexicon(data: &str) -> Vec<String> {
    data.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub input_count: usize,
    pub kept_count: usize,
    pub rejected: BTreeMap<String, usize>,
}

impl FilterReport {
    pub fn reconciles(&self) -> bool {
        self.input_count == self.kept_count + self.rejected.values().sum::<usize>()
    }

    /// Associative merge of reports from independent shards.
    pub fn merge(mut self, other: &FilterReport) -> FilterReport {
        self.input_count += other.input_count;
        self.kept_count += other.kept_count;
        for (rule, n) in &other.rejected {
            *self.rejected.entry(rule.clone()).or_default() += n;
        }
        self
    }
}

/// The first rule `text` violates, or `None` if it survives.
pub fn violated_rule(text: &str, cfg: &FilterConfig, lexicons: &FilterLexicons) -> Option<FilterRule> {
    let trimmed = text.trim();
    let len = trimmed.chars().count();
    if len < cfg.min_chars || len > cfg.max_chars {
        return Some(FilterRule::Length);
    }
    if trimmed.chars().any(text::is_emoji) {
        return Some(FilterRule::Emoji);
    }
    if trimmed.chars().all(|c| (c as u32) < 128) {
        return Some(FilterRule::Ascii);
    }
    if lexicons.find_match(trimmed).is_some() {
        return Some(FilterRule::Lexicon);
    }
    None
}

/// Drops comments violating the length, emoji, pure-ASCII or lexicon rules.
/// Survivors keep their input order.
pub fn filter_comments(
    comments: Vec<CommentRecord>,
    cfg: &FilterConfig,
    lexicons: &FilterLexicons,
) -> (Vec<CommentRecord>, FilterReport) {
    let mut report = FilterReport {
        input_count: comments.len(),
        ..Default::default()
    };
    let kept: Vec<CommentRecord> = comments
        .into_iter()
        .filter(|c| match violated_rule(&c.text, cfg, lexicons) {
            Some(rule) => {
                *report.rejected.entry(rule.as_str().to_string()).or_default() += 1;
                false
            }
            None => true,
        })
        .collect();
    report.kept_count = kept.len();
    (kept, report)
}

/// Drops videos with fewer than `cfg.min_comments_per_video` comments in
/// `comments` (which should already be filtered).
pub fn filter_videos(
    videos: Vec<VideoRecord>,
    comments: &[CommentRecord],
    cfg: &FilterConfig,
) -> (Vec<VideoRecord>, FilterReport) {
    let mut per_video: HashMap<&str, usize> = HashMap::new();
    for c in comments {
        *per_video.entry(c.video_id.as_str()).or_default() += 1;
    }
    let mut report = FilterReport {
        input_count: videos.len(),
        ..Default::default()
    };
    let kept: Vec<VideoRecord> = videos
        .into_iter()
        .filter(|v| {
            let n = per_video.get(v.video_id.as_str()).copied().unwrap_or(0);
            if n < cfg.min_comments_per_video {
                *report.rejected.entry(MIN_COMMENTS_RULE.to_string()).or_default() += 1;
                false
            } else {
                true
            }
        })
        .collect();
    report.kept_count = kept.len();
    (kept, report)
}

/// Keeps only comments whose video is in `videos`.
pub fn retain_joined(videos: &[VideoRecord], comments: Vec<CommentRecord>) -> Vec<CommentRecord> {
    let ids: HashSet<&str> = videos.iter().map(|v| v.video_id.as_str()).collect();
    comments
        .into_iter()
        .filter(|c| ids.contains(c.video_id.as_str()))
        .collect()
}

/// Comment filtering followed by video filtering and an orphan sweep.
pub fn filter_corpus(
    corpus: Corpus,
    cfg: &FilterConfig,
    lexicons: &FilterLexicons,
) -> (Corpus, FilterReport, FilterReport) {
    let (comments, comment_report) = filter_comments(corpus.comments, cfg, lexicons);
    let (videos, video_report) = filter_videos(corpus.videos, &comments, cfg);
    let comments = retain_joined(&videos, comments);
    (
        Corpus {
            videos,
            comments,
            malformed: corpus.malformed,
        },
        comment_report,
        video_report,
    )
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatRow {
    pub section: String,
    pub feature: String,
    #[serde(flatten)]
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsTable {
    pub rows: Vec<StatRow>,
}

impl StatsTable {
    pub fn row(&self, feature: &str) -> Option<&StatRow> {
        self.rows.iter().find(|r| r.feature == feature)
    }

    /// Plain-text table with one row per feature, grouped by section.
    pub fn render_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.feature.len()).max().unwrap_or(7).max(7);
        let mut out = String::new();
        let header = format!(
            "{:<width$}  {:>14}  {:>14}  {:>14}  {:>14}  {:>14}",
            "Feature", "Mean", "Median", "Max", "Min", "Std"
        );
        let rule = "-".repeat(header.len());
        let _ = writeln!(out, "{header}");
        let mut section = "";
        for row in &self.rows {
            if row.section != section {
                section = &row.section;
                let _ = writeln!(out, "{rule}");
                let _ = writeln!(out, "{section}");
                let _ = writeln!(out, "{rule}");
            }
            let s = &row.summary;
            let _ = writeln!(
                out,
                "{:<width$}  {:>14.2}  {:>14.2}  {:>14.2}  {:>14.2}  {:>14.2}",
                row.feature, s.mean, s.median, s.max, s.min, s.std
            );
        }
        out
    }
}

/// Per-feature mean, median, max, min and population std for every row of
/// the dataset statistics table that the records can populate. Comment rows
/// are omitted when there are no comments.
pub fn corpus_stats(videos: &[VideoRecord], comments: &[CommentRecord]) -> Result<StatsTable, CorpusError> {
    if videos.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let chars = |s: &str| s.chars().count() as f64;
    type VideoFeature = fn(&VideoRecord) -> f64;
    let video_rows: [(&str, &str, VideoFeature); 10] = [
        ("Video", "Video Lengths", |v| v.duration_s),
        ("Video", "Video Keyframe Counts", |v| v.keyframe_count as f64),
        ("Video", "Video Title Lengths", |v| v.title.chars().count() as f64),
        ("Video", "Video Description Lengths", |v| {
            v.description.chars().count() as f64
        }),
        ("Video", "Video Caption Lengths", |v| {
            v.caption_text.chars().count() as f64
        }),
        ("Video", "Audio Speech Lengths", |v| v.audio_text.chars().count() as f64),
        ("Engagement", "Video Likes Counts", |v| v.likes as f64),
        ("Engagement", "Video Comments Counts", |v| v.comments_count as f64),
        ("Engagement", "Video Favorites Counts", |v| v.favorites as f64),
        ("Engagement", "Video Shares Counts", |v| v.shares as f64),
    ];
    let mut rows = Vec::new();
    for (section, feature, f) in video_rows {
        let values: Vec<f64> = videos.iter().map(f).collect();
        rows.push(StatRow {
            section: section.to_string(),
            feature: feature.to_string(),
            summary: Summary::of(&values).expect("non-empty"),
        });
    }
    if !comments.is_empty() {
        let comment_rows: [(&str, Vec<f64>); 3] = [
            (
                "Comment Likes Counts/per Video",
                comments.iter().map(|c| c.likes as f64).collect(),
            ),
            (
                "Comment Replies Counts/per Video",
                comments.iter().map(|c| c.replies as f64).collect(),
            ),
            (
                "Comment Lengths/per Video",
                comments.iter().map(|c| chars(&c.text)).collect(),
            ),
        ];
        for (feature, values) in comment_rows {
            rows.push(StatRow {
                section: "Engagement".to_string(),
                feature: feature.to_string(),
                summary: Summary::of(&values).expect("non-empty"),
            });
        }
    }
    Ok(StatsTable { rows })
}
