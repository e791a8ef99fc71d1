use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{majority_vote, ProviderError, RemoteClient, Task};
use crate::text;

pub const DEFAULT_TOP_K: usize = 10;

const STOP_WORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "but", "by", "for", "from", "he", "her", "his", "i", "in", "is", "it",
    "its", "my", "of", "on", "or", "our", "she", "so", "that", "the", "their", "they", "this", "to", "was", "we",
    "were", "with", "you", "your",
];

/// Han characters that disqualify a bigram from being a keyword.
const STOP_CHARS: &[char] = &[
    '的', '了', '是', '在', '我', '你', '他', '她', '它', '们', '这', '那', '吗', '呢', '吧', '啊', '呀', '哦', '和',
    '也', '都', '就',
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KeywordSource {
    Remote,
    LocalDefault,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordSet {
    keywords: Vec<String>,
    pub source: KeywordSource,
    /// Share of remote rounds that agreed with the chosen answer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consistency: Option<f64>,
}

impl KeywordSet {
    /// Lowercases ASCII, NFC-normalizes and drops empty or repeated entries.
    pub fn new(keywords: impl IntoIterator<Item = String>, source: KeywordSource) -> Self {
        let mut seen = HashSet::new();
        let keywords = keywords
            .into_iter()
            .map(|k| text::normalize(k.trim()))
            .filter(|k| !k.is_empty() && seen.insert(k.clone()))
            .collect();
        Self {
            keywords,
            source,
            consistency: None,
        }
    }

    pub fn empty() -> Self {
        Self::new(Vec::new(), KeywordSource::LocalDefault)
    }

    pub fn keywords(&self) -> &[String] {
        &self.keywords
    }

    pub fn len(&self) -> usize {
        self.keywords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keywords.is_empty()
    }
}

pub trait KeywordExtractor: Send + Sync {
    fn extract(&self, caption: &str) -> Result<KeywordSet, ProviderError>;
}

/// Frequency-ranked content tokens after stop-word removal. Ties keep the
/// order of first occurrence.
#[derive(Debug, Clone)]
pub struct LocalKeywordExtractor {
    pub stop_words: HashSet<String>,
    pub top_k: usize,
}

impl Default for LocalKeywordExtractor {
    fn default() -> Self {
        Self {
            stop_words: STOP_WORDS.iter().map(|s| s.to_string()).collect(),
            top_k: DEFAULT_TOP_K,
        }
    }
}

impl LocalKeywordExtractor {
    fn is_content(&self, token: &str) -> bool {
        !self.stop_words.contains(token)
            && !token.chars().any(|c| STOP_CHARS.contains(&c))
            && !token.chars().all(|c| c.is_ascii_digit())
    }
}

impl KeywordExtractor for LocalKeywordExtractor {
    fn extract(&self, caption: &str) -> Result<KeywordSet, ProviderError> {
        if caption.trim().is_empty() {
            return Err(ProviderError::EmptyInput("extract_keywords"));
        }
        let mut counts: HashMap<String, (usize, usize)> = HashMap::new();
        for (pos, tok) in text::content_tokens(caption).into_iter().enumerate() {
            if self.is_content(&tok) {
                counts.entry(tok).or_insert((0, pos)).0 += 1;
            }
        }
        let mut ranked: Vec<(String, usize, usize)> = counts.into_iter().map(|(t, (n, p))| (t, n, p)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
        Ok(KeywordSet::new(
            ranked.into_iter().take(self.top_k).map(|(t, _, _)| t),
            KeywordSource::LocalDefault,
        ))
    }
}

/// Majority vote over `rounds` remote answers. Falls back to the local
/// extractor (source `local-default`) when any round fails.
pub struct RemoteKeywordExtractor {
    client: RemoteClient,
    rounds: u32,
    fallback: LocalKeywordExtractor,
}

impl RemoteKeywordExtractor {
    pub fn new(client: RemoteClient, rounds: u32, fallback: LocalKeywordExtractor) -> Self {
        Self {
            client,
            rounds: rounds.max(1),
            fallback,
        }
    }

    fn parse(output: &Value) -> Option<Vec<String>> {
        match output {
            Value::Array(items) => items.iter().map(|v| v.as_str().map(str::to_string)).collect(),
            Value::String(s) => Some(
                s.split([',', '，', '、', '\n'])
                    .map(str::trim)
                    .filter(|k| !k.is_empty())
                    .map(str::to_string)
                    .collect(),
            ),
            _ => None,
        }
    }

    fn remote_rounds(&self, caption: &str) -> Result<Vec<Vec<String>>, ProviderError> {
        (0..self.rounds)
            .map(|round| {
                let out = self.client.call(Task::Keywords, caption, round)?;
                let parsed = Self::parse(&out)
                    .ok_or_else(|| ProviderError::Remote("keywords output must be a list or string".into()))?;
                Ok(KeywordSet::new(parsed, KeywordSource::Remote).keywords)
            })
            .collect()
    }
}

impl KeywordExtractor for RemoteKeywordExtractor {
    fn extract(&self, caption: &str) -> Result<KeywordSet, ProviderError> {
        if caption.trim().is_empty() {
            return Err(ProviderError::EmptyInput("extract_keywords"));
        }
        match self.remote_rounds(caption) {
            Ok(responses) => {
                let vote = majority_vote(&responses).expect("at least one round");
                let mut set = KeywordSet::new(vote.value, KeywordSource::Remote);
                set.consistency = Some(vote.consistency);
                Ok(set)
            }
            Err(e) => {
                log::warn!(
                    "keyword provider at {} failed ({e}); using local default",
                    self.client.url()
                );
                self.fallback.extract(caption)
            }
        }
    }
}
