//! Pluggable stand-ins for the steps that would otherwise call a hosted LLM
//! or a knowledge graph.
//!
//! Every provider is a trait with a deterministic offline default. When an
//! endpoint is configured, the remote variants POST
//! `{"task", "input", "round"}` and read `{"output"}` back.

mod embed;
mod generate;
mod kb;
mod keywords;
mod markers;
mod remote;

pub use embed::{cosine, Embedder, HashedNgramEmbedder, DEFAULT_EMBED_DIM};
pub use generate::{Prompt, RemoteGenerator, TemplateGenerator, TextGenerator};
pub use kb::{EntityLink, EntityLinker, KbEntity, KbLinker, KnowledgeBase};
pub use keywords::{
    KeywordExtractor, KeywordSet, KeywordSource, LocalKeywordExtractor, RemoteKeywordExtractor, DEFAULT_TOP_K,
};
pub use markers::{
    count_rhetoric, count_trending, find_non_overlapping, LexiconCounter, MarkerCounter, RemoteCounter,
    DEFAULT_RHETORIC_MARKERS, DEFAULT_TRENDING_TERMS,
};
pub use remote::{RemoteClient, Task};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("empty input to {0}")]
    EmptyInput(&'static str),
    #[error("remote provider failed: {0}")]
    Remote(String),
    #[error("knowledge base {path} unreadable: {message}")]
    KnowledgeBase { path: String, message: String },
    #[error("invalid provider config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub endpoint_url: Option<String>,
    pub timeout_ms: u64,
    pub retry_count: u32,
    /// Requests per remote judgment; the most common answer wins.
    pub vote_rounds: u32,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            endpoint_url: None,
            timeout_ms: 10_000,
            retry_count: 2,
            vote_rounds: 5,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.vote_rounds == 0 {
            return Err(ProviderError::Config("vote_rounds must be at least 1".into()));
        }
        if self.timeout_ms == 0 {
            return Err(ProviderError::Config("timeout_ms must be positive".into()));
        }
        Ok(())
    }

    pub fn client(&self) -> Option<RemoteClient> {
        self.endpoint_url
            .as_ref()
            .map(|url| RemoteClient::new(url, self.timeout_ms, self.retry_count))
    }
}

/// Outcome of a majority vote.
#[derive(Debug, Clone, PartialEq)]
pub struct Vote<T> {
    pub value: T,
    pub count: usize,
    /// `count / rounds`.
    pub consistency: f64,
}

/// Most common response; ties go to the value seen first.
pub fn majority_vote<T: PartialEq + Clone>(responses: &[T]) -> Option<Vote<T>> {
    let mut best: Option<(usize, usize)> = None;
    for (i, r) in responses.iter().enumerate() {
        if responses[..i].contains(r) {
            continue;
        }
        let count = responses[i..].iter().filter(|x| *x == r).count();
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((i, count));
        }
    }
    best.map(|(i, count)| Vote {
        value: responses[i].clone(),
        count,
        consistency: count as f64 / responses.len() as f64,
    })
}

/// The provider set used by comment scoring and tree-of-thought refinement.
pub struct Providers {
    pub keywords: Box<dyn KeywordExtractor>,
    pub embedder: Box<dyn Embedder>,
    pub rhetoric: Box<dyn MarkerCounter>,
    pub trending: Box<dyn MarkerCounter>,
    pub generator: Box<dyn TextGenerator>,
}

impl Providers {
    /// Deterministic defaults with the built-in marker lists.
    pub fn offline() -> Self {
        Self::offline_with(
            LexiconCounter::new(DEFAULT_RHETORIC_MARKERS.iter().map(|s| s.to_string())),
            LexiconCounter::new(DEFAULT_TRENDING_TERMS.iter().map(|s| s.to_string())),
        )
    }

    pub fn offline_with(rhetoric: LexiconCounter, trending: LexiconCounter) -> Self {
        Self {
            keywords: Box::new(LocalKeywordExtractor::default()),
            embedder: Box::new(HashedNgramEmbedder::default()),
            rhetoric: Box::new(rhetoric),
            trending: Box::new(trending),
            generator: Box::new(TemplateGenerator),
        }
    }

    /// Remote keyword, counting and generation providers when an endpoint is
    /// configured; offline defaults otherwise. Embedding stays local.
    pub fn from_config(
        cfg: &ProviderConfig,
        rhetoric: LexiconCounter,
        trending: LexiconCounter,
    ) -> Result<Self, ProviderError> {
        cfg.validate()?;
        let Some(client) = cfg.client() else {
            return Ok(Self::offline_with(rhetoric, trending));
        };
        Ok(Self {
            keywords: Box::new(RemoteKeywordExtractor::new(
                client.clone(),
                cfg.vote_rounds,
                LocalKeywordExtractor::default(),
            )),
            embedder: Box::new(HashedNgramEmbedder::default()),
            rhetoric: Box::new(RemoteCounter::new(
                client.clone(),
                Task::Rhetoric,
                cfg.vote_rounds,
                rhetoric,
            )),
            trending: Box::new(RemoteCounter::new(
                client.clone(),
                Task::Trending,
                cfg.vote_rounds,
                trending,
            )),
            generator: Box::new(RemoteGenerator::new(client)),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unanimous_vote() {
        let v = majority_vote(&["a"; 5]).unwrap();
        assert_eq!(v.value, "a");
        assert_eq!(v.count, 5);
        assert_eq!(v.consistency, 1.0);
    }

    #[test]
    fn vote_ties_go_to_first_seen() {
        let v = majority_vote(&["b", "a", "a", "b", "c"]).unwrap();
        assert_eq!(v.value, "b");
        assert_eq!(v.consistency, 0.4);
        assert!(majority_vote::<u32>(&[]).is_none());
    }

    #[test]
    fn config_validation() {
        let mut cfg = ProviderConfig::default();
        assert_eq!(cfg.vote_rounds, 5);
        assert!(cfg.validate().is_ok());
        cfg.vote_rounds = 0;
        assert!(cfg.validate().is_err());
    }
}
