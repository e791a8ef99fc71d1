use serde_json::Value;

use super::{majority_vote, ProviderError, RemoteClient, Task};
use crate::text;

/// Simile, rhetorical-question and emphasis markers used when no rhetoric
/// lexicon is supplied.
pub const DEFAULT_RHETORIC_MARKERS: &[&str] = &[
    "好像", "就像", "像是", "仿佛", "宛如", "如同", "犹如", "简直", "难道", "竟然", "居然", "！！", "!!", "？！",
];

/// Internet slang used when no trending-term lexicon is supplied.
pub const DEFAULT_TRENDING_TERMS: &[&str] = &[
    "yyds",
    "绝绝子",
    "破防",
    "内卷",
    "躺平",
    "打工人",
    "凡尔赛",
    "emo",
    "栓q",
    "泰裤辣",
    "显眼包",
    "搭子",
    "特种兵",
    "哈基米",
    "awsl",
];

/// A match of pattern `pattern` at byte range `start..end` of the searched
/// text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatternMatch {
    pub start: usize,
    pub end: usize,
    pub pattern: usize,
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric()
}

/// All occurrences of every pattern (overlapping ones included), then a
/// greedy selection by decreasing length, earlier start, lower pattern index,
/// keeping only spans that do not overlap an already selected one. Result is
/// sorted by start.
///
/// Matching is ASCII case-insensitive. Patterns that begin or end with an
/// ASCII alphanumeric must not touch another ASCII alphanumeric at that edge,
/// so "art" does not match inside "party".
pub fn find_non_overlapping(haystack: &str, patterns: &[String]) -> Vec<PatternMatch> {
    let hay = haystack.to_ascii_lowercase();
    let bytes = hay.as_bytes();
    let mut candidates = Vec::new();
    for (pi, pat) in patterns.iter().enumerate() {
        let pat = pat.to_ascii_lowercase();
        if pat.is_empty() {
            continue;
        }
        let pb = pat.as_bytes();
        let guard_start = is_word_byte(pb[0]);
        let guard_end = is_word_byte(pb[pb.len() - 1]);
        for (start, _) in hay.char_indices() {
            if !hay[start..].starts_with(&pat) {
                continue;
            }
            let end = start + pat.len();
            if guard_start && start > 0 && is_word_byte(bytes[start - 1]) {
                continue;
            }
            if guard_end && end < bytes.len() && is_word_byte(bytes[end]) {
                continue;
            }
            candidates.push(PatternMatch {
                start,
                end,
                pattern: pi,
            });
        }
    }
    candidates.sort_by(|a, b| {
        (b.end - b.start)
            .cmp(&(a.end - a.start))
            .then(a.start.cmp(&b.start))
            .then(a.pattern.cmp(&b.pattern))
    });
    let mut chosen: Vec<PatternMatch> = Vec::new();
    for c in candidates {
        if chosen.iter().all(|m| c.end <= m.start || c.start >= m.end) {
            chosen.push(c);
        }
    }
    chosen.sort_by_key(|m| m.start);
    chosen
}

/// Counts occurrences of rhetorical devices or trending terms in a comment.
pub trait MarkerCounter: Send + Sync {
    fn count(&self, comment: &str) -> u32;
}

/// Number of non-overlapping lexicon matches.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LexiconCounter {
    markers: Vec<String>,
}

impl LexiconCounter {
    pub fn new(markers: impl IntoIterator<Item = String>) -> Self {
        Self {
            markers: markers
                .into_iter()
                .map(|m| text::normalize(m.trim()))
                .filter(|m| !m.is_empty())
                .collect(),
        }
    }

    pub fn markers(&self) -> &[String] {
        &self.markers
    }
}

impl MarkerCounter for LexiconCounter {
    fn count(&self, comment: &str) -> u32 {
        if self.markers.is_empty() {
            return 0;
        }
        find_non_overlapping(&text::normalize(comment), &self.markers).len() as u32
    }
}

/// Majority vote over remote integer counts; falls back to the lexicon
/// counter on failure.
pub struct RemoteCounter {
    client: RemoteClient,
    task: Task,
    rounds: u32,
    fallback: LexiconCounter,
}

impl RemoteCounter {
    pub fn new(client: RemoteClient, task: Task, rounds: u32, fallback: LexiconCounter) -> Self {
        Self {
            client,
            task,
            rounds: rounds.max(1),
            fallback,
        }
    }

    fn remote(&self, comment: &str) -> Result<u32, ProviderError> {
        let answers = (0..self.rounds)
            .map(|round| {
                let out = self.client.call(self.task, comment, round)?;
                match out {
                    Value::Number(n) => n.as_u64().map(|n| n as u32),
                    Value::String(s) => s.trim().parse().ok(),
                    _ => None,
                }
                .ok_or_else(|| ProviderError::Remote("count output must be a non-negative integer".into()))
            })
            .collect::<Result<Vec<u32>, _>>()?;
        Ok(majority_vote(&answers).expect("at least one round").value)
    }
}

impl MarkerCounter for RemoteCounter {
    fn count(&self, comment: &str) -> u32 {
        self.remote(comment).unwrap_or_else(|e| {
            log::warn!("{:?} provider failed ({e}); counting with lexicon", self.task);
            self.fallback.count(comment)
        })
    }
}

/// Rhetorical technique count `x_r`.
pub fn count_rhetoric(comment: &str, counter: &dyn MarkerCounter) -> u32 {
    counter.count(comment)
}

/// Trending term count `x_t`.
pub fn count_trending(comment: &str, lexicon: &dyn MarkerCounter) -> u32 {
    lexicon.count(comment)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pats(p: &[&str]) -> Vec<String> {
        p.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn empty_lexicon_counts_zero() {
        let c = LexiconCounter::default();
        assert_eq!(count_rhetoric("简直像一幅画！！", &c), 0);
        assert_eq!(count_trending("yyds", &c), 0);
    }

    #[test]
    fn single_marker_counts_one() {
        let c = LexiconCounter::new(pats(&["仿佛"]));
        assert_eq!(count_rhetoric("这可丽饼仿佛艺术品", &c), 1);
        let t = LexiconCounter::new(pats(&["YYDS"]));
        assert_eq!(count_trending("可丽饼yyds", &t), 1);
    }

    #[test]
    fn longest_match_wins_over_nested() {
        let p = pats(&["crepes", "French crepes"]);
        let m = find_non_overlapping("I love French crepes", &p);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].pattern, 1);
        assert_eq!((m[0].start, m[0].end), (7, 20));
    }

    #[test]
    fn longest_first_is_global_not_leftmost() {
        let p = pats(&["可丽", "丽饼店"]);
        let m = find_non_overlapping("可丽饼店", &p);
        assert_eq!(
            m,
            vec![PatternMatch {
                start: 3,
                end: 12,
                pattern: 1
            }]
        );
    }

    #[test]
    fn ascii_word_boundaries() {
        let p = pats(&["art"]);
        assert!(find_non_overlapping("party", &p).is_empty());
        assert_eq!(find_non_overlapping("a piece of art.", &p).len(), 1);
        assert_eq!(find_non_overlapping("艺术art艺术", &p).len(), 1);
    }

    #[test]
    fn repeated_pattern_counts_each_occurrence() {
        let c = LexiconCounter::new(pats(&["！！"]));
        assert_eq!(c.count("太好吃了！！真的！！"), 2);
        let c = LexiconCounter::new(pats(&["哈哈"]));
        // overlapping occurrences of the same marker count once per span
        assert_eq!(c.count("哈哈哈"), 1);
    }
}
