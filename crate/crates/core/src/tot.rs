//! Knowledge-enhanced tree-of-thought refinement.
//!
//! A tree is a fixed five-node star (Des, Eve, Kno, Cre, Aud), each node a
//! text plus a weight in `[0, 1]`. Video trees are enhanced with knowledge
//! base descriptions (only Kno changes), comment trees borrow Kno/Cre/Aud
//! from the enhanced video tree, and the weights follow the update
//! `w <- clamp(w - lr * f(c))`, where `f` holds the per-dimension utilities.
//!
//! That literal update always pushes weights toward 0 when utilities are
//! positive; [`Direction::Ascent`] flips the sign.

use std::fmt;

use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::corpus::VideoRecord;
use crate::providers::{cosine, Embedder, EntityLink, EntityLinker, Prompt, ProviderError, TextGenerator};
use crate::text::content_tokens;

#[derive(Debug, Error)]
pub enum TotError {
    #[error("video {0} has neither caption nor description")]
    NoVideoText(String),
    #[error("comment text is empty")]
    EmptyComment,
    #[error("invalid optimizer config: {0}")]
    Config(String),
    #[error("non-finite utility for {0}")]
    NonFinite(Dimension),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Dimension {
    Des,
    Eve,
    Kno,
    Cre,
    Aud,
}

impl Dimension {
    pub const ALL: [Dimension; 5] = [Self::Des, Self::Eve, Self::Kno, Self::Cre, Self::Aud];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Des => "Des",
            Self::Eve => "Eve",
            Self::Kno => "Kno",
            Self::Cre => "Cre",
            Self::Aud => "Aud",
        }
    }

    /// Instruction sent to remote generators for this dimension.
    pub fn instruction(self) -> &'static str {
        match self {
            Self::Des => "Describe what the video shows.",
            Self::Eve => "Summarize the events or moments the video captures.",
            Self::Kno => "State the background knowledge the video relies on.",
            Self::Cre => "Suggest a creative angle for commenting on the video.",
            Self::Aud => "Describe who watches this video and what they enjoy.",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub const INITIAL_WEIGHT: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TotNode {
    pub text: String,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Video,
    Comment,
    Merged,
}

/// Outcome of the last knowledge enhancement applied to a tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnowledgeStatus {
    NotAttempted,
    Enhanced,
    NoEntities,
    KbUnavailable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToTTree {
    nodes: [TotNode; 5],
    pub origin: Origin,
    pub knowledge: KnowledgeStatus,
}

impl ToTTree {
    /// A tree with the given texts (in [`Dimension::ALL`] order) and uniform
    /// initial weights.
    pub fn new(texts: [String; 5], origin: Origin) -> Self {
        Self {
            nodes: texts.map(|text| TotNode {
                text,
                weight: INITIAL_WEIGHT,
            }),
            origin,
            knowledge: KnowledgeStatus::NotAttempted,
        }
    }

    pub fn node(&self, d: Dimension) -> &TotNode {
        &self.nodes[d.index()]
    }

    pub fn text(&self, d: Dimension) -> &str {
        &self.nodes[d.index()].text
    }

    pub fn set_text(&mut self, d: Dimension, text: String) {
        self.nodes[d.index()].text = text;
    }

    pub fn weights(&self) -> [f64; 5] {
        std::array::from_fn(|i| self.nodes[i].weight)
    }

    /// Sets all weights, clamped to `[0, 1]`.
    pub fn set_weights(&mut self, w: [f64; 5]) {
        for (node, w) in self.nodes.iter_mut().zip(w) {
            node.weight = w.clamp(0.0, 1.0);
        }
    }

    /// Highest-weight dimension; ties go to the earlier dimension.
    pub fn top_dimension(&self) -> Dimension {
        let mut best = Dimension::Des;
        for d in Dimension::ALL {
            if self.node(d).weight > self.node(best).weight {
                best = d;
            }
        }
        best
    }
}

impl Serialize for ToTTree {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(5))?;
        for d in Dimension::ALL {
            map.serialize_entry(d.as_str(), self.node(d))?;
        }
        map.end()
    }
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

const VIDEO_TEMPLATES: [&str; 5] = [
    "{desc}",
    "{title}: {caption}",
    "{title} {caption}",
    "A playful take on {title}",
    "Viewers of {theme} videos",
];

const COMMENT_TEMPLATES: [&str; 5] = [
    "{comment}",
    "Moment reacted to: {comment}",
    "Knowledge in the comment: {comment}",
    "Wordplay in: {comment}",
    "Readers of: {comment}",
];

fn generate_nodes(
    templates: &[&str; 5],
    vars: &[(&str, &str)],
    generator: &dyn TextGenerator,
) -> Result<[String; 5], TotError> {
    let mut out: [String; 5] = Default::default();
    for d in Dimension::ALL {
        let mut prompt = Prompt::new(templates[d.index()]).instruction(d.instruction());
        for (k, v) in vars {
            prompt = prompt.var(k, v);
        }
        out[d.index()] = generator.generate(&prompt)?;
    }
    Ok(out)
}

/// Video tree from the title, caption, description and theme. Des uses the
/// description, or the caption when the description is empty.
pub fn build_video_tot(video: &VideoRecord, generator: &dyn TextGenerator) -> Result<ToTTree, TotError> {
    let caption = video.caption_text.trim();
    let description = video.description.trim();
    if caption.is_empty() && description.is_empty() {
        return Err(TotError::NoVideoText(video.video_id.clone()));
    }
    let desc = if description.is_empty() { caption } else { description };
    let caption = if caption.is_empty() { description } else { caption };
    let texts = generate_nodes(
        &VIDEO_TEMPLATES,
        &[
            ("desc", desc),
            ("title", video.title.trim()),
            ("caption", caption),
            ("theme", video.theme.trim()),
        ],
        generator,
    )?;
    Ok(ToTTree::new(texts, Origin::Video))
}

pub fn build_comment_tot(comment: &str, generator: &dyn TextGenerator) -> Result<ToTTree, TotError> {
    let comment = comment.trim();
    if comment.is_empty() {
        return Err(TotError::EmptyComment);
    }
    let texts = generate_nodes(&COMMENT_TEMPLATES, &[("comment", comment)], generator)?;
    Ok(ToTTree::new(texts, Origin::Comment))
}

// ---------------------------------------------------------------------------
// Knowledge enhancement
// ---------------------------------------------------------------------------

const NEGATIONS: [&str; 8] = ["is not", "isn't", "not", "never", "不是", "并非", "没有", "不"];
const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// Head term of a KB description: its first content token after leading
/// English articles.
pub fn description_head(description: &str) -> Option<String> {
    content_tokens(description)
        .into_iter()
        .find(|t| !ARTICLES.contains(&t.as_str()))
}

/// True when `sentence` negates `head` directly: a negation word followed by
/// the head, with at most whitespace and one article in between.
pub fn negates(sentence: &str, head: &str) -> bool {
    let lower = sentence.to_lowercase();
    let head = head.to_lowercase();
    for neg in NEGATIONS {
        let mut from = 0;
        while let Some(pos) = lower[from..].find(neg) {
            let after = lower[from + pos + neg.len()..].trim_start();
            let after = ARTICLES
                .iter()
                .find_map(|a| after.strip_prefix(a).filter(|r| r.starts_with(char::is_whitespace)))
                .map_or(after, str::trim_start);
            if after.starts_with(&head) {
                return true;
            }
            from += pos + neg.len();
        }
    }
    false
}

fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, c) in text.char_indices() {
        if matches!(c, '。' | '！' | '？' | '.' | '!' | '?' | '\n') {
            let end = i + c.len_utf8();
            out.push(&text[start..end]);
            start = end;
        }
    }
    if start < text.len() {
        out.push(&text[start..]);
    }
    out.into_iter().filter(|s| !s.trim().is_empty()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KnowledgeError {
    pub entity_id: String,
    pub sentence: String,
    pub head: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Enhancement {
    pub links: Vec<EntityLink>,
    pub errors: Vec<KnowledgeError>,
}

/// Links entities in the Kno node, drops Kno sentences that directly negate
/// a linked entity's description head, and appends each linked entity's
/// description once. The other four nodes never change. Without a usable
/// linker the tree comes back untouched with [`KnowledgeStatus::KbUnavailable`].
pub fn enhance_knowledge(
    tree: &ToTTree,
    linker: Option<&dyn EntityLinker>,
    generator: &dyn TextGenerator,
) -> Result<(ToTTree, Enhancement), TotError> {
    let mut out = tree.clone();
    let none = Enhancement {
        links: Vec::new(),
        errors: Vec::new(),
    };
    let kno = tree.text(Dimension::Kno);
    let links = match linker.map(|l| l.link(kno)) {
        Some(Ok(links)) => links,
        Some(Err(e)) => {
            log::warn!("entity linking failed, knowledge not enhanced: {e}");
            out.knowledge = KnowledgeStatus::KbUnavailable;
            return Ok((out, none));
        }
        None => {
            out.knowledge = KnowledgeStatus::KbUnavailable;
            return Ok((out, none));
        }
    };
    if links.is_empty() {
        out.knowledge = KnowledgeStatus::NoEntities;
        return Ok((out, none));
    }

    let mut errors = Vec::new();
    let mut kept = String::new();
    let mut offset = 0;
    for sentence in split_sentences(kno) {
        let start = kno[offset..].find(sentence).map_or(offset, |p| offset + p);
        let end = start + sentence.len();
        offset = end;
        let mut bad = false;
        for link in links.iter().filter(|l| l.start >= start && l.end <= end) {
            if let Some(head) = description_head(&link.description) {
                if negates(sentence, &head) {
                    errors.push(KnowledgeError {
                        entity_id: link.entity_id.clone(),
                        sentence: sentence.trim().to_string(),
                        head,
                    });
                    bad = true;
                }
            }
        }
        if !bad {
            kept.push_str(sentence);
        }
    }

    let mut facts: Vec<&str> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for link in &links {
        if seen.insert(link.entity_id.as_str()) && !link.description.trim().is_empty() {
            facts.push(link.description.trim());
        }
    }
    let prompt = Prompt::new("{kno} {facts}")
        .instruction("Extend the background knowledge with the facts below, correcting any contradictions.")
        .var("kno", kept.trim())
        .var("facts", &facts.join(" "));
    out.set_text(Dimension::Kno, generator.generate(&prompt)?);
    out.knowledge = KnowledgeStatus::Enhanced;
    Ok((out, Enhancement { links, errors }))
}

// ---------------------------------------------------------------------------
// Utility and weight optimization
// ---------------------------------------------------------------------------

/// `U(c, W) = sum_i w_i * f_i(c)`.
pub fn tot_utility(weights: &[f64; 5], f: &[f64; 5]) -> f64 {
    weights.iter().zip(f).map(|(w, f)| w * f).sum()
}

/// Default per-dimension utilities: cosine similarity between the comment
/// and each node's text. Empty nodes score 0.
pub fn dimension_utilities(comment: &str, tree: &ToTTree, embedder: &dyn Embedder) -> Result<[f64; 5], TotError> {
    let c = embedder.embed(comment)?;
    let mut f = [0.0; 5];
    for d in Dimension::ALL {
        let text = tree.text(d);
        if text.trim().is_empty() {
            continue;
        }
        f[d.index()] = cosine(&c, &embedder.embed(text)?).unwrap_or(0.0);
    }
    Ok(f)
}

/// Weights proportional to the (non-negative part of the) utilities,
/// summing to 1; uniform when every utility is at most 0.
pub fn init_weights_from_utilities(f: &[f64; 5]) -> [f64; 5] {
    let floored = f.map(|v| if v.is_finite() { v.max(0.0) } else { 0.0 });
    let sum: f64 = floored.iter().sum();
    if sum == 0.0 {
        return [INITIAL_WEIGHT; 5];
    }
    floored.map(|v| v / sum)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// `w - lr * f`, exactly as the update rule is written.
    #[default]
    DescentAsWritten,
    /// `w + lr * f`.
    Ascent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TotOptimizerConfig {
    pub learning_rate: f64,
    pub max_iters: usize,
    pub direction: Direction,
}

impl Default for TotOptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            max_iters: 1000,
            direction: Direction::DescentAsWritten,
        }
    }
}

impl TotOptimizerConfig {
    pub fn validate(&self) -> Result<(), TotError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TotError::Config("learning_rate must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(TotError::Config("max_iters must be positive".into()));
        }
        Ok(())
    }
}

pub const WEIGHT_STEP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    AllClamped,
    SmallStep,
    MaxIters,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizeTrace {
    pub iterations: usize,
    pub stop: StopReason,
    /// Weights after each iteration.
    pub history: Vec<[f64; 5]>,
}

/// One clamped update of every weight.
pub fn tot_step(weights: &[f64; 5], f: &[f64; 5], cfg: &TotOptimizerConfig) -> [f64; 5] {
    let sign = match cfg.direction {
        Direction::DescentAsWritten => -1.0,
        Direction::Ascent => 1.0,
    };
    std::array::from_fn(|i| (weights[i] + sign * cfg.learning_rate * f[i]).clamp(0.0, 1.0))
}

/// Iterates [`tot_step`] until every weight sits on 0 or 1, the largest
/// applied change drops below [`WEIGHT_STEP_TOL`], or `max_iters` is hit.
pub fn optimize_tot_weights(
    tree: &ToTTree,
    f: &[f64; 5],
    cfg: &TotOptimizerConfig,
) -> Result<(ToTTree, OptimizeTrace), TotError> {
    cfg.validate()?;
    if let Some(d) = Dimension::ALL.into_iter().find(|d| !f[d.index()].is_finite()) {
        return Err(TotError::NonFinite(d));
    }
    let mut w = tree.weights();
    let mut history = Vec::new();
    let mut stop = StopReason::MaxIters;
    while history.len() < cfg.max_iters {
        let next = tot_step(&w, f, cfg);
        let change = w.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        w = next;
        history.push(w);
        if w.iter().all(|&v| v == 0.0 || v == 1.0) {
            stop = StopReason::AllClamped;
            break;
        }
        if change < WEIGHT_STEP_TOL {
            stop = StopReason::SmallStep;
            break;
        }
    }
    let mut out = tree.clone();
    out.set_weights(w);
    Ok((
        out,
        OptimizeTrace {
            iterations: history.len(),
            stop,
            history,
        },
    ))
}

// ---------------------------------------------------------------------------
// Merge and regeneration
// ---------------------------------------------------------------------------

/// Dimensions the comment tree takes from the enhanced video tree.
pub const MERGED_DIMENSIONS: [Dimension; 3] = [Dimension::Kno, Dimension::Cre, Dimension::Aud];

pub fn merge_comment_tot(comment_tree: &ToTTree, video_tree: &ToTTree) -> ToTTree {
    let mut out = comment_tree.clone();
    for d in MERGED_DIMENSIONS {
        out.nodes[d.index()] = video_tree.nodes[d.index()].clone();
    }
    out.origin = Origin::Merged;
    out.knowledge = video_tree.knowledge;
    out
}

pub const REFINE_CONNECTIVE: &str = "，";

/// Highest-weight dimension for refining `comment`. Among tied nodes, one
/// whose text does not already contain the comment wins, then the earlier
/// dimension. Descent drives every weight to the floor, so ties are common.
pub fn refine_dimension(tree: &ToTTree, comment: &str) -> Dimension {
    let comment = comment.trim();
    let top = Dimension::ALL
        .iter()
        .map(|&d| tree.node(d).weight)
        .fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<Dimension> = Dimension::ALL
        .into_iter()
        .filter(|&d| tree.node(d).weight == top)
        .collect();
    tied.iter()
        .copied()
        .find(|&d| comment.is_empty() || !tree.text(d).contains(comment))
        .unwrap_or(tied[0])
}

/// Best comment followed by the text of [`refine_dimension`]'s node, joined
/// by [`REFINE_CONNECTIVE`]; the connective is dropped when that node is
/// empty.
pub fn refine_comment(best_comment: &str, tree: &ToTTree, generator: &dyn TextGenerator) -> Result<String, TotError> {
    let comment = best_comment.trim();
    if comment.is_empty() {
        return Err(TotError::EmptyComment);
    }
    let node = tree.text(refine_dimension(tree, comment)).trim();
    let template = if node.is_empty() {
        "{comment}".to_string()
    } else {
        format!("{{comment}}{REFINE_CONNECTIVE}{{node}}")
    };
    let prompt = Prompt::new(&template)
        .instruction("Rewrite the comment so that it draws on the highlighted thought while staying short.")
        .var("comment", comment)
        .var("node", node);
    Ok(generator.generate(&prompt)?)
}

/// Everything produced by [`run_tot_pipeline`].
#[derive(Debug, Clone, Serialize)]
pub struct TotOutcome {
    pub tree: ToTTree,
    pub refined_comment: String,
    pub utilities: [f64; 5],
    pub enhancement: Enhancement,
    pub trace: OptimizeTrace,
}

/// Video tree, knowledge enhancement, comment tree, merge, utility-based
/// weight initialization, weight optimization and regeneration.
pub fn run_tot_pipeline(
    video: &VideoRecord,
    comment: &str,
    linker: Option<&dyn EntityLinker>,
    embedder: &dyn Embedder,
    generator: &dyn TextGenerator,
    cfg: &TotOptimizerConfig,
) -> Result<TotOutcome, TotError> {
    let video_tree = build_video_tot(video, generator)?;
    let (enhanced, enhancement) = enhance_knowledge(&video_tree, linker, generator)?;
    let comment_tree = build_comment_tot(comment, generator)?;
    let mut merged = merge_comment_tot(&comment_tree, &enhanced);
    let utilities = dimension_utilities(comment, &merged, embedder)?;
    merged.set_weights(init_weights_from_utilities(&utilities));
    let (tree, trace) = optimize_tot_weights(&merged, &utilities, cfg)?;
    let refined_comment = refine_comment(comment, &tree, generator)?;
    Ok(TotOutcome {
        tree,
        refined_comment,
        utilities,
        enhancement,
        trace,
    })
}
