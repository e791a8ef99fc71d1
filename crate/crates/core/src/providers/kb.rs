use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::markers::find_non_overlapping;
use super::ProviderError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KbEntity {
    pub aliases: Vec<String>,
    pub description: String,
}

/// Local fixture knowledge base: `{"entities": {id: {aliases, description}}}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    pub entities: BTreeMap<String, KbEntity>,
}

impl KnowledgeBase {
    pub fn load(path: &Path) -> Result<Self, ProviderError> {
        let err = |message: String| ProviderError::KnowledgeBase {
            path: path.display().to_string(),
            message,
        };
        let data = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        serde_json::from_str(&data).map_err(|e| err(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityLink {
    pub surface: String,
    /// Byte offsets into the linked text.
    pub start: usize,
    pub end: usize,
    pub entity_id: String,
    pub description: String,
}

pub trait EntityLinker: Send + Sync {
    fn link(&self, text: &str) -> Result<Vec<EntityLink>, ProviderError>;
}

/// Exact alias lookup with longest-match-first, non-overlapping spans.
#[derive(Debug, Clone)]
pub struct KbLinker {
    kb: KnowledgeBase,
    aliases: Vec<String>,
    owners: Vec<String>,
}

impl KbLinker {
    pub fn new(kb: KnowledgeBase) -> Self {
        let mut aliases = Vec::new();
        let mut owners = Vec::new();
        for (id, entity) in &kb.entities {
            for alias in &entity.aliases {
                if !alias.trim().is_empty() {
                    aliases.push(alias.trim().to_string());
                    owners.push(id.clone());
                }
            }
        }
        Self { kb, aliases, owners }
    }

    pub fn knowledge_base(&self) -> &KnowledgeBase {
        &self.kb
    }
}

impl EntityLinker for KbLinker {
    fn link(&self, text: &str) -> Result<Vec<EntityLink>, ProviderError> {
        Ok(find_non_overlapping(text, &self.aliases)
            .into_iter()
            .map(|m| {
                let id = &self.owners[m.pattern];
                EntityLink {
                    surface: text[m.start..m.end].to_string(),
                    start: m.start,
                    end: m.end,
                    entity_id: id.clone(),
                    description: self.kb.entities[id].description.clone(),
                }
            })
            .collect())
    }
}
