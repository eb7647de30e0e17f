//! Topic configurations: prompt prefix, seed categories, few-shot examples
//! and the keyword table for the offline provider.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::provider::{KeywordEntry, KeywordTable};
use super::OrganizeError;
use crate::model::CategoryLabel;

const PRESETS: &[(&str, &str)] = &[
    (
        "study1-communication",
        include_str!("../../topics/study1-communication.toml"),
    ),
    (
        "study1-health",
        include_str!("../../topics/study1-health.toml"),
    ),
    (
        "study2-sustainability",
        include_str!("../../topics/study2-sustainability.toml"),
    ),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub topic: String,
    pub categories: Vec<String>,
    pub transcript: String,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockTableConfig {
    pub fallback: String,
    #[serde(default)]
    pub keywords: Vec<KeywordEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopicConfig {
    pub id: String,
    pub topic_name: String,
    pub prefix_rules: String,
    pub seed_categories: Vec<CategoryLabel>,
    pub few_shot_examples: Vec<FewShotExample>,
    #[serde(default)]
    pub mock: Option<MockTableConfig>,
}

impl TopicConfig {
    pub fn preset_names() -> impl Iterator<Item = &'static str> {
        PRESETS.iter().map(|(name, _)| *name)
    }

    pub fn preset(name: &str) -> Result<Self, OrganizeError> {
        let (_, text) = PRESETS
            .iter()
            .find(|(id, _)| *id == name)
            .ok_or_else(|| OrganizeError::InvalidTopic(format!("unknown preset {name:?}")))?;
        Self::from_toml_str(text)
    }

    /// Resolves a preset name, falling back to reading `name` as a file path.
    pub fn resolve(name: &str) -> Result<Self, OrganizeError> {
        if PRESETS.iter().any(|(id, _)| *id == name) {
            Self::preset(name)
        } else {
            Self::load(name)
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, OrganizeError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| OrganizeError::InvalidTopic(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, OrganizeError> {
        let config: TopicConfig =
            toml::from_str(text).map_err(|e| OrganizeError::InvalidTopic(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), OrganizeError> {
        if self.few_shot_examples.is_empty() {
            return Err(OrganizeError::InvalidTopic(format!(
                "topic {:?} needs at least one few-shot example",
                self.id
            )));
        }
        let mut seen = HashSet::new();
        for seed in &self.seed_categories {
            if !seen.insert(seed.key()) {
                return Err(OrganizeError::InvalidTopic(format!(
                    "duplicate seed category {:?}",
                    seed.name()
                )));
            }
        }
        Ok(())
    }

    /// Keyword table for the offline provider, if the topic ships one.
    pub fn keyword_table(&self) -> Option<KeywordTable> {
        let mock = self.mock.as_ref()?;
        KeywordTable::new(mock.keywords.clone(), mock.fallback.clone()).ok()
    }
}
