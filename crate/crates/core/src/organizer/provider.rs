//! Inference providers: the contract, a deterministic keyword mock and an
//! adapter for OpenAI-compatible chat-completion endpoints.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Per-call deadline.
pub const DEFAULT_DEADLINE: Duration = Duration::from_millis(2500);

/// One categorization call: the rendered prompt and the transcript it embeds.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceRequest {
    pub prompt: String,
    pub transcript: String,
    pub deadline: Duration,
}

/// Single-line reply from a provider.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InferenceRaw(pub String);

impl InferenceRaw {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("provider did not answer within the deadline")]
    Timeout,
    #[error("provider failed: {0}")]
    Failed(String),
}

pub trait InferenceProvider: Send + Sync {
    fn infer(&self, request: &InferenceRequest) -> Result<InferenceRaw, ProviderError>;
}

impl<P: InferenceProvider + ?Sized> InferenceProvider for std::sync::Arc<P> {
    fn infer(&self, request: &InferenceRequest) -> Result<InferenceRaw, ProviderError> {
        (**self).infer(request)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordEntry {
    pub keyword: String,
    pub category: String,
    /// Summary text; `{keyword}` is replaced by the matched keyword.
    pub summary: String,
}

#[derive(Debug, Error, PartialEq)]
#[error("keyword table is empty")]
pub struct EmptyKeywordTable;

/// Keyword-to-reply table driving the mock provider. Keys match
/// case-insensitively anywhere in the transcript.
#[derive(Debug, Clone, PartialEq)]
pub struct KeywordTable {
    entries: Vec<KeywordEntry>,
    lowered: Vec<String>,
    fallback: String,
}

impl KeywordTable {
    pub fn new(
        entries: Vec<KeywordEntry>,
        fallback: impl Into<String>,
    ) -> Result<Self, EmptyKeywordTable> {
        if entries.is_empty() {
            return Err(EmptyKeywordTable);
        }
        let lowered = entries.iter().map(|e| e.keyword.to_lowercase()).collect();
        Ok(Self {
            entries,
            lowered,
            fallback: fallback.into(),
        })
    }

    pub fn entries(&self) -> &[KeywordEntry] {
        &self.entries
    }

    pub fn fallback(&self) -> &str {
        &self.fallback
    }

    /// Longest keyword present in `transcript`; ties go to the earlier entry.
    pub fn best_match(&self, transcript: &str) -> Option<&KeywordEntry> {
        let haystack = transcript.to_lowercase();
        let mut best: Option<usize> = None;
        for (i, key) in self.lowered.iter().enumerate() {
            if key.is_empty() || !haystack.contains(key.as_str()) {
                continue;
            }
            if best.is_none_or(|b| key.chars().count() > self.lowered[b].chars().count()) {
                best = Some(i);
            }
        }
        best.map(|i| &self.entries[i])
    }
}

/// Deterministic stand-in for a language model.
pub fn mock_provider(transcript: &str, table: &KeywordTable) -> InferenceRaw {
    match table.best_match(transcript) {
        Some(entry) => InferenceRaw(format!(
            "{};{}",
            entry.category,
            entry.summary.replace("{keyword}", &entry.keyword)
        )),
        None => InferenceRaw(table.fallback.clone()),
    }
}

#[derive(Debug, Clone)]
pub struct MockProvider {
    table: KeywordTable,
}

impl MockProvider {
    pub fn new(table: KeywordTable) -> Self {
        Self { table }
    }

    pub fn table(&self) -> &KeywordTable {
        &self.table
    }
}

impl InferenceProvider for MockProvider {
    fn infer(&self, request: &InferenceRequest) -> Result<InferenceRaw, ProviderError> {
        Ok(mock_provider(&request.transcript, &self.table))
    }
}

/// Adapter for an OpenAI-compatible `/chat/completions` endpoint.
#[derive(Debug, Clone)]
pub struct ChatCompletionsProvider {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
}

impl ChatCompletionsProvider {
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<String>,
    ) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key,
        }
    }
}

impl InferenceProvider for ChatCompletionsProvider {
    fn infer(&self, request: &InferenceRequest) -> Result<InferenceRaw, ProviderError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(request.deadline))
            .build()
            .into();
        let body = serde_json::json!({
            "model": self.model,
            "temperature": 0,
            "messages": [{ "role": "user", "content": request.prompt }],
        });
        let mut call = agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", format!("Bearer {key}"));
        }
        let reply: serde_json::Value = match call.send_json(&body) {
            Ok(mut response) => response
                .body_mut()
                .read_json()
                .map_err(|e| classify(e, "decoding reply"))?,
            Err(e) => return Err(classify(e, "request")),
        };
        reply["choices"][0]["message"]["content"]
            .as_str()
            .map(|s| InferenceRaw(s.trim().to_string()))
            .ok_or_else(|| ProviderError::Failed("reply has no choices[0].message.content".into()))
    }
}

fn classify(error: ureq::Error, context: &str) -> ProviderError {
    match error {
        ureq::Error::Timeout(_) => ProviderError::Timeout,
        ureq::Error::Io(e) if e.kind() == std::io::ErrorKind::TimedOut => ProviderError::Timeout,
        other => ProviderError::Failed(format!("{context}: {other}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(k: &str, c: &str, s: &str) -> KeywordEntry {
        KeywordEntry {
            keyword: k.into(),
            category: c.into(),
            summary: s.into(),
        }
    }

    #[test]
    fn keyword_hit() {
        let table = KeywordTable::new(
            vec![entry(
                "elevator",
                "Transportation & Mobility",
                "elevator usage reduction",
            )],
            "Misc;unclassified idea",
        )
        .unwrap();
        assert_eq!(
            mock_provider("reducing campus Elevator usage", &table).as_str(),
            "Transportation & Mobility;elevator usage reduction"
        );
        assert_eq!(
            mock_provider("plant trees", &table).as_str(),
            "Misc;unclassified idea"
        );
    }

    #[test]
    fn longest_keyword_wins() {
        let entries = vec![
            entry("air", "A", "short"),
            entry("air conditioner", "B", "long"),
            entry("conditioner", "C", "middle"),
        ];
        let table = KeywordTable::new(entries.clone(), "F;x").unwrap();
        let transcript = "turn off the air conditioner at night";
        // oracle: scan every key, keep the longest present one
        let expected = entries
            .iter()
            .filter(|e| transcript.contains(&e.keyword))
            .max_by_key(|e| e.keyword.len())
            .unwrap();
        assert_eq!(
            mock_provider(transcript, &table).as_str(),
            format!("{};{}", expected.category, expected.summary)
        );
    }

    #[test]
    fn keyword_template() {
        let table =
            KeywordTable::new(vec![entry("bike", "T", "campus {keyword} sharing")], "F;x").unwrap();
        assert_eq!(
            mock_provider("more bike racks", &table).as_str(),
            "T;campus bike sharing"
        );
    }

    #[test]
    fn empty_table_rejected() {
        assert_eq!(KeywordTable::new(vec![], "F;x"), Err(EmptyKeywordTable));
    }
}
