//! Semantic organization of incoming ideas.
//!
//! Each transcript is categorized by an inference provider through a
//! few-shot prompt that carries the live category list. The reply is parsed
//! as `CATEGORY;SUMMARY`; a new category creates an island, and the idea
//! always becomes a tree on the island of its category.

mod prompt;
mod provider;
mod topic;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use prompt::{
    build_prompt, build_repair_prompt, format_output, parse_output, prompt_categories, ParseError,
    ParsedOutput, FORMAT_RULE,
};
pub use provider::{
    mock_provider, ChatCompletionsProvider, EmptyKeywordTable, InferenceProvider, InferenceRaw,
    InferenceRequest, KeywordEntry, KeywordTable, MockProvider, ProviderError, DEFAULT_DEADLINE,
};
pub use topic::{FewShotExample, MockTableConfig, TopicConfig};

use crate::layout::place_island;
use crate::model::{
    CategoryLabel, EventKind, IslandId, SceneState, SessionEvent, Slot, TreeId, Utterance,
    UtteranceId, WordCountFlag,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrganizeError {
    #[error("transcript is empty")]
    EmptyTranscript,
    #[error("invalid topic configuration: {0}")]
    InvalidTopic(String),
    #[error("provider timed out after retry")]
    ProviderTimeout,
    #[error("provider failed after retry: {0}")]
    ProviderFailure(String),
    #[error("unparseable reply {raw:?} after repair attempt: {error}")]
    ParseFailure { raw: String, error: ParseError },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IslandAction {
    Created,
    Reused,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrganizeResult {
    pub category: CategoryLabel,
    pub summary: String,
    pub island_action: IslandAction,
    pub island_id: IslandId,
    pub tree_id: TreeId,
    pub slot: Slot,
    pub flags: Vec<WordCountFlag>,
}

/// A parsed reply together with the raw line it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Inferred {
    pub parsed: ParsedOutput,
    pub raw: InferenceRaw,
}

pub type InferenceOutcome = Result<Inferred, OrganizeError>;

/// Builds the request for `transcript` against the categories live in
/// `state`.
pub fn request_for(
    config: &TopicConfig,
    state: &SceneState,
    transcript: &str,
    deadline: Duration,
) -> Result<InferenceRequest, OrganizeError> {
    let live: Vec<CategoryLabel> = state.categories().cloned().collect();
    Ok(InferenceRequest {
        prompt: build_prompt(config, &live, transcript)?,
        transcript: transcript.trim().to_string(),
        deadline,
    })
}

fn call_with_retry(
    provider: &dyn InferenceProvider,
    request: &InferenceRequest,
) -> Result<InferenceRaw, OrganizeError> {
    let mut last = ProviderError::Timeout;
    for _ in 0..2 {
        let started = Instant::now();
        match provider.infer(request) {
            Ok(raw) if started.elapsed() <= request.deadline => return Ok(raw),
            Ok(_) => last = ProviderError::Timeout,
            Err(e) => last = e,
        }
    }
    Err(match last {
        ProviderError::Timeout => OrganizeError::ProviderTimeout,
        ProviderError::Failed(msg) => OrganizeError::ProviderFailure(msg),
    })
}

/// Calls the provider (one retry on failure) and parses the reply (one
/// repair attempt with the format rule restated). Blocking.
pub fn run_inference(
    provider: &dyn InferenceProvider,
    request: &InferenceRequest,
) -> InferenceOutcome {
    let raw = call_with_retry(provider, request)?;
    if let Ok(parsed) = parse_output(raw.as_str()) {
        return Ok(Inferred { parsed, raw });
    }
    let repair = InferenceRequest {
        prompt: build_repair_prompt(&request.prompt, raw.as_str()),
        ..request.clone()
    };
    let raw = call_with_retry(provider, &repair)?;
    match parse_output(raw.as_str()) {
        Ok(parsed) => Ok(Inferred { parsed, raw }),
        Err(error) => Err(OrganizeError::ParseFailure { raw: raw.0, error }),
    }
}

/// Turns an inference outcome into scene events against the landscape as it
/// is now. Failures produce a single `InferenceError` and no scene change.
pub fn apply_outcome(
    state: &SceneState,
    utterance_id: UtteranceId,
    outcome: InferenceOutcome,
    t: f64,
) -> (Result<OrganizeResult, OrganizeError>, Vec<SessionEvent>) {
    let mut seq = state.next_seq();
    let mut next = |kind| {
        let ev = SessionEvent::new(seq, t, kind);
        seq += 1;
        ev
    };
    let Inferred { parsed, raw } = match outcome {
        Ok(inferred) => inferred,
        Err(error) => {
            let ev = next(EventKind::InferenceError {
                utterance_id,
                reason: error.to_string(),
            });
            return (Err(error), vec![ev]);
        }
    };

    let mut events = vec![next(EventKind::Categorized {
        utterance_id,
        category: parsed.category.clone(),
        summary: parsed.summary.clone(),
        raw: raw.0,
        flags: parsed.flags.clone(),
    })];

    let (island_id, slot, island_action) = match state.island_by_category(&parsed.category) {
        Some(island) => (island.id, island.next_slot(), IslandAction::Reused),
        None => {
            let index = state.islands.len();
            let island_id = IslandId(index as u32);
            events.push(next(EventKind::IslandCreated {
                island_id,
                category: parsed.category.clone(),
                overview_pose: place_island(index, &state.params),
                radius: state.params.island_radius_body,
                pathway_radius: state.params.pathway_radius(),
            }));
            (island_id, Slot::Index(0), IslandAction::Created)
        }
    };
    let tree_id = TreeId(state.tree_count);
    events.push(next(EventKind::TreeAdded {
        tree_id,
        island_id,
        utterance_id,
        summary: parsed.summary.clone(),
        slot,
    }));

    let result = OrganizeResult {
        category: parsed.category,
        summary: parsed.summary,
        island_action,
        island_id,
        tree_id,
        slot,
        flags: parsed.flags,
    };
    (Ok(result), events)
}

/// Categorizes `utterance` and plans the resulting scene events. `state` must
/// already contain the utterance's submission.
pub fn organize(
    utterance: &Utterance,
    state: &SceneState,
    config: &TopicConfig,
    provider: &dyn InferenceProvider,
    deadline: Duration,
) -> (Result<OrganizeResult, OrganizeError>, Vec<SessionEvent>) {
    let outcome = request_for(config, state, &utterance.transcript, deadline)
        .and_then(|request| run_inference(provider, &request));
    apply_outcome(state, utterance.id, outcome, utterance.t.max(state.last_t))
}

/// Releases results strictly in ticket order, holding early arrivals.
#[derive(Debug, Clone)]
pub struct ReorderBuffer<T> {
    next: u64,
    held: BTreeMap<u64, T>,
}

impl<T> Default for ReorderBuffer<T> {
    fn default() -> Self {
        Self {
            next: 0,
            held: BTreeMap::new(),
        }
    }
}

impl<T> ReorderBuffer<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Next ticket that will be released.
    pub fn next_ticket(&self) -> u64 {
        self.next
    }

    pub fn pending(&self) -> usize {
        self.held.len()
    }

    /// Stores `item` under `ticket` and returns every item now releasable,
    /// in ticket order.
    pub fn push(&mut self, ticket: u64, item: T) -> Vec<(u64, T)> {
        if ticket >= self.next {
            self.held.insert(ticket, item);
        }
        let mut out = Vec::new();
        while let Some(item) = self.held.remove(&self.next) {
            out.push((self.next, item));
            self.next += 1;
        }
        out
    }
}
