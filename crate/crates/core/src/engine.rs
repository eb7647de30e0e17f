//! A live session: the single writer that turns utterances and navigation
//! actions into validated, logged events.
//!
//! Every change goes through [`Session::commit`], which folds the candidate
//! events into a copy of the scene, appends them to the log and only then
//! publishes the new state.

use std::path::PathBuf;
use std::time::Duration;

use thiserror::Error;

use crate::geometry::Vec2;
use crate::layout::LayoutParams;
use crate::metrics::{MetricsReport, SessionAnalysis};
use crate::model::{
    fold_all, EventKind, FoldError, IslandId, ModelError, SceneState, SessionEvent, TransitionMode,
    Utterance, UtteranceId,
};
use crate::navigation::{NavError, NavState};
use crate::organizer::{
    apply_outcome, request_for, run_inference, InferenceOutcome, InferenceProvider,
    InferenceRequest, OrganizeError, OrganizeResult, ReorderBuffer, TopicConfig, DEFAULT_DEADLINE,
};
use crate::session_log::{Durability, LogError, SessionHeader, SessionWriter};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("transcript is empty")]
    EmptyTranscript,
    #[error(transparent)]
    Navigation(#[from] NavError),
    #[error(transparent)]
    Fold(#[from] FoldError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("no pending inference with ticket {0}")]
    UnknownTicket(u64),
    #[error("session has ended")]
    SessionClosed,
}

impl EngineError {
    /// Stable identifier used on the wire.
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::EmptyTranscript => "EmptyTranscript",
            EngineError::Navigation(e) => match e {
                NavError::NotInOverview => "NotInOverview",
                NavError::NotImmersed => "NotImmersed",
                NavError::UnknownIsland(_) => "UnknownIsland",
                NavError::OrbOutOfRange { .. } => "OrbOutOfRange",
                NavError::TimeRegression { .. } => "TimeRegression",
                NavError::DegenerateMapping => "DegenerateMapping",
            },
            EngineError::Fold(_) => "InvalidEvent",
            EngineError::Log(_) => "StorageFailure",
            EngineError::UnknownTicket(_) => "UnknownTicket",
            EngineError::SessionClosed => "SessionClosed",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub topic: TopicConfig,
    pub params: LayoutParams,
    pub transition: TransitionMode,
    pub deadline: Duration,
    /// Where to write the session file; `None` keeps events in memory only.
    pub log_path: Option<PathBuf>,
    pub durability: Durability,
}

impl SessionConfig {
    pub fn new(topic: TopicConfig) -> Self {
        Self {
            topic,
            params: LayoutParams::default(),
            transition: TransitionMode::default(),
            deadline: DEFAULT_DEADLINE,
            log_path: None,
            durability: Durability::default(),
        }
    }
}

/// Inference work handed out by [`Session::submit`]; run it anywhere and
/// hand the outcome back to [`Session::complete`].
#[derive(Debug, Clone)]
pub struct PendingInference {
    pub ticket: u64,
    pub utterance: Utterance,
    pub request: Result<InferenceRequest, OrganizeError>,
}

impl PendingInference {
    pub fn run(&self, provider: &dyn InferenceProvider) -> InferenceOutcome {
        match &self.request {
            Ok(request) => run_inference(provider, request),
            Err(e) => Err(e.clone()),
        }
    }
}

/// Result of one applied inference.
#[derive(Debug, Clone)]
pub struct Organized {
    pub utterance_id: UtteranceId,
    pub result: Result<OrganizeResult, OrganizeError>,
}

pub struct Session {
    header: SessionHeader,
    topic: TopicConfig,
    deadline: Duration,
    state: SceneState,
    nav: NavState,
    events: Vec<SessionEvent>,
    writer: Option<SessionWriter>,
    next_utterance: u64,
    next_ticket: u64,
    reorder: ReorderBuffer<(UtteranceId, InferenceOutcome)>,
}

impl Session {
    pub fn new(config: SessionConfig) -> Result<Self, EngineError> {
        let header = SessionHeader::new(config.topic.id.clone(), config.params, config.transition);
        let writer = match &config.log_path {
            Some(path) => Some(SessionWriter::create(path, &header, config.durability)?),
            None => None,
        };
        Ok(Self {
            state: header.initial_state(),
            header,
            topic: config.topic,
            deadline: config.deadline,
            nav: NavState::new(),
            events: Vec::new(),
            writer,
            next_utterance: 0,
            next_ticket: 0,
            reorder: ReorderBuffer::new(),
        })
    }

    pub fn header(&self) -> &SessionHeader {
        &self.header
    }

    pub fn topic(&self) -> &TopicConfig {
        &self.topic
    }

    pub fn snapshot(&self) -> &SceneState {
        &self.state
    }

    pub fn nav(&self) -> &NavState {
        &self.nav
    }

    pub fn events(&self) -> &[SessionEvent] {
        &self.events
    }

    /// Events with seq greater than `seq`.
    pub fn events_since(&self, seq: u64) -> &[SessionEvent] {
        let start = self.events.partition_point(|e| e.seq <= seq);
        &self.events[start..]
    }

    pub fn is_ended(&self) -> bool {
        self.state.ended
    }

    pub fn pending_inferences(&self) -> u64 {
        self.next_ticket - self.reorder.next_ticket()
    }

    fn commit(&mut self, events: Vec<SessionEvent>) -> Result<Vec<SessionEvent>, EngineError> {
        if events.is_empty() {
            return Ok(events);
        }
        let next = fold_all(self.state.clone(), &events)?;
        if let Some(writer) = &mut self.writer {
            writer.append_all(&events)?;
        }
        self.state = next;
        self.events.extend(events.iter().cloned());
        Ok(events)
    }

    fn ensure_open(&self) -> Result<(), EngineError> {
        if self.state.ended {
            Err(EngineError::SessionClosed)
        } else {
            Ok(())
        }
    }

    /// Logs the utterance and returns the inference to run for it. The
    /// prompt carries the categories live at this moment.
    pub fn submit(
        &mut self,
        transcript: &str,
        t: f64,
    ) -> Result<(PendingInference, SessionEvent), EngineError> {
        self.ensure_open()?;
        let utterance = Utterance::new(UtteranceId(self.next_utterance), t, transcript).map_err(
            |e| match e {
                ModelError::EmptyTranscript => EngineError::EmptyTranscript,
                _ => EngineError::Navigation(NavError::TimeRegression {
                    last: self.state.last_t,
                    found: t,
                }),
            },
        )?;
        let request = request_for(
            &self.topic,
            &self.state,
            &utterance.transcript,
            self.deadline,
        );
        let event = SessionEvent::new(
            self.state.next_seq(),
            t,
            EventKind::UtteranceSubmitted {
                utterance: utterance.clone(),
            },
        );
        let mut committed = self.commit(vec![event])?;
        self.next_utterance += 1;
        let ticket = self.next_ticket;
        self.next_ticket += 1;
        Ok((
            PendingInference {
                ticket,
                utterance,
                request,
            },
            committed.remove(0),
        ))
    }

    /// Applies an inference outcome. Outcomes are applied in submission
    /// order; an early arrival is held until its predecessors complete, in
    /// which case nothing is returned yet.
    pub fn complete(
        &mut self,
        pending: &PendingInference,
        outcome: InferenceOutcome,
        t: f64,
    ) -> Result<(Vec<Organized>, Vec<SessionEvent>), EngineError> {
        if pending.ticket >= self.next_ticket || pending.ticket < self.reorder.next_ticket() {
            return Err(EngineError::UnknownTicket(pending.ticket));
        }
        let released = self
            .reorder
            .push(pending.ticket, (pending.utterance.id, outcome));
        let mut organized = Vec::new();
        let mut all = Vec::new();
        for (_, (utterance_id, outcome)) in released {
            if self.state.ended {
                continue;
            }
            let (result, events) =
                apply_outcome(&self.state, utterance_id, outcome, t.max(self.state.last_t));
            all.extend(self.commit(events)?);
            organized.push(Organized {
                utterance_id,
                result,
            });
        }
        Ok((organized, all))
    }

    /// Submit, infer and apply in one blocking call.
    pub fn submit_blocking(
        &mut self,
        provider: &dyn InferenceProvider,
        transcript: &str,
        t: f64,
    ) -> Result<(Result<OrganizeResult, OrganizeError>, Vec<SessionEvent>), EngineError> {
        let (pending, submitted) = self.submit(transcript, t)?;
        let outcome = pending.run(provider);
        let (mut organized, events) = self.complete(&pending, outcome, t)?;
        let mut all = vec![submitted];
        all.extend(events);
        let result = organized
            .iter()
            .position(|o| o.utterance_id == pending.utterance.id)
            .map(|i| organized.swap_remove(i).result)
            .ok_or(EngineError::UnknownTicket(pending.ticket))?;
        Ok((result, all))
    }

    fn navigate(
        &mut self,
        step: impl FnOnce(&NavState, &SceneState) -> Result<(NavState, SessionEvent), NavError>,
    ) -> Result<SessionEvent, EngineError> {
        self.ensure_open()?;
        let (nav, event) = step(&self.nav, &self.state)?;
        let mut committed = self.commit(vec![event])?;
        self.nav = nav;
        Ok(committed.remove(0))
    }

    pub fn dive_in(&mut self, island_id: IslandId, t: f64) -> Result<SessionEvent, EngineError> {
        self.navigate(|nav, scene| nav.dive_in(scene, island_id, t))
    }

    pub fn dive_out(&mut self, t: f64) -> Result<SessionEvent, EngineError> {
        self.navigate(|nav, scene| nav.dive_out(scene, t))
    }

    /// Activates the orb leading to `target`.
    pub fn trigger(&mut self, target: IslandId, t: f64) -> Result<SessionEvent, EngineError> {
        self.navigate(|nav, scene| nav.walk_teleport(scene, target, t))
    }

    /// Tracks a room-space pose; returns the logged event if one was due.
    pub fn pose(
        &mut self,
        room_position: Vec2,
        room_heading: f64,
        t: f64,
    ) -> Result<Option<SessionEvent>, EngineError> {
        self.ensure_open()?;
        let (nav, event) = self
            .nav
            .update_pose(&self.state, room_position, room_heading, t)?;
        let committed = match event {
            Some(event) => self.commit(vec![event])?.pop(),
            None => None,
        };
        self.nav = nav;
        Ok(committed)
    }

    pub fn end(&mut self, t: f64) -> Result<SessionEvent, EngineError> {
        self.ensure_open()?;
        let event = SessionEvent::new(
            self.state.next_seq(),
            t.max(self.state.last_t),
            EventKind::SessionEnded,
        );
        Ok(self.commit(vec![event])?.remove(0))
    }

    /// Metrics over everything logged so far.
    pub fn metrics(&self) -> MetricsReport {
        let end = if self.state.ended {
            None
        } else {
            Some(self.state.last_t)
        };
        SessionAnalysis::from_events(&self.events, end).report()
    }
}
