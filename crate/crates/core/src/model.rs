//! Domain vocabulary shared by every other module: utterances, category
//! labels, islands and trees, the user pose, the session event stream and the
//! immutable [`SceneState`] obtained by folding that stream.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Pose2, Transform2, Vec2};
use crate::layout::{self, LayoutParams, RoomMapping};

/// Number of trees an island can show before further ideas overflow.
pub const TREE_SLOTS: u8 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UtteranceId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IslandId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TreeId(pub u32);

impl fmt::Display for UtteranceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "u{}", self.0)
    }
}

impl fmt::Display for IslandId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "island#{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("transcript is empty")]
    EmptyTranscript,
    #[error("time {0} is negative or not finite")]
    InvalidTime(f64),
    #[error("category label is empty")]
    EmptyCategory,
}

/// A transcribed idea as it enters the engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: UtteranceId,
    pub t: f64,
    pub transcript: String,
}

impl Utterance {
    pub fn new(id: UtteranceId, t: f64, transcript: impl Into<String>) -> Result<Self, ModelError> {
        let transcript = transcript.into();
        if transcript.trim().is_empty() {
            return Err(ModelError::EmptyTranscript);
        }
        if !t.is_finite() || t < 0.0 {
            return Err(ModelError::InvalidTime(t));
        }
        Ok(Self { id, t, transcript })
    }
}

/// Comparison key for category names: trimmed, whitespace collapsed,
/// case-folded.
pub fn normalize_category(name: &str) -> String {
    name.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Counts words, ignoring tokens without any alphanumeric character such as
/// a standalone `&`.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace()
        .filter(|w| w.chars().any(char::is_alphanumeric))
        .count()
}

/// Category name with display casing preserved and equality by normalized
/// form.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CategoryLabel {
    name: String,
    key: String,
    word_count: usize,
}

impl CategoryLabel {
    pub fn new(name: &str) -> Result<Self, ModelError> {
        let display = name.split_whitespace().collect::<Vec<_>>().join(" ");
        if display.is_empty() {
            return Err(ModelError::EmptyCategory);
        }
        Ok(Self {
            key: normalize_category(&display),
            word_count: word_count(&display),
            name: display,
        })
    }

    /// Display form.
    pub fn name(&self) -> &str {
        &self.name
    }

    /// Normalized comparison key.
    pub fn key(&self) -> &str {
        &self.key
    }

    pub fn word_count(&self) -> usize {
        self.word_count
    }
}

impl PartialEq for CategoryLabel {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}

impl Eq for CategoryLabel {}

impl std::hash::Hash for CategoryLabel {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.key.hash(state);
    }
}

impl fmt::Display for CategoryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

impl TryFrom<String> for CategoryLabel {
    type Error = ModelError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        CategoryLabel::new(&value)
    }
}

impl From<CategoryLabel> for String {
    fn from(value: CategoryLabel) -> Self {
        value.name
    }
}

/// Where a tree stands on its island's pathway.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Index(u8),
    /// Retained idea that has no spatial slot (island already shows eight).
    Overflow,
}

impl Slot {
    pub fn index(self) -> Option<u8> {
        match self {
            Slot::Index(i) => Some(i),
            Slot::Overflow => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub id: TreeId,
    pub utterance_id: UtteranceId,
    pub summary: String,
    pub slot: Slot,
    pub created_at: f64,
}

/// Closed circular walking loop centered on the island.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pathway {
    pub radius: f64,
}

impl Pathway {
    /// Angle (island-local) of the designated entry point.
    pub const ENTRY_ANGLE: f64 = -std::f64::consts::FRAC_PI_2;

    pub fn point_at(&self, angle: f64) -> Vec2 {
        Vec2::polar(self.radius, angle)
    }

    pub fn entry_point(&self) -> Vec2 {
        self.point_at(Self::ENTRY_ANGLE)
    }

    /// Counter-clockwise walking direction at the entry point (+x).
    pub fn entry_tangent(&self) -> Vec2 {
        Vec2::from_angle(Self::ENTRY_ANGLE + std::f64::consts::FRAC_PI_2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Island {
    pub id: IslandId,
    pub category: CategoryLabel,
    pub trees: Vec<Tree>,
    /// Pose in landscape (overview) coordinates.
    pub overview_pose: Pose2,
    /// Body-scale radius.
    pub radius: f64,
    pub pathway: Pathway,
    pub cloud_label: String,
    /// Ideas added while the user was immersed elsewhere and not yet seen.
    pub unseen: u32,
}

impl Island {
    pub fn placed_count(&self) -> usize {
        self.trees
            .iter()
            .filter(|t| t.slot != Slot::Overflow)
            .count()
    }

    pub fn next_slot(&self) -> Slot {
        let placed = self.placed_count();
        if placed < TREE_SLOTS as usize {
            Slot::Index(placed as u8)
        } else {
            Slot::Overflow
        }
    }
}

/// Peripheral indicator for a non-current island while immersed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Orb {
    pub target_island_id: IslandId,
    /// World position.
    pub pose: Vec2,
    pub pulse_count: u32,
}

/// Where the user is: above the whole landscape or inside one island.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Overview,
    Immersed(IslandId),
}

impl Mode {
    pub fn island(self) -> Option<IslandId> {
        match self {
            Mode::Overview => None,
            Mode::Immersed(id) => Some(id),
        }
    }
}

/// Which between-island transition a session uses; decides orb placement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionMode {
    /// Walk to an orb on the pathway and trigger a teleport.
    Walk,
    /// Dive in and out through the overview; orbs sit on the island edge.
    #[default]
    Dive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserPose {
    pub room_position: Vec2,
    pub world_position: Vec2,
    pub heading: f64,
    pub mode: Mode,
}

impl Default for UserPose {
    fn default() -> Self {
        Self {
            room_position: Vec2::ZERO,
            world_position: Vec2::ZERO,
            heading: 0.0,
            mode: Mode::Overview,
        }
    }
}

/// Word-length rule violations reported by the output parser.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "field", content = "words", rename_all = "snake_case")]
pub enum WordCountFlag {
    Category(usize),
    Summary(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    UtteranceSubmitted {
        utterance: Utterance,
    },
    Categorized {
        utterance_id: UtteranceId,
        category: CategoryLabel,
        summary: String,
        raw: String,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        flags: Vec<WordCountFlag>,
    },
    IslandCreated {
        island_id: IslandId,
        category: CategoryLabel,
        overview_pose: Pose2,
        radius: f64,
        pathway_radius: f64,
    },
    TreeAdded {
        tree_id: TreeId,
        island_id: IslandId,
        utterance_id: UtteranceId,
        summary: String,
        slot: Slot,
    },
    DiveIn {
        island_id: IslandId,
        user: UserPose,
        content: Transform2,
        mapping: RoomMapping,
    },
    DiveOut {
        from: IslandId,
        user: UserPose,
        content: Transform2,
        mapping: RoomMapping,
    },
    WalkTeleport {
        from: IslandId,
        to: IslandId,
        user: UserPose,
        content: Transform2,
        mapping: RoomMapping,
        /// Renderer hint for fading out the previous island.
        fade_out_s: f64,
    },
    PoseUpdate {
        user: UserPose,
    },
    InferenceError {
        utterance_id: UtteranceId,
        reason: String,
    },
    SessionEnded,
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::UtteranceSubmitted { .. } => "utterance_submitted",
            EventKind::Categorized { .. } => "categorized",
            EventKind::IslandCreated { .. } => "island_created",
            EventKind::TreeAdded { .. } => "tree_added",
            EventKind::DiveIn { .. } => "dive_in",
            EventKind::DiveOut { .. } => "dive_out",
            EventKind::WalkTeleport { .. } => "walk_teleport",
            EventKind::PoseUpdate { .. } => "pose_update",
            EventKind::InferenceError { .. } => "inference_error",
            EventKind::SessionEnded => "session_ended",
        }
    }
}

/// One record of the append-only session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub seq: u64,
    pub t: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl SessionEvent {
    pub fn new(seq: u64, t: f64, kind: EventKind) -> Self {
        Self { seq, t, kind }
    }
}

/// Lifecycle of an utterance inside the scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum UtteranceStage {
    Submitted,
    Categorized {
        category: CategoryLabel,
    },
    Placed {
        island_id: IslandId,
        tree_id: TreeId,
    },
    Failed,
}

#[derive(Debug, Error, PartialEq)]
pub enum FoldError {
    #[error("sequence gap: expected seq {expected}, got {found}")]
    SequenceGap { expected: u64, found: u64 },
    #[error("event time {found} precedes last event time {last}")]
    TimeRegression { last: f64, found: f64 },
    #[error("invalid reference: {0}")]
    InvalidReference(String),
    #[error("category {0:?} already has an island")]
    DuplicateCategory(String),
    #[error("tree slot {found:?} does not match next free slot {expected:?}")]
    SlotConflict { expected: Slot, found: Slot },
    #[error("{event} is not valid in mode {mode:?}")]
    InvalidTransition { event: &'static str, mode: Mode },
    #[error("session already ended")]
    SessionClosed,
}

/// Renderer-agnostic snapshot of the landscape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneState {
    pub last_seq: u64,
    pub last_t: f64,
    pub topic_config_id: String,
    pub params: LayoutParams,
    pub transition: TransitionMode,
    pub islands: Vec<Island>,
    pub orbs: Vec<Orb>,
    pub user: UserPose,
    pub mapping: RoomMapping,
    /// World transform of the rendered content: the landscape in overview,
    /// the current island while immersed.
    pub content: Transform2,
    pub utterances: BTreeMap<UtteranceId, UtteranceStage>,
    pub tree_count: u32,
    pub ended: bool,
}

impl SceneState {
    pub fn new(
        topic_config_id: impl Into<String>,
        params: LayoutParams,
        transition: TransitionMode,
    ) -> Self {
        Self {
            last_seq: 0,
            last_t: 0.0,
            topic_config_id: topic_config_id.into(),
            params,
            transition,
            islands: Vec::new(),
            orbs: Vec::new(),
            user: UserPose::default(),
            mapping: RoomMapping::identity(Mode::Overview),
            content: Transform2::IDENTITY,
            utterances: BTreeMap::new(),
            tree_count: 0,
            ended: false,
        }
    }

    pub fn mode(&self) -> Mode {
        self.user.mode
    }

    pub fn island(&self, id: IslandId) -> Option<&Island> {
        self.islands.get(id.0 as usize).filter(|i| i.id == id)
    }

    pub fn island_by_category(&self, category: &CategoryLabel) -> Option<&Island> {
        self.islands.iter().find(|i| &i.category == category)
    }

    pub fn categories(&self) -> impl Iterator<Item = &CategoryLabel> {
        self.islands.iter().map(|i| &i.category)
    }

    pub fn next_seq(&self) -> u64 {
        self.last_seq + 1
    }

    /// Applies `event` in place. On error the state is left untouched.
    pub fn apply(&mut self, event: &SessionEvent) -> Result<(), FoldError> {
        self.check(event)?;
        self.last_seq = event.seq;
        self.last_t = event.t;
        match &event.kind {
            EventKind::UtteranceSubmitted { utterance } => {
                self.utterances
                    .insert(utterance.id, UtteranceStage::Submitted);
            }
            EventKind::Categorized {
                utterance_id,
                category,
                ..
            } => {
                self.utterances.insert(
                    *utterance_id,
                    UtteranceStage::Categorized {
                        category: category.clone(),
                    },
                );
            }
            EventKind::IslandCreated {
                island_id,
                category,
                overview_pose,
                radius,
                pathway_radius,
            } => {
                self.islands.push(Island {
                    id: *island_id,
                    cloud_label: category.name().to_string(),
                    category: category.clone(),
                    trees: Vec::new(),
                    overview_pose: *overview_pose,
                    radius: *radius,
                    pathway: Pathway {
                        radius: *pathway_radius,
                    },
                    unseen: 0,
                });
                self.refresh_orbs();
            }
            EventKind::TreeAdded {
                tree_id,
                island_id,
                utterance_id,
                summary,
                slot,
            } => {
                let elsewhere =
                    matches!(self.mode(), Mode::Immersed(current) if current != *island_id);
                let island = &mut self.islands[island_id.0 as usize];
                island.trees.push(Tree {
                    id: *tree_id,
                    utterance_id: *utterance_id,
                    summary: summary.clone(),
                    slot: *slot,
                    created_at: event.t,
                });
                if elsewhere {
                    island.unseen += 1;
                }
                self.tree_count += 1;
                self.utterances.insert(
                    *utterance_id,
                    UtteranceStage::Placed {
                        island_id: *island_id,
                        tree_id: *tree_id,
                    },
                );
                self.refresh_orbs();
            }
            EventKind::DiveIn {
                island_id,
                user,
                content,
                mapping,
            } => {
                self.set_view(*user, *content, *mapping);
                self.islands[island_id.0 as usize].unseen = 0;
                self.refresh_orbs();
            }
            EventKind::DiveOut {
                user,
                content,
                mapping,
                ..
            } => {
                self.set_view(*user, *content, *mapping);
                for island in &mut self.islands {
                    island.unseen = 0;
                }
                self.refresh_orbs();
            }
            EventKind::WalkTeleport {
                to,
                user,
                content,
                mapping,
                ..
            } => {
                self.set_view(*user, *content, *mapping);
                self.islands[to.0 as usize].unseen = 0;
                self.refresh_orbs();
            }
            EventKind::PoseUpdate { user } => {
                self.user = *user;
            }
            EventKind::InferenceError { utterance_id, .. } => {
                self.utterances
                    .insert(*utterance_id, UtteranceStage::Failed);
            }
            EventKind::SessionEnded => {
                self.ended = true;
            }
        }
        Ok(())
    }

    fn set_view(&mut self, user: UserPose, content: Transform2, mapping: RoomMapping) {
        self.user = user;
        self.content = content;
        self.mapping = mapping;
    }

    fn refresh_orbs(&mut self) {
        self.orbs = match self.mode() {
            Mode::Overview => Vec::new(),
            Mode::Immersed(_) => layout::place_orbs(self, self.transition)
                .expect("immersed state always yields orbs"),
        };
    }

    fn require_island(&self, id: IslandId) -> Result<&Island, FoldError> {
        self.island(id)
            .ok_or_else(|| FoldError::InvalidReference(format!("unknown {id}")))
    }

    fn check(&self, event: &SessionEvent) -> Result<(), FoldError> {
        if self.ended {
            return Err(FoldError::SessionClosed);
        }
        if event.seq != self.next_seq() {
            return Err(FoldError::SequenceGap {
                expected: self.next_seq(),
                found: event.seq,
            });
        }
        if !event.t.is_finite() || event.t < self.last_t {
            return Err(FoldError::TimeRegression {
                last: self.last_t,
                found: event.t,
            });
        }
        let mode = self.mode();
        let invalid = |event: &'static str| FoldError::InvalidTransition { event, mode };
        match &event.kind {
            EventKind::UtteranceSubmitted { utterance } => {
                if self.utterances.contains_key(&utterance.id) {
                    return Err(FoldError::InvalidReference(format!(
                        "duplicate utterance {}",
                        utterance.id
                    )));
                }
            }
            EventKind::Categorized { utterance_id, .. }
            | EventKind::InferenceError { utterance_id, .. } => {
                match self.utterances.get(utterance_id) {
                    Some(UtteranceStage::Submitted) => {}
                    Some(_) => {
                        return Err(FoldError::InvalidReference(format!(
                            "utterance {utterance_id} already resolved"
                        )))
                    }
                    None => {
                        return Err(FoldError::InvalidReference(format!(
                            "unknown utterance {utterance_id}"
                        )))
                    }
                }
            }
            EventKind::IslandCreated {
                island_id,
                category,
                ..
            } => {
                if island_id.0 as usize != self.islands.len() {
                    return Err(FoldError::InvalidReference(format!(
                        "island id {} out of creation order",
                        island_id.0
                    )));
                }
                if self.island_by_category(category).is_some() {
                    return Err(FoldError::DuplicateCategory(category.name().to_string()));
                }
            }
            EventKind::TreeAdded {
                island_id,
                utterance_id,
                slot,
                ..
            } => {
                let island = self.require_island(*island_id)?;
                match self.utterances.get(utterance_id) {
                    Some(UtteranceStage::Categorized { category })
                        if *category == island.category => {}
                    Some(UtteranceStage::Categorized { category }) => {
                        return Err(FoldError::InvalidReference(format!(
                            "utterance {utterance_id} was categorized as {category}, not {}",
                            island.category
                        )))
                    }
                    _ => {
                        return Err(FoldError::InvalidReference(format!(
                            "utterance {utterance_id} is not awaiting placement"
                        )))
                    }
                }
                let expected = island.next_slot();
                if *slot != expected {
                    return Err(FoldError::SlotConflict {
                        expected,
                        found: *slot,
                    });
                }
            }
            EventKind::DiveIn {
                island_id, user, ..
            } => {
                self.require_island(*island_id)?;
                if mode != Mode::Overview || user.mode != Mode::Immersed(*island_id) {
                    return Err(invalid("dive_in"));
                }
            }
            EventKind::DiveOut { from, user, .. } => {
                if mode != Mode::Immersed(*from) || user.mode != Mode::Overview {
                    return Err(invalid("dive_out"));
                }
            }
            EventKind::WalkTeleport { from, to, user, .. } => {
                self.require_island(*to)?;
                if mode != Mode::Immersed(*from) || user.mode != Mode::Immersed(*to) || from == to {
                    return Err(invalid("walk_teleport"));
                }
            }
            EventKind::PoseUpdate { user } => {
                if user.mode != mode {
                    return Err(invalid("pose_update"));
                }
            }
            EventKind::SessionEnded => {}
        }
        Ok(())
    }
}

/// Pure fold step: returns the successor state without touching `state`.
pub fn fold_event(state: &SceneState, event: &SessionEvent) -> Result<SceneState, FoldError> {
    let mut next = state.clone();
    next.apply(event)?;
    Ok(next)
}

/// Folds a whole event list from `initial`.
pub fn fold_all<'a>(
    initial: SceneState,
    events: impl IntoIterator<Item = &'a SessionEvent>,
) -> Result<SceneState, FoldError> {
    let mut state = initial;
    for event in events {
        state.apply(event)?;
    }
    Ok(state)
}
