//! Overview/immersed mode state machine, the dive and teleport transitions,
//! perspective-dependent signpost visibility and dwell tracking.
//!
//! | mode      | dive_in        | dive_out     | walk_teleport  |
//! |-----------|----------------|--------------|----------------|
//! | overview  | immersed(id)   | NotImmersed  | NotImmersed    |
//! | immersed  | NotInOverview  | overview     | immersed(to)   |
//!
//! No transition moves the user in world space. Dives and teleports move the
//! content instead: the target island is aligned so its pathway entry sits
//! under the user, and dive-out puts the user back at the overview vantage
//! they left from.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{angle_between, Transform2, Vec2};
use crate::layout::{align_for_teleport, LayoutError, RoomMapping};
use crate::model::{EventKind, IslandId, Mode, SceneState, SessionEvent, UserPose};

/// Minimum spacing between logged pose updates, seconds.
pub const POSE_LOG_INTERVAL: f64 = 0.1;
/// Suggested fade-out of the island left behind by a teleport, seconds.
pub const TELEPORT_FADE_S: f64 = 0.8;

#[derive(Debug, Error, PartialEq)]
pub enum NavError {
    #[error("action requires overview mode")]
    NotInOverview,
    #[error("action requires immersed mode")]
    NotImmersed,
    #[error("unknown island {0}")]
    UnknownIsland(IslandId),
    #[error("orb is {distance:.2} m away, activation radius is {radius:.2} m")]
    OrbOutOfRange { distance: f64, radius: f64 },
    #[error("time {found} precedes {last}")]
    TimeRegression { last: f64, found: f64 },
    #[error("degenerate room mapping")]
    DegenerateMapping,
}

impl From<LayoutError> for NavError {
    fn from(_: LayoutError) -> Self {
        NavError::DegenerateMapping
    }
}

/// Facing/distance window within which a signpost reveals its text.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisibilityRule {
    pub max_distance: f64,
    pub max_facing_angle: f64,
}

impl Default for VisibilityRule {
    fn default() -> Self {
        Self {
            max_distance: 1.5,
            max_facing_angle: 30f64.to_radians(),
        }
    }
}

/// A span of session time spent in one location. `end == None` is the
/// currently open segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DwellSegment {
    pub location: Mode,
    pub start: f64,
    pub end: Option<f64>,
}

impl DwellSegment {
    pub fn length(&self) -> Option<f64> {
        self.end.map(|end| end - self.start)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavState {
    pub user: UserPose,
    pub mapping: RoomMapping,
    pub dwell: Vec<DwellSegment>,
    pub last_t: f64,
    pub last_logged_pose_t: Option<f64>,
    /// Landscape transform in effect when the user last left the overview.
    overview_content: Transform2,
    /// Landscape point the user occupied when they last left the overview.
    vantage: Vec2,
}

impl Default for NavState {
    fn default() -> Self {
        Self::new()
    }
}

impl NavState {
    pub fn new() -> Self {
        Self {
            user: UserPose::default(),
            mapping: RoomMapping::identity(Mode::Overview),
            dwell: vec![DwellSegment {
                location: Mode::Overview,
                start: 0.0,
                end: None,
            }],
            last_t: 0.0,
            last_logged_pose_t: None,
            overview_content: Transform2::IDENTITY,
            vantage: Vec2::ZERO,
        }
    }

    pub fn mode(&self) -> Mode {
        self.user.mode
    }

    /// Dwell segments with the open one closed at `now`.
    pub fn dwell_until(&self, now: f64) -> Vec<DwellSegment> {
        self.dwell
            .iter()
            .map(|s| DwellSegment {
                end: Some(s.end.unwrap_or(now.max(s.start))),
                ..*s
            })
            .collect()
    }

    fn check_time(&self, scene: &SceneState, t: f64) -> Result<(), NavError> {
        let last = self.last_t.max(scene.last_t);
        if !t.is_finite() || t < last {
            return Err(NavError::TimeRegression { last, found: t });
        }
        Ok(())
    }

    fn switch_dwell(&mut self, location: Mode, t: f64) {
        if let Some(open) = self.dwell.last_mut() {
            open.end = Some(t);
        }
        self.dwell.push(DwellSegment {
            location,
            start: t,
            end: None,
        });
    }

    pub fn dive_in(
        &self,
        scene: &SceneState,
        island_id: IslandId,
        t: f64,
    ) -> Result<(NavState, SessionEvent), NavError> {
        self.check_time(scene, t)?;
        if self.mode() != Mode::Overview {
            return Err(NavError::NotInOverview);
        }
        let island = scene
            .island(island_id)
            .ok_or(NavError::UnknownIsland(island_id))?;
        let mode = Mode::Immersed(island_id);

        let mut next = self.clone();
        next.overview_content = scene.content;
        next.vantage = scene.content.inverse().apply(self.user.world_position);
        next.user.mode = mode;
        next.mapping =
            self.mapping
                .recentered(mode, self.user.room_position, self.user.world_position)?;
        next.switch_dwell(mode, t);
        next.last_t = t;

        let content = align_for_teleport(island, &next.user);
        let event = SessionEvent::new(
            scene.next_seq(),
            t,
            EventKind::DiveIn {
                island_id,
                user: next.user,
                content,
                mapping: next.mapping,
            },
        );
        Ok((next, event))
    }

    pub fn dive_out(
        &self,
        scene: &SceneState,
        t: f64,
    ) -> Result<(NavState, SessionEvent), NavError> {
        self.check_time(scene, t)?;
        let Mode::Immersed(from) = self.mode() else {
            return Err(NavError::NotImmersed);
        };
        let mut next = self.clone();
        next.user.mode = Mode::Overview;
        next.mapping = self.mapping.recentered(
            Mode::Overview,
            self.user.room_position,
            self.user.world_position,
        )?;
        next.switch_dwell(Mode::Overview, t);
        next.last_t = t;

        let rotation = self.overview_content.rotation;
        let content = Transform2::new(
            rotation,
            self.user.world_position - self.vantage.rotated(rotation),
        );
        let event = SessionEvent::new(
            scene.next_seq(),
            t,
            EventKind::DiveOut {
                from,
                user: next.user,
                content,
                mapping: next.mapping,
            },
        );
        Ok((next, event))
    }

    /// Teleports to the island whose orb the user is standing next to.
    pub fn walk_teleport(
        &self,
        scene: &SceneState,
        target: IslandId,
        t: f64,
    ) -> Result<(NavState, SessionEvent), NavError> {
        self.check_time(scene, t)?;
        let Mode::Immersed(from) = self.mode() else {
            return Err(NavError::NotImmersed);
        };
        let orb = scene
            .orbs
            .iter()
            .find(|o| o.target_island_id == target)
            .ok_or(NavError::UnknownIsland(target))?;
        let island = scene
            .island(target)
            .ok_or(NavError::UnknownIsland(target))?;
        let distance = self.user.world_position.distance(orb.pose);
        let radius = scene.params.orb_activation_radius;
        if distance > radius {
            return Err(NavError::OrbOutOfRange { distance, radius });
        }

        let mode = Mode::Immersed(target);
        let mut next = self.clone();
        next.user.mode = mode;
        next.mapping =
            self.mapping
                .recentered(mode, self.user.room_position, self.user.world_position)?;
        next.switch_dwell(mode, t);
        next.last_t = t;

        let event = SessionEvent::new(
            scene.next_seq(),
            t,
            EventKind::WalkTeleport {
                from,
                to: target,
                user: next.user,
                content: align_for_teleport(island, &next.user),
                mapping: next.mapping,
                fade_out_s: TELEPORT_FADE_S,
            },
        );
        Ok((next, event))
    }

    /// Records a tracked pose. Returns a `PoseUpdate` event only when the
    /// previous logged update is at least [`POSE_LOG_INTERVAL`] old.
    pub fn update_pose(
        &self,
        scene: &SceneState,
        room_position: Vec2,
        room_heading: f64,
        t: f64,
    ) -> Result<(NavState, Option<SessionEvent>), NavError> {
        if !t.is_finite() || t < self.last_t {
            return Err(NavError::TimeRegression {
                last: self.last_t,
                found: t,
            });
        }
        let mut next = self.clone();
        next.user.room_position = room_position;
        next.user.world_position = self.mapping.room_to_world(room_position)?;
        next.user.heading = self.mapping.heading_to_world(room_heading);
        next.last_t = t;

        let due = match self.last_logged_pose_t {
            None => true,
            // tolerate representation error at exactly 100 ms spacing
            Some(prev) => t - prev >= POSE_LOG_INTERVAL - 1e-9,
        };
        if !due || t < scene.last_t {
            return Ok((next, None));
        }
        next.last_logged_pose_t = Some(t);
        let event = SessionEvent::new(
            scene.next_seq(),
            t,
            EventKind::PoseUpdate { user: next.user },
        );
        Ok((next, Some(event)))
    }
}

/// Whether a signpost's text is shown. In the overview, pop-ups are always
/// visible; while immersed the user must be close and facing it.
pub fn signpost_visible(user: &UserPose, signpost: Vec2, rule: &VisibilityRule) -> bool {
    if user.mode == Mode::Overview {
        return true;
    }
    let offset = signpost - user.world_position;
    let distance = offset.length();
    if distance > rule.max_distance {
        return false;
    }
    distance == 0.0 || angle_between(user.heading, offset.angle()) <= rule.max_facing_angle
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{place_island, LayoutParams};
    use crate::model::{CategoryLabel, TransitionMode};
    use proptest::prelude::*;

    fn scene_with_islands(n: u32, transition: TransitionMode) -> SceneState {
        let params = LayoutParams::default();
        let mut scene = SceneState::new("t", params, transition);
        for i in 0..n {
            scene
                .apply(&SessionEvent::new(
                    scene.next_seq(),
                    0.0,
                    EventKind::IslandCreated {
                        island_id: IslandId(i),
                        category: CategoryLabel::new(&format!("C{i}")).unwrap(),
                        overview_pose: place_island(i as usize, &params),
                        radius: params.island_radius_body,
                        pathway_radius: params.pathway_radius(),
                    },
                ))
                .unwrap();
        }
        scene
    }

    fn commit(
        scene: &mut SceneState,
        step: impl FnOnce(&SceneState) -> Result<(NavState, SessionEvent), NavError>,
    ) -> NavState {
        let (nav, ev) = step(scene).unwrap();
        scene.apply(&ev).unwrap();
        nav
    }

    #[test]
    fn dive_in_and_guards() {
        let mut scene = scene_with_islands(3, TransitionMode::Dive);
        let nav = NavState::new();
        assert_eq!(
            nav.dive_out(&scene, 1.0).unwrap_err(),
            NavError::NotImmersed
        );
        assert_eq!(
            nav.dive_in(&scene, IslandId(7), 1.0).unwrap_err(),
            NavError::UnknownIsland(IslandId(7))
        );
        let nav = commit(&mut scene, |scene| nav.dive_in(scene, IslandId(1), 1.0));
        assert_eq!(nav.mode(), Mode::Immersed(IslandId(1)));
        assert_eq!(scene.mode(), Mode::Immersed(IslandId(1)));
        assert_eq!(
            nav.dive_in(&scene, IslandId(0), 2.0).unwrap_err(),
            NavError::NotInOverview
        );
        assert_eq!(scene.orbs.len(), 2);
    }

    #[test]
    fn dive_round_trip_keeps_landscape_and_vantage() {
        let mut scene = scene_with_islands(3, TransitionMode::Dive);
        let before = scene.islands.clone();
        let nav = NavState::new();
        let (nav, ev) = nav
            .update_pose(&scene, Vec2::new(0.3, -0.2), 0.5, 0.5)
            .unwrap();
        scene.apply(&ev.unwrap()).unwrap();
        let landscape_point = scene.content.inverse().apply(nav.user.world_position);

        let nav = commit(&mut scene, |scene| nav.dive_in(scene, IslandId(2), 1.0));
        // walk around inside the island
        let (nav, ev) = nav
            .update_pose(&scene, Vec2::new(2.0, 1.0), 1.0, 5.0)
            .unwrap();
        scene.apply(&ev.unwrap()).unwrap();
        let before_out = nav.user.world_position;
        let nav = commit(&mut scene, |scene| nav.dive_out(scene, 6.0));

        assert_eq!(nav.mode(), Mode::Overview);
        assert_eq!(scene.islands, before);
        assert!(scene.orbs.is_empty());
        assert_eq!(nav.user.world_position, before_out);
        // back at the same landscape point the dive started from
        let back = scene.content.inverse().apply(nav.user.world_position);
        assert!(back.distance(landscape_point) < 1e-12);
    }

    #[test]
    fn dive_in_aligns_entry_under_user() {
        let mut scene = scene_with_islands(2, TransitionMode::Dive);
        let (nav, ev) = NavState::new()
            .update_pose(&scene, Vec2::new(1.0, 2.0), 2.0, 0.0)
            .unwrap();
        scene.apply(&ev.unwrap()).unwrap();
        let nav = commit(&mut scene, |scene| nav.dive_in(scene, IslandId(0), 1.0));
        let island = scene.island(IslandId(0)).unwrap();
        let entry = scene.content.apply(island.pathway.entry_point());
        assert!(entry.distance(nav.user.world_position) < 1e-12);
        assert!(
            nav.mapping
                .room_to_world(nav.user.room_position)
                .unwrap()
                .distance(entry)
                < 1e-12
        );
    }

    #[test]
    fn teleport_guard_and_continuity() {
        let mut scene = scene_with_islands(3, TransitionMode::Walk);
        let nav = NavState::new();
        assert_eq!(
            nav.walk_teleport(&scene, IslandId(1), 0.0).unwrap_err(),
            NavError::NotImmersed
        );
        let nav = commit(&mut scene, |scene| nav.dive_in(scene, IslandId(0), 0.0));
        assert_eq!(scene.orbs.len(), 2);

        // stand 2 m from the orb
        let orb = scene
            .orbs
            .iter()
            .find(|o| o.target_island_id == IslandId(1))
            .unwrap()
            .pose;
        let away = nav
            .mapping
            .world_to_room(orb + Vec2::new(2.0, 0.0))
            .unwrap();
        let (nav, _) = nav.update_pose(&scene, away, 0.0, 1.0).unwrap();
        assert!(matches!(
            nav.walk_teleport(&scene, IslandId(1), 1.0),
            Err(NavError::OrbOutOfRange { .. })
        ));

        // A -> B -> A with no jump in world position
        let mut nav = nav;
        let mut t = 2.0;
        for target in [IslandId(1), IslandId(0)] {
            let orb = scene
                .orbs
                .iter()
                .find(|o| o.target_island_id == target)
                .unwrap()
                .pose;
            let near = nav
                .mapping
                .world_to_room(orb + Vec2::new(0.1, 0.0))
                .unwrap();
            let (moved, ev) = nav.update_pose(&scene, near, 0.7, t).unwrap();
            if let Some(ev) = ev {
                scene.apply(&ev).unwrap();
            }
            let before = moved.user.world_position;
            nav = commit(&mut scene, |scene| {
                moved.walk_teleport(scene, target, t + 0.5)
            });
            assert_eq!(nav.user.world_position - before, Vec2::ZERO);
            assert_eq!(scene.mode(), Mode::Immersed(target));
            let island = scene.island(target).unwrap();
            let entry = scene.content.apply(island.pathway.entry_point());
            assert!(entry.distance(before) < 1e-9);
            t += 1.0;
        }
    }

    #[test]
    fn pulse_counts_track_unseen_ideas() {
        use crate::model::{TreeId, Utterance, UtteranceId};
        let mut scene = scene_with_islands(3, TransitionMode::Dive);
        let nav = commit(&mut scene, |scene| {
            NavState::new().dive_in(scene, IslandId(0), 0.0)
        });
        let seq = scene.next_seq();
        let events = [
            SessionEvent::new(
                seq,
                1.0,
                EventKind::UtteranceSubmitted {
                    utterance: Utterance::new(UtteranceId(0), 1.0, "x").unwrap(),
                },
            ),
            SessionEvent::new(
                seq + 1,
                1.0,
                EventKind::Categorized {
                    utterance_id: UtteranceId(0),
                    category: CategoryLabel::new("C2").unwrap(),
                    summary: "x".into(),
                    raw: "C2;x".into(),
                    flags: vec![],
                },
            ),
            SessionEvent::new(
                seq + 2,
                1.0,
                EventKind::TreeAdded {
                    tree_id: TreeId(0),
                    island_id: IslandId(2),
                    utterance_id: UtteranceId(0),
                    summary: "x".into(),
                    slot: crate::model::Slot::Index(0),
                },
            ),
        ];
        for ev in &events {
            scene.apply(ev).unwrap();
        }
        let orb = scene
            .orbs
            .iter()
            .find(|o| o.target_island_id == IslandId(2))
            .unwrap();
        assert_eq!(orb.pulse_count, 1);
        let other = scene
            .orbs
            .iter()
            .find(|o| o.target_island_id == IslandId(1))
            .unwrap();
        assert_eq!(other.pulse_count, 0);
        let _ = commit(&mut scene, |scene| nav.dive_out(scene, 2.0));
        assert!(scene.islands.iter().all(|i| i.unseen == 0));
    }

    #[test]
    fn pose_throttle() {
        let scene = scene_with_islands(0, TransitionMode::Dive);
        let nav = NavState::new();
        let (nav, a) = nav
            .update_pose(&scene, Vec2::new(0.1, 0.0), 0.0, 1.0)
            .unwrap();
        let (nav, b) = nav
            .update_pose(&scene, Vec2::new(0.2, 0.0), 0.0, 1.05)
            .unwrap();
        assert!(a.is_some());
        assert!(b.is_none());
        let (nav, c) = nav
            .update_pose(&scene, Vec2::new(0.3, 0.0), 0.0, 1.1)
            .unwrap();
        assert!(c.is_some());
        assert_eq!(nav.user.world_position, Vec2::new(0.3, 0.0));
        assert!(matches!(
            nav.update_pose(&scene, Vec2::ZERO, 0.0, 0.5),
            Err(NavError::TimeRegression { .. })
        ));
    }

    #[test]
    fn dwell_accounting() {
        let mut scene = scene_with_islands(1, TransitionMode::Dive);
        let nav = commit(&mut scene, |scene| {
            NavState::new().dive_in(scene, IslandId(0), 10.0)
        });
        let segs = nav.dwell_until(130.0);
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].location, Mode::Overview);
        assert_eq!(segs[0].length(), Some(10.0));
        assert_eq!(segs[1].length(), Some(120.0));
        let total: f64 = segs.iter().filter_map(DwellSegment::length).sum();
        assert!((total - 130.0).abs() < 1e-9);
    }

    fn immersed_at_origin(heading: f64) -> UserPose {
        UserPose {
            heading,
            mode: Mode::Immersed(IslandId(0)),
            ..UserPose::default()
        }
    }

    #[test]
    fn signpost_examples() {
        let rule = VisibilityRule::default();
        let user = immersed_at_origin(0.0);
        assert!(signpost_visible(&user, Vec2::new(1.0, 0.0), &rule));
        assert!(!signpost_visible(
            &immersed_at_origin(std::f64::consts::PI),
            Vec2::new(1.0, 0.0),
            &rule
        ));
        let at = |d: f64, deg: f64| Vec2::polar(d, deg.to_radians());
        assert!(signpost_visible(&user, at(1.49, 29.0), &rule));
        assert!(!signpost_visible(&user, at(1.51, 29.0), &rule));
        assert!(!signpost_visible(&user, at(1.0, 31.0), &rule));
        let overview = UserPose::default();
        assert!(signpost_visible(&overview, Vec2::new(100.0, 0.0), &rule));
    }

    proptest! {
        #[test]
        fn visibility_monotone(d in 0.01..3.0f64, a in -3.1..3.1f64, shrink in 0.0..1.0f64) {
            let rule = VisibilityRule::default();
            let user = immersed_at_origin(0.0);
            if signpost_visible(&user, Vec2::polar(d, a), &rule) {
                prop_assert!(signpost_visible(&user, Vec2::polar(d * shrink.max(1e-6), a), &rule));
                prop_assert!(signpost_visible(&user, Vec2::polar(d, a * shrink), &rule));
            }
        }

        #[test]
        fn dwell_partitions_session(steps in proptest::collection::vec((0u8..3, 0.01..30.0f64), 1..40)) {
            let mut scene = scene_with_islands(2, TransitionMode::Dive);
            let mut nav = NavState::new();
            let mut t = 0.0;
            for (action, dt) in steps {
                t += dt;
                let result = match action {
                    0 => nav.dive_in(&scene, IslandId(0), t),
                    1 => nav.dive_in(&scene, IslandId(1), t),
                    _ => nav.dive_out(&scene, t),
                };
                match result {
                    Ok((n, ev)) => { scene.apply(&ev).unwrap(); nav = n; }
                    Err(NavError::NotInOverview | NavError::NotImmersed) => {}
                    Err(e) => panic!("unexpected {e}"),
                }
            }
            let end = t + 1.0;
            let segs = nav.dwell_until(end);
            let total: f64 = segs.iter().filter_map(DwellSegment::length).sum();
            prop_assert!((total - end).abs() < 1e-9);
            for pair in segs.windows(2) {
                prop_assert_eq!(pair[0].end, Some(pair[1].start));
            }
        }
    }
}
