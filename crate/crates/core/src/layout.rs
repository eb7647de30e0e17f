//! Geometry of the landscape: overview island placement, tree slots along the
//! pathway, orb positions, the teleport alignment and the room/world mapping.
//!
//! All functions here are pure. Island-local coordinates are body scale with
//! the island center at the origin; landscape coordinates are mini scale.

use std::f64::consts::{FRAC_PI_4, PI};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::{wrap_angle, Pose2, Transform2, Vec2};
use crate::model::{Island, Mode, Orb, SceneState, TransitionMode, UserPose, TREE_SLOTS};

const SLOT_SPACING: f64 = FRAC_PI_4;
/// Radial offset of trees outside the pathway, as a fraction of island radius.
const TREE_OFFSET_RATIO: f64 = 0.15;
const OUTER_RING_GROWTH: f64 = 0.8;
const OUTER_RING_STAGGER: f64 = FRAC_PI_4 / 2.0;

#[derive(Debug, Error)]
pub enum LayoutError {
    #[error("slot {0} is outside 0..{max}", max = TREE_SLOTS)]
    SlotOutOfRange(u8),
    #[error("orbs only exist while immersed in an island")]
    NotImmersed,
    #[error("room mapping is not invertible (scale factor {0})")]
    DegenerateMapping(f64),
    #[error("invalid layout parameters: {0}")]
    InvalidParams(String),
    #[error("reading layout parameters: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing layout parameters: {0}")]
    Parse(#[from] toml::de::Error),
}

/// Sizes and radii used for placement. Distances in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutParams {
    pub island_radius_body: f64,
    pub island_radius_mini: f64,
    /// Pathway loop radius as a fraction of the island radius.
    pub pathway_radius_ratio: f64,
    pub slots_per_island: u8,
    /// Radius of the innermost overview ring (mini scale).
    pub overview_ring_radius: f64,
    /// How close to an orb a teleport trigger must be (body scale).
    pub orb_activation_radius: f64,
}

impl Default for LayoutParams {
    fn default() -> Self {
        Self {
            island_radius_body: 2.5,
            island_radius_mini: 0.35,
            pathway_radius_ratio: 0.6,
            slots_per_island: TREE_SLOTS,
            overview_ring_radius: 1.2,
            orb_activation_radius: 0.5,
        }
    }
}

impl LayoutParams {
    pub fn validate(&self) -> Result<(), LayoutError> {
        let radii = [
            ("island_radius_body", self.island_radius_body),
            ("island_radius_mini", self.island_radius_mini),
            ("overview_ring_radius", self.overview_ring_radius),
            ("orb_activation_radius", self.orb_activation_radius),
            ("pathway_radius_ratio", self.pathway_radius_ratio),
        ];
        for (name, value) in radii {
            if !(value.is_finite() && value > 0.0) {
                return Err(LayoutError::InvalidParams(format!(
                    "{name} must be > 0, got {value}"
                )));
            }
        }
        if self.slots_per_island != TREE_SLOTS {
            return Err(LayoutError::InvalidParams(format!(
                "slots_per_island must be {TREE_SLOTS}, got {}",
                self.slots_per_island
            )));
        }
        // trees stand at (ratio + offset) * R and must stay on the island
        if self.pathway_radius_ratio + TREE_OFFSET_RATIO >= 1.0 {
            return Err(LayoutError::InvalidParams(format!(
                "pathway_radius_ratio {} leaves no room for trees inside the island",
                self.pathway_radius_ratio
            )));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, LayoutError> {
        let params: LayoutParams = toml::from_str(text)?;
        params.validate()?;
        Ok(params)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LayoutError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn pathway_radius(&self) -> f64 {
        self.pathway_radius_ratio * self.island_radius_body
    }

    /// Landscape meters per island-local meter.
    pub fn mini_scale(&self) -> f64 {
        self.island_radius_mini / self.island_radius_body
    }

    /// Hex SHA-256 of the canonical JSON encoding; recorded in log headers.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("params serialize");
        Sha256::digest(&canonical)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Overview pose of the island created after `existing_count` others.
///
/// Eight islands per ring at 45° spacing; each further ring is 0.8x the base
/// radius wider and staggered by 22.5°. The island is turned so its pathway
/// entry faces the landscape center.
pub fn place_island(existing_count: usize, params: &LayoutParams) -> Pose2 {
    let per_ring = TREE_SLOTS as usize;
    let ring = existing_count / per_ring;
    let index = existing_count % per_ring;
    let radius = params.overview_ring_radius * (1.0 + OUTER_RING_GROWTH * ring as f64);
    let stagger = (ring % 2) as f64 * OUTER_RING_STAGGER;
    let angle = index as f64 * SLOT_SPACING + stagger;
    Pose2::new(Vec2::polar(radius, angle), wrap_angle(angle + 1.5 * PI))
}

/// Island-local poses of a tree and its signpost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreePlacement {
    pub tree: Pose2,
    pub signpost: Pose2,
}

/// Places slot `slot` just outside the pathway loop, facing inward.
pub fn place_tree(island: &Island, slot: u8) -> Result<TreePlacement, LayoutError> {
    if slot >= TREE_SLOTS {
        return Err(LayoutError::SlotOutOfRange(slot));
    }
    let angle = slot as f64 * SLOT_SPACING;
    let facing = wrap_angle(angle + PI);
    let tree_r = island.pathway.radius + TREE_OFFSET_RATIO * island.radius;
    let sign_r = island.pathway.radius + 0.5 * TREE_OFFSET_RATIO * island.radius;
    Ok(TreePlacement {
        tree: Pose2::new(Vec2::polar(tree_r, angle), facing),
        signpost: Pose2::new(Vec2::polar(sign_r, angle), facing),
    })
}

/// One orb per non-current island, in world coordinates.
///
/// Each orb sits on the bearing from the current island to the target
/// island in the overview: on the pathway loop for walk transitions, on the
/// island edge for dive transitions.
pub fn place_orbs(state: &SceneState, transition: TransitionMode) -> Result<Vec<Orb>, LayoutError> {
    let Mode::Immersed(current_id) = state.mode() else {
        return Err(LayoutError::NotImmersed);
    };
    let current = state.island(current_id).ok_or(LayoutError::NotImmersed)?;
    let origin = current.overview_pose.position;
    let orbs = state
        .islands
        .iter()
        .filter(|other| other.id != current_id)
        .map(|other| {
            let bearing = (other.overview_pose.position - origin).angle();
            let local_bearing = bearing - current.overview_pose.rotation;
            let local = match transition {
                TransitionMode::Walk => current.pathway.point_at(local_bearing),
                TransitionMode::Dive => Vec2::polar(current.radius, local_bearing),
            };
            Orb {
                target_island_id: other.id,
                pose: state.content.apply(local),
                pulse_count: other.unseen,
            }
        })
        .collect();
    Ok(orbs)
}

/// World transform for `target` that puts its pathway entry under the user
/// and turns the entry tangent onto the user's heading. The user stays put.
pub fn align_for_teleport(target: &Island, user: &UserPose) -> Transform2 {
    let tangent_angle = target.pathway.entry_tangent().angle();
    let rotation = wrap_angle(user.heading - tangent_angle);
    let entry = target.pathway.entry_point().rotated(rotation);
    Transform2::new(rotation, user.world_position - entry)
}

/// Affine map from tracking-space (room) coordinates to world coordinates:
/// rotate, then scale, then offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoomMapping {
    pub mode: Mode,
    pub origin_offset: Vec2,
    pub scale_factor: f64,
    pub rotation: f64,
}

impl RoomMapping {
    pub fn identity(mode: Mode) -> Self {
        Self {
            mode,
            origin_offset: Vec2::ZERO,
            scale_factor: 1.0,
            rotation: 0.0,
        }
    }

    fn check(&self) -> Result<(), LayoutError> {
        if self.scale_factor == 0.0 || !self.scale_factor.is_finite() {
            Err(LayoutError::DegenerateMapping(self.scale_factor))
        } else {
            Ok(())
        }
    }

    pub fn room_to_world(&self, room: Vec2) -> Result<Vec2, LayoutError> {
        self.check()?;
        Ok(room.rotated(self.rotation) * self.scale_factor + self.origin_offset)
    }

    pub fn world_to_room(&self, world: Vec2) -> Result<Vec2, LayoutError> {
        self.check()?;
        Ok(((world - self.origin_offset) * (1.0 / self.scale_factor)).rotated(-self.rotation))
    }

    pub fn heading_to_world(&self, room_heading: f64) -> f64 {
        wrap_angle(room_heading + self.rotation)
    }

    /// Same rotation and scale, offset chosen so `room` lands on `world`.
    pub fn recentered(
        &self,
        mode: Mode,
        room: Vec2,
        world: Vec2,
    ) -> Result<RoomMapping, LayoutError> {
        self.check()?;
        Ok(RoomMapping {
            mode,
            origin_offset: world - room.rotated(self.rotation) * self.scale_factor,
            ..*self
        })
    }
}

pub fn room_to_world(mapping: &RoomMapping, room_point: Vec2) -> Result<Vec2, LayoutError> {
    mapping.room_to_world(room_point)
}
