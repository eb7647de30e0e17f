//! Planar geometry shared by layout, navigation and the scene model.
//!
//! Everything lives on the ground plane. Distances are meters, angles are
//! radians measured counter-clockwise from +x.

use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Unit vector pointing along `angle`.
    pub fn from_angle(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self { x: c, y: s }
    }

    pub fn polar(radius: f64, angle: f64) -> Self {
        Self::from_angle(angle) * radius
    }

    pub fn length(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).length()
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn rotated(self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            x: c * self.x - s * self.y,
            y: s * self.x + c * self.y,
        }
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

/// Position plus facing direction.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub position: Vec2,
    pub rotation: f64,
}

impl Pose2 {
    pub const fn new(position: Vec2, rotation: f64) -> Self {
        Self { position, rotation }
    }
}

/// Rigid motion `p -> R(rotation) p + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Transform2 {
    pub rotation: f64,
    pub translation: Vec2,
}

impl Transform2 {
    pub const IDENTITY: Transform2 = Transform2 {
        rotation: 0.0,
        translation: Vec2::ZERO,
    };

    pub const fn new(rotation: f64, translation: Vec2) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn apply(&self, p: Vec2) -> Vec2 {
        p.rotated(self.rotation) + self.translation
    }

    pub fn apply_direction(&self, d: Vec2) -> Vec2 {
        d.rotated(self.rotation)
    }

    pub fn apply_pose(&self, pose: Pose2) -> Pose2 {
        Pose2::new(
            self.apply(pose.position),
            wrap_angle(pose.rotation + self.rotation),
        )
    }

    pub fn inverse(&self) -> Transform2 {
        Transform2 {
            rotation: -self.rotation,
            translation: (-self.translation).rotated(-self.rotation),
        }
    }
}

/// Wraps an angle into `(-PI, PI]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let mut a = angle % TAU;
    if a <= -PI {
        a += TAU;
    } else if a > PI {
        a -= TAU;
    }
    a
}

/// Absolute angular difference in `[0, PI]`.
pub fn angle_between(a: f64, b: f64) -> f64 {
    wrap_angle(a - b).abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_stays_in_half_open_range() {
        for k in -20..20 {
            let a = wrap_angle(k as f64 * 0.7);
            assert!(a > -PI && a <= PI, "{a}");
        }
        assert_eq!(wrap_angle(-PI), PI);
    }

    #[test]
    fn transform_inverse_round_trips() {
        let t = Transform2::new(1.1, Vec2::new(3.0, -2.0));
        let p = Vec2::new(0.25, 7.5);
        let q = t.inverse().apply(t.apply(p));
        assert!(q.distance(p) < 1e-12);
    }

    #[test]
    fn angle_between_is_symmetric() {
        assert!((angle_between(0.1, -0.1) - 0.2).abs() < 1e-15);
        assert!((angle_between(PI - 0.05, -PI + 0.05) - 0.1).abs() < 1e-12);
    }
}
