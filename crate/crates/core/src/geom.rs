use core::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::math;

/// A 2-D point or vector in pixel units (x lateral, y axial and increasing downward).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    #[inline]
    pub fn norm(self) -> f64 {
        math::sqrt(self.dot(self))
    }

    /// Unit vector in the same direction, or `None` for a (near) zero vector.
    pub fn normalized(self) -> Option<Vec2> {
        let n = self.norm();
        if n > 1e-12 && n.is_finite() {
            Some(self * (1.0 / n))
        } else {
            None
        }
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Rotates the vector counter-clockwise (in a y-down frame: clockwise on screen) by `rad`.
    pub fn rotated(self, rad: f64) -> Vec2 {
        let (s, c) = (math::sin(rad), math::cos(rad));
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    #[inline]
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    #[inline]
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    #[inline]
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl SubAssign for Vec2 {
    #[inline]
    fn sub_assign(&mut self, o: Vec2) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    #[inline]
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Rigid rotation about a fixed center, used to map image coordinates into the
/// tissue-aligned ("rotated") frame where the retina runs horizontally.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameRotation {
    /// Tissue angle in degrees; positive means the retina descends to the right.
    pub theta_deg: f64,
    pub center: Vec2,
}

impl FrameRotation {
    pub fn identity(center: Vec2) -> Self {
        Self { theta_deg: 0.0, center }
    }

    pub fn new(theta_deg: f64, center: Vec2) -> Self {
        Self { theta_deg, center }
    }

    /// Image coordinates to the tissue-aligned frame (rotation by -theta).
    pub fn to_aligned(&self, p: Vec2) -> Vec2 {
        if self.theta_deg == 0.0 {
            return p;
        }
        (p - self.center).rotated(-math::deg_to_rad(self.theta_deg)) + self.center
    }

    /// Tissue-aligned frame back to image coordinates.
    pub fn to_image(&self, p: Vec2) -> Vec2 {
        if self.theta_deg == 0.0 {
            return p;
        }
        (p - self.center).rotated(math::deg_to_rad(self.theta_deg)) + self.center
    }

    /// Rotates a direction (no translation) into the aligned frame.
    pub fn dir_to_aligned(&self, d: Vec2) -> Vec2 {
        d.rotated(-math::deg_to_rad(self.theta_deg))
    }
}
