//! Unit quaternion algebra, scalar-first `[q0, q1, q2, q3]`.
//!
//! The product is the Hamilton product and `R(q)` maps body-frame vectors to
//! the world frame, so `q_dot = 0.5 * q ⊗ [0, Ω]` for a body-frame rate `Ω`.

use std::ops::Mul;

use serde::{Deserialize, Serialize};

use crate::{Mat3, Vec3};

/// Unit quaternion `[q0, q]`. Normalised on construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Quaternion {
    q0: f64,
    q: Vec3,
}

impl Quaternion {
    pub fn identity() -> Self {
        Self {
            q0: 1.0,
            q: Vec3::zeros(),
        }
    }

    /// Builds a unit quaternion, renormalising the input. A zero input maps
    /// to the identity.
    pub fn new(q0: f64, q1: f64, q2: f64, q3: f64) -> Self {
        Self::from_parts(q0, Vec3::new(q1, q2, q3))
    }

    pub fn from_parts(q0: f64, q: Vec3) -> Self {
        let norm = (q0 * q0 + q.norm_squared()).sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Self::identity();
        }
        Self {
            q0: q0 / norm,
            q: q / norm,
        }
    }

    /// Wraps components without renormalising. Only for values that are unit
    /// by construction.
    pub(crate) fn from_parts_unchecked(q0: f64, q: Vec3) -> Self {
        Self { q0, q }
    }

    pub fn scalar(&self) -> f64 {
        self.q0
    }

    pub fn vector(&self) -> Vec3 {
        self.q
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.q0, self.q.x, self.q.y, self.q.z]
    }

    pub fn norm(&self) -> f64 {
        (self.q0 * self.q0 + self.q.norm_squared()).sqrt()
    }

    pub fn conjugate(&self) -> Self {
        Self {
            q0: self.q0,
            q: -self.q,
        }
    }

    /// `−q`, the same rotation on the other sheet of the double cover.
    pub fn negated(&self) -> Self {
        Self {
            q0: -self.q0,
            q: -self.q,
        }
    }

    /// Rotation matrix `R(q)` taking body-frame vectors to the world frame.
    pub fn to_rotation(&self) -> RotationMatrix {
        quat_to_rot(self)
    }

    /// Rotates a vector from the body frame into the world frame.
    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.to_rotation().0 * v
    }

    /// Advances the attitude under constant body rate `omega` for `dt`
    /// seconds using the closed-form exponential.
    pub fn integrate_body_rate(&self, omega: &Vec3, dt: f64) -> Self {
        let angle = omega.norm() * dt;
        if angle == 0.0 {
            return *self;
        }
        let axis = omega / omega.norm();
        let half = 0.5 * angle;
        let step = Self::from_parts_unchecked(half.cos(), axis * half.sin());
        quat_mul(self, &step)
    }
}

impl Default for Quaternion {
    fn default() -> Self {
        Self::identity()
    }
}

impl From<[f64; 4]> for Quaternion {
    fn from(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }
}

impl From<Quaternion> for [f64; 4] {
    fn from(q: Quaternion) -> Self {
        q.to_array()
    }
}

impl Mul for Quaternion {
    type Output = Quaternion;

    fn mul(self, rhs: Quaternion) -> Quaternion {
        quat_mul(&self, &rhs)
    }
}

/// Hamilton product `p ⊗ q`, renormalised.
///
/// In matrix form `[p0, −pᵀ; p, p0·I + [p×]] · [q0; q]`.
pub fn quat_mul(p: &Quaternion, q: &Quaternion) -> Quaternion {
    let q0 = p.q0 * q.q0 - p.q.dot(&q.q);
    let v = p.q * q.q0 + q.q * p.q0 + p.q.cross(&q.q);
    Quaternion::from_parts(q0, v)
}

/// Raw Hamilton product of arbitrary (not necessarily unit) 4-vectors.
/// Used by the kinematics where `q_dot` is not a unit quaternion.
pub(crate) fn hamilton_raw(p0: f64, p: &Vec3, q0: f64, q: &Vec3) -> (f64, Vec3) {
    (p0 * q0 - p.dot(q), q * p0 + p * q0 + p.cross(q))
}

/// Orthonormal rotation matrix, det = +1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(pub Mat3);

impl RotationMatrix {
    pub fn identity() -> Self {
        Self(Mat3::identity())
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }
}

impl Mul for RotationMatrix {
    type Output = RotationMatrix;

    fn mul(self, rhs: RotationMatrix) -> RotationMatrix {
        RotationMatrix(self.0 * rhs.0)
    }
}

impl Mul<Vec3> for RotationMatrix {
    type Output = Vec3;

    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

impl Mul<&Vec3> for &RotationMatrix {
    type Output = Vec3;

    fn mul(self, rhs: &Vec3) -> Vec3 {
        self.0 * rhs
    }
}

pub fn quat_to_rot(q: &Quaternion) -> RotationMatrix {
    let (q0, q1, q2, q3) = (q.q0, q.q.x, q.q.y, q.q.z);
    RotationMatrix(Mat3::new(
        1.0 - 2.0 * q2 * q2 - 2.0 * q3 * q3,
        2.0 * q1 * q2 - 2.0 * q0 * q3,
        2.0 * q1 * q3 + 2.0 * q0 * q2,
        2.0 * q1 * q2 + 2.0 * q0 * q3,
        1.0 - 2.0 * q1 * q1 - 2.0 * q3 * q3,
        2.0 * q2 * q3 - 2.0 * q0 * q1,
        2.0 * q1 * q3 - 2.0 * q0 * q2,
        2.0 * q2 * q3 + 2.0 * q0 * q1,
        1.0 - 2.0 * q1 * q1 - 2.0 * q2 * q2,
    ))
}

/// Attitude error `q_d* ⊗ q`, canonicalised to a non-negative scalar part so
/// the controller always steers along the short arc. At `q0 == 0` the vector
/// part is left as computed.
pub fn quat_error(q_d: &Quaternion, q: &Quaternion) -> Quaternion {
    let e = quat_mul(&q_d.conjugate(), q);
    if e.q0 < 0.0 {
        e.negated()
    } else {
        e
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Single-axis rotation `R_(axis, angle)`.
pub fn basic_rotation(axis: Axis, angle: f64) -> RotationMatrix {
    let (s, c) = angle.sin_cos();
    let m = match axis {
        Axis::X => Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c),
        Axis::Y => Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c),
        Axis::Z => Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
    };
    RotationMatrix(m)
}

/// Skew-symmetric cross-product matrix `[v×]`.
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}
