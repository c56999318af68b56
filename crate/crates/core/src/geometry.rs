//! Rigid-body pose algebra on SE(3).
//!
//! Positions are millimetres, angles are radians throughout the crate;
//! degrees appear only at CLI/config boundaries. Quaternions are stored
//! `(w, x, y, z)` and canonicalized to the `w >= 0` hemisphere so that a
//! rotation has exactly one representation (the double cover `q == -q` is
//! collapsed at construction time).
//!
//! All types are immutable values and all operations are pure functions,
//! so they can be shared freely between parallel workers.

use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Neg, Sub};

/// 3-vector used for positions (mm), directions and rotation vectors.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Unit vector in the same direction; `None` when the norm is ~0.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        if n < 1e-12 {
            None
        } else {
            Some(self * (1.0 / n))
        }
    }

    pub fn scaled(self, s: f64) -> Vec3 {
        self * s
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Unit quaternion `(w, x, y, z)` with `w >= 0`.
///
/// Every constructor normalizes and canonicalizes, so a held `Quaternion`
/// always satisfies `|norm - 1| < 1e-9` and represents its rotation
/// uniquely.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for Quaternion {
    fn default() -> Self {
        Quaternion::IDENTITY
    }
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    /// Normalizing, canonicalizing constructor. Panics on a ~zero norm,
    /// which only arises from programming errors, never from valid input.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        assert!(n > 1e-12, "quaternion norm too small: {n}");
        let inv = 1.0 / n;
        Quaternion { w: w * inv, x: x * inv, y: y * inv, z: z * inv }.canonicalized()
    }

    /// Picks the representative on the `w >= 0` hemisphere; ties at
    /// `w == 0` are broken lexicographically on `(x, y, z)`.
    pub fn canonicalized(self) -> Self {
        let neg = if self.w != 0.0 {
            self.w < 0.0
        } else if self.x != 0.0 {
            self.x < 0.0
        } else if self.y != 0.0 {
            self.y < 0.0
        } else {
            self.z < 0.0
        };
        if neg {
            Quaternion { w: -self.w, x: -self.x, y: -self.y, z: -self.z }
        } else {
            self
        }
    }

    pub fn norm(self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let a = axis.normalized().expect("rotation axis must be non-zero");
        let (s, c) = (angle * 0.5).sin_cos();
        Quaternion::new(c, a.x * s, a.y * s, a.z * s)
    }

    /// Exponential map: rotation vector (axis * angle) to quaternion.
    pub fn from_rotation_vector(rv: Vec3) -> Self {
        let angle = rv.norm();
        if angle < 1e-12 {
            // sin(a/2)/a ~ 1/2 for small a
            return Quaternion::new(1.0, rv.x * 0.5, rv.y * 0.5, rv.z * 0.5);
        }
        let (s, c) = (angle * 0.5).sin_cos();
        let k = s / angle;
        Quaternion::new(c, rv.x * k, rv.y * k, rv.z * k)
    }

    /// Log map: quaternion to its axis-angle 3-vector with magnitude in
    /// `[0, pi]`. Stable near the identity (no cancellation).
    pub fn to_axis_angle(self) -> AxisAngle {
        let q = self.canonicalized();
        let s = (q.x * q.x + q.y * q.y + q.z * q.z).sqrt();
        if s < 1e-12 {
            return AxisAngle(Vec3::ZERO);
        }
        // w >= 0 after canonicalization, so 2*atan2(s, w) lands in [0, pi].
        let angle = 2.0 * s.atan2(q.w);
        let k = angle / s;
        AxisAngle(Vec3::new(q.x * k, q.y * k, q.z * k))
    }

    /// Geodesic angle of this rotation, in `[0, pi]`.
    pub fn angle(self) -> f64 {
        let q = self.canonicalized();
        let s = (q.x * q.x + q.y * q.y + q.z * q.z).sqrt();
        2.0 * s.atan2(q.w)
    }

    /// Hamilton product.
    pub fn mul_quat(self, o: Quaternion) -> Quaternion {
        Quaternion::new(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }

    /// Inverse rotation (conjugate, since the norm is 1).
    pub fn inverse(self) -> Quaternion {
        Quaternion { w: self.w, x: -self.x, y: -self.y, z: -self.z }.canonicalized()
    }

    pub fn rotate(self, v: Vec3) -> Vec3 {
        // v' = v + 2 w (u x v) + 2 u x (u x v), u = (x, y, z)
        let u = Vec3::new(self.x, self.y, self.z);
        let t = u.cross(v) * 2.0;
        v + t * self.w + u.cross(t)
    }

    /// Geodesic angle between two rotations.
    pub fn angle_to(self, o: Quaternion) -> f64 {
        self.mul_quat(o.inverse()).angle()
    }

    /// Shortest-arc spherical interpolation, `s` in `[0, 1]`.
    pub fn slerp(self, other: Quaternion, s: f64) -> Quaternion {
        let delta = other.mul_quat(self.inverse());
        let aa = delta.to_axis_angle();
        Quaternion::from_rotation_vector(aa.0 * s).mul_quat(self)
    }

    /// Columns of the equivalent rotation matrix.
    pub fn basis(self) -> [Vec3; 3] {
        [
            self.rotate(Vec3::new(1.0, 0.0, 0.0)),
            self.rotate(Vec3::new(0.0, 1.0, 0.0)),
            self.rotate(Vec3::new(0.0, 0.0, 1.0)),
        ]
    }

    /// Quaternion from orthonormal basis vectors (columns of a rotation
    /// matrix). Shepperd's method, branch on the largest diagonal term.
    pub fn from_basis(x: Vec3, y: Vec3, z: Vec3) -> Quaternion {
        let (m00, m01, m02) = (x.x, y.x, z.x);
        let (m10, m11, m12) = (x.y, y.y, z.y);
        let (m20, m21, m22) = (x.z, y.z, z.z);
        let tr = m00 + m11 + m22;
        if tr > 0.0 {
            let s = (tr + 1.0).sqrt() * 2.0;
            Quaternion::new(0.25 * s, (m21 - m12) / s, (m02 - m20) / s, (m10 - m01) / s)
        } else if m00 > m11 && m00 > m22 {
            let s = (1.0 + m00 - m11 - m22).sqrt() * 2.0;
            Quaternion::new((m21 - m12) / s, 0.25 * s, (m01 + m10) / s, (m02 + m20) / s)
        } else if m11 > m22 {
            let s = (1.0 + m11 - m00 - m22).sqrt() * 2.0;
            Quaternion::new((m02 - m20) / s, (m01 + m10) / s, 0.25 * s, (m12 + m21) / s)
        } else {
            let s = (1.0 + m22 - m00 - m11).sqrt() * 2.0;
            Quaternion::new((m10 - m01) / s, (m02 + m20) / s, (m12 + m21) / s, 0.25 * s)
        }
    }
}

/// Axis-angle rotation: direction is the axis, magnitude the angle in
/// `[0, pi]` radians.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisAngle(pub Vec3);

impl AxisAngle {
    pub fn angle(self) -> f64 {
        self.0.norm()
    }

    pub fn to_quaternion(self) -> Quaternion {
        Quaternion::from_rotation_vector(self.0)
    }
}

/// Rigid transform: position in mm plus unit rotation quaternion.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub rotation: Quaternion,
}

impl Pose {
    pub const IDENTITY: Pose = Pose { position: Vec3::ZERO, rotation: Quaternion::IDENTITY };

    pub fn new(position: Vec3, rotation: Quaternion) -> Self {
        Pose { position, rotation }
    }

    pub fn from_translation(position: Vec3) -> Self {
        Pose { position, rotation: Quaternion::IDENTITY }
    }

    /// Homogeneous product `H_self * H_other`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            position: self.position + self.rotation.rotate(other.position),
            rotation: self.rotation.mul_quat(other.rotation),
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv_rot = self.rotation.inverse();
        Pose { position: -inv_rot.rotate(self.position), rotation: inv_rot }
    }

    /// Maps a point from this pose's local frame to the parent frame.
    pub fn transform_point(&self, p: Vec3) -> Vec3 {
        self.position + self.rotation.rotate(p)
    }

    /// Maps a point from the parent frame into this pose's local frame.
    pub fn inverse_transform_point(&self, p: Vec3) -> Vec3 {
        self.rotation.inverse().rotate(p - self.position)
    }
}

/// Rotation increment that takes `prev` to `current` by left
/// multiplication: `delta * prev == current`.
pub fn quat_delta(current: Quaternion, prev: Quaternion) -> Quaternion {
    current.mul_quat(prev.inverse())
}

/// Linear position / shortest-arc rotation interpolation. `s` must lie in
/// `[0, 1]`; anything else is a caller bug.
pub fn interpolate(a: &Pose, b: &Pose, s: f64) -> Pose {
    assert!((0.0..=1.0).contains(&s), "interpolation parameter {s} outside [0,1]");
    Pose {
        position: a.position + (b.position - a.position) * s,
        rotation: a.rotation.slerp(b.rotation, s),
    }
}

/// Planner metric: translation distance plus `rot_weight` (mm per radian)
/// times the geodesic rotation angle. Symmetric, zero iff the poses agree.
pub fn pose_distance(a: &Pose, b: &Pose, rot_weight: f64) -> f64 {
    debug_assert!(rot_weight > 0.0);
    (a.position - b.position).norm() + rot_weight * a.rotation.angle_to(b.rotation)
}

/// Default rotation weight for the planner metric: 1 rad costs as much as
/// 5 mm of translation, commensurate with the 5.4 mm needle scale.
pub const DEFAULT_ROT_WEIGHT: f64 = 5.0;
