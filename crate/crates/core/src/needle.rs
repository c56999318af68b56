//! Semicircular suture-needle model and grasp parameterization.
//!
//! The needle body is the arc `(0, R cos a, R sin a)` for `a` in
//! `[pi/2, 3pi/2]`, expressed in the needle frame; it lies entirely in the
//! `x = 0` plane and spans from `(0, 0, R)` through `(0, -R, 0)` to
//! `(0, 0, -R)`.
//!
//! A grasp is parameterized by the arc coordinate `alpha` of the grasped
//! point plus spherical coordinates `(d, theta, phi)` of the gripper
//! position relative to that point. The grasping-point frame shares the
//! needle frame's axes and is centered on the grasped point, so converting
//! between the two frames is a pure translation.

use crate::error::{Error, Result};
use crate::geometry::{Pose, Quaternion, Vec3};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Lower end of the needle arc.
pub const ARC_MIN: f64 = PI / 2.0;
/// Upper end of the needle arc.
pub const ARC_MAX: f64 = 3.0 * PI / 2.0;

/// Goal grasp parameters: the handover point at the far end of the arc,
/// approached from the `-x` side of the needle plane.
pub const GOAL_ALPHA: f64 = 4.0 * PI / 3.0;
pub const GOAL_THETA: f64 = 0.0;
pub const GOAL_PHI: f64 = PI;

/// Physical needle description. Millimetres.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct NeedleSpec {
    /// Radius of the needle's circular arc.
    pub radius: f64,
    /// Radius of the wire the needle is bent from; collision geometry
    /// treats the needle as a torus segment of this tube radius.
    pub wire_radius: f64,
}

impl Default for NeedleSpec {
    fn default() -> Self {
        NeedleSpec { radius: 5.4, wire_radius: 0.2 }
    }
}

impl NeedleSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.wire_radius > 0.0 && self.wire_radius < self.radius) {
            return Err(Error::Config(format!(
                "needle spec requires 0 < wire_radius < radius, got radius={} wire_radius={}",
                self.radius, self.wire_radius
            )));
        }
        Ok(())
    }

    /// Point on the needle centerline at arc coordinate `alpha`.
    pub fn point(&self, alpha: f64) -> Result<Vec3> {
        check_arc(alpha)?;
        Ok(self.point_unchecked(alpha))
    }

    /// Unit tangent of the centerline at `alpha`, oriented toward
    /// increasing `alpha`.
    pub fn tangent(&self, alpha: f64) -> Result<Vec3> {
        check_arc(alpha)?;
        Ok(tangent_unchecked(alpha))
    }

    pub(crate) fn point_unchecked(&self, alpha: f64) -> Vec3 {
        Vec3::new(0.0, self.radius * alpha.cos(), self.radius * alpha.sin())
    }
}

fn tangent_unchecked(alpha: f64) -> Vec3 {
    Vec3::new(0.0, -alpha.sin(), alpha.cos())
}

const ARC_EPS: f64 = 1e-9;

fn check_arc(alpha: f64) -> Result<()> {
    if !(ARC_MIN - ARC_EPS..=ARC_MAX + ARC_EPS).contains(&alpha) {
        return Err(Error::Config(format!(
            "arc coordinate {alpha} outside needle arc [{ARC_MIN}, {ARC_MAX}]"
        )));
    }
    Ok(())
}

/// One sampled grasp: where on the arc the needle is held and from which
/// direction and distance the gripper approaches.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GraspSample {
    /// Arc coordinate of the grasped point, in `[pi/2, 3pi/2]`.
    pub alpha: f64,
    /// Distance from the grasped point to the gripper origin, mm.
    pub d: f64,
    /// Azimuth of the approach direction, rad.
    pub theta: f64,
    /// Inclination of the approach direction, rad, in `[0, pi]`.
    pub phi: f64,
}

impl GraspSample {
    pub fn validate(&self) -> Result<()> {
        check_arc(self.alpha)?;
        if self.d <= 0.0 {
            return Err(Error::Config(format!("grasp distance must be positive, got {}", self.d)));
        }
        if !(-ARC_EPS..=PI + ARC_EPS).contains(&self.phi) {
            return Err(Error::Config(format!("grasp inclination {} outside [0, pi]", self.phi)));
        }
        Ok(())
    }

    /// Gripper position relative to the grasped point (grasping-point
    /// frame, which is axis-aligned with the needle frame).
    pub fn direction_point(&self) -> Vec3 {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        Vec3::new(self.d * cp, self.d * sp * ct, self.d * sp * st)
    }
}

/// Per-parameter uniform sampling ranges for initial grasps.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GraspRanges {
    pub alpha: (f64, f64),
    pub d: (f64, f64),
    pub theta: (f64, f64),
    pub phi: (f64, f64),
}

impl Default for GraspRanges {
    fn default() -> Self {
        GraspRanges {
            alpha: (11.0 * PI / 18.0, 13.0 * PI / 18.0),
            d: (6.5, 8.0),
            theta: (0.0, 2.0 * PI),
            phi: (0.0, 0.4 * PI),
        }
    }
}

impl GraspRanges {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("alpha", self.alpha),
            ("d", self.d),
            ("theta", self.theta),
            ("phi", self.phi),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Config(format!("grasp range {name} invalid: [{lo}, {hi}]")));
            }
        }
        check_arc(self.alpha.0)?;
        check_arc(self.alpha.1)?;
        if self.d.0 <= 0.0 {
            return Err(Error::Config(format!("grasp range d must be positive, got {}", self.d.0)));
        }
        Ok(())
    }
}

pub(crate) fn sample_range(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Uniform grasp sample within `ranges`.
pub fn sample_initial_grasp(rng: &mut impl Rng, ranges: &GraspRanges) -> GraspSample {
    GraspSample {
        alpha: sample_range(rng, ranges.alpha),
        d: sample_range(rng, ranges.d),
        theta: sample_range(rng, ranges.theta),
        phi: sample_range(rng, ranges.phi),
    }
}

/// Orientation whose `+z` (approach) axis is the unit vector `approach`
/// and whose roll puts `tangent` into the local `x`-`z` jaw plane. Falls
/// back to projecting the frame `+z` (then `+y`) axis when `tangent` is
/// parallel to `approach`.
pub fn approach_frame(approach: Vec3, tangent: Vec3) -> Quaternion {
    debug_assert!((approach.norm() - 1.0).abs() < 1e-9);
    let jaw_normal = approach.cross(tangent).normalized().unwrap_or_else(|| {
        for fallback in [Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.0, 1.0, 0.0)] {
            if let Some(n) = approach.cross(fallback).normalized() {
                return n;
            }
        }
        unreachable!("approach axis cannot be parallel to both fallback axes")
    });
    let in_plane = jaw_normal.cross(approach);
    Quaternion::from_basis(in_plane, jaw_normal, approach)
}

/// End-effector pose in the needle frame realizing grasp `g`.
///
/// The gripper's `+z` (approach) axis points from the sampled direction
/// point toward the grasped point. Roll about the approach axis is fixed
/// so the jaw plane (local `x`-`z`) contains the needle tangent at the
/// grasped point; when tangent and approach axis are parallel the roll
/// falls back to projecting the needle-frame `+z` (then `+y`) axis.
pub fn grasp_pose_in_needle_frame(spec: &NeedleSpec, g: &GraspSample) -> Result<Pose> {
    spec.validate()?;
    g.validate()?;
    let grasp_pt = spec.point_unchecked(g.alpha);
    let offset = g.direction_point();
    let approach = (-offset)
        .normalized()
        .ok_or_else(|| Error::Config("grasp direction point coincides with grasp point".into()))?;
    let rotation = approach_frame(approach, tangent_unchecked(g.alpha));
    Ok(Pose::new(grasp_pt + offset, rotation))
}

/// Deterministic goal grasp pose for a given approach distance `d`.
pub fn goal_grasp(spec: &NeedleSpec, d: f64) -> Result<Pose> {
    grasp_pose_in_needle_frame(
        spec,
        &GraspSample { alpha: GOAL_ALPHA, d, theta: GOAL_THETA, phi: GOAL_PHI },
    )
}
