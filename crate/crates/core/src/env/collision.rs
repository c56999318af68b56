//! Capsule-based collision world for one episode.
//!
//! Static bodies, all expressed in the needle frame: the needle arc (a
//! torus segment) and the grasping gripper that holds it. The moving body
//! is the regrasping gripper, queried at arbitrary poses.
//!
//! A gripper is two capsules in its local frame: the jaw along `+z` from
//! the origin (approach axis) and the wrist along `-z` behind it. Between
//! closed jaws runs a rectangular slot channel; needle material inside the
//! channel does not count as collision, which is what lets a gripper
//! accept the needle at the grasp pose. The channel cross-section must
//! cover the full band where the wire can sit between the jaw faces:
//! with jaw radius 1 mm and wire radius 0.2 mm the wire centerline passes
//! within 1.2 mm of the jaw axis, so the pass direction half-width is
//! 1.3 mm to leave margin, while the gap direction keeps the 1 mm
//! half-opening of the closed jaws.
//!
//! The needle solid is tested by sampling its centerline at `ARC_STEP`
//! arc-length spacing and testing each sample against the inflated
//! capsules; the reported predicate is therefore "penetration at sampling
//! resolution", which is the contract all callers (environment, planners,
//! tests) share.

use crate::geometry::{interpolate, Pose, Vec3};
use crate::needle::NeedleSpec;
use serde::{Deserialize, Serialize};

/// Arc-length spacing of needle centerline samples, mm.
pub const ARC_STEP: f64 = 0.05;
/// Swept-edge interpolation resolution: max translation per sub-step, mm.
/// The thinnest obstacle feature is the slot wall between the jaw-gap
/// half-opening (1 mm) and the jaw reach (1.2 mm), 0.2 mm across;
/// sub-steps must be finer than that or a sweep can tunnel through it.
pub const SWEEP_TRANSLATION_RES: f64 = 0.1;
/// Swept-edge interpolation resolution: max rotation per sub-step, rad.
/// 0.5 deg at the needle's far extremity (about 13 mm lever arm) moves
/// material roughly 0.11 mm, matching the translation resolution.
pub const SWEEP_ROTATION_RES: f64 = 0.5 * std::f64::consts::PI / 180.0;
/// Needle arc length within this distance of the held point is exempt
/// from collision against the grasping gripper, mm.
pub const GRASP_EXCLUSION_ARC: f64 = 1.5;

/// Gripper collision solid parameters, local frame, mm.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GripperSpec {
    /// Jaw capsule length along `+z`.
    pub jaw_length: f64,
    /// Jaw capsule radius.
    pub jaw_radius: f64,
    /// Slot channel half-extent along local `x` (needle pass direction).
    pub slot_half_width: f64,
    /// Slot channel half-extent along local `y` (jaw opening direction).
    pub slot_half_gap: f64,
    /// Wrist capsule length along `-z`.
    pub wrist_length: f64,
    /// Wrist capsule radius.
    pub wrist_radius: f64,
}

impl Default for GripperSpec {
    fn default() -> Self {
        GripperSpec {
            jaw_length: 9.0,
            jaw_radius: 1.0,
            slot_half_width: 1.3,
            slot_half_gap: 1.0,
            wrist_length: 15.0,
            wrist_radius: 2.5,
        }
    }
}

impl GripperSpec {
    pub fn validate(&self) -> crate::Result<()> {
        let ok = self.jaw_length > 0.0
            && self.jaw_radius > 0.0
            && self.slot_half_width > 0.0
            && self.slot_half_gap > 0.0
            && self.wrist_length >= 0.0
            && self.wrist_radius >= 0.0;
        if !ok {
            return Err(crate::Error::Config(format!("gripper spec has non-positive extent: {self:?}")));
        }
        Ok(())
    }

    /// Farthest reach of the solid from the gripper origin; used for
    /// conservative bounding volumes.
    pub fn reach(&self) -> f64 {
        (self.jaw_length + self.jaw_radius).max(self.wrist_length + self.wrist_radius)
    }
}

/// Immutable per-episode collision scene.
#[derive(Clone, Debug)]
pub struct CollisionWorld {
    needle: NeedleSpec,
    gripper: GripperSpec,
    grasping_ee: Pose,
    held_alpha: f64,
    arc_alphas: Vec<f64>,
    arc_points: Vec<Vec3>,
    grasp_jaw: (Vec3, Vec3),
    grasp_wrist: (Vec3, Vec3),
}

impl CollisionWorld {
    /// Builds the scene for a needle held by `grasping_ee` (pose in the
    /// needle frame) at arc coordinate `held_alpha`.
    pub fn new(needle: NeedleSpec, gripper: GripperSpec, grasping_ee: Pose, held_alpha: f64) -> Self {
        let arc_span = crate::needle::ARC_MAX - crate::needle::ARC_MIN;
        let n = ((arc_span * needle.radius) / ARC_STEP).ceil() as usize;
        let mut arc_alphas = Vec::with_capacity(n + 1);
        let mut arc_points = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let alpha = crate::needle::ARC_MIN + arc_span * (i as f64) / (n as f64);
            arc_alphas.push(alpha);
            arc_points.push(needle.point_unchecked(alpha));
        }
        let grasp_jaw = jaw_segment(&gripper, &grasping_ee);
        let grasp_wrist = wrist_segment(&gripper, &grasping_ee);
        CollisionWorld {
            needle,
            gripper,
            grasping_ee,
            held_alpha,
            arc_alphas,
            arc_points,
            grasp_jaw,
            grasp_wrist,
        }
    }

    pub fn needle_spec(&self) -> &NeedleSpec {
        &self.needle
    }

    pub fn gripper_spec(&self) -> &GripperSpec {
        &self.gripper
    }

    pub fn grasping_ee(&self) -> &Pose {
        &self.grasping_ee
    }

    /// True iff the regrasping gripper at `ee` (needle frame) intersects
    /// the needle (outside its slot channel) or the grasping gripper.
    pub fn ee_collides(&self, ee: &Pose) -> bool {
        self.gripper_hits_needle(ee, None) || self.grippers_collide(ee)
    }

    /// True iff the held needle intersects the grasping gripper outside
    /// the slot channel and the exclusion arc around the held point.
    pub fn needle_vs_grasping_gripper(&self) -> bool {
        let ee = self.grasping_ee;
        self.gripper_hits_needle(&ee, Some(self.held_alpha))
    }

    /// Swept check of the straight pose edge `from -> to`, `from`
    /// exclusive and `to` inclusive; `from` is assumed already validated.
    pub fn edge_collides(&self, from: &Pose, to: &Pose) -> bool {
        let steps = sweep_steps(from, to);
        for i in 1..=steps {
            let pose = interpolate(from, to, i as f64 / steps as f64);
            if self.ee_collides(&pose) {
                return true;
            }
        }
        false
    }

    fn gripper_hits_needle(&self, ee: &Pose, exclusion_alpha: Option<f64>) -> bool {
        let g = &self.gripper;
        let wire = self.needle.wire_radius;
        let jaw_tol = g.jaw_radius + wire;
        let wrist_tol = g.wrist_radius + wire;

        // Every centerline point lies within `radius` of the needle-frame
        // origin, so a capsule farther than that from the origin cannot
        // touch any of them.
        let jaw = jaw_segment(g, ee);
        let wrist = wrist_segment(g, ee);
        let jaw_near =
            dist_sq_point_segment(Vec3::ZERO, jaw.0, jaw.1).sqrt() - self.needle.radius <= jaw_tol;
        let wrist_near = g.wrist_length > 0.0
            && dist_sq_point_segment(Vec3::ZERO, wrist.0, wrist.1).sqrt() - self.needle.radius
                <= wrist_tol;
        if !jaw_near && !wrist_near {
            return false;
        }

        let [bx, by, bz] = ee.rotation.basis();
        let excl = exclusion_alpha.map(|held| {
            let half = GRASP_EXCLUSION_ARC / self.needle.radius;
            (held - half, held + half)
        });

        let jaw_tol_sq = jaw_tol * jaw_tol;
        let wrist_tol_sq = wrist_tol * wrist_tol;
        for (i, p) in self.arc_points.iter().enumerate() {
            if let Some((lo, hi)) = excl {
                let a = self.arc_alphas[i];
                if a >= lo && a <= hi {
                    continue;
                }
            }
            let v = *p - ee.position;
            let lx = v.dot(bx);
            let ly = v.dot(by);
            let lz = v.dot(bz);

            if jaw_near {
                let t = lz.clamp(0.0, g.jaw_length);
                let dz = lz - t;
                // The slot is cut clear through the jaw tip (the finger
                // gap is open at the distal end), so the exemption has no
                // upper z bound; past jaw_length + jaw_tol the capsule
                // cannot reach the wire anyway. It is closed at z = 0
                // where the fingers meet the clevis.
                if lx * lx + ly * ly + dz * dz < jaw_tol_sq
                    && !(lx.abs() <= g.slot_half_width
                        && ly.abs() <= g.slot_half_gap
                        && lz >= 0.0)
                {
                    return true;
                }
            }
            if wrist_near {
                let t = lz.clamp(-g.wrist_length, 0.0);
                let dz = lz - t;
                if lx * lx + ly * ly + dz * dz < wrist_tol_sq {
                    return true;
                }
            }
        }
        false
    }

    fn grippers_collide(&self, ee: &Pose) -> bool {
        let g = &self.gripper;
        let jaw = jaw_segment(g, ee);
        let wrist = wrist_segment(g, ee);
        let jj = g.jaw_radius + g.jaw_radius;
        let jw = g.jaw_radius + g.wrist_radius;
        let ww = g.wrist_radius + g.wrist_radius;
        dist_sq_segment_segment(jaw.0, jaw.1, self.grasp_jaw.0, self.grasp_jaw.1) < jj * jj
            || dist_sq_segment_segment(jaw.0, jaw.1, self.grasp_wrist.0, self.grasp_wrist.1) < jw * jw
            || dist_sq_segment_segment(wrist.0, wrist.1, self.grasp_jaw.0, self.grasp_jaw.1)
                < jw * jw
            || dist_sq_segment_segment(wrist.0, wrist.1, self.grasp_wrist.0, self.grasp_wrist.1)
                < ww * ww
    }

    /// Axis-aligned bounds (needle frame) enclosing the needle and both
    /// gripper solids at the given regrasping poses, grown by `margin`.
    pub fn bounds(&self, regrasp_poses: &[Pose], margin: f64) -> (Vec3, Vec3) {
        let mut lo = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = Vec3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        let mut grow = |p: Vec3, r: f64| {
            lo.x = lo.x.min(p.x - r);
            lo.y = lo.y.min(p.y - r);
            lo.z = lo.z.min(p.z - r);
            hi.x = hi.x.max(p.x + r);
            hi.y = hi.y.max(p.y + r);
            hi.z = hi.z.max(p.z + r);
        };
        let nr = self.needle.radius + self.needle.wire_radius;
        grow(Vec3::ZERO, nr);
        let reach = self.gripper.reach();
        grow(self.grasping_ee.position, reach);
        for pose in regrasp_poses {
            grow(pose.position, reach);
        }
        (lo - Vec3::new(margin, margin, margin), hi + Vec3::new(margin, margin, margin))
    }
}

/// Number of interpolation sub-steps needed to honor the sweep
/// resolutions over the edge `from -> to`. At least 1.
pub fn sweep_steps(from: &Pose, to: &Pose) -> usize {
    let dp = (to.position - from.position).norm();
    let da = from.rotation.angle_to(to.rotation);
    let n = (dp / SWEEP_TRANSLATION_RES).max(da / SWEEP_ROTATION_RES).ceil();
    (n as usize).max(1)
}

pub(crate) fn jaw_segment(g: &GripperSpec, ee: &Pose) -> (Vec3, Vec3) {
    (ee.position, ee.transform_point(Vec3::new(0.0, 0.0, g.jaw_length)))
}

pub(crate) fn wrist_segment(g: &GripperSpec, ee: &Pose) -> (Vec3, Vec3) {
    (ee.position, ee.transform_point(Vec3::new(0.0, 0.0, -g.wrist_length)))
}

/// Squared distance from point `p` to segment `ab`.
pub fn dist_sq_point_segment(p: Vec3, a: Vec3, b: Vec3) -> f64 {
    let ab = b - a;
    let denom = ab.norm_squared();
    if denom <= f64::EPSILON {
        return (p - a).norm_squared();
    }
    let t = ((p - a).dot(ab) / denom).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm_squared()
}

/// Squared distance between segments `p1q1` and `p2q2`.
pub fn dist_sq_segment_segment(p1: Vec3, q1: Vec3, p2: Vec3, q2: Vec3) -> f64 {
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.norm_squared();
    let e = d2.norm_squared();
    let f = d2.dot(r);

    let (s, t);
    if a <= f64::EPSILON && e <= f64::EPSILON {
        return r.norm_squared();
    }
    if a <= f64::EPSILON {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(r);
        if e <= f64::EPSILON {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(d2);
            let denom = a * e - b * b;
            let mut s_ = if denom != 0.0 { ((b * f - c * e) / denom).clamp(0.0, 1.0) } else { 0.0 };
            let mut t_ = (b * s_ + f) / e;
            if t_ < 0.0 {
                t_ = 0.0;
                s_ = (-c / a).clamp(0.0, 1.0);
            } else if t_ > 1.0 {
                t_ = 1.0;
                s_ = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s_;
            t = t_;
        }
    }
    ((p1 + d1 * s) - (p2 + d2 * t)).norm_squared()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Quaternion;
    use crate::needle::goal_grasp;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn world_with_goal_grasping() -> CollisionWorld {
        // Grasping gripper placed on the +x side near the arc top.
        let needle = NeedleSpec::default();
        let g = crate::needle::GraspSample { alpha: 2.0 * PI / 3.0, d: 7.0, theta: 0.0, phi: 0.2 * PI };
        let ee = crate::needle::grasp_pose_in_needle_frame(&needle, &g).unwrap();
        CollisionWorld::new(needle, GripperSpec::default(), ee, g.alpha)
    }

    #[test]
    fn point_segment_distance_basics() {
        let a = Vec3::new(0.0, 0.0, 0.0);
        let b = Vec3::new(10.0, 0.0, 0.0);
        assert!((dist_sq_point_segment(Vec3::new(5.0, 3.0, 0.0), a, b) - 9.0).abs() < 1e-12);
        assert!((dist_sq_point_segment(Vec3::new(-4.0, 3.0, 0.0), a, b) - 25.0).abs() < 1e-12);
        assert!((dist_sq_point_segment(Vec3::new(13.0, 4.0, 0.0), a, b) - 25.0).abs() < 1e-12);
    }

    #[test]
    fn segment_segment_distance_basics() {
        let d = dist_sq_segment_segment(
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(10.0, 0.0, 0.0),
            Vec3::new(0.0, 4.0, 3.0),
            Vec3::new(10.0, 4.0, 3.0),
        );
        assert!((d - 25.0).abs() < 1e-12);

        // Crossing perpendicular segments.
        let d = dist_sq_segment_segment(
            Vec3::new(-5.0, 0.0, 1.0),
            Vec3::new(5.0, 0.0, 1.0),
            Vec3::new(0.0, -5.0, 0.0),
            Vec3::new(0.0, 5.0, 0.0),
        );
        assert!((d - 1.0).abs() < 1e-12);

        // Degenerate: both points.
        let d = dist_sq_segment_segment(
            Vec3::new(1.0, 1.0, 1.0),
            Vec3::new(1.0, 1.0, 1.0),
            Vec3::new(4.0, 5.0, 1.0),
            Vec3::new(4.0, 5.0, 1.0),
        );
        assert!((d - 25.0).abs() < 1e-12);
    }

    #[test]
    fn far_pose_is_free() {
        let w = world_with_goal_grasping();
        let pose = Pose::new(Vec3::new(-40.0, 0.0, 0.0), Quaternion::IDENTITY);
        assert!(!w.ee_collides(&pose));
    }

    #[test]
    fn needle_midpoint_impale_collides() {
        let w = world_with_goal_grasping();
        // Jaw axis along needle +y: the arc's leftmost point lies on the
        // jaw axis with its tangent along the slot gap direction, so
        // nearby arc material exits the channel while still inside the
        // capsule.
        let rot = Quaternion::from_axis_angle(Vec3::new(1.0, 0.0, 0.0), -FRAC_PI_2);
        let pose = Pose::new(Vec3::new(0.0, -9.0, 0.0), rot);
        assert!(w.ee_collides(&pose));
    }

    #[test]
    fn goal_pose_is_free_for_any_goal_distance() {
        let w = world_with_goal_grasping();
        for d in [6.5, 7.0, 7.25, 7.7, 8.0] {
            let goal = goal_grasp(w.needle_spec(), d).unwrap();
            assert!(!w.ee_collides(&goal), "goal at d={d} must be collision-free");
        }
    }

    #[test]
    fn coincident_grippers_collide() {
        let w = world_with_goal_grasping();
        let pose = *w.grasping_ee();
        assert!(w.ee_collides(&pose));
    }

    #[test]
    fn held_needle_clears_grasping_gripper() {
        let w = world_with_goal_grasping();
        assert!(!w.needle_vs_grasping_gripper());
    }

    #[test]
    fn slot_blocks_sideways_extraction() {
        let w = world_with_goal_grasping();
        let goal = goal_grasp(w.needle_spec(), 7.0).unwrap();
        let gap_dir = goal.rotation.rotate(Vec3::new(0.0, 1.0, 0.0));
        // Small slide keeps the wire inside the channel.
        let inside = Pose::new(goal.position + gap_dir * 0.5, goal.rotation);
        assert!(!w.ee_collides(&inside));
        // At 1.1 mm the wire has left the channel but is still within the
        // jaw capsule wall.
        let in_wall = Pose::new(goal.position + gap_dir * 1.1, goal.rotation);
        assert!(w.ee_collides(&in_wall));
        // At 1.6 mm the wire is clear of the jaws, but the swept edge
        // from the goal must cross the wall band.
        let outside = Pose::new(goal.position + gap_dir * 1.6, goal.rotation);
        assert!(!w.ee_collides(&outside));
        assert!(w.edge_collides(&goal, &outside));
    }

    #[test]
    fn sweep_steps_resolution() {
        let a = Pose::IDENTITY;
        let b = Pose::new(Vec3::new(2.0, 0.0, 0.0), Quaternion::IDENTITY);
        assert_eq!(sweep_steps(&a, &b), 20);
        let c = Pose::new(Vec3::ZERO, Quaternion::from_axis_angle(Vec3::new(0.0, 0.0, 1.0), 10.0_f64.to_radians()));
        assert_eq!(sweep_steps(&a, &c), 20);
        assert_eq!(sweep_steps(&a, &a), 1);
    }

    #[test]
    fn edge_sweep_catches_tunneling() {
        let w = world_with_goal_grasping();
        // Poses on both sides of the needle plane, each individually free,
        // connected by an edge that stabs through the arc.
        let rot = Quaternion::from_axis_angle(Vec3::new(1.0, 0.0, 0.0), -FRAC_PI_2);
        let a = Pose::new(Vec3::new(0.0, -5.4, -14.0), rot);
        let b = Pose::new(Vec3::new(0.0, -5.4, 8.0), rot);
        assert!(!w.ee_collides(&a));
        assert!(w.edge_collides(&a, &b));
    }
}
