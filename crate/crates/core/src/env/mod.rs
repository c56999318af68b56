//! The ego-centric regrasp MDP.
//!
//! One gripper (the grasping end-effector, `e_g`) holds the needle; the
//! other (the regrasping end-effector, `e_r`) must take it over at a
//! fixed handover grasp. Everything the agent observes is expressed
//! relative to `e_g`, so the state carries no trace of where the scene
//! sits in the world:
//!
//! * needle pose in the grasping-EE frame,
//! * regrasping-EE pose in the grasping-EE frame,
//! * needle pose in the regrasping-EE frame (derivable from the first
//!   two; stored for the learner and checked for consistency).
//!
//! Actions move only the regrasping EE: `p_t = p_{t-1} + dp` and
//! `q_t = dq * q_{t-1}` in the grasping-EE frame. Reward is `-1` on
//! collision (terminal), `+1` on reaching the goal grasp within
//! `(eps_position, eps_rotation)` (terminal), and a constant step cost
//! otherwise; episodes also end at the horizon.
//!
//! Internally the scene is anchored to the needle frame, where needle and
//! grasping gripper are static for the whole episode; that is purely an
//! implementation frame and never leaks into observations.

pub mod collision;
pub mod episode;

use crate::error::{Error, Result};
use crate::geometry::{Pose, Quaternion, Vec3};
use crate::needle::{
    approach_frame, goal_grasp, grasp_pose_in_needle_frame, sample_initial_grasp, sample_range,
    GraspRanges, GraspSample, NeedleSpec, GOAL_ALPHA,
};
use collision::{CollisionWorld, GripperSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::UnitSphere;
use serde::{Deserialize, Serialize};

/// Reward constants and success tolerances.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RewardParams {
    pub collision: f64,
    pub success: f64,
    /// Per-step cost while the episode continues.
    pub step: f64,
    /// Position tolerance of the goal grasp, mm.
    pub eps_position: f64,
    /// Orientation tolerance of the goal grasp, rad.
    pub eps_rotation: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        RewardParams {
            collision: -1.0,
            success: 1.0,
            step: -0.02,
            eps_position: 1.0,
            eps_rotation: 5.0_f64.to_radians(),
        }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.step < 0.0 && self.eps_position >= 0.0 && self.eps_rotation >= 0.0) {
            return Err(Error::Config(format!("invalid reward params: {self:?}")));
        }
        Ok(())
    }
}

/// Episode structure and initial-state distribution.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MdpConfig {
    pub horizon: usize,
    pub discount: f64,
    /// Initial-grasp sampling ranges.
    pub grasp_ranges: GraspRanges,
    /// Goal approach distance is drawn uniformly from this range once per
    /// episode and then frozen.
    pub goal_d: (f64, f64),
    /// Nominal spawn distance of the regrasping EE from the needle
    /// center, mm.
    pub spawn_distance: f64,
    /// Per-axis uniform position jitter applied to the spawn, mm.
    pub spawn_pos_jitter: f64,
    /// Orientation jitter angle bound about a random axis, rad.
    pub spawn_rot_jitter: f64,
    /// Norm bound on the per-step translation, mm.
    pub max_step_translation: f64,
    /// Bound on the per-step rotation angle, rad.
    pub max_step_rotation: f64,
    /// Resampling budget for each stage of episode initialization.
    pub reset_retries: usize,
}

impl Default for MdpConfig {
    fn default() -> Self {
        MdpConfig {
            horizon: 100,
            discount: 0.99,
            grasp_ranges: GraspRanges::default(),
            goal_d: (6.5, 8.0),
            spawn_distance: 13.0,
            spawn_pos_jitter: 1.0,
            spawn_rot_jitter: 5.0_f64.to_radians(),
            max_step_translation: 2.0,
            max_step_rotation: 10.0_f64.to_radians(),
            reset_retries: 100,
        }
    }
}

impl MdpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(Error::Config(format!("discount {} outside (0, 1]", self.discount)));
        }
        self.grasp_ranges.validate()?;
        if !(self.goal_d.0 > 0.0 && self.goal_d.0 <= self.goal_d.1) {
            return Err(Error::Config(format!("invalid goal d range {:?}", self.goal_d)));
        }
        if !(self.spawn_distance > 0.0
            && self.spawn_pos_jitter >= 0.0
            && self.spawn_rot_jitter >= 0.0
            && self.max_step_translation > 0.0
            && self.max_step_rotation > 0.0
            && self.reset_retries > 0)
        {
            return Err(Error::Config(format!("invalid mdp config: {self:?}")));
        }
        Ok(())
    }
}

/// Everything needed to build environments.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct EnvParams {
    pub needle: NeedleSpec,
    pub gripper: GripperSpec,
    pub mdp: MdpConfig,
    pub reward: RewardParams,
}

impl EnvParams {
    pub fn validate(&self) -> Result<()> {
        self.needle.validate()?;
        self.gripper.validate()?;
        self.mdp.validate()?;
        self.reward.validate()
    }
}

/// Observation: three poses, serialized as 21 reals
/// `(p, q_wxyz) x {needle-in-e_g, e_r-in-e_g, needle-in-e_r}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EgoState {
    pub needle_in_grasping: Pose,
    pub regrasp_in_grasping: Pose,
    pub needle_in_regrasp: Pose,
}

impl EgoState {
    pub const DIM: usize = 21;

    /// Builds the state from the two independent poses; the third is
    /// derived so the consistency invariant holds by construction.
    pub fn from_pair(needle_in_grasping: Pose, regrasp_in_grasping: Pose) -> Self {
        let needle_in_regrasp = regrasp_in_grasping.inverse().compose(&needle_in_grasping);
        EgoState { needle_in_grasping, regrasp_in_grasping, needle_in_regrasp }
    }

    pub fn to_array(&self) -> [f64; Self::DIM] {
        let mut out = [0.0; Self::DIM];
        for (i, pose) in
            [&self.needle_in_grasping, &self.regrasp_in_grasping, &self.needle_in_regrasp]
                .into_iter()
                .enumerate()
        {
            let o = i * 7;
            out[o] = pose.position.x;
            out[o + 1] = pose.position.y;
            out[o + 2] = pose.position.z;
            out[o + 3] = pose.rotation.w;
            out[o + 4] = pose.rotation.x;
            out[o + 5] = pose.rotation.y;
            out[o + 6] = pose.rotation.z;
        }
        out
    }

    /// Inverse of `to_array`. Components are taken verbatim (no
    /// renormalization) so serialized states round-trip bit-exactly;
    /// hand-built arrays must already hold unit quaternions.
    pub fn from_array(a: &[f64; Self::DIM]) -> Self {
        let pose = |o: usize| {
            Pose::new(
                Vec3::new(a[o], a[o + 1], a[o + 2]),
                Quaternion { w: a[o + 3], x: a[o + 4], y: a[o + 5], z: a[o + 6] },
            )
        };
        EgoState {
            needle_in_grasping: pose(0),
            regrasp_in_grasping: pose(7),
            needle_in_regrasp: pose(14),
        }
    }

    /// Largest absolute component difference between the stored third
    /// pose and the one derived from the first two.
    pub fn consistency_error(&self) -> f64 {
        let derived = EgoState::from_pair(self.needle_in_grasping, self.regrasp_in_grasping);
        self.max_abs_diff(&derived)
    }

    /// Infinity norm of the serialized difference.
    pub fn max_abs_diff(&self, other: &EgoState) -> f64 {
        let a = self.to_array();
        let b = other.to_array();
        a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }
}

/// Regrasping-EE pose increment in the grasping-EE frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EgoAction {
    pub translation: Vec3,
    pub rotation: Quaternion,
}

impl EgoAction {
    pub const DIM: usize = 6;

    pub fn zero() -> Self {
        EgoAction { translation: Vec3::ZERO, rotation: Quaternion::IDENTITY }
    }

    /// Decodes the 6-vector `(dx, dy, dz, rx, ry, rz)`: translation in mm
    /// plus a rotation vector in rad.
    pub fn from_vector6(v: &[f64; 6]) -> Self {
        EgoAction {
            translation: Vec3::new(v[0], v[1], v[2]),
            rotation: Quaternion::from_rotation_vector(Vec3::new(v[3], v[4], v[5])),
        }
    }

    pub fn to_vector6(&self) -> [f64; 6] {
        let t = self.translation;
        let r = self.rotation.to_axis_angle().0;
        [t.x, t.y, t.z, r.x, r.y, r.z]
    }

    /// The action that takes `prev` to `current`:
    /// `dp = p_t - p_{t-1}`, `dq = q_t * q_{t-1}^-1`.
    pub fn between(prev: &Pose, current: &Pose) -> Self {
        EgoAction {
            translation: current.position - prev.position,
            rotation: crate::geometry::quat_delta(current.rotation, prev.rotation),
        }
    }

    /// Applies the increment to a pose.
    pub fn apply(&self, pose: &Pose) -> Pose {
        Pose::new(pose.position + self.translation, self.rotation.mul_quat(pose.rotation))
    }

}

/// Scales an action 6-vector down to the step bounds: the translation
/// norm to `max_translation` and the rotation-vector norm (the rotation
/// angle) to `max_rotation`. Returns the bounded vector and whether
/// anything was clipped. Vectors already within bounds pass through
/// bit-identical.
pub fn clip_action6(v: &[f64; 6], max_translation: f64, max_rotation: f64) -> ([f64; 6], bool) {
    let mut out = *v;
    let mut clipped = false;
    let tn = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if tn > max_translation {
        let s = max_translation / tn;
        for c in &mut out[..3] {
            *c *= s;
        }
        clipped = true;
    }
    let rn = (v[3] * v[3] + v[4] * v[4] + v[5] * v[5]).sqrt();
    if rn > max_rotation {
        let s = max_rotation / rn;
        for c in &mut out[3..] {
            *c *= s;
        }
        clipped = true;
    }
    (out, clipped)
}

/// Goal test per the success tolerances: position within `eps_position`
/// and geodesic angle of `q* q_t^-1` within `eps_rotation`, both
/// inclusive.
pub fn success_check(needle_in_regrasp: &Pose, target: &Pose, rp: &RewardParams) -> bool {
    let dp = (target.position - needle_in_regrasp.position).norm();
    if dp > rp.eps_position {
        return false;
    }
    let angle =
        target.rotation.mul_quat(needle_in_regrasp.rotation.inverse()).to_axis_angle().angle();
    angle <= rp.eps_rotation
}

/// Per-step metadata.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StepInfo {
    /// Step count after this transition (1-based).
    pub t: usize,
    pub collision: bool,
    pub success: bool,
    /// Horizon exhausted without a terminal event.
    pub timeout: bool,
    /// The submitted action exceeded the step bounds and was scaled down.
    pub clipped: bool,
    /// The action actually executed, 6-vector encoding.
    pub executed: [f64; 6],
}

#[derive(Clone, Copy, Debug)]
pub struct StepOutcome {
    pub state: EgoState,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

impl StepOutcome {
    /// Whether the MDP reached an absorbing state (as opposed to the
    /// horizon truncating the episode); TD targets bootstrap through
    /// truncation but not through terminal states.
    pub fn terminal(&self) -> bool {
        self.info.collision || self.info.success
    }
}

struct EpisodeSetup {
    grasp: GraspSample,
    world: CollisionWorld,
    grasping_ee: Pose,
    goal_d: f64,
    goal_ee: Pose,
    spawn: Pose,
}

/// The environment. Owns a single episode at a time; construct one
/// instance per worker for parallel collection.
pub struct RegraspEnv {
    params: EnvParams,
    world: CollisionWorld,
    grasp: GraspSample,
    /// Grasping EE pose in the needle frame, fixed per episode.
    grasping_ee: Pose,
    goal_d: f64,
    /// Goal regrasping-EE pose in the needle frame.
    goal_ee: Pose,
    /// Success target: needle pose in the regrasping-EE frame.
    goal_needle_in_regrasp: Pose,
    state: EgoState,
    t: usize,
    terminal: bool,
    episode_seed: u64,
}

impl RegraspEnv {
    pub fn new(params: EnvParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let setup = build_episode(&params, seed)?;
        Ok(Self::from_setup(params, setup, seed))
    }

    fn from_setup(params: EnvParams, s: EpisodeSetup, seed: u64) -> Self {
        let needle_in_grasping = s.grasping_ee.inverse();
        let regrasp_in_grasping = needle_in_grasping.compose(&s.spawn);
        RegraspEnv {
            params,
            world: s.world,
            grasp: s.grasp,
            grasping_ee: s.grasping_ee,
            goal_d: s.goal_d,
            goal_ee: s.goal_ee,
            goal_needle_in_regrasp: s.goal_ee.inverse(),
            state: EgoState::from_pair(needle_in_grasping, regrasp_in_grasping),
            t: 0,
            terminal: false,
            episode_seed: seed,
        }
    }

    /// Starts a fresh episode fully determined by `seed`.
    pub fn reset_from_seed(&mut self, seed: u64) -> Result<EgoState> {
        let setup = build_episode(&self.params, seed)?;
        *self = Self::from_setup(self.params, setup, seed);
        Ok(self.state)
    }

    /// Replaces the episode's start pose (regrasping EE in the grasping
    /// frame) before any step has been taken. Used for demonstrations
    /// whose start is not the seeded spawn. The pose must be
    /// collision-free.
    pub fn set_regrasp_start(&mut self, regrasp_in_grasping: &Pose) -> Result<EgoState> {
        if self.t != 0 || self.terminal {
            return Err(Error::Config("start pose can only be set before the first step".into()));
        }
        let in_needle = self.grasping_ee.compose(regrasp_in_grasping);
        if self.world.ee_collides(&in_needle) {
            return Err(Error::Config("requested start pose is in collision".into()));
        }
        self.state = EgoState::from_pair(self.state.needle_in_grasping, *regrasp_in_grasping);
        Ok(self.state)
    }

    /// Applies one action 6-vector (translation mm, rotation vector rad),
    /// clipping it to the per-step bounds first. Panics if the episode
    /// already ended; that is a caller bug, not a recoverable condition.
    ///
    /// The transition is a deterministic function of the reported
    /// `executed` 6-vector, and vectors within bounds are executed
    /// verbatim, so feeding a recorded `executed` back through
    /// `step_executed` reproduces states bit for bit.
    pub fn step(&mut self, action: &[f64; 6]) -> StepOutcome {
        let (executed, clipped) = clip_action6(
            action,
            self.params.mdp.max_step_translation,
            self.params.mdp.max_step_rotation,
        );
        self.step_inner(executed, clipped)
    }

    /// Applies a recorded executed vector verbatim, skipping the clip.
    /// The caller asserts the vector came from a previous `step`, so it
    /// is already within bounds.
    pub fn step_executed(&mut self, executed: &[f64; 6]) -> StepOutcome {
        self.step_inner(*executed, false)
    }

    fn step_inner(&mut self, executed: [f64; 6], clipped: bool) -> StepOutcome {
        assert!(!self.terminal, "step called on a terminated episode");
        let act = EgoAction::from_vector6(&executed);
        let prev = self.state.regrasp_in_grasping;
        let next = act.apply(&prev);

        let prev_n = self.grasping_ee.compose(&prev);
        let next_n = self.grasping_ee.compose(&next);
        let collision = self.world.edge_collides(&prev_n, &next_n);

        self.t += 1;
        self.state = EgoState::from_pair(self.state.needle_in_grasping, next);

        let success = !collision
            && success_check(
                &self.state.needle_in_regrasp,
                &self.goal_needle_in_regrasp,
                &self.params.reward,
            );
        let timeout = !collision && !success && self.t >= self.params.mdp.horizon;
        let (reward, done) = if collision {
            (self.params.reward.collision, true)
        } else if success {
            (self.params.reward.success, true)
        } else {
            (self.params.reward.step, timeout)
        };
        self.terminal = done;
        StepOutcome {
            state: self.state,
            reward,
            done,
            info: StepInfo {
                t: self.t,
                collision,
                success,
                timeout,
                clipped,
                executed,
            },
        }
    }

    pub fn params(&self) -> &EnvParams {
        &self.params
    }

    pub fn state(&self) -> &EgoState {
        &self.state
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn is_terminal(&self) -> bool {
        self.terminal
    }

    pub fn episode_seed(&self) -> u64 {
        self.episode_seed
    }

    pub fn world(&self) -> &CollisionWorld {
        &self.world
    }

    pub fn initial_grasp(&self) -> &GraspSample {
        &self.grasp
    }

    pub fn goal_d(&self) -> f64 {
        self.goal_d
    }

    /// Success target: needle pose in the regrasping-EE frame.
    pub fn goal_needle_in_regrasp(&self) -> &Pose {
        &self.goal_needle_in_regrasp
    }

    /// Goal regrasping-EE pose in the grasping-EE frame (planning-space
    /// goal).
    pub fn goal_regrasp_in_grasping(&self) -> Pose {
        self.state.needle_in_grasping.compose(&self.goal_ee)
    }

    /// Goal regrasping-EE pose in the needle frame.
    pub fn goal_ee_in_needle(&self) -> &Pose {
        &self.goal_ee
    }

    pub fn grasping_ee_in_needle(&self) -> &Pose {
        &self.grasping_ee
    }

    /// Current regrasping-EE pose in the needle frame.
    pub fn regrasp_in_needle(&self) -> Pose {
        self.grasping_ee.compose(&self.state.regrasp_in_grasping)
    }

    /// Static collision test for a regrasping-EE pose given in the
    /// grasping-EE frame (the planning space).
    pub fn pose_in_grasping_collides(&self, pose: &Pose) -> bool {
        self.world.ee_collides(&self.grasping_ee.compose(pose))
    }

    /// Swept collision test for a straight edge in the planning space;
    /// `from` exclusive, `to` inclusive. Left-composing the fixed
    /// grasping-EE pose maps interpolated paths to interpolated paths, so
    /// this agrees with checking in the needle frame.
    pub fn edge_in_grasping_collides(&self, from: &Pose, to: &Pose) -> bool {
        self.world
            .edge_collides(&self.grasping_ee.compose(from), &self.grasping_ee.compose(to))
    }

    /// Axis-aligned sampling bounds in the grasping-EE frame enclosing
    /// the scene, the current start, and the goal, grown by `margin` mm.
    pub fn planning_bounds(&self, margin: f64) -> (Vec3, Vec3) {
        let start_n = self.regrasp_in_needle();
        let (lo, hi) = self.world.bounds(&[start_n, self.goal_ee], margin);
        // The box is axis-aligned in the needle frame; take the AABB of
        // its corners in the grasping frame.
        let to_g = self.state.needle_in_grasping;
        let mut glo = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut ghi = Vec3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for &x in &[lo.x, hi.x] {
            for &y in &[lo.y, hi.y] {
                for &z in &[lo.z, hi.z] {
                    let c = to_g.transform_point(Vec3::new(x, y, z));
                    glo.x = glo.x.min(c.x);
                    glo.y = glo.y.min(c.y);
                    glo.z = glo.z.min(c.z);
                    ghi.x = ghi.x.max(c.x);
                    ghi.y = ghi.y.max(c.y);
                    ghi.z = ghi.z.max(c.z);
                }
            }
        }
        (glo, ghi)
    }

    /// Re-derives the ego state after rigidly transforming the whole
    /// scene by `world_transform`. For a correct ego-centric encoding the
    /// result equals the current state for any rigid transform.
    pub fn ego_invariance_probe(&self, world_transform: &Pose) -> EgoState {
        let h_needle = *world_transform;
        let h_grasping = world_transform.compose(&self.grasping_ee);
        let h_regrasp = world_transform.compose(&self.regrasp_in_needle());
        let needle_in_grasping = h_grasping.inverse().compose(&h_needle);
        let regrasp_in_grasping = h_grasping.inverse().compose(&h_regrasp);
        EgoState::from_pair(needle_in_grasping, regrasp_in_grasping)
    }

    /// Fraction of collision-free goal-directed poses at each radius.
    ///
    /// For every radius `r` (must be sorted strictly descending), sample
    /// `samples_per_radius` positions uniformly on the sphere of radius
    /// `r` around the goal EE position, orient each toward the goal grasp
    /// point with the standard roll convention, and report the fraction
    /// that do not collide.
    pub fn funnel_profile(
        &self,
        radii: &[f64],
        samples_per_radius: usize,
        rng: &mut impl Rng,
    ) -> Vec<f64> {
        assert!(radii.windows(2).all(|w| w[0] > w[1]), "radii must be sorted descending");
        assert!(radii.iter().all(|&r| r > 0.0), "radii must be positive");
        let grasp_pt = self
            .params
            .needle
            .point(GOAL_ALPHA)
            .expect("goal arc coordinate is always on the arc");
        let tangent = self.params.needle.tangent(GOAL_ALPHA).expect("same");
        radii
            .iter()
            .map(|&r| {
                let mut free = 0usize;
                for _ in 0..samples_per_radius {
                    let dir: [f64; 3] = rng.sample(UnitSphere);
                    let pos = self.goal_ee.position + Vec3::from_array(dir) * r;
                    let approach = match (grasp_pt - pos).normalized() {
                        Some(a) => a,
                        // Sample coincides with the grasp point; count as
                        // colliding (the gripper origin would sit on the
                        // needle).
                        None => continue,
                    };
                    let pose = Pose::new(pos, approach_frame(approach, tangent));
                    if !self.world.ee_collides(&pose) {
                        free += 1;
                    }
                }
                free as f64 / samples_per_radius as f64
            })
            .collect()
    }
}

fn build_episode(params: &EnvParams, seed: u64) -> Result<EpisodeSetup> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mdp = &params.mdp;
    let goal_tangent = params.needle.tangent(GOAL_ALPHA)?;

    for _ in 0..mdp.reset_retries {
        let grasp = sample_initial_grasp(&mut rng, &mdp.grasp_ranges);
        let grasping_ee = grasp_pose_in_needle_frame(&params.needle, &grasp)?;
        let world = CollisionWorld::new(params.needle, params.gripper, grasping_ee, grasp.alpha);
        if world.needle_vs_grasping_gripper() {
            continue;
        }

        let goal_d = sample_range(&mut rng, mdp.goal_d);
        let goal_ee = goal_grasp(&params.needle, goal_d)?;
        // A grasp whose goal pose is blocked (extreme initial grasps can
        // park the holding gripper's wrist over the handover region)
        // would make the episode unsolvable for every method; resample.
        if world.ee_collides(&goal_ee) {
            continue;
        }

        let dir = goal_ee
            .position
            .normalized()
            .expect("goal EE cannot coincide with the needle center");
        for _ in 0..mdp.reset_retries {
            let jitter = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ) * mdp.spawn_pos_jitter;
            let pos = dir * mdp.spawn_distance + jitter;
            let approach = match (-pos).normalized() {
                Some(a) => a,
                None => continue,
            };
            let nominal = approach_frame(approach, goal_tangent);
            let axis: [f64; 3] = rng.sample(UnitSphere);
            let angle = rng.random_range(-1.0..1.0) * mdp.spawn_rot_jitter;
            let jq = Quaternion::from_rotation_vector(Vec3::from_array(axis) * angle);
            let spawn = Pose::new(pos, jq.mul_quat(nominal));
            if !world.ee_collides(&spawn) {
                return Ok(EpisodeSetup { grasp, world, grasping_ee, goal_d, goal_ee, spawn });
            }
        }
    }
    Err(Error::Config(format!(
        "episode initialization exhausted {} retries (seed {seed}); collision geometry is likely \
         misconfigured",
        mdp.reset_retries
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn env(seed: u64) -> RegraspEnv {
        RegraspEnv::new(EnvParams::default(), seed).unwrap()
    }

    #[test]
    fn reset_is_deterministic() {
        let a = env(42);
        let b = env(42);
        assert_eq!(a.state().to_array(), b.state().to_array());
        assert_eq!(a.goal_d(), b.goal_d());
    }

    #[test]
    fn reset_differs_across_seeds() {
        let a = env(1);
        let b = env(2);
        assert!(a.state().max_abs_diff(b.state()) > 1e-6);
    }

    #[test]
    fn state_is_consistent_after_reset_and_steps() {
        let mut e = env(7);
        assert!(e.state().consistency_error() < 1e-12);
        let a = [0.5, -0.3, 0.2, 0.02, 0.0, -0.01];
        for _ in 0..5 {
            let out = e.step(&a);
            assert!(out.state.consistency_error() < 1e-9);
            if out.done {
                break;
            }
        }
    }

    #[test]
    fn zero_jitter_spawns_at_exact_distance() {
        let mut params = EnvParams::default();
        params.mdp.spawn_pos_jitter = 0.0;
        params.mdp.spawn_rot_jitter = 0.0;
        let e = RegraspEnv::new(params, 3).unwrap();
        let spawn = e.regrasp_in_needle();
        assert!((spawn.position.norm() - 13.0).abs() < 1e-9);
    }

    #[test]
    fn spawned_state_is_collision_free() {
        for seed in 0..50 {
            let e = env(seed);
            assert!(!e.world().ee_collides(&e.regrasp_in_needle()), "seed {seed}");
            assert!(!e.world().needle_vs_grasping_gripper(), "seed {seed}");
        }
    }

    #[test]
    fn zero_action_far_from_goal_costs_step_reward() {
        let mut e = env(5);
        let out = e.step(&[0.0; 6]);
        assert_eq!(out.reward, -0.02);
        assert!(!out.done);
        assert!(!out.info.collision && !out.info.success && !out.info.timeout);
    }

    #[test]
    fn horizon_truncates_episode() {
        let mut params = EnvParams::default();
        params.mdp.horizon = 3;
        let mut e = RegraspEnv::new(params, 5).unwrap();
        let mut last = None;
        for _ in 0..3 {
            last = Some(e.step(&[0.0; 6]));
        }
        let out = last.unwrap();
        assert!(out.done && out.info.timeout && !out.terminal());
        assert_eq!(out.reward, -0.02);
    }

    #[test]
    #[should_panic(expected = "terminated episode")]
    fn step_after_done_panics() {
        let mut params = EnvParams::default();
        params.mdp.horizon = 1;
        let mut e = RegraspEnv::new(params, 5).unwrap();
        e.step(&[0.0; 6]);
        e.step(&[0.0; 6]);
    }

    #[test]
    fn action_clipping_scales_to_bounds() {
        let (c, clipped) = clip_action6(&[4.0, 0.0, 0.0, 0.0, 0.0, 0.5], 2.0, 10.0_f64.to_radians());
        assert!(clipped);
        let tn = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
        let rn = (c[3] * c[3] + c[4] * c[4] + c[5] * c[5]).sqrt();
        assert!((tn - 2.0).abs() < 1e-12);
        assert!((rn - 10.0_f64.to_radians()).abs() < 1e-12);

        let small = [0.1, 0.1, 0.0, 0.01, 0.0, 0.0];
        let (c2, clipped2) = clip_action6(&small, 2.0, 10.0_f64.to_radians());
        assert!(!clipped2);
        assert_eq!(c2, small);
    }

    #[test]
    fn transition_recovers_executed_action() {
        let mut e = env(9);
        let prev = e.state().regrasp_in_grasping;
        let out = e.step(&[3.0, -1.0, 0.4, 0.3, 0.1, -0.2]);
        let rec = EgoAction::between(&prev, &out.state.regrasp_in_grasping);
        let exec = out.info.executed;
        let got = rec.to_vector6();
        for i in 0..6 {
            assert!((got[i] - exec[i]).abs() < 1e-8, "component {i}: {} vs {}", got[i], exec[i]);
        }
    }

    #[test]
    fn action_vector_round_trip() {
        let v = [0.3, -0.2, 0.1, 0.05, -0.04, 0.02];
        let a = EgoAction::from_vector6(&v);
        let back = a.to_vector6();
        for i in 0..6 {
            assert!((v[i] - back[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn success_check_boundaries() {
        let rp = RewardParams::default();
        let target = Pose::new(
            Vec3::new(1.0, 2.0, 3.0),
            Quaternion::from_axis_angle(Vec3::new(0.0, 1.0, 0.0), 0.7),
        );
        assert!(success_check(&target, &target, &rp));

        // Exactly 1 mm off in position: inclusive boundary.
        let at_pos_bound = Pose::new(target.position + Vec3::new(1.0, 0.0, 0.0), target.rotation);
        assert!(success_check(&at_pos_bound, &target, &rp));
        let past_pos = Pose::new(target.position + Vec3::new(1.0 + 1e-9, 0.0, 0.0), target.rotation);
        assert!(!success_check(&past_pos, &target, &rp));

        // 2 mm off: outside.
        let two_mm = Pose::new(target.position + Vec3::new(2.0, 0.0, 0.0), target.rotation);
        assert!(!success_check(&two_mm, &target, &rp));

        // 4 degrees off in orientation, position exact: inside.
        let rot4 = Quaternion::from_axis_angle(Vec3::new(1.0, 0.0, 0.0), 4.0_f64.to_radians())
            .mul_quat(target.rotation);
        assert!(success_check(&Pose::new(target.position, rot4), &target, &rp));

        // Just under and just over 5 degrees.
        let under = Quaternion::from_axis_angle(Vec3::new(1.0, 0.0, 0.0), 5.0_f64.to_radians() - 1e-9)
            .mul_quat(target.rotation);
        assert!(success_check(&Pose::new(target.position, under), &target, &rp));
        let over = Quaternion::from_axis_angle(Vec3::new(1.0, 0.0, 0.0), 5.0_f64.to_radians() + 1e-7)
            .mul_quat(target.rotation);
        assert!(!success_check(&Pose::new(target.position, over), &target, &rp));
    }

    #[test]
    fn reaching_goal_pose_gives_success_reward() {
        let mut e = env(21);
        // Teleport the start next to the goal, then take the single step
        // onto it.
        let goal = e.goal_regrasp_in_grasping();
        // Offset along the goal's -z (behind the approach) is free space.
        let near = Pose::new(
            goal.position - goal.rotation.rotate(Vec3::new(0.0, 0.0, 1.5)),
            goal.rotation,
        );
        e.set_regrasp_start(&near).unwrap();
        let out = e.step(&EgoAction::between(&near, &goal).to_vector6());
        assert!(out.info.success, "{:?}", out.info);
        assert_eq!(out.reward, 1.0);
        assert!(out.done && out.terminal());
    }

    #[test]
    fn collision_gives_negative_reward_and_terminates() {
        let mut e = env(33);
        // Park the regrasping jaw 2 mm short of the wire tip (alpha =
        // pi/2 end, needle frame), aimed straight at it, then keep
        // driving along the approach axis. The wire slides through the
        // open slot, but overshooting far enough runs it into the clevis
        // at the jaw base, which must register as contact.
        let wire = Vec3::new(0.0, 0.0, 5.4);
        let approach = Vec3::new(1.0, 0.0, 0.0);
        let tangent = Vec3::new(0.0, -1.0, 0.0);
        let start_n = Pose::new(
            wire - approach * (e.params().gripper.jaw_length + 2.0),
            crate::needle::approach_frame(approach, tangent),
        );
        let start_g = e.state().needle_in_grasping.compose(&start_n);
        e.set_regrasp_start(&start_g).unwrap();

        let step_g = e.state().needle_in_grasping.rotation.rotate(approach * 2.0);
        let mut last = None;
        for _ in 0..6 {
            let out = e.step(&[step_g.x, step_g.y, step_g.z, 0.0, 0.0, 0.0]);
            last = Some(out);
            if out.done {
                break;
            }
        }
        let out = last.unwrap();
        assert!(out.info.collision, "overshooting through the slot must collide");
        assert_eq!(out.reward, -1.0);
        assert!(out.terminal());
    }

    #[test]
    fn ego_invariance_under_rigid_transforms() {
        let e = env(17);
        let id = e.ego_invariance_probe(&Pose::IDENTITY);
        assert!(id.max_abs_diff(e.state()) < 1e-12);

        let shift = Pose::from_translation(Vec3::new(100.0, -50.0, 20.0));
        assert!(e.ego_invariance_probe(&shift).max_abs_diff(e.state()) < 1e-10);

        let turn = Pose::new(
            Vec3::new(3.0, 4.0, 5.0),
            Quaternion::from_axis_angle(Vec3::new(1.0, 2.0, -1.0), 2.1),
        );
        assert!(e.ego_invariance_probe(&turn).max_abs_diff(e.state()) < 1e-10);
    }

    #[test]
    fn episode_return_stays_in_reward_band() {
        let mut e = env(55);
        let horizon = e.params().mdp.horizon;
        let mut ret = 0.0;
        let a = [0.3, 0.0, 0.0, 0.0, 0.0, 0.0];
        for _ in 0..horizon {
            let out = e.step(&a);
            ret += out.reward;
            if out.done {
                break;
            }
        }
        let beta = -0.02;
        let lo = -1.0 + (horizon as f64 - 1.0) * beta;
        assert!(ret >= lo && ret <= 1.0, "return {ret} outside [{lo}, 1]");
    }

    #[test]
    fn state_array_round_trip() {
        let e = env(2);
        let arr = e.state().to_array();
        let back = EgoState::from_array(&arr);
        assert!(back.max_abs_diff(e.state()) < 1e-12);
    }

    #[test]
    fn goal_target_tracks_goal_distance() {
        // The success target must depend on the per-episode goal d.
        let mut found_difference = false;
        let mut prev: Option<(f64, Pose)> = None;
        for seed in 0..10 {
            let e = env(seed);
            if let Some((pd, pt)) = prev {
                if (pd - e.goal_d()).abs() > 1e-3 {
                    found_difference = true;
                    assert!(
                        (pt.position - e.goal_needle_in_regrasp().position).norm() > 1e-6,
                        "target must move with goal d"
                    );
                }
            }
            prev = Some((e.goal_d(), *e.goal_needle_in_regrasp()));
        }
        assert!(found_difference, "goal d should vary across seeds");
    }

    #[test]
    fn funnel_requires_descending_radii() {
        let e = env(1);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let f = e.funnel_profile(&[20.0, 10.0, 5.0], 50, &mut rng);
        assert_eq!(f.len(), 3);
        for v in f {
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    #[should_panic(expected = "descending")]
    fn funnel_rejects_unsorted_radii() {
        let e = env(1);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        e.funnel_profile(&[5.0, 10.0], 10, &mut rng);
    }

    #[test]
    fn spawn_side_matches_goal_side() {
        // The spawn should sit on the goal's side of the needle plane
        // (negative x), away from the grasping gripper.
        for seed in 0..20 {
            let e = env(seed);
            let spawn = e.regrasp_in_needle();
            assert!(spawn.position.x < 0.0, "seed {seed}: {:?}", spawn.position);
        }
    }

    #[test]
    fn start_goal_gap_is_a_few_millimetres() {
        // Spawn 13 mm from the center along the goal direction lands the
        // start about 4 mm from the goal EE.
        for seed in 0..10 {
            let e = env(seed);
            let d = (e.regrasp_in_needle().position - e.goal_ee_in_needle().position).norm();
            assert!((2.0..7.0).contains(&d), "seed {seed}: start-goal distance {d}");
        }
    }

    #[test]
    fn initial_grasp_alpha_in_configured_band() {
        for seed in 0..20 {
            let e = env(seed);
            let a = e.initial_grasp().alpha;
            assert!((11.0 * PI / 18.0..13.0 * PI / 18.0).contains(&a));
        }
    }
}
