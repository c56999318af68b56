//! Workbench for bimanual needle regrasping.
//!
//! A circular suture needle held by one robotic gripper must be taken over
//! by a second gripper at a specific grasp configuration. The problem is
//! modeled ego-centrically: every pose is expressed relative to the
//! grasping end-effector, which makes states invariant to rigid motions of
//! the whole scene and lets a single policy generalize across workspace
//! placements.
//!
//! The crate provides, bottom up:
//!
//! * [`geometry`]: SE(3) poses, quaternions, metrics.
//! * [`needle`]: the semicircular needle model and grasp frames.
//! * [`env`]: the regrasp environment with capsule-based collision
//!   checking, sparse rewards, and episode recording.
//! * [`planners`]: RRT*, PRM* and BIT* over the 6-DoF gripper pose, in
//!   forward or reverse mode, plus demonstration extraction.
//! * [`learning`]: a self-contained DDPG+BC learner (dense MLPs, replay
//!   buffer, mixed exploration schedules) requiring no external ML
//!   runtime.
//! * [`harness`]: benchmark suites, statistics, and result tables tying
//!   the pieces together.

pub mod env;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod learning;
pub mod needle;
pub mod planners;

pub use error::{Error, Result};
