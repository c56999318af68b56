//! Reverse demonstration generation.
//!
//! A demonstration is planned in reverse (search rooted at the goal
//! grasp), the waypoints are flipped and densified to the action bounds,
//! and the resulting actions are replayed through the environment, which
//! labels every transition with the real reward signal. The environment
//! replay is the authority: the planner's swept checks share the same
//! resolution but not the same interpolation points, so an episode is
//! accepted only if its replay ends in success within the step limit.
//!
//! Start poses are drawn from two sources: the episode's own spawn pose,
//! or a uniform collision-free pose in the scene box, mixed by
//! `free_start_fraction` so a learner sees both the canonical approach
//! and recovery from arbitrary placements.

use super::{densify, plan, PlanMode, PlannerConfig, Scene};
use crate::env::episode::{DatasetManifest, Episode, EpisodeStep, DATASET_VERSION};
use crate::env::{EgoAction, EnvParams, RegraspEnv};
use crate::error::{Error, Result};
use crate::geometry::Pose;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DemoConfig {
    /// Planner used for the reverse search; `mode` must be `Reverse`.
    pub planner: PlannerConfig,
    /// Probability that a demonstration starts from a uniform free pose
    /// instead of the episode spawn.
    pub free_start_fraction: f64,
    /// Demonstrations longer than this many actions are rejected.
    pub max_steps: usize,
    /// Replans (fresh planner seed and start draw) per episode before
    /// giving up on it.
    pub attempts: usize,
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig {
            planner: PlannerConfig::bit_star(PlanMode::Reverse).with_budget(5.0),
            free_start_fraction: 0.5,
            max_steps: 100,
            attempts: 3,
        }
    }
}

/// How a demonstration's start pose was chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StartKind {
    Spawn,
    Free,
}

impl StartKind {
    pub fn name(&self) -> &'static str {
        match self {
            StartKind::Spawn => "spawn",
            StartKind::Free => "free",
        }
    }
}

/// splitmix64; decorrelates derived RNG streams from a base seed.
pub(crate) fn mix_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generates one demonstration for the episode identified by `seed`.
/// Returns the accepted episode and its start kind, or `None` when every
/// attempt failed (planner timeout or replay rejection).
pub fn demonstrate(
    env: &mut RegraspEnv,
    seed: u64,
    cfg: &DemoConfig,
) -> Result<Option<(Episode, StartKind)>> {
    if cfg.planner.mode != PlanMode::Reverse {
        return Err(Error::Demonstration("demonstrations require a reverse-mode planner".into()));
    }
    for attempt in 0..cfg.attempts {
        env.reset_from_seed(seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 2 * attempt as u64));
        let start_kind = if rng.random::<f64>() < cfg.free_start_fraction {
            StartKind::Free
        } else {
            StartKind::Spawn
        };
        if start_kind == StartKind::Free && !apply_free_start(env, &mut rng) {
            continue;
        }
        let plan_seed = mix_seed(seed, 2 * attempt as u64 + 1);
        if let Some(episode) =
            demonstrate_from_current(env, &cfg.planner, plan_seed, cfg.max_steps, seed)?
        {
            return Ok(Some((episode, start_kind)));
        }
    }
    Ok(None)
}

/// Plans from the environment's current (already reset or installed)
/// start and replays the densified path. Leaves the environment at the
/// replay's end state; callers reset before reusing it. `label_seed` is
/// recorded as the episode's seed.
pub fn demonstrate_from_current(
    env: &mut RegraspEnv,
    planner: &PlannerConfig,
    plan_seed: u64,
    max_steps: usize,
    label_seed: u64,
) -> Result<Option<Episode>> {
    if planner.mode != PlanMode::Reverse {
        return Err(Error::Demonstration("demonstrations require a reverse-mode planner".into()));
    }
    let outcome = plan(env, planner, plan_seed);
    let Some(waypoints) = outcome.waypoints else { return Ok(None) };
    let dense = densify(
        &waypoints,
        env.params().mdp.max_step_translation,
        env.params().mdp.max_step_rotation,
    );
    if dense.len() < 2 || dense.len() - 1 > max_steps {
        return Ok(None);
    }
    Ok(replay_dense_path(env, label_seed, &dense))
}

/// Samples a collision-free start in the scene box and installs it.
fn apply_free_start(env: &mut RegraspEnv, rng: &mut ChaCha8Rng) -> bool {
    let (candidate, ok) = {
        let scene = Scene::new(env, 20.0);
        let mut found = None;
        for _ in 0..200 {
            let pose = scene.sample(rng);
            if scene.valid(&pose) {
                found = Some(pose);
                break;
            }
        }
        match found {
            Some(p) => (p, true),
            None => (env.state().regrasp_in_grasping, false),
        }
    };
    ok && env.set_regrasp_start(&candidate).is_ok()
}

/// Replays a densified waypoint chain through the environment. Accepts
/// only episodes that terminate in success.
fn replay_dense_path(env: &mut RegraspEnv, seed: u64, dense: &[Pose]) -> Option<Episode> {
    let mut steps = Vec::with_capacity(dense.len() - 1);
    for pair in dense.windows(2) {
        if env.is_terminal() {
            break;
        }
        let state = *env.state();
        let action = EgoAction::between(&pair[0], &pair[1]).to_vector6();
        let out = env.step(&action);
        steps.push(EpisodeStep {
            state,
            action: out.info.executed,
            reward: out.reward,
            done: out.done,
            collision: out.info.collision,
            success: out.info.success,
            next_state: out.state,
        });
        if out.info.collision {
            return None;
        }
    }
    match steps.last() {
        Some(last) if last.success => Some(Episode { seed, is_demo: true, steps }),
        _ => None,
    }
}

/// Generates demonstrations for consecutive episode seeds starting at
/// `base_seed` until `count` are accepted; episodes that defeat every
/// attempt are skipped. Gives up once `max_seeds` seeds were consumed.
pub fn generate(
    params: &EnvParams,
    base_seed: u64,
    count: usize,
    max_seeds: usize,
    cfg: &DemoConfig,
) -> Result<(Vec<Episode>, DatasetManifest)> {
    let mut env = RegraspEnv::new(*params, base_seed)?;
    let mut episodes = Vec::with_capacity(count);
    let mut seeds = Vec::with_capacity(count);
    let mut start_kinds = Vec::with_capacity(count);
    let mut consumed = 0;
    while episodes.len() < count && consumed < max_seeds {
        let seed = base_seed + consumed as u64;
        consumed += 1;
        if let Some((ep, kind)) = demonstrate(&mut env, seed, cfg)? {
            seeds.push(seed);
            start_kinds.push(kind.name().to_string());
            episodes.push(ep);
        }
    }
    if episodes.len() < count {
        return Err(Error::Demonstration(format!(
            "only {} of {count} demonstrations succeeded within {max_seeds} seeds",
            episodes.len()
        )));
    }
    let manifest = DatasetManifest {
        version: DATASET_VERSION,
        count: episodes.len(),
        seeds,
        start_kinds,
        planner: cfg.planner.kind.name().to_string(),
        mode: cfg.planner.mode.name().to_string(),
        success_count: episodes.len(),
    };
    Ok((episodes, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::episode::{read_episodes_csv, replay_episode, write_episodes_csv};

    #[test]
    fn demonstrations_end_in_success_and_respect_bounds() {
        let params = EnvParams::default();
        let cfg = DemoConfig::default();
        let (eps, manifest) = generate(&params, 100, 4, 12, &cfg).unwrap();
        assert_eq!(eps.len(), 4);
        assert_eq!(manifest.count, 4);
        assert_eq!(manifest.mode, "reverse");
        for ep in &eps {
            assert!(ep.succeeded());
            assert!(ep.steps.len() <= cfg.max_steps);
            for s in &ep.steps {
                let tn = (s.action[0].powi(2) + s.action[1].powi(2) + s.action[2].powi(2)).sqrt();
                let rn = (s.action[3].powi(2) + s.action[4].powi(2) + s.action[5].powi(2)).sqrt();
                assert!(tn <= params.mdp.max_step_translation + 1e-9);
                assert!(rn <= params.mdp.max_step_rotation + 1e-9);
            }
            assert_eq!(ep.steps.last().unwrap().reward, 1.0);
        }
    }

    #[test]
    fn demonstrations_replay_bit_exactly_through_csv() {
        let params = EnvParams::default();
        let cfg = DemoConfig::default();
        let (eps, manifest) = generate(&params, 300, 3, 10, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("demos.csv");
        write_episodes_csv(&path, &eps).unwrap();
        let back = read_episodes_csv(&path).unwrap();
        let mut env = RegraspEnv::new(params, 0).unwrap();
        for (rec, &seed) in back.iter().zip(&manifest.seeds) {
            let report = replay_episode(&mut env, seed, rec).unwrap();
            assert_eq!(report.max_state_error, 0.0);
            assert!(report.rewards_match && report.flags_match);
            assert!(report.ends_in_success);
        }
    }

    #[test]
    fn forward_planner_config_is_rejected() {
        let params = EnvParams::default();
        let mut env = RegraspEnv::new(params, 1).unwrap();
        let cfg = DemoConfig {
            planner: PlannerConfig::bit_star(PlanMode::Forward),
            ..DemoConfig::default()
        };
        assert!(demonstrate(&mut env, 1, &cfg).is_err());
    }
}
