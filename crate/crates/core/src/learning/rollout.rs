//! Episode generation with mixed exploration, policy evaluation, and
//! timed policy planning.

use super::buffer::ACTION_DIM;
use super::schedule::ExplorationSchedule;
use crate::env::episode::{Episode, EpisodeStep};
use crate::env::{EgoState, RegraspEnv};
use crate::error::Result;
use crate::planners::demo::{demonstrate_from_current, mix_seed};
use crate::planners::PlannerConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::time::Instant;

/// Deterministic state-to-action map; exploration noise is layered on
/// top by the episode generator.
pub trait Policy {
    fn act(&self, s: &EgoState) -> [f64; ACTION_DIM];
}

impl Policy for super::ddpg::Agent {
    fn act(&self, s: &EgoState) -> [f64; ACTION_DIM] {
        super::ddpg::Agent::act(self, s)
    }
}

/// Zero-mean Gaussian exploration noise, sigma = 10% of each action
/// bound.
pub const NOISE_SIGMA_FRACTION: f64 = 0.1;

/// Rolls one episode from the environment's current start. Each step
/// flips a coin: with probability `eps_r` the policy action gets
/// Gaussian noise, otherwise it is used as is.
pub fn rollout_episode<P: Policy>(
    env: &mut RegraspEnv,
    policy: &P,
    eps_r: f64,
    bounds: &[f64; ACTION_DIM],
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> Episode {
    let noise: Vec<Normal<f64>> = bounds
        .iter()
        .map(|&b| Normal::new(0.0, NOISE_SIGMA_FRACTION * b).expect("sigma positive"))
        .collect();
    let mut steps = Vec::new();
    loop {
        let state = *env.state();
        let mut action = policy.act(&state);
        if eps_r > 0.0 && rng.random::<f64>() < eps_r {
            for (a, n) in action.iter_mut().zip(&noise) {
                *a += n.sample(rng);
            }
        }
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
        if out.done {
            break;
        }
    }
    Episode { seed, is_demo: false, steps }
}

/// Output of one generation round.
pub struct GeneratedBatch {
    pub episodes: Vec<Episode>,
    /// Demonstrations appended by targeted exploration this round.
    pub demo_count: usize,
    pub rollout_successes: usize,
}

/// Mixed-exploration generator: N noisy-or-deterministic rollouts; every
/// failed rollout triggers, with probability `eps_t`, a reverse-planned
/// demonstration from the same episode start. Planner failures append
/// nothing (the expert is imperfect).
pub fn generate_episodes_mixed<P: Policy>(
    env: &mut RegraspEnv,
    policy: &P,
    schedule: &ExplorationSchedule,
    demo_planner: &PlannerConfig,
    episode_seeds: &[u64],
    bounds: &[f64; ACTION_DIM],
    max_steps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<GeneratedBatch> {
    let mut episodes = Vec::with_capacity(episode_seeds.len());
    let mut demo_count = 0;
    let mut rollout_successes = 0;
    for &seed in episode_seeds {
        env.reset_from_seed(seed)?;
        let ep = rollout_episode(env, policy, schedule.eps_r, bounds, seed, rng);
        let failed = !ep.succeeded();
        rollout_successes += usize::from(!failed);
        episodes.push(ep);
        if failed && schedule.eps_t > 0.0 && rng.random::<f64>() < schedule.eps_t {
            env.reset_from_seed(seed)?;
            let plan_seed = mix_seed(seed, rng.random::<u64>());
            if let Some(demo) =
                demonstrate_from_current(env, demo_planner, plan_seed, max_steps, seed)?
            {
                demo_count += 1;
                episodes.push(demo);
            }
        }
    }
    Ok(GeneratedBatch { episodes, demo_count, rollout_successes })
}

#[derive(Clone, Debug, Default)]
pub struct EvalReport {
    pub success_rate: f64,
    pub mean_return: f64,
    /// Mean translation path length over successful episodes, mm.
    pub mean_path_mm: f64,
    pub episodes: usize,
}

/// Deterministic evaluation over a fixed seed set.
pub fn evaluate<P: Policy>(
    env: &mut RegraspEnv,
    policy: &P,
    seeds: &[u64],
    bounds: &[f64; ACTION_DIM],
) -> Result<EvalReport> {
    let mut successes = 0usize;
    let mut ret = 0.0;
    let mut path = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for &seed in seeds {
        env.reset_from_seed(seed)?;
        let ep = rollout_episode(env, policy, 0.0, bounds, seed, &mut rng);
        ret += ep.episode_return();
        if ep.succeeded() {
            successes += 1;
            path += ep.path_length();
        }
    }
    let n = seeds.len().max(1);
    Ok(EvalReport {
        success_rate: successes as f64 / n as f64,
        mean_return: ret / n as f64,
        mean_path_mm: if successes > 0 { path / successes as f64 } else { 0.0 },
        episodes: n,
    })
}

/// One timed deterministic rollout. `inference_s` counts only the
/// policy's forward passes; `total_s` additionally includes environment
/// stepping.
pub struct PolicyRun {
    pub episode: Episode,
    pub inference_s: f64,
    pub total_s: f64,
}

pub fn policy_plan<P: Policy>(env: &mut RegraspEnv, policy: &P, seed: u64) -> Result<PolicyRun> {
    env.reset_from_seed(seed)?;
    let t_total = Instant::now();
    let mut inference_s = 0.0;
    let mut steps = Vec::new();
    loop {
        let state = *env.state();
        let t_inf = Instant::now();
        let action = policy.act(&state);
        inference_s += t_inf.elapsed().as_secs_f64();
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
        if out.done {
            break;
        }
    }
    Ok(PolicyRun {
        episode: Episode { seed, is_demo: false, steps },
        inference_s,
        total_s: t_total.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvParams;
    use crate::planners::PlanMode;

    struct Zero;

    impl Policy for Zero {
        fn act(&self, _s: &EgoState) -> [f64; ACTION_DIM] {
            [0.0; ACTION_DIM]
        }
    }

    #[test]
    fn zero_policy_times_out_without_noise() {
        let params = EnvParams::default();
        let mut env = RegraspEnv::new(params, 5).unwrap();
        env.reset_from_seed(5).unwrap();
        let bounds = [2.0, 2.0, 2.0, 0.1745, 0.1745, 0.1745];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ep = rollout_episode(&mut env, &Zero, 0.0, &bounds, 5, &mut rng);
        assert_eq!(ep.steps.len(), params.mdp.horizon);
        assert!(!ep.succeeded() && !ep.collided());
        // Every action is exactly zero without noise.
        assert!(ep.steps.iter().all(|s| s.action == [0.0; 6]));
    }

    #[test]
    fn noise_coin_flip_at_full_rate_perturbs_actions() {
        let params = EnvParams::default();
        let mut env = RegraspEnv::new(params, 6).unwrap();
        env.reset_from_seed(6).unwrap();
        let bounds = [2.0, 2.0, 2.0, 0.1745, 0.1745, 0.1745];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ep = rollout_episode(&mut env, &Zero, 1.0, &bounds, 6, &mut rng);
        assert!(ep.steps.iter().any(|s| s.action != [0.0; 6]));
    }

    #[test]
    fn targeted_demos_follow_failures() {
        let params = EnvParams::default();
        let mut env = RegraspEnv::new(params, 7).unwrap();
        let schedule = ExplorationSchedule::new(0.0, 0.0, 1.0, 0.0);
        let planner = PlannerConfig::bit_star(PlanMode::Reverse).with_budget(5.0);
        let bounds = [2.0, 2.0, 2.0, 0.1745, 0.1745, 0.1745];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let seeds: Vec<u64> = (70..73).collect();
        let batch = generate_episodes_mixed(
            &mut env,
            &Zero,
            &schedule,
            &planner,
            &seeds,
            &bounds,
            params.mdp.horizon,
            &mut rng,
        )
        .unwrap();
        // The zero policy fails every rollout; eps_t = 1 demands a demo
        // attempt for each, and the easy spawns should mostly succeed.
        assert_eq!(batch.rollout_successes, 0);
        assert!(batch.demo_count >= 2, "demos {}", batch.demo_count);
        assert_eq!(batch.episodes.len(), seeds.len() + batch.demo_count);
        for ep in batch.episodes.iter().filter(|e| e.is_demo) {
            assert!(ep.succeeded());
        }
    }

    #[test]
    fn eps_values_zero_mean_pure_rollouts() {
        let params = EnvParams::default();
        let mut env = RegraspEnv::new(params, 8).unwrap();
        let schedule = ExplorationSchedule::new(0.0, 0.0, 0.0, 0.0);
        let planner = PlannerConfig::bit_star(PlanMode::Reverse).with_budget(1.0);
        let bounds = [2.0, 2.0, 2.0, 0.1745, 0.1745, 0.1745];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let seeds: Vec<u64> = (80..83).collect();
        let batch = generate_episodes_mixed(
            &mut env,
            &Zero,
            &schedule,
            &planner,
            &seeds,
            &bounds,
            params.mdp.horizon,
            &mut rng,
        )
        .unwrap();
        assert_eq!(batch.episodes.len(), 3);
        assert_eq!(batch.demo_count, 0);
        assert!(batch.episodes.iter().all(|e| !e.is_demo));
    }

    #[test]
    fn policy_plan_times_inference_separately() {
        let params = EnvParams::default();
        let mut env = RegraspEnv::new(params, 9).unwrap();
        let run = policy_plan(&mut env, &Zero, 9).unwrap();
        assert!(run.inference_s > 0.0);
        assert!(run.total_s >= run.inference_s);
        assert_eq!(run.episode.steps.len(), params.mdp.horizon);
    }
}
