//! DDPG with behavior cloning: actor-critic updates over the replay
//! buffer, target networks with periodic polyak averaging, and the
//! composite actor loss
//!   c_primary * (-mean Q(s, pi(s)) + c_action * mean pi(s)^2)
//! + c_bc * mean_demo (pi(s) - a_demo)^2.

use super::buffer::{ReplayBuffer, ACTION_DIM, STATE_DIM};
use super::mlp::{Activation, Adam, Mlp};
use super::normalizer::ObsNormalizer;
use crate::env::{EgoState, MdpConfig};
use ndarray::{s, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub iterations_per_epoch: usize,
    pub episodes_per_iteration: usize,
    pub updates_per_iteration: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Target networks are polyak-averaged every this many updates.
    pub target_every: u64,
    pub polyak: f64,
    pub gamma: f64,
    /// Quadratic action penalty coefficient inside the primary term.
    pub c_action: f64,
    /// Weight of the DDPG (primary) part of the actor loss.
    pub c_primary: f64,
    /// Weight of the behavior-cloning part of the actor loss.
    pub c_bc: f64,
    /// Demonstration episodes preloaded into the buffer before epoch 1.
    pub demo_count: usize,
    pub hidden: Vec<usize>,
    pub buffer_capacity: usize,
    /// Held-out evaluation episodes per epoch.
    pub eval_count: usize,
    pub normalize_obs: bool,
    /// Optional Q-filter on the cloning term: clone only where the
    /// demonstration action outscores the policy's.
    pub q_filter: bool,
}

impl Default for TrainConfig {
    /// Full-scale profile.
    fn default() -> Self {
        TrainConfig {
            epochs: 500,
            iterations_per_epoch: 10,
            episodes_per_iteration: 5,
            updates_per_iteration: 200,
            batch_size: 256,
            learning_rate: 1e-4,
            target_every: 40,
            polyak: 0.95,
            gamma: 0.99,
            c_action: 1.0,
            c_primary: 1e-3,
            c_bc: 1e-3,
            demo_count: 9900,
            hidden: vec![512, 512, 512],
            buffer_capacity: 1_000_000,
            eval_count: 100,
            normalize_obs: true,
            q_filter: false,
        }
    }
}

impl TrainConfig {
    /// Reduced profile sized for a single desktop CPU core.
    pub fn desk() -> Self {
        TrainConfig {
            epochs: 150,
            demo_count: 1500,
            hidden: vec![128, 128, 128],
            ..Self::default()
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct UpdateDiag {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub mean_q: f64,
    /// Mean squared policy output over the batch (action saturation /
    /// collapse probe).
    pub mean_pi_sq: f64,
    pub bc_samples: usize,
}

pub struct Agent {
    pub actor: Mlp<f32>,
    pub critic: Mlp<f32>,
    pub actor_target: Mlp<f32>,
    pub critic_target: Mlp<f32>,
    actor_opt: Adam<f32>,
    critic_opt: Adam<f32>,
    pub normalizer: ObsNormalizer,
    pub bounds: [f64; ACTION_DIM],
    pub updates: u64,
    normalize_obs: bool,
}

impl Agent {
    pub fn new(cfg: &TrainConfig, mdp: &MdpConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut actor_sizes = vec![STATE_DIM];
        actor_sizes.extend_from_slice(&cfg.hidden);
        actor_sizes.push(ACTION_DIM);
        let mut critic_sizes = vec![STATE_DIM + ACTION_DIM];
        critic_sizes.extend_from_slice(&cfg.hidden);
        critic_sizes.push(1);
        let actor = Mlp::new(&actor_sizes, Activation::Relu, Activation::Tanh, &mut rng);
        let critic = Mlp::new(&critic_sizes, Activation::Relu, Activation::Identity, &mut rng);
        let actor_target = actor.clone();
        let critic_target = critic.clone();
        let actor_opt = Adam::new(&actor, cfg.learning_rate as f32);
        let critic_opt = Adam::new(&critic, cfg.learning_rate as f32);
        let t = mdp.max_step_translation;
        let r = mdp.max_step_rotation;
        Agent {
            actor,
            critic,
            actor_target,
            critic_target,
            actor_opt,
            critic_opt,
            normalizer: ObsNormalizer::default(),
            bounds: [t, t, t, r, r, r],
            updates: 0,
            normalize_obs: cfg.normalize_obs,
        }
    }

    /// Rebuilds an agent from checkpoint parts. Optimizer moments are
    /// not serialized: only forward behavior must survive a round trip,
    /// so the Adams start fresh at the stored learning rate.
    pub(crate) fn from_parts(
        actor: Mlp<f32>,
        critic: Mlp<f32>,
        actor_target: Mlp<f32>,
        critic_target: Mlp<f32>,
        normalizer: ObsNormalizer,
        bounds: [f64; ACTION_DIM],
        updates: u64,
        normalize_obs: bool,
        lr: f64,
    ) -> Self {
        let actor_opt = Adam::new(&actor, lr as f32);
        let critic_opt = Adam::new(&critic, lr as f32);
        Agent {
            actor,
            critic,
            actor_target,
            critic_target,
            actor_opt,
            critic_opt,
            normalizer,
            bounds,
            updates,
            normalize_obs,
        }
    }

    pub fn normalizes_obs(&self) -> bool {
        self.normalize_obs
    }

    pub fn learning_rate(&self) -> f64 {
        self.actor_opt.lr as f64
    }

    pub fn observe(&self, s: &EgoState) -> [f32; STATE_DIM] {
        let raw = s.to_array();
        let raw32: [f32; STATE_DIM] = std::array::from_fn(|i| raw[i] as f32);
        if self.normalize_obs {
            self.normalizer.normalize(&raw32)
        } else {
            raw32
        }
    }

    /// Deterministic policy action in environment units (mm / rad).
    pub fn act(&self, s: &EgoState) -> [f64; ACTION_DIM] {
        let obs = self.observe(s);
        let y = self.actor.forward_row(&obs);
        std::array::from_fn(|i| y[i] as f64 * self.bounds[i])
    }

    /// One gradient update on a uniform batch: critic TD step, then the
    /// composite actor step; targets polyak-averaged on schedule.
    pub fn update(&mut self, buffer: &ReplayBuffer, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> UpdateDiag {
        let b = cfg.batch_size;
        let idx = buffer.sample_indices(b, rng);

        let mut xs = Array2::<f32>::zeros((b, STATE_DIM));
        let mut xsa = Array2::<f32>::zeros((b, STATE_DIM + ACTION_DIM));
        let mut xs2 = Array2::<f32>::zeros((b, STATE_DIM));
        let mut rews = vec![0.0f32; b];
        let mut cont = vec![0.0f32; b];
        let mut demo = vec![false; b];
        let mut a_norm = Array2::<f32>::zeros((b, ACTION_DIM));
        for (row, &i) in idx.iter().enumerate() {
            let t = buffer.get(i);
            let so = if self.normalize_obs { self.normalizer.normalize(&t.s) } else { t.s };
            let so2 = if self.normalize_obs { self.normalizer.normalize(&t.s2) } else { t.s2 };
            for j in 0..STATE_DIM {
                xs[[row, j]] = so[j];
                xsa[[row, j]] = so[j];
                xs2[[row, j]] = so2[j];
            }
            for j in 0..ACTION_DIM {
                let an = t.a[j] / self.bounds[j] as f32;
                xsa[[row, STATE_DIM + j]] = an;
                a_norm[[row, j]] = an;
            }
            rews[row] = t.r;
            cont[row] = if t.terminal { 0.0 } else { 1.0 };
            demo[row] = t.demo;
        }

        // TD target from the target networks.
        let pi2 = self.actor_target.forward(&xs2);
        let mut x2 = Array2::<f32>::zeros((b, STATE_DIM + ACTION_DIM));
        x2.slice_mut(s![.., ..STATE_DIM]).assign(&xs2);
        x2.slice_mut(s![.., STATE_DIM..]).assign(&pi2);
        let q2 = self.critic_target.forward(&x2);
        let gamma = cfg.gamma as f32;
        let y: Vec<f32> =
            (0..b).map(|row| rews[row] + gamma * cont[row] * q2[[row, 0]]).collect();

        // Critic step: mean squared TD error.
        let ccache = self.critic.forward_cached(&xsa);
        let q = ccache.output();
        let mut dq = Array2::<f32>::zeros((b, 1));
        let mut critic_loss = 0.0f64;
        for row in 0..b {
            let e = q[[row, 0]] - y[row];
            critic_loss += (e as f64) * (e as f64);
            dq[[row, 0]] = 2.0 * e / b as f32;
        }
        critic_loss /= b as f64;
        let (cgrads, _) = self.critic.backward(&ccache, &dq);
        self.critic_opt.step(&mut self.critic, &cgrads);

        // Actor step. The critic is evaluated at (s, pi(s)); its input
        // gradient w.r.t. the action columns carries dQ/dpi.
        let acache = self.actor.forward_cached(&xs);
        let pi = acache.output().clone();
        let mut xpi = Array2::<f32>::zeros((b, STATE_DIM + ACTION_DIM));
        xpi.slice_mut(s![.., ..STATE_DIM]).assign(&xs);
        xpi.slice_mut(s![.., STATE_DIM..]).assign(&pi);
        let qcache = self.critic.forward_cached(&xpi);
        let q_pi = qcache.output();
        let mean_q = q_pi.iter().map(|&v| v as f64).sum::<f64>() / b as f64;
        let c_primary = cfg.c_primary as f32;
        let dq_pi = Array2::<f32>::from_elem((b, 1), -c_primary / b as f32);
        let (_, dxpi) = self.critic.backward(&qcache, &dq_pi);
        let mut dpi = dxpi.slice(s![.., STATE_DIM..]).to_owned();

        // Quadratic action penalty, mean over all B x 6 elements.
        let c_pen = c_primary * cfg.c_action as f32 * 2.0 / (b * ACTION_DIM) as f32;
        dpi.scaled_add(c_pen, &pi);

        // Cloning term over demonstration rows (optionally Q-filtered).
        // Summed, not averaged, matching the cited baseline: cloning
        // pressure is strong while batches are demonstration-rich and
        // anneals as rollout transitions dilute them.
        let n_demo = (0..b)
            .filter(|&row| demo[row] && (!cfg.q_filter || q[[row, 0]] > q_pi[[row, 0]]))
            .count();
        let mean_pi_sq =
            pi.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>() / (b * ACTION_DIM) as f64;
        let mut actor_loss = cfg.c_primary * (-mean_q + cfg.c_action * mean_pi_sq);
        if n_demo > 0 {
            let c_clone = cfg.c_bc as f32 * 2.0;
            let mut bc_sq = 0.0f64;
            for row in 0..b {
                if demo[row] && (!cfg.q_filter || q[[row, 0]] > q_pi[[row, 0]]) {
                    for j in 0..ACTION_DIM {
                        let e = pi[[row, j]] - a_norm[[row, j]];
                        bc_sq += (e as f64) * (e as f64);
                        dpi[[row, j]] += c_clone * e;
                    }
                }
            }
            actor_loss += cfg.c_bc * bc_sq;
        }
        let (agrads, _) = self.actor.backward(&acache, &dpi);
        self.actor_opt.step(&mut self.actor, &agrads);

        self.updates += 1;
        if self.updates % cfg.target_every == 0 {
            let p = cfg.polyak as f32;
            self.actor_target.polyak_from(&self.actor, p);
            self.critic_target.polyak_from(&self.critic, p);
        }

        UpdateDiag { critic_loss, actor_loss, mean_q, mean_pi_sq, bc_samples: n_demo }
    }

    pub fn has_nan(&self) -> bool {
        self.actor.has_nan()
            || self.critic.has_nan()
            || self.actor_target.has_nan()
            || self.critic_target.has_nan()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learning::buffer::Transition;

    fn mdp() -> MdpConfig {
        MdpConfig::default()
    }

    fn constant_buffer(n: usize, r: f32, terminal: bool, demo: bool) -> ReplayBuffer {
        let mut b = ReplayBuffer::new(n);
        for _ in 0..n {
            b.push(Transition {
                s: [0.1; STATE_DIM],
                a: [0.0; ACTION_DIM],
                r,
                s2: [0.1; STATE_DIM],
                terminal,
                demo,
            });
        }
        b
    }

    #[test]
    fn critic_approaches_td_fixed_point_with_zero_gamma() {
        // Identical transitions with reward 0 and gamma 0: Q must head
        // to 0.
        let mut cfg = TrainConfig::desk();
        cfg.hidden = vec![16, 16];
        cfg.gamma = 0.0;
        cfg.learning_rate = 1e-3;
        let mut agent = Agent::new(&cfg, &mdp(), 1);
        let buffer = constant_buffer(64, 0.0, false, false);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut last = f64::INFINITY;
        for _ in 0..500 {
            last = agent.update(&buffer, &cfg, &mut rng).critic_loss;
        }
        assert!(last < 1e-4, "critic loss {last}");
        let t = buffer.get(0);
        let so = agent.normalizer.normalize(&t.s);
        let mut x = Array2::<f32>::zeros((1, STATE_DIM + ACTION_DIM));
        for j in 0..STATE_DIM {
            x[[0, j]] = so[j];
        }
        let q = agent.critic.forward(&x)[[0, 0]];
        assert!(q.abs() < 1e-2, "Q {q}");
    }

    #[test]
    fn target_updates_happen_on_schedule() {
        let mut cfg = TrainConfig::desk();
        cfg.hidden = vec![8];
        cfg.target_every = 40;
        let mut agent = Agent::new(&cfg, &mdp(), 3);
        let buffer = constant_buffer(32, -0.02, false, false);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let frozen = agent.actor_target.clone();
        for _ in 0..39 {
            agent.update(&buffer, &cfg, &mut rng);
        }
        // Targets untouched through update 39.
        for (a, b) in agent.actor_target.layers().iter().zip(frozen.layers()) {
            assert_eq!(a.w, b.w);
        }
        agent.update(&buffer, &cfg, &mut rng);
        let mut changed = false;
        for (a, b) in agent.actor_target.layers().iter().zip(frozen.layers()) {
            if a.w != b.w {
                changed = true;
            }
        }
        assert!(changed, "40th update must move the targets");
    }

    #[test]
    fn bc_term_counts_demo_rows_only() {
        let mut cfg = TrainConfig::desk();
        cfg.hidden = vec![8];
        let mut agent = Agent::new(&cfg, &mdp(), 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let demos = constant_buffer(16, 0.0, false, true);
        let plain = constant_buffer(16, 0.0, false, false);
        let d = agent.update(&demos, &cfg, &mut rng);
        assert_eq!(d.bc_samples, cfg.batch_size);
        let d2 = agent.update(&plain, &cfg, &mut rng);
        assert_eq!(d2.bc_samples, 0);
    }

    #[test]
    fn action_stays_inside_component_bounds() {
        let cfg = TrainConfig::desk();
        let agent = Agent::new(&cfg, &mdp(), 7);
        let e = crate::env::RegraspEnv::new(crate::env::EnvParams::default(), 11).unwrap();
        let a = agent.act(e.state());
        for (i, v) in a.iter().enumerate() {
            assert!(v.abs() <= agent.bounds[i] + 1e-9);
        }
    }
}
