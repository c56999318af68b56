//! Uniform-replay ring buffer over environment transitions.

use crate::env::episode::Episode;
use crate::env::EgoState;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const STATE_DIM: usize = 21;
pub const ACTION_DIM: usize = 6;

/// One transition, stored in f32. Actions are the executed 6-vectors in
/// environment units (mm / rad); `terminal` marks collision or success
/// (horizon truncation still bootstraps, so it is not terminal here).
#[derive(Clone, Copy, Debug)]
pub struct Transition {
    pub s: [f32; STATE_DIM],
    pub a: [f32; ACTION_DIM],
    pub r: f32,
    pub s2: [f32; STATE_DIM],
    pub terminal: bool,
    pub demo: bool,
}

fn to_f32_state(s: &EgoState) -> [f32; STATE_DIM] {
    let arr = s.to_array();
    std::array::from_fn(|i| arr[i] as f32)
}

pub struct ReplayBuffer {
    data: Vec<Transition>,
    capacity: usize,
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        ReplayBuffer { data: Vec::with_capacity(capacity.min(1 << 20)), capacity, head: 0 }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// Appends every step of an episode, flagged via `Episode::is_demo`.
    pub fn push_episode(&mut self, ep: &Episode) {
        for step in &ep.steps {
            self.push(Transition {
                s: to_f32_state(&step.state),
                a: std::array::from_fn(|i| step.action[i] as f32),
                r: step.reward as f32,
                s2: to_f32_state(&step.next_state),
                terminal: step.collision || step.success,
                demo: ep.is_demo,
            });
        }
    }

    /// Uniform sample of `n` occupied slots (with replacement).
    pub fn sample_indices(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        assert!(!self.data.is_empty(), "sampling an empty buffer");
        (0..n).map(|_| rng.random_range(0..self.data.len())).collect()
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.data[i]
    }

    pub fn demo_fraction(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().filter(|t| t.demo).count() as f64 / self.data.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn t(tag: f32, demo: bool) -> Transition {
        Transition {
            s: [tag; STATE_DIM],
            a: [0.0; ACTION_DIM],
            r: tag,
            s2: [tag; STATE_DIM],
            terminal: false,
            demo,
        }
    }

    #[test]
    fn ring_evicts_oldest_first() {
        let mut b = ReplayBuffer::new(3);
        for i in 0..5 {
            b.push(t(i as f32, i % 2 == 0));
        }
        assert_eq!(b.len(), 3);
        let rewards: Vec<f32> = (0..3).map(|i| b.get(i).r).collect();
        // Slots hold 3, 4 (overwrote 0, 1) and 2.
        assert!(rewards.contains(&2.0) && rewards.contains(&3.0) && rewards.contains(&4.0));
        assert!(!rewards.contains(&0.0));
    }

    #[test]
    fn demo_flags_survive_storage() {
        let mut b = ReplayBuffer::new(10);
        b.push(t(1.0, true));
        b.push(t(2.0, false));
        assert!(b.get(0).demo);
        assert!(!b.get(1).demo);
        assert!((b.demo_fraction() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn sampling_is_uniform_over_slots() {
        let mut b = ReplayBuffer::new(8);
        for i in 0..8 {
            b.push(t(i as f32, false));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 16000;
        let mut counts = [0usize; 8];
        for i in b.sample_indices(n, &mut rng) {
            counts[i] += 1;
        }
        // Chi-square against uniform with 7 dof; 99.9% quantile ~ 24.3.
        let expect = n as f64 / 8.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
        assert!(chi2 < 24.3, "chi2 {chi2}, counts {counts:?}");
    }
}
