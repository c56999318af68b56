//! Running per-dimension observation normalization.

use super::buffer::STATE_DIM;
use serde::{Deserialize, Serialize};

/// Welford-style running mean/variance over observations; normalized
/// values are clipped to [-clip, clip]. Accumulators stay in f64 so the
/// statistics remain stable over millions of observations.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ObsNormalizer {
    pub count: u64,
    pub mean: [f64; STATE_DIM],
    m2: [f64; STATE_DIM],
    pub clip: f64,
}

impl Default for ObsNormalizer {
    fn default() -> Self {
        ObsNormalizer { count: 0, mean: [0.0; STATE_DIM], m2: [0.0; STATE_DIM], clip: 5.0 }
    }
}

impl ObsNormalizer {
    pub fn update(&mut self, obs: &[f32; STATE_DIM]) {
        self.count += 1;
        let n = self.count as f64;
        for i in 0..STATE_DIM {
            let x = obs[i] as f64;
            let d = x - self.mean[i];
            self.mean[i] += d / n;
            self.m2[i] += d * (x - self.mean[i]);
        }
    }

    pub fn std(&self, i: usize) -> f64 {
        if self.count < 2 {
            return 1.0;
        }
        (self.m2[i] / self.count as f64).sqrt().max(1e-4)
    }

    pub fn normalize(&self, obs: &[f32; STATE_DIM]) -> [f32; STATE_DIM] {
        std::array::from_fn(|i| {
            let z = (obs[i] as f64 - self.mean[i]) / self.std(i);
            z.clamp(-self.clip, self.clip) as f32
        })
    }

    /// Raw Welford accumulators for serialization.
    pub fn raw_parts(&self) -> (u64, [f64; STATE_DIM], [f64; STATE_DIM], f64) {
        (self.count, self.mean, self.m2, self.clip)
    }

    pub fn from_raw_parts(
        count: u64,
        mean: [f64; STATE_DIM],
        m2: [f64; STATE_DIM],
        clip: f64,
    ) -> Self {
        ObsNormalizer { count, mean, m2, clip }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_two_pass_statistics() {
        let mut n = ObsNormalizer::default();
        let samples: Vec<[f32; STATE_DIM]> =
            (0..500).map(|k| std::array::from_fn(|i| ((k * 31 + i * 7) % 97) as f32 * 0.1)).collect();
        for s in &samples {
            n.update(s);
        }
        for i in 0..STATE_DIM {
            let vals: Vec<f64> = samples.iter().map(|s| s[i] as f64).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!((n.mean[i] - mean).abs() < 1e-9);
            assert!((n.std(i) - var.sqrt()).abs() < 1e-9);
        }
    }

    #[test]
    fn clips_to_five_sigma() {
        let mut n = ObsNormalizer::default();
        for k in 0..100 {
            n.update(&std::array::from_fn(|_| (k % 10) as f32));
        }
        let wild = [1e6f32; STATE_DIM];
        let z = n.normalize(&wild);
        assert!(z.iter().all(|&v| v == 5.0));
    }

    #[test]
    fn degenerate_dimension_stays_finite() {
        let mut n = ObsNormalizer::default();
        for _ in 0..50 {
            n.update(&[2.5; STATE_DIM]);
        }
        let z = n.normalize(&[2.5; STATE_DIM]);
        assert!(z.iter().all(|v| v.is_finite() && v.abs() < 1e-6));
    }
}
