//! Versioned experiment configuration: one JSON document that pins every
//! knob of a run, hashable for provenance.

use crate::env::EnvParams;
use crate::error::{Error, Result};
use crate::learning::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

pub const CONFIG_VERSION: u32 = 1;

/// Per-planner wall-clock budgets, seconds.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PlannerBudgets {
    pub rrt_star_s: f64,
    pub prm_star_s: f64,
    pub bit_star_s: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FunnelSettings {
    /// Sampling radii, mm, sorted strictly descending.
    pub radii: Vec<f64>,
    pub samples_per_radius: usize,
}

impl Default for FunnelSettings {
    fn default() -> Self {
        FunnelSettings {
            radii: vec![20.0, 16.0, 13.0, 10.0, 8.0, 6.0, 5.0, 4.0, 3.0, 2.0],
            samples_per_radius: 1000,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub version: u32,
    /// Profile label the config was derived from ("desk" or "paper").
    pub profile: String,
    pub master_seed: u64,
    /// Shared-seed test set size; every variant runs the same worlds.
    pub test_set_size: usize,
    pub env: EnvParams,
    pub train: TrainConfig,
    pub budgets: PlannerBudgets,
    pub funnel: FunnelSettings,
}

impl ExperimentConfig {
    /// Desktop-scale profile: smaller networks and budgets sized for a
    /// single CPU core.
    pub fn desk(master_seed: u64) -> Self {
        ExperimentConfig {
            version: CONFIG_VERSION,
            profile: "desk".into(),
            master_seed,
            test_set_size: 300,
            env: EnvParams::default(),
            train: TrainConfig::desk(),
            budgets: PlannerBudgets { rrt_star_s: 60.0, prm_star_s: 60.0, bit_star_s: 20.0 },
            funnel: FunnelSettings::default(),
        }
    }

    /// Full-scale profile matching the published hyperparameters.
    pub fn paper(master_seed: u64) -> Self {
        ExperimentConfig {
            version: CONFIG_VERSION,
            profile: "paper".into(),
            master_seed,
            test_set_size: 300,
            env: EnvParams::default(),
            train: TrainConfig::default(),
            budgets: PlannerBudgets { rrt_star_s: 180.0, prm_star_s: 180.0, bit_star_s: 20.0 },
            funnel: FunnelSettings::default(),
        }
    }

    pub fn from_profile(name: &str, master_seed: u64) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk(master_seed)),
            "paper" => Ok(Self::paper(master_seed)),
            other => Err(Error::Config(format!("unknown profile '{other}' (desk|paper)"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "config version {} unsupported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.test_set_size == 0 {
            return Err(Error::Config("test_set_size must be positive".into()));
        }
        if !(self.budgets.rrt_star_s > 0.0
            && self.budgets.prm_star_s > 0.0
            && self.budgets.bit_star_s > 0.0)
        {
            return Err(Error::Config(format!("budgets must be positive: {:?}", self.budgets)));
        }
        if self.funnel.radii.len() < 2
            || !self.funnel.radii.windows(2).all(|w| w[0] > w[1])
            || self.funnel.radii.iter().any(|&r| r <= 0.0)
        {
            return Err(Error::Config("funnel radii must be positive, strictly descending".into()));
        }
        if self.funnel.samples_per_radius == 0 {
            return Err(Error::Config("funnel samples_per_radius must be positive".into()));
        }
        self.env.validate()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON serialization (struct field order
    /// is fixed, so equal configs hash equally).
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_validate_and_hash_deterministically() {
        for cfg in [ExperimentConfig::desk(1), ExperimentConfig::paper(1)] {
            cfg.validate().unwrap();
            assert_eq!(cfg.hash(), cfg.hash());
            assert_eq!(cfg.hash().len(), 64);
        }
        assert_ne!(ExperimentConfig::desk(1).hash(), ExperimentConfig::paper(1).hash());
        assert_ne!(ExperimentConfig::desk(1).hash(), ExperimentConfig::desk(2).hash());
    }

    #[test]
    fn round_trips_through_json_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        let cfg = ExperimentConfig::desk(7);
        cfg.save(&path).unwrap();
        let back = ExperimentConfig::load(&path).unwrap();
        assert_eq!(cfg.hash(), back.hash());
    }

    #[test]
    fn bad_configs_are_rejected() {
        let mut cfg = ExperimentConfig::desk(1);
        cfg.version = 99;
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::desk(1);
        cfg.funnel.radii = vec![5.0, 10.0];
        assert!(cfg.validate().is_err());

        assert!(ExperimentConfig::from_profile("gpu", 1).is_err());
    }
}
