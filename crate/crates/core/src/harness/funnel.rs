//! Funnel study: feasible-fraction vs distance-to-goal curve showing the
//! narrow passage around the goal grasp.

use super::config::FunnelSettings;
use super::stats::spearman;
use crate::env::{EnvParams, RegraspEnv};
use crate::error::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;

#[derive(Clone, Debug)]
pub struct FunnelStudy {
    pub radii: Vec<f64>,
    pub fractions: Vec<f64>,
    /// Rank correlation between radius and feasible fraction; near +1
    /// when feasibility shrinks monotonically toward the goal.
    pub spearman_radius_fraction: f64,
}

pub fn run_funnel_study(
    params: &EnvParams,
    settings: &FunnelSettings,
    world_seed: u64,
    sample_seed: u64,
) -> Result<FunnelStudy> {
    let env = RegraspEnv::new(*params, world_seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
    let fractions = env.funnel_profile(&settings.radii, settings.samples_per_radius, &mut rng);
    let rho = spearman(&settings.radii, &fractions);
    Ok(FunnelStudy {
        radii: settings.radii.clone(),
        fractions,
        spearman_radius_fraction: rho,
    })
}

/// Columns: radius_mm, feasible_fraction.
pub fn write_funnel_csv(path: &Path, study: &FunnelStudy) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["radius_mm", "feasible_fraction"])?;
    for (r, f) in study.radii.iter().zip(&study.fractions) {
        w.write_record(&[r.to_string(), f.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
