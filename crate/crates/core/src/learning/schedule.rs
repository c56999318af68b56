//! Exploration schedules for the episode generator.

use serde::{Deserialize, Serialize};

/// Exploration strategy variants compared in the benchmarks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Plain,
    Targeted,
    Mixed,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Plain => "plain",
            Variant::Targeted => "targeted",
            Variant::Mixed => "mixed",
        }
    }

    pub fn schedule(&self) -> ExplorationSchedule {
        match self {
            Variant::Plain => ExplorationSchedule::new(0.3, 6e-4, 0.0, 0.0),
            Variant::Targeted => ExplorationSchedule::new(0.02, 0.0, 0.5, 0.0),
            Variant::Mixed => ExplorationSchedule::new(0.3, 6e-4, 0.1, 4.5e-3),
        }
    }
}

/// eps_r: per-step probability of acting with exploration noise.
/// eps_t: probability of appending a planner demonstration after a
/// failed episode. After every generation round eps_r decays by
/// d_eps_r (floor 0) and eps_t grows by d_eps_t (ceiling 1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplorationSchedule {
    pub eps_r: f64,
    pub eps_t: f64,
    pub d_eps_r: f64,
    pub d_eps_t: f64,
}

impl ExplorationSchedule {
    pub fn new(eps_r: f64, d_eps_r: f64, eps_t: f64, d_eps_t: f64) -> Self {
        assert!((0.0..=1.0).contains(&eps_r) && (0.0..=1.0).contains(&eps_t));
        assert!(d_eps_r >= 0.0 && d_eps_t >= 0.0);
        ExplorationSchedule { eps_r, eps_t, d_eps_r, d_eps_t }
    }

    pub fn update(&mut self) {
        self.eps_r = (self.eps_r - self.d_eps_r).max(0.0);
        self.eps_t = (self.eps_t + self.d_eps_t).min(1.0);
    }
}
