//! Seeded benchmark runs over a shared test set, with per-trial CSV rows
//! and recomputable summaries.
//!
//! Timing semantics: a planner trial's `planning_time_s` is the wall
//! time of the `plan` call (sampling plus its own collision checks); a
//! policy trial's is the summed network forward-pass time, since the
//! environment transitions it interleaves stand in for the physical
//! world, not for planner compute. Timed sections run single-threaded;
//! trials are parallelized across workers and merged by trial index.

use super::stats::{mean, median};
use crate::env::{EnvParams, RegraspEnv};
use crate::error::{Error, Result};
use crate::learning::rollout::{policy_plan, Policy};
use crate::env::episode::Episode;
use crate::planners::demo::mix_seed;
use crate::planners::{densify, metric, path_cost, plan, PlannerConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;

/// Planner RNG stream tag; distinct from episode-construction seeds.
const PLAN_STREAM: u64 = 0x9_1a_2b;

#[derive(Clone, Debug, PartialEq)]
pub struct TrialRow {
    pub trial_id: usize,
    pub variant: String,
    pub mode: String,
    pub success: bool,
    pub planning_time_s: f64,
    /// Translation-only length, mm; absent on failure.
    pub path_length_mm: Option<f64>,
    pub steps: usize,
    pub collision: bool,
    pub seed: u64,
    /// Metric-weighted length (translation plus weighted rotation);
    /// absent on failure. Extra column beyond the fixed nine.
    pub weighted_path_mm: Option<f64>,
}

/// Runs one planner over the shared seeds. Each trial builds the world
/// from its seed, runs the planner once, and records the outcome; the
/// returned rows are ordered by trial index.
pub fn run_planner_benchmark(
    params: &EnvParams,
    planner: &PlannerConfig,
    seeds: &[u64],
) -> Result<Vec<TrialRow>> {
    let variant = planner.kind.name();
    let mode = planner.mode.name();
    let max_t = params.mdp.max_step_translation;
    let max_r = params.mdp.max_step_rotation;
    seeds
        .par_iter()
        .enumerate()
        .map(|(trial_id, &seed)| -> Result<TrialRow> {
            let env = RegraspEnv::new(*params, seed)?;
            let t0 = Instant::now();
            let outcome = plan(&env, planner, mix_seed(seed, PLAN_STREAM));
            let planning_time_s = t0.elapsed().as_secs_f64();
            let (path_length_mm, weighted_path_mm, steps) = match &outcome.waypoints {
                Some(wp) => (
                    Some(outcome.length_mm),
                    Some(path_cost(wp)),
                    densify(wp, max_t, max_r).len().saturating_sub(1),
                ),
                None => (None, None, 0),
            };
            Ok(TrialRow {
                trial_id,
                variant: variant.to_string(),
                mode: mode.to_string(),
                success: outcome.success(),
                planning_time_s,
                path_length_mm,
                steps,
                collision: false,
                seed,
                weighted_path_mm,
            })
        })
        .collect()
}

/// Metric-weighted length of the regrasping gripper's trajectory.
fn episode_weighted_length(ep: &Episode) -> f64 {
    ep.steps
        .iter()
        .map(|s| metric(&s.state.regrasp_in_grasping, &s.next_state.regrasp_in_grasping))
        .sum()
}

/// Rolls the policy once per seed. Success, collision and path length
/// come from the recorded episode; `steps` is the episode length.
pub fn run_policy_benchmark<P: Policy + Sync>(
    params: &EnvParams,
    policy: &P,
    variant: &str,
    seeds: &[u64],
) -> Result<Vec<TrialRow>> {
    seeds
        .par_iter()
        .enumerate()
        .map(|(trial_id, &seed)| -> Result<TrialRow> {
            let mut env = RegraspEnv::new(*params, seed)?;
            let run = policy_plan(&mut env, policy, seed)?;
            let ep = &run.episode;
            let success = ep.succeeded();
            Ok(TrialRow {
                trial_id,
                variant: variant.to_string(),
                mode: "rollout".to_string(),
                success,
                planning_time_s: run.inference_s,
                path_length_mm: success.then(|| ep.path_length()),
                steps: ep.steps.len(),
                collision: ep.collided(),
                seed,
                weighted_path_mm: success.then(|| episode_weighted_length(ep)),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub variant: String,
    pub n_trials: usize,
    /// successes / n_trials, exact.
    pub success_rate: f64,
    /// Mean over all trials (failures included at their recorded times).
    pub mean_time_s: f64,
    pub median_time_s: f64,
    /// Mean translation path length over successful trials only; absent
    /// when nothing succeeded.
    pub mean_path_mm: Option<f64>,
    pub config_hash: String,
}

pub fn summarize(label: &str, rows: &[TrialRow], config_hash: &str) -> Summary {
    let n = rows.len();
    let successes = rows.iter().filter(|r| r.success).count();
    let times: Vec<f64> = rows.iter().map(|r| r.planning_time_s).collect();
    let paths: Vec<f64> = rows.iter().filter_map(|r| r.path_length_mm).collect();
    Summary {
        variant: label.to_string(),
        n_trials: n,
        success_rate: if n == 0 { 0.0 } else { successes as f64 / n as f64 },
        mean_time_s: mean(&times),
        median_time_s: median(&times),
        mean_path_mm: if paths.is_empty() { None } else { Some(mean(&paths)) },
        config_hash: config_hash.to_string(),
    }
}

const TRIAL_HEADER: [&str; 10] = [
    "trial_id",
    "variant",
    "mode",
    "success",
    "planning_time_s",
    "path_length_mm",
    "steps",
    "collision",
    "seed",
    "weighted_path_mm",
];

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_trial_csv(path: &Path, rows: &[TrialRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRIAL_HEADER)?;
    for r in rows {
        w.write_record(&[
            r.trial_id.to_string(),
            r.variant.clone(),
            r.mode.clone(),
            r.success.to_string(),
            r.planning_time_s.to_string(),
            opt_cell(r.path_length_mm),
            r.steps.to_string(),
            r.collision.to_string(),
            r.seed.to_string(),
            opt_cell(r.weighted_path_mm),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trial_csv(path: &Path) -> Result<Vec<TrialRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != TRIAL_HEADER {
        return Err(Error::Dataset(format!("unexpected trial CSV header: {header:?}")));
    }
    let parse_opt = |s: &str, what: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse()
                .map(Some)
                .map_err(|_| Error::Dataset(format!("bad {what}: {s}")))
        }
    };
    let mut rows = Vec::new();
    for record in reader.records() {
        let rec = record?;
        let field = |i: usize| rec.get(i).unwrap_or_default();
        let parse = |i: usize, what: &str| -> Result<f64> {
            field(i).parse().map_err(|_| Error::Dataset(format!("bad {what}: {}", field(i))))
        };
        rows.push(TrialRow {
            trial_id: field(0)
                .parse()
                .map_err(|_| Error::Dataset(format!("bad trial_id: {}", field(0))))?,
            variant: field(1).to_string(),
            mode: field(2).to_string(),
            success: field(3)
                .parse()
                .map_err(|_| Error::Dataset(format!("bad success: {}", field(3))))?,
            planning_time_s: parse(4, "planning_time_s")?,
            path_length_mm: parse_opt(field(5), "path_length_mm")?,
            steps: field(6)
                .parse()
                .map_err(|_| Error::Dataset(format!("bad steps: {}", field(6))))?,
            collision: field(7)
                .parse()
                .map_err(|_| Error::Dataset(format!("bad collision: {}", field(7))))?,
            seed: field(8).parse().map_err(|_| Error::Dataset(format!("bad seed: {}", field(8))))?,
            weighted_path_mm: parse_opt(field(9), "weighted_path_mm")?,
        });
    }
    Ok(rows)
}

pub fn write_summary_json(path: &Path, summaries: &[Summary]) -> Result<()> {
    let text = serde_json::to_string_pretty(summaries)?;
    std::fs::write(path, text)?;
    Ok(())
}
