//! Episode traces: in-memory transitions, CSV persistence, and replay
//! validation.
//!
//! Trace CSV layout, one record per transition, in this column order:
//! `episode_id, t, s0..s20, a0..a5, reward, done, collision, success`.
//! `s*` is the 21-real ego state observed before the action (position
//! then `w,x,y,z` quaternion for each of the three poses), `a*` the
//! executed action 6-vector (mm translation, rad rotation vector), and
//! the flags are `0/1`. Floats are written with round-trip precision, so
//! a file round trip preserves values bit-exactly.

use super::{EgoState, RegraspEnv};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// One executed transition.
#[derive(Clone, Copy, Debug)]
pub struct EpisodeStep {
    pub state: EgoState,
    /// Executed (post-clip) action in physical units.
    pub action: [f64; 6],
    pub reward: f64,
    pub done: bool,
    pub collision: bool,
    pub success: bool,
    pub next_state: EgoState,
}

/// A complete rollout or demonstration.
#[derive(Clone, Debug)]
pub struct Episode {
    /// Seed that reconstructs the episode's world via `reset_from_seed`.
    pub seed: u64,
    pub is_demo: bool,
    pub steps: Vec<EpisodeStep>,
}

impl Episode {
    pub fn initial_state(&self) -> &EgoState {
        &self.steps.first().expect("episode has at least one step").state
    }

    pub fn final_state(&self) -> &EgoState {
        &self.steps.last().expect("episode has at least one step").next_state
    }

    pub fn succeeded(&self) -> bool {
        self.steps.last().is_some_and(|s| s.success)
    }

    pub fn collided(&self) -> bool {
        self.steps.last().is_some_and(|s| s.collision)
    }

    /// Failure means anything but success: collision or running out of
    /// steps.
    pub fn failed(&self) -> bool {
        !self.succeeded()
    }

    pub fn episode_return(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    /// Total regrasping-EE translation, mm.
    pub fn path_length(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| (s.action[0].powi(2) + s.action[1].powi(2) + s.action[2].powi(2)).sqrt())
            .sum()
    }
}

/// A transition read back from a trace file.
#[derive(Clone, Debug)]
pub struct RecordedRow {
    pub t: usize,
    pub state: [f64; EgoState::DIM],
    pub action: [f64; 6],
    pub reward: f64,
    pub done: bool,
    pub collision: bool,
    pub success: bool,
}

/// A recorded episode: contiguous rows sharing one `episode_id`.
#[derive(Clone, Debug)]
pub struct RecordedEpisode {
    pub id: u64,
    pub rows: Vec<RecordedRow>,
}

/// Sidecar metadata for a trace dataset.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub count: usize,
    /// Per-episode environment seeds, aligned with episode ids `0..count`.
    pub seeds: Vec<u64>,
    /// Per-episode start-pose provenance (`"spawn"` or `"free"`).
    pub start_kinds: Vec<String>,
    pub planner: String,
    pub mode: String,
    pub success_count: usize,
}

pub const DATASET_VERSION: u32 = 1;

impl DatasetManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(file, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let m: DatasetManifest = serde_json::from_reader(file)?;
        if m.version != DATASET_VERSION {
            return Err(Error::Dataset(format!(
                "unsupported dataset version {} (expected {DATASET_VERSION})",
                m.version
            )));
        }
        if m.seeds.len() != m.count || m.start_kinds.len() != m.count {
            return Err(Error::Dataset(
                "manifest seed/start_kind lengths disagree with count".into(),
            ));
        }
        Ok(m)
    }
}

fn header() -> Vec<String> {
    let mut h = vec!["episode_id".to_string(), "t".to_string()];
    h.extend((0..EgoState::DIM).map(|i| format!("s{i}")));
    h.extend((0..6).map(|i| format!("a{i}")));
    h.extend(["reward", "done", "collision", "success"].map(str::to_string));
    h
}

/// Writes episodes as one trace CSV; episode ids are the slice indices.
pub fn write_episodes_csv(path: &Path, episodes: &[Episode]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header())?;
    for (id, ep) in episodes.iter().enumerate() {
        for (t, step) in ep.steps.iter().enumerate() {
            let mut rec = Vec::with_capacity(2 + EgoState::DIM + 6 + 4);
            rec.push(id.to_string());
            rec.push(t.to_string());
            rec.extend(step.state.to_array().iter().map(|v| format_float(*v)));
            rec.extend(step.action.iter().map(|v| format_float(*v)));
            rec.push(format_float(step.reward));
            rec.push(u8::from(step.done).to_string());
            rec.push(u8::from(step.collision).to_string());
            rec.push(u8::from(step.success).to_string());
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Shortest representation that parses back to the identical f64.
fn format_float(v: f64) -> String {
    format!("{v}")
}

/// Reads a trace CSV back into episodes grouped by id.
pub fn read_episodes_csv(path: &Path) -> Result<Vec<RecordedEpisode>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut episodes: Vec<RecordedEpisode> = Vec::new();
    for record in r.records() {
        let record = record?;
        let expect = 2 + EgoState::DIM + 6 + 4;
        if record.len() != expect {
            return Err(Error::Dataset(format!(
                "trace row has {} fields, expected {expect}",
                record.len()
            )));
        }
        let field = |i: usize| -> Result<f64> {
            record[i]
                .parse::<f64>()
                .map_err(|e| Error::Dataset(format!("bad float {:?}: {e}", &record[i])))
        };
        let id: u64 = record[0]
            .parse()
            .map_err(|e| Error::Dataset(format!("bad episode id {:?}: {e}", &record[0])))?;
        let t: usize = record[1]
            .parse()
            .map_err(|e| Error::Dataset(format!("bad step index {:?}: {e}", &record[1])))?;
        let mut state = [0.0; EgoState::DIM];
        for (k, s) in state.iter_mut().enumerate() {
            *s = field(2 + k)?;
        }
        let mut action = [0.0; 6];
        for (k, a) in action.iter_mut().enumerate() {
            *a = field(2 + EgoState::DIM + k)?;
        }
        let base = 2 + EgoState::DIM + 6;
        let reward = field(base)?;
        let flag = |i: usize| -> Result<bool> {
            match &record[i] {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(Error::Dataset(format!("bad flag {other:?}"))),
            }
        };
        let row = RecordedRow {
            t,
            state,
            action,
            reward,
            done: flag(base + 1)?,
            collision: flag(base + 2)?,
            success: flag(base + 3)?,
        };
        match episodes.last_mut() {
            Some(ep) if ep.id == id => {
                if row.t != ep.rows.len() {
                    return Err(Error::Dataset(format!(
                        "episode {id}: non-contiguous step index {}",
                        row.t
                    )));
                }
                ep.rows.push(row);
            }
            _ => {
                if row.t != 0 {
                    return Err(Error::Dataset(format!(
                        "episode {id} does not start at step 0"
                    )));
                }
                episodes.push(RecordedEpisode { id, rows: vec![row] });
            }
        }
    }
    Ok(episodes)
}

/// Outcome of re-running a recorded episode through a fresh environment.
#[derive(Clone, Copy, Debug)]
pub struct ReplayReport {
    pub episode_id: u64,
    pub steps: usize,
    /// Largest per-component difference between recorded and replayed
    /// states.
    pub max_state_error: f64,
    pub rewards_match: bool,
    pub flags_match: bool,
    pub ends_in_success: bool,
}

/// Replays a recorded episode: resets the environment from `seed`,
/// restores the recorded start pose if it differs from the seeded spawn,
/// then applies the recorded actions and compares states and rewards.
pub fn replay_episode(
    env: &mut RegraspEnv,
    seed: u64,
    ep: &RecordedEpisode,
) -> Result<ReplayReport> {
    if ep.rows.is_empty() {
        return Err(Error::Dataset(format!("episode {} has no rows", ep.id)));
    }
    env.reset_from_seed(seed)?;
    let recorded_start = EgoState::from_array(&ep.rows[0].state);
    if recorded_start.max_abs_diff(env.state()) > 1e-9 {
        env.set_regrasp_start(&recorded_start.regrasp_in_grasping)?;
    }

    let mut max_err = 0.0_f64;
    let mut rewards_match = true;
    let mut flags_match = true;
    let mut ends_in_success = false;
    for row in &ep.rows {
        if env.is_terminal() {
            return Err(Error::Dataset(format!(
                "episode {}: rows continue past a terminal step",
                ep.id
            )));
        }
        let recorded = EgoState::from_array(&row.state);
        max_err = max_err.max(recorded.max_abs_diff(env.state()));
        let out = env.step_executed(&row.action);
        rewards_match &= out.reward == row.reward;
        flags_match &= out.done == row.done
            && out.info.collision == row.collision
            && out.info.success == row.success;
        ends_in_success = out.info.success;
    }
    Ok(ReplayReport {
        episode_id: ep.id,
        steps: ep.rows.len(),
        max_state_error: max_err,
        rewards_match,
        flags_match,
        ends_in_success,
    })
}

/// Rebuilds a full in-memory episode from a recorded trace by replaying
/// it. The trace stores no `next_state` for the final row, so the
/// environment supplies every successor state; recorded states must
/// match the replay within `tol` or the trace is rejected.
pub fn reconstruct_episode(
    env: &mut RegraspEnv,
    seed: u64,
    ep: &RecordedEpisode,
    tol: f64,
) -> Result<Episode> {
    let report = replay_episode(env, seed, ep)?;
    if report.max_state_error > tol || !report.rewards_match || !report.flags_match {
        return Err(Error::Dataset(format!(
            "episode {}: replay mismatch (max state error {:.3e}, rewards_match {}, flags_match {})",
            ep.id, report.max_state_error, report.rewards_match, report.flags_match
        )));
    }
    env.reset_from_seed(seed)?;
    let start = EgoState::from_array(&ep.rows[0].state);
    if start.max_abs_diff(env.state()) > 1e-9 {
        env.set_regrasp_start(&start.regrasp_in_grasping)?;
    }
    let mut steps = Vec::with_capacity(ep.rows.len());
    for row in &ep.rows {
        let state = *env.state();
        let out = env.step_executed(&row.action);
        steps.push(EpisodeStep {
            state,
            action: row.action,
            reward: out.reward,
            done: out.done,
            collision: out.info.collision,
            success: out.info.success,
            next_state: out.state,
        });
    }
    Ok(Episode { seed, is_demo: true, steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvParams;

    fn record_rollout(seed: u64, n: usize) -> Episode {
        let mut env = RegraspEnv::new(EnvParams::default(), seed).unwrap();
        let mut steps = Vec::new();
        let action = [0.4, -0.1, 0.2, 0.01, 0.02, -0.01];
        for _ in 0..n {
            let state = *env.state();
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

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        let eps = vec![record_rollout(4, 6), record_rollout(5, 3)];
        write_episodes_csv(&path, &eps).unwrap();
        let back = read_episodes_csv(&path).unwrap();
        assert_eq!(back.len(), 2);
        for (ep, rec) in eps.iter().zip(&back) {
            assert_eq!(ep.steps.len(), rec.rows.len());
            for (s, r) in ep.steps.iter().zip(&rec.rows) {
                assert_eq!(s.state.to_array(), r.state);
                assert_eq!(s.action, r.action);
                assert_eq!(s.reward, r.reward);
                assert_eq!((s.done, s.collision, s.success), (r.done, r.collision, r.success));
            }
        }
    }

    #[test]
    fn replay_of_recorded_rollout_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        let eps = vec![record_rollout(11, 8)];
        write_episodes_csv(&path, &eps).unwrap();
        let back = read_episodes_csv(&path).unwrap();

        let mut env = RegraspEnv::new(EnvParams::default(), 0).unwrap();
        let report = replay_episode(&mut env, 11, &back[0]).unwrap();
        assert_eq!(report.max_state_error, 0.0);
        assert!(report.rewards_match && report.flags_match);
    }

    #[test]
    fn replay_with_start_override() {
        let mut env = RegraspEnv::new(EnvParams::default(), 21).unwrap();
        // Shift the start 2 mm backwards along its approach axis, then
        // record a short rollout from there.
        let start = env.state().regrasp_in_grasping;
        let shifted = crate::geometry::Pose::new(
            start.position - start.rotation.rotate(crate::geometry::Vec3::new(0.0, 0.0, 2.0)),
            start.rotation,
        );
        env.set_regrasp_start(&shifted).unwrap();
        let mut rows = Vec::new();
        let action = [0.5, 0.0, 0.0, 0.0, 0.01, 0.0];
        for t in 0..4 {
            let state = env.state().to_array();
            let out = env.step(&action);
            rows.push(RecordedRow {
                t,
                state,
                action: out.info.executed,
                reward: out.reward,
                done: out.done,
                collision: out.info.collision,
                success: out.info.success,
            });
            if out.done {
                break;
            }
        }
        let rec = RecordedEpisode { id: 0, rows };
        let mut env2 = RegraspEnv::new(EnvParams::default(), 0).unwrap();
        let report = replay_episode(&mut env2, 21, &rec).unwrap();
        assert_eq!(report.max_state_error, 0.0);
        assert!(report.rewards_match);
    }

    #[test]
    fn manifest_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        let m = DatasetManifest {
            version: DATASET_VERSION,
            count: 2,
            seeds: vec![7, 8],
            start_kinds: vec!["spawn".into(), "free".into()],
            planner: "bit_star".into(),
            mode: "reverse".into(),
            success_count: 2,
        };
        m.save(&path).unwrap();
        let back = DatasetManifest::load(&path).unwrap();
        assert_eq!(back.seeds, vec![7, 8]);

        let bad = DatasetManifest { count: 3, ..m };
        bad.save(&path).unwrap();
        assert!(DatasetManifest::load(&path).is_err());
    }

    #[test]
    fn path_length_sums_translations() {
        let ep = record_rollout(2, 5);
        let expect: f64 = ep
            .steps
            .iter()
            .map(|s| (s.action[0].powi(2) + s.action[1].powi(2) + s.action[2].powi(2)).sqrt())
            .sum();
        assert!((ep.path_length() - expect).abs() < 1e-12);
    }
}
