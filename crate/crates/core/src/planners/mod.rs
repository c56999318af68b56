//! Sampling-based regrasp planners over the grasping-frame pose space.
//!
//! All planners share one planning scene: poses of the regrasping EE in
//! the grasping-EE frame, validated against the episode collision world,
//! under the metric `pose_distance` (translation plus rotation weighted
//! at `DEFAULT_ROT_WEIGHT` mm per rad). `Forward` plans from the episode
//! start to the goal grasp; `Reverse` roots the search at the goal and
//! plans out to the start, which crosses the grasp funnel in the easy
//! direction. Returned waypoints always run start to goal.

pub mod bit_star;
pub mod demo;
pub mod prm_star;
pub mod rrt_star;

use crate::env::RegraspEnv;
use crate::geometry::{interpolate, pose_distance, Pose, Quaternion, Vec3, DEFAULT_ROT_WEIGHT};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerKind {
    RrtStar,
    PrmStar,
    BitStar,
}

impl PlannerKind {
    pub fn name(&self) -> &'static str {
        match self {
            PlannerKind::RrtStar => "rrt_star",
            PlannerKind::PrmStar => "prm_star",
            PlannerKind::BitStar => "bit_star",
        }
    }
}

/// Search direction. Reverse roots the search tree at the goal grasp and
/// plans out to the start, then flips the waypoints.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanMode {
    Forward,
    Reverse,
}

impl PlanMode {
    pub fn name(&self) -> &'static str {
        match self {
            PlanMode::Forward => "forward",
            PlanMode::Reverse => "reverse",
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub kind: PlannerKind,
    pub mode: PlanMode,
    /// Wall-clock budget, seconds. The planner stops at the first
    /// solution unless `refine` is set, in which case it keeps improving
    /// until the budget runs out.
    pub time_budget_s: f64,
    pub refine: bool,
    /// Probability of sampling the target pose instead of a uniform one
    /// (tree planners).
    pub goal_bias: f64,
    /// Samples added per batch (roadmap and batch planners).
    pub batch_size: usize,
    /// Margin added around the scene AABB when sampling positions, mm.
    pub sample_margin_mm: f64,
}

impl PlannerConfig {
    pub fn rrt_star(mode: PlanMode) -> Self {
        PlannerConfig {
            kind: PlannerKind::RrtStar,
            mode,
            time_budget_s: 180.0,
            refine: false,
            goal_bias: 0.05,
            batch_size: 200,
            sample_margin_mm: 20.0,
        }
    }

    pub fn prm_star(mode: PlanMode) -> Self {
        PlannerConfig { kind: PlannerKind::PrmStar, time_budget_s: 180.0, ..Self::rrt_star(mode) }
    }

    pub fn bit_star(mode: PlanMode) -> Self {
        PlannerConfig { kind: PlannerKind::BitStar, time_budget_s: 20.0, ..Self::rrt_star(mode) }
    }

    pub fn with_budget(mut self, seconds: f64) -> Self {
        self.time_budget_s = seconds;
        self
    }

    pub fn with_refine(mut self, refine: bool) -> Self {
        self.refine = refine;
        self
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct PlanStats {
    /// Seconds until the first solution, if any was found.
    pub time_to_first_s: Option<f64>,
    /// Seconds the planner ran in total.
    pub time_total_s: f64,
    /// Poses drawn (valid or not).
    pub samples: usize,
    /// Swept edge validations performed.
    pub edge_checks: usize,
}

#[derive(Clone, Debug)]
pub struct PlanOutcome {
    /// Waypoints from start to goal, endpoints included. `None` when no
    /// solution was found within the budget.
    pub waypoints: Option<Vec<Pose>>,
    /// Metric cost of the path (infinity when unsolved).
    pub cost: f64,
    /// Translation-only path length, mm (zero when unsolved).
    pub length_mm: f64,
    pub stats: PlanStats,
}

impl PlanOutcome {
    pub fn success(&self) -> bool {
        self.waypoints.is_some()
    }

    pub(crate) fn failure(stats: PlanStats) -> Self {
        PlanOutcome { waypoints: None, cost: f64::INFINITY, length_mm: 0.0, stats }
    }

    pub(crate) fn solved(waypoints: Vec<Pose>, stats: PlanStats) -> Self {
        let cost = path_cost(&waypoints);
        let length_mm = path_length_mm(&waypoints);
        PlanOutcome { waypoints: Some(waypoints), cost, length_mm, stats }
    }
}

/// Plans a regrasp for the environment's current episode. The start is
/// the environment's current regrasping pose, the goal its goal grasp;
/// `seed` drives the planner's own sampling, independent of the episode.
pub fn plan(env: &RegraspEnv, cfg: &PlannerConfig, seed: u64) -> PlanOutcome {
    let scene = Scene::new(env, cfg.sample_margin_mm);
    let start = env.state().regrasp_in_grasping;
    let goal = env.goal_regrasp_in_grasping();
    let (root, target) = match cfg.mode {
        PlanMode::Forward => (start, goal),
        PlanMode::Reverse => (goal, start),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = match cfg.kind {
        PlannerKind::RrtStar => rrt_star::plan(&scene, &root, &target, cfg, &mut rng),
        PlannerKind::PrmStar => prm_star::plan(&scene, &root, &target, cfg, &mut rng),
        PlannerKind::BitStar => bit_star::plan(&scene, &root, &target, cfg, &mut rng),
    };
    if cfg.mode == PlanMode::Reverse {
        if let Some(w) = &mut out.waypoints {
            w.reverse();
        }
    }
    out
}

/// Validity and sampling adapter the planners run against.
pub struct Scene<'a> {
    env: &'a RegraspEnv,
    pub lo: Vec3,
    pub hi: Vec3,
    pub max_step_translation: f64,
    pub max_step_rotation: f64,
}

impl<'a> Scene<'a> {
    pub fn new(env: &'a RegraspEnv, margin: f64) -> Self {
        let (lo, hi) = env.planning_bounds(margin);
        Scene {
            env,
            lo,
            hi,
            max_step_translation: env.params().mdp.max_step_translation,
            max_step_rotation: env.params().mdp.max_step_rotation,
        }
    }

    pub fn valid(&self, p: &Pose) -> bool {
        !self.env.pose_in_grasping_collides(p)
    }

    /// Swept validity of the straight (interpolated) edge; `a` must
    /// already be known valid.
    pub fn edge_free(&self, a: &Pose, b: &Pose) -> bool {
        !self.env.edge_in_grasping_collides(a, b)
    }

    /// Uniform pose: position in the scene box, orientation uniform on
    /// SO(3).
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Pose {
        let p = Vec3::new(
            rng.random_range(self.lo.x..self.hi.x),
            rng.random_range(self.lo.y..self.hi.y),
            rng.random_range(self.lo.z..self.hi.z),
        );
        Pose::new(p, uniform_quaternion(rng))
    }

    /// Extends from `from` toward `to` by at most one action step.
    pub fn steer(&self, from: &Pose, to: &Pose) -> Pose {
        let dp = (to.position - from.position).norm();
        let da = from.rotation.angle_to(to.rotation);
        let mut s = 1.0_f64;
        if dp > self.max_step_translation {
            s = s.min(self.max_step_translation / dp);
        }
        if da > self.max_step_rotation {
            s = s.min(self.max_step_rotation / da);
        }
        if s >= 1.0 {
            *to
        } else {
            interpolate(from, to, s)
        }
    }

    /// A full action step's extent in the planning metric; used as the
    /// planners' connection scale.
    pub fn step_metric(&self) -> f64 {
        self.max_step_translation + DEFAULT_ROT_WEIGHT * self.max_step_rotation
    }
}

/// Exact planning metric (also the planners' cost function).
pub fn metric(a: &Pose, b: &Pose) -> f64 {
    pose_distance(a, b, DEFAULT_ROT_WEIGHT)
}

/// Ranking-equivalent metric for nearest-neighbor scans; the rotation
/// angle comes from the quaternion dot product, which is cheaper than the
/// delta-quaternion decomposition and agrees to ~1e-8.
pub fn nn_metric(a: &Pose, b: &Pose) -> f64 {
    let dp = (a.position - b.position).norm();
    let q = &a.rotation;
    let r = &b.rotation;
    let dot = (q.w * r.w + q.x * r.x + q.y * r.y + q.z * r.z).abs().min(1.0);
    dp + DEFAULT_ROT_WEIGHT * 2.0 * dot.acos()
}

/// Uniform random rotation (Shoemake's subgroup algorithm).
pub fn uniform_quaternion(rng: &mut ChaCha8Rng) -> Quaternion {
    use std::f64::consts::TAU;
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    let u3: f64 = rng.random();
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    Quaternion::new(
        a * (TAU * u2).sin(),
        a * (TAU * u2).cos(),
        b * (TAU * u3).sin(),
        b * (TAU * u3).cos(),
    )
}

/// Splits every edge so consecutive poses differ by at most the step
/// bounds; keeps the original waypoints.
pub fn densify(path: &[Pose], max_translation: f64, max_rotation: f64) -> Vec<Pose> {
    let mut out = Vec::with_capacity(path.len());
    if path.is_empty() {
        return out;
    }
    out.push(path[0]);
    for pair in path.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let dp = (b.position - a.position).norm();
        let da = a.rotation.angle_to(b.rotation);
        let k = ((dp / max_translation).ceil() as usize)
            .max((da / max_rotation).ceil() as usize)
            .max(1);
        for i in 1..k {
            out.push(interpolate(a, b, i as f64 / k as f64));
        }
        // The endpoint goes in verbatim: interpolate at t = 1 can differ
        // from `b` by an ulp, and callers rely on exact endpoints.
        out.push(*b);
    }
    out
}

/// Metric cost of a waypoint chain.
pub fn path_cost(waypoints: &[Pose]) -> f64 {
    waypoints.windows(2).map(|w| metric(&w[0], &w[1])).sum()
}

/// Translation-only length of a waypoint chain, mm.
pub fn path_length_mm(waypoints: &[Pose]) -> f64 {
    waypoints.windows(2).map(|w| (w[1].position - w[0].position).norm()).sum()
}

/// Uniform-grid index over node positions. The planning metric is lower
/// bounded by translation distance, so shell expansion with that bound
/// gives exact nearest/radius queries under the full metric.
pub(crate) struct SpatialGrid {
    lo: Vec3,
    cell: f64,
    dims: [i64; 3],
    cells: Vec<Vec<u32>>,
}

impl SpatialGrid {
    pub fn new(lo: Vec3, hi: Vec3, cell: f64) -> Self {
        assert!(cell > 0.0);
        let dim = |l: f64, h: f64| (((h - l) / cell).ceil() as i64).max(1);
        let dims = [dim(lo.x, hi.x), dim(lo.y, hi.y), dim(lo.z, hi.z)];
        let n = (dims[0] * dims[1] * dims[2]) as usize;
        SpatialGrid { lo, cell, dims, cells: vec![Vec::new(); n] }
    }

    fn coords(&self, p: Vec3) -> [i64; 3] {
        let c = |v: f64, l: f64, d: i64| (((v - l) / self.cell).floor() as i64).clamp(0, d - 1);
        [
            c(p.x, self.lo.x, self.dims[0]),
            c(p.y, self.lo.y, self.dims[1]),
            c(p.z, self.lo.z, self.dims[2]),
        ]
    }

    fn index(&self, c: [i64; 3]) -> usize {
        ((c[0] * self.dims[1] + c[1]) * self.dims[2] + c[2]) as usize
    }

    pub fn insert(&mut self, p: Vec3, id: u32) {
        let c = self.coords(p);
        let i = self.index(c);
        self.cells[i].push(id);
    }

    /// Nearest node under `eval` (the full metric). Shell `s` can only
    /// contain nodes at translation distance >= (s-1) * cell from the
    /// query, so expansion stops once that bound exceeds the incumbent.
    pub fn nearest(&self, p: Vec3, mut eval: impl FnMut(u32) -> f64) -> Option<(u32, f64)> {
        let center = self.coords(p);
        let max_shell = *self.dims.iter().max().unwrap();
        let mut best: Option<(u32, f64)> = None;
        for s in 0..=max_shell {
            if let Some((_, d)) = best {
                if (s - 1).max(0) as f64 * self.cell > d {
                    break;
                }
            }
            self.for_shell(center, s, |ids| {
                for &id in ids {
                    let d = eval(id);
                    if best.is_none_or(|(_, bd)| d < bd) {
                        best = Some((id, d));
                    }
                }
            });
        }
        best
    }

    /// The `k` nearest nodes under `eval`, ascending. Same shell bound as
    /// `nearest`: expansion stops when the shell cannot beat the k-th
    /// incumbent.
    pub fn knn(&self, p: Vec3, k: usize, mut eval: impl FnMut(u32) -> f64) -> Vec<(u32, f64)> {
        let center = self.coords(p);
        let max_shell = *self.dims.iter().max().unwrap();
        let mut best: Vec<(u32, f64)> = Vec::with_capacity(k + 1);
        for s in 0..=max_shell {
            if best.len() >= k && (s - 1).max(0) as f64 * self.cell > best[k - 1].1 {
                break;
            }
            self.for_shell(center, s, |ids| {
                for &id in ids {
                    let d = eval(id);
                    let at = best.partition_point(|&(_, bd)| bd <= d);
                    if at < k {
                        best.insert(at, (id, d));
                        best.truncate(k);
                    }
                }
            });
        }
        best
    }

    /// All nodes whose translation distance can be within `radius`;
    /// callers re-filter with the full metric.
    pub fn within(&self, p: Vec3, radius: f64, mut visit: impl FnMut(u32)) {
        let center = self.coords(p);
        let shells = (radius / self.cell).ceil() as i64 + 1;
        for s in 0..=shells.min(*self.dims.iter().max().unwrap()) {
            self.for_shell(center, s, |ids| {
                for &id in ids {
                    visit(id);
                }
            });
        }
    }

    fn for_shell(&self, center: [i64; 3], s: i64, mut visit: impl FnMut(&[u32])) {
        let lo = [center[0] - s, center[1] - s, center[2] - s];
        let hi = [center[0] + s, center[1] + s, center[2] + s];
        for x in lo[0].max(0)..=hi[0].min(self.dims[0] - 1) {
            for y in lo[1].max(0)..=hi[1].min(self.dims[1] - 1) {
                for z in lo[2].max(0)..=hi[2].min(self.dims[2] - 1) {
                    let on_shell = x == lo[0] || x == hi[0] || y == lo[1] || y == hi[1]
                        || z == lo[2]
                        || z == hi[2];
                    if on_shell {
                        let ids = &self.cells[self.index([x, y, z])];
                        if !ids.is_empty() {
                            visit(ids);
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvParams;

    fn scene_env(seed: u64) -> RegraspEnv {
        RegraspEnv::new(EnvParams::default(), seed).unwrap()
    }

    #[test]
    fn bounds_contain_start_and_goal() {
        let e = scene_env(3);
        let s = Scene::new(&e, 20.0);
        for p in [e.state().regrasp_in_grasping, e.goal_regrasp_in_grasping()] {
            assert!(p.position.x > s.lo.x && p.position.x < s.hi.x);
            assert!(p.position.y > s.lo.y && p.position.y < s.hi.y);
            assert!(p.position.z > s.lo.z && p.position.z < s.hi.z);
        }
    }

    #[test]
    fn steer_respects_action_bounds() {
        let e = scene_env(4);
        let s = Scene::new(&e, 20.0);
        let from = e.state().regrasp_in_grasping;
        let to = e.goal_regrasp_in_grasping();
        let stepped = s.steer(&from, &to);
        let dp = (stepped.position - from.position).norm();
        let da = from.rotation.angle_to(stepped.rotation);
        assert!(dp <= s.max_step_translation + 1e-9);
        assert!(da <= s.max_step_rotation + 1e-9);

        // A target within one step is reached exactly.
        let near = interpolate(&from, &to, 0.05);
        let hit = s.steer(&from, &near);
        assert_eq!(hit, near);
    }

    #[test]
    fn nn_metric_tracks_exact_metric() {
        let e = scene_env(5);
        let s = Scene::new(&e, 20.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let a = s.sample(&mut rng);
            let b = s.sample(&mut rng);
            assert!((metric(&a, &b) - nn_metric(&a, &b)).abs() < 1e-6);
        }
    }

    #[test]
    fn densify_obeys_step_bounds_and_endpoints() {
        let e = scene_env(6);
        let start = e.state().regrasp_in_grasping;
        let goal = e.goal_regrasp_in_grasping();
        let path = vec![start, goal];
        let dense = densify(&path, 2.0, 10.0_f64.to_radians());
        assert_eq!(dense.first().unwrap(), &start);
        assert_eq!(dense.last().unwrap(), &goal);
        for w in dense.windows(2) {
            let dp = (w[1].position - w[0].position).norm();
            let da = w[0].rotation.angle_to(w[1].rotation);
            assert!(dp <= 2.0 + 1e-9, "dp {dp}");
            assert!(da <= 10.0_f64.to_radians() + 1e-9, "da {da}");
        }
        // Densification preserves total length (straight segments).
        assert!((path_length_mm(&dense) - path_length_mm(&path)).abs() < 1e-9);
    }

    #[test]
    fn grid_nearest_matches_linear_scan() {
        let lo = Vec3::new(-10.0, -10.0, -10.0);
        let hi = Vec3::new(10.0, 10.0, 10.0);
        let mut grid = SpatialGrid::new(lo, hi, 3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut pts = Vec::new();
        for i in 0..300 {
            let p = Vec3::new(
                rng.random_range(-10.0..10.0),
                rng.random_range(-10.0..10.0),
                rng.random_range(-10.0..10.0),
            );
            grid.insert(p, i);
            pts.push(p);
        }
        for _ in 0..50 {
            let q = Vec3::new(
                rng.random_range(-10.0..10.0),
                rng.random_range(-10.0..10.0),
                rng.random_range(-10.0..10.0),
            );
            let (gid, gd) = grid.nearest(q, |id| (pts[id as usize] - q).norm()).unwrap();
            let (lid, ld) = pts
                .iter()
                .enumerate()
                .map(|(i, p)| (i as u32, (*p - q).norm()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            assert_eq!(gid, lid);
            assert!((gd - ld).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_within_finds_all_candidates() {
        // `within` promises a superset: every point at translation
        // distance <= radius must be visited.
        let lo = Vec3::new(-10.0, -10.0, -10.0);
        let hi = Vec3::new(10.0, 10.0, 10.0);
        let mut grid = SpatialGrid::new(lo, hi, 3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut pts = Vec::new();
        for i in 0..200 {
            let p = Vec3::new(
                rng.random_range(-10.0..10.0),
                rng.random_range(-10.0..10.0),
                rng.random_range(-10.0..10.0),
            );
            grid.insert(p, i);
            pts.push(p);
        }
        for _ in 0..20 {
            let q = Vec3::new(
                rng.random_range(-10.0..10.0),
                rng.random_range(-10.0..10.0),
                rng.random_range(-10.0..10.0),
            );
            let radius = rng.random_range(0.5..6.0);
            let mut seen = vec![false; pts.len()];
            grid.within(q, radius, |id| seen[id as usize] = true);
            for (i, p) in pts.iter().enumerate() {
                if (*p - q).norm() <= radius {
                    assert!(seen[i], "point {i} within {radius} missed");
                }
            }
        }
    }

    #[test]
    fn uniform_quaternions_are_normalized_and_spread() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut mean_w = 0.0;
        let n = 2000;
        for _ in 0..n {
            let q = uniform_quaternion(&mut rng);
            let norm = (q.w * q.w + q.x * q.x + q.y * q.y + q.z * q.z).sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
            assert!(q.w >= 0.0);
            mean_w += q.w / n as f64;
        }
        // w >= 0 after canonicalization; |w| of a uniform quaternion
        // follows the half semicircle law with mean 4 / (3 pi) ~ 0.424.
        assert!((mean_w - 4.0 / (3.0 * std::f64::consts::PI)).abs() < 0.03, "{mean_w}");
    }
}
