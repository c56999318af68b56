//! RRT* over the pose space, rooted according to the plan mode.
//!
//! Single-step steering (one action bound per extension), goal-biased
//! uniform sampling, shrinking-radius rewiring. The search stops at the
//! first solution unless `refine` is set. Rewiring updates a node's
//! parent and cost but does not propagate to descendants; the returned
//! path's cost is recomputed from its waypoints, so reported numbers are
//! always consistent.

use super::{metric, nn_metric, PlanOutcome, PlanStats, PlannerConfig, Scene, SpatialGrid};
use crate::geometry::Pose;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

/// Cap on parent candidates and rewire attempts per insertion; bounds the
/// number of swept edge checks, which dominate the iteration cost.
const MAX_LINK_ATTEMPTS: usize = 12;

const GRID_CELL_MM: f64 = 4.0;

struct Node {
    pose: Pose,
    parent: u32,
    cost: f64,
}

pub fn plan(
    scene: &Scene,
    root: &Pose,
    target: &Pose,
    cfg: &PlannerConfig,
    rng: &mut ChaCha8Rng,
) -> PlanOutcome {
    let t0 = Instant::now();
    let mut stats = PlanStats::default();
    let eta = scene.step_metric();
    let gamma = 4.0 * eta;
    let connect_radius = eta;

    let mut nodes = vec![Node { pose: *root, parent: 0, cost: 0.0 }];
    let mut grid = SpatialGrid::new(scene.lo, scene.hi, GRID_CELL_MM);
    grid.insert(root.position, 0);

    // Best connection to the target: (last tree node, total cost).
    let mut best: Option<(u32, f64)> = None;

    while t0.elapsed().as_secs_f64() < cfg.time_budget_s {
        if best.is_some() && !cfg.refine {
            break;
        }
        let sample = if rng.random::<f64>() < cfg.goal_bias { *target } else { scene.sample(rng) };
        stats.samples += 1;

        let (nid, _) = grid
            .nearest(sample.position, |id| nn_metric(&nodes[id as usize].pose, &sample))
            .expect("tree is never empty");
        let new_pose = scene.steer(&nodes[nid as usize].pose, &sample);
        if !scene.valid(&new_pose) {
            continue;
        }

        let n = nodes.len() as f64;
        let radius = (gamma * (n.ln() / n).powf(1.0 / 6.0)).max(eta);
        let mut near: Vec<(u32, f64)> = Vec::new();
        grid.within(new_pose.position, radius, |id| {
            let d = metric(&nodes[id as usize].pose, &new_pose);
            if d <= radius {
                near.push((id, d));
            }
        });
        if !near.iter().any(|&(id, _)| id == nid) {
            near.push((nid, metric(&nodes[nid as usize].pose, &new_pose)));
        }
        near.sort_by(|a, b| {
            (nodes[a.0 as usize].cost + a.1).total_cmp(&(nodes[b.0 as usize].cost + b.1))
        });

        let mut parent = None;
        for &(id, d) in near.iter().take(MAX_LINK_ATTEMPTS) {
            stats.edge_checks += 1;
            if scene.edge_free(&nodes[id as usize].pose, &new_pose) {
                parent = Some((id, d));
                break;
            }
        }
        let Some((pid, pd)) = parent else { continue };
        let new_cost = nodes[pid as usize].cost + pd;
        let new_id = nodes.len() as u32;
        nodes.push(Node { pose: new_pose, parent: pid, cost: new_cost });
        grid.insert(new_pose.position, new_id);

        let mut rewires = 0;
        for &(id, d) in &near {
            if id == pid || rewires >= MAX_LINK_ATTEMPTS {
                continue;
            }
            let through = new_cost + d;
            if through + 1e-12 < nodes[id as usize].cost {
                stats.edge_checks += 1;
                rewires += 1;
                if scene.edge_free(&new_pose, &nodes[id as usize].pose) {
                    nodes[id as usize].parent = new_id;
                    nodes[id as usize].cost = through;
                }
            }
        }

        let dt = metric(&new_pose, target);
        if dt <= connect_radius {
            stats.edge_checks += 1;
            if scene.edge_free(&new_pose, target) {
                let total = new_cost + dt;
                if best.is_none_or(|(_, c)| total < c) {
                    if best.is_none() {
                        stats.time_to_first_s = Some(t0.elapsed().as_secs_f64());
                    }
                    best = Some((new_id, total));
                }
            }
        }
    }

    stats.time_total_s = t0.elapsed().as_secs_f64();
    match best {
        Some((last, _)) => {
            let mut waypoints = vec![*target];
            let mut id = last;
            loop {
                waypoints.push(nodes[id as usize].pose);
                if id == 0 {
                    break;
                }
                id = nodes[id as usize].parent;
            }
            waypoints.reverse();
            PlanOutcome::solved(waypoints, stats)
        }
        None => PlanOutcome::failure(stats),
    }
}

#[cfg(test)]
mod tests {
    use super::super::{plan as top_plan, PlanMode, PlannerConfig};
    use crate::env::{EnvParams, RegraspEnv};
    use crate::planners::{path_cost, Scene};

    #[test]
    fn reverse_mode_solves_quickly_and_path_is_valid() {
        let env = RegraspEnv::new(EnvParams::default(), 12).unwrap();
        let cfg = PlannerConfig::rrt_star(PlanMode::Reverse).with_budget(20.0);
        let out = top_plan(&env, &cfg, 7);
        assert!(out.success(), "reverse RRT* should solve an easy episode");
        let w = out.waypoints.as_ref().unwrap();
        assert_eq!(w[0], env.state().regrasp_in_grasping);
        assert_eq!(*w.last().unwrap(), env.goal_regrasp_in_grasping());
        let scene = Scene::new(&env, 20.0);
        for pair in w.windows(2) {
            assert!(scene.edge_free(&pair[0], &pair[1]));
        }
        assert!((path_cost(w) - out.cost).abs() < 1e-9);
        assert!(out.stats.time_to_first_s.is_some());
    }

    #[test]
    fn timings_are_recorded_on_failure() {
        let env = RegraspEnv::new(EnvParams::default(), 12).unwrap();
        // A budget too small to solve anything still reports totals.
        let cfg = PlannerConfig::rrt_star(PlanMode::Forward).with_budget(0.02);
        let out = top_plan(&env, &cfg, 1);
        if !out.success() {
            assert!(out.stats.time_total_s >= 0.02);
            assert!(out.stats.time_to_first_s.is_none());
            assert!(out.cost.is_infinite());
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let env = RegraspEnv::new(EnvParams::default(), 30).unwrap();
        let cfg = PlannerConfig::rrt_star(PlanMode::Reverse).with_budget(10.0);
        let a = top_plan(&env, &cfg, 42);
        let b = top_plan(&env, &cfg, 42);
        assert_eq!(a.success(), b.success());
        if let (Some(wa), Some(wb)) = (&a.waypoints, &b.waypoints) {
            assert_eq!(wa.len(), wb.len());
            for (x, y) in wa.iter().zip(wb) {
                assert_eq!(x, y);
            }
        }
    }
}
