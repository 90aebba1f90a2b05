//! Training-time scene augmentation.

use rand::seq::index::sample;
use rand::Rng;

use super::config::TrainConfig;
use crate::error::Result;
use crate::scenegraph::{AgentState, LaneDef, Scene};

/// Uniformly scale all geometry and velocities by `sigma` about the origin.
pub fn scale_scene(scene: &Scene, sigma: f64) -> Result<Scene> {
    let p = |q: &[f64; 2]| [q[0] * sigma, q[1] * sigma];
    let lanes = scene
        .lanes
        .iter()
        .map(|l| {
            let c: Vec<[f64; 2]> = l.centerline_xy().iter().map(p).collect();
            let mut out = LaneDef::from_polylines(
                l.id,
                l.lane_type,
                &c,
                l.left_boundary.iter().map(p).collect(),
                l.right_boundary.iter().map(p).collect(),
            );
            out.successors = l.successors.clone();
            out.predecessors = l.predecessors.clone();
            out.left_neighbor = l.left_neighbor.clone();
            out.right_neighbor = l.right_neighbor.clone();
            out
        })
        .collect();
    let agents = scene
        .agents
        .iter()
        .map(|a| {
            let mut a = a.clone();
            for s in &mut a.states {
                *s = AgentState {
                    x: s.x * sigma,
                    y: s.y * sigma,
                    vx: s.vx * sigma,
                    vy: s.vy * sigma,
                    valid: s.valid,
                };
            }
            a
        })
        .collect();
    Scene::new(
        scene.id.clone(),
        agents,
        lanes,
        scene.t_history,
        scene.t_future,
        scene.dt,
    )
}

/// Drop `floor(frac * N)` agents chosen uniformly among all but the first.
pub fn drop_agents(scene: &Scene, frac: f64, rng: &mut impl Rng) -> Scene {
    let n = scene.agents.len();
    let drop = ((frac * n as f64).floor() as usize).min(n.saturating_sub(1));
    let mut out = scene.clone();
    if drop == 0 {
        return out;
    }
    let mut gone: Vec<usize> = sample(rng, n - 1, drop).into_iter().map(|i| i + 1).collect();
    gone.sort_unstable();
    out.agents = scene
        .agents
        .iter()
        .enumerate()
        .filter(|(i, _)| gone.binary_search(i).is_err())
        .map(|(_, a)| a.clone())
        .collect();
    out
}

pub fn augment_scene(scene: &Scene, cfg: &TrainConfig, rng: &mut impl Rng) -> Result<Scene> {
    let [lo, hi] = cfg.aug_scale_range;
    let sigma = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let scaled = scale_scene(scene, sigma)?;
    Ok(drop_agents(&scaled, cfg.aug_drop_frac, rng))
}
