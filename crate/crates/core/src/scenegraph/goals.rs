//! Goal candidates: reachable lanes for road-bound agents, concentric rings
//! of free points for everyone else, and the decide edges that connect them
//! to agent queries.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::f64::consts::PI;

use super::graph::{rel_feature, EdgeSet, GraphConfig, NodePoses};
use super::scene::{Scene, Side};
use crate::error::{Error, Result};
use crate::geometry::{point_in_polygon, point_polyline_dist, Pose2};

/// How an agent selects its goal.
#[derive(Debug, Clone, PartialEq)]
pub enum GoalMode {
    /// Lane indices (into `Scene::lanes`, ascending) the agent may reach.
    RoadBound(Vec<usize>),
    /// Free goal on concentric rings; also the fallback for road-bound
    /// agents without any lane nearby.
    NonRoadBound,
}

impl GoalMode {
    pub fn is_road_bound(&self) -> bool {
        matches!(self, GoalMode::RoadBound(_))
    }
}

/// Outcome of the lane search for one agent.
#[derive(Debug, Clone, PartialEq)]
pub enum Reachability {
    Lanes(Vec<usize>),
    NoLaneNearby,
}

/// Lanes whose polygon contains `xy`, else the nearest lane within `seed_radius`.
pub fn seed_lanes(scene: &Scene, xy: [f64; 2], seed_radius: f64) -> Vec<usize> {
    let containing: Vec<usize> = scene
        .lanes
        .iter()
        .enumerate()
        .filter(|(_, l)| point_in_polygon(xy, &l.polygon()))
        .map(|(i, _)| i)
        .collect();
    if !containing.is_empty() {
        return containing;
    }
    let mut best: Option<(f64, usize)> = None;
    for (i, l) in scene.lanes.iter().enumerate() {
        let d = point_polyline_dist(xy, &l.centerline_xy());
        if d <= seed_radius && best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, i));
        }
    }
    best.map(|(_, i)| vec![i]).unwrap_or_default()
}

#[derive(PartialEq)]
struct Frontier(f64, usize);

impl Eq for Frontier {}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Frontier {
    // min-heap on distance, then lane index
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .total_cmp(&self.0)
            .then_with(|| other.1.cmp(&self.1))
    }
}

/// Lanes reachable from the agent's last observed position over successor
/// and lateral-neighbor links. A lane's distance is the centerline length
/// travelled to reach its start (lateral moves are free); lanes beyond
/// `reach_cap` are excluded.
pub fn reachable_lanes(scene: &Scene, agent: usize, cfg: &GraphConfig) -> Reachability {
    let xy = scene.agents[agent].states[scene.current_step()].xy();
    let seeds = seed_lanes(scene, xy, cfg.seed_radius);
    if seeds.is_empty() {
        return Reachability::NoLaneNearby;
    }
    let lanes = lane_distances(scene, &seeds, cfg.reach_cap);
    Reachability::Lanes(lanes.into_iter().map(|(i, _)| i).collect())
}

/// Minimal path distance of each lane reachable from `seeds` within `cap`,
/// sorted by lane index.
pub fn lane_distances(scene: &Scene, seeds: &[usize], cap: f64) -> Vec<(usize, f64)> {
    let index = scene.lane_index();
    let mut best: HashMap<usize, f64> = HashMap::new();
    let mut heap = BinaryHeap::new();
    for &s in seeds {
        best.insert(s, 0.0);
        heap.push(Frontier(0.0, s));
    }
    while let Some(Frontier(d, i)) = heap.pop() {
        if best.get(&i).is_some_and(|&b| d > b) {
            continue;
        }
        let lane = &scene.lanes[i];
        let next = lane
            .successors
            .iter()
            .map(|id| (id, d + lane.length))
            .chain(lane.left_neighbor.iter().map(|id| (id, d)))
            .chain(lane.right_neighbor.iter().map(|id| (id, d)));
        for (id, nd) in next {
            let j = index[id];
            if nd <= cap && best.get(&j).is_none_or(|&b| nd < b) {
                best.insert(j, nd);
                heap.push(Frontier(nd, j));
            }
        }
    }
    let mut out: Vec<(usize, f64)> = best.into_iter().collect();
    out.sort_by_key(|&(i, _)| i);
    out
}

pub fn goal_mode(scene: &Scene, agent: usize, cfg: &GraphConfig) -> GoalMode {
    if !scene.agents[agent].road_bound() {
        return GoalMode::NonRoadBound;
    }
    match reachable_lanes(scene, agent, cfg) {
        Reachability::Lanes(l) => GoalMode::RoadBound(l),
        Reachability::NoLaneNearby => GoalMode::NonRoadBound,
    }
}

/// One free goal candidate on the rings around a non-road-bound agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NrbCandidate {
    pub pose: Pose2,
    /// 1-based ring number.
    pub ring: usize,
    pub radius: f64,
}

/// Mean speed over the valid history, clamped from below.
pub fn mean_history_speed(scene: &Scene, agent: usize, min_speed: f64) -> f64 {
    let hist = &scene.agents[agent].states[..scene.t_history];
    let (sum, n) = hist
        .iter()
        .filter(|s| s.valid)
        .fold((0.0, 0usize), |(s, n), st| (s + st.speed(), n + 1));
    let mean = if n == 0 { 0.0 } else { sum / n as f64 };
    mean.max(min_speed)
}

/// Ring `i` has radius `i * v * period` and `points_per_ring * i` points,
/// which keeps the arc spacing identical on every ring.
pub fn nrb_goal_candidates(center: &Pose2, mean_speed: f64, cfg: &GraphConfig) -> Vec<NrbCandidate> {
    let mut out = Vec::new();
    for ring in 1..=cfg.nrb_circles {
        let radius = ring as f64 * mean_speed * cfg.nrb_ring_period;
        let count = cfg.nrb_points_per_ring * ring;
        for j in 0..count {
            let theta = center.heading + 2.0 * PI * j as f64 / count as f64;
            let (s, c) = theta.sin_cos();
            out.push(NrbCandidate {
                pose: Pose2::new(center.x + radius * c, center.y + radius * s, theta),
                ring,
                radius,
            });
        }
    }
    out
}

/// Center-side point segments of a lane, ordered along the lane.
pub fn center_points_of_lane(scene: &Scene, lane: usize) -> Vec<usize> {
    let id = scene.lanes[lane].id;
    let mut pts: Vec<usize> = scene
        .points
        .iter()
        .enumerate()
        .filter(|(_, p)| p.lane_id == id && p.side == Side::Center)
        .map(|(i, _)| i)
        .collect();
    pts.sort_by_key(|&i| scene.points[i].seg_index);
    pts
}

/// Decide edges from a query pose to lane nodes.
pub fn decide_lane_edges(query: &Pose2, lanes: &[usize], poses: &NodePoses) -> Result<EdgeSet> {
    if lanes.is_empty() {
        return Err(Error::Structural("empty decide-lane candidate set".into()));
    }
    let mut e = EdgeSet::default();
    for &l in lanes {
        e.push(0, l, rel_feature(query, &poses.lanes[l], 0.0));
    }
    Ok(e)
}

/// Decide edges from a query pose to the center points of one lane.
pub fn decide_point_edges(
    scene: &Scene,
    query: &Pose2,
    lane: usize,
    poses: &NodePoses,
) -> Result<EdgeSet> {
    let pts = center_points_of_lane(scene, lane);
    if pts.is_empty() {
        return Err(Error::Structural(format!(
            "lane {} has no center points",
            scene.lanes[lane].id
        )));
    }
    let mut e = EdgeSet::default();
    for p in pts {
        e.push(0, p, rel_feature(query, &poses.points[p], 0.0));
    }
    Ok(e)
}

/// Decide edges from a query pose to its ring candidates.
pub fn decide_nrb_edges(query: &Pose2, cands: &[NrbCandidate]) -> Result<EdgeSet> {
    if cands.is_empty() {
        return Err(Error::Structural("empty point-nrb candidate set".into()));
    }
    let mut e = EdgeSet::default();
    for (j, c) in cands.iter().enumerate() {
        e.push(0, j, rel_feature(query, &c.pose, 0.0));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::scenegraph::{assign_poses, AgentClass};

    fn chain_scene(agent_xy: [f64; 2]) -> Scene {
        let mut a = fixtures::straight_lane(1, [0.0, 0.0], [60.0, 0.0], 3.5);
        let mut b = fixtures::straight_lane(2, [60.0, 0.0], [120.0, 0.0], 3.5);
        let mut c = fixtures::straight_lane(3, [120.0, 0.0], [180.0, 0.0], 3.5);
        let d = fixtures::straight_lane(4, [180.0, 0.0], [240.0, 0.0], 3.5);
        a.successors.push(2);
        b.predecessors.push(1);
        b.successors.push(3);
        c.predecessors.push(2);
        c.successors.push(4);
        let agent = fixtures::straight_agent(7, AgentClass::Vehicle, agent_xy, 0.0, 1.0, 4, 0.1);
        Scene::new("chain", vec![agent], vec![a, b, c, d], 2, 2, 0.1).unwrap()
    }

    #[test]
    fn chain_truncated_at_cap() {
        let scene = chain_scene([10.0, 0.0]);
        let r = reachable_lanes(&scene, 0, &GraphConfig::default());
        assert_eq!(r, Reachability::Lanes(vec![0, 1, 2]));
    }

    #[test]
    fn far_agent_falls_back() {
        let scene = chain_scene([10.0, 80.0]);
        assert_eq!(
            reachable_lanes(&scene, 0, &GraphConfig::default()),
            Reachability::NoLaneNearby
        );
        assert_eq!(goal_mode(&scene, 0, &GraphConfig::default()), GoalMode::NonRoadBound);
    }

    #[test]
    fn isolated_lane_reaches_itself() {
        let lane = fixtures::straight_lane(5, [0.0, 0.0], [20.0, 0.0], 3.5);
        let agent = fixtures::straight_agent(1, AgentClass::Vehicle, [5.0, 0.0], 0.0, 1.0, 4, 0.1);
        let scene = Scene::new("one", vec![agent], vec![lane], 2, 2, 0.1).unwrap();
        assert_eq!(
            reachable_lanes(&scene, 0, &GraphConfig::default()),
            Reachability::Lanes(vec![0])
        );
    }

    #[test]
    fn ring_layout() {
        let cfg = GraphConfig::default();
        let c = nrb_goal_candidates(&Pose2::new(1.0, 2.0, 0.4), 1.2, &cfg);
        assert_eq!(c.len(), 288);
        for ring in 1..=8 {
            let on: Vec<_> = c.iter().filter(|p| p.ring == ring).collect();
            assert_eq!(on.len(), 8 * ring);
            assert!((on[0].radius - 1.2 * ring as f64).abs() < 1e-12);
        }
        assert_eq!(c.iter().filter(|p| p.ring == 3).count(), 24);
    }

    #[test]
    fn stationary_speed_clamped() {
        let agent = fixtures::straight_agent(1, AgentClass::Pedestrian, [0.0, 0.0], 0.0, 0.0, 4, 0.1);
        let scene = Scene::new("p", vec![agent], vec![], 2, 2, 0.1).unwrap();
        assert_eq!(mean_history_speed(&scene, 0, 0.5), 0.5);
    }

    #[test]
    fn decide_counts() {
        let scene = chain_scene([10.0, 0.0]);
        let poses = assign_poses(&scene);
        let q = poses.agent_states[0][1];
        assert_eq!(decide_lane_edges(&q, &[0, 1, 2], &poses).unwrap().len(), 3);
        assert_eq!(decide_point_edges(&scene, &q, 1, &poses).unwrap().len(), 30);
        let cands = nrb_goal_candidates(&q, 1.0, &GraphConfig::default());
        assert_eq!(decide_nrb_edges(&q, &cands).unwrap().len(), 288);
        assert!(matches!(
            decide_lane_edges(&q, &[], &poses),
            Err(Error::Structural(_))
        ));
    }
}
