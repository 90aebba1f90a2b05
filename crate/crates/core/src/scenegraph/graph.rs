//! Heterogeneous scene graph: node poses, typed edges and SE(2)-invariant edge features.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::scene::Scene;
use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, polyline_at, rotate, Pose2};

/// Speed below which the velocity direction is considered unreliable.
pub const MIN_HEADING_SPEED: f64 = 0.1;

/// Relative pose of node `n` seen from node `m`, plus the time gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelEdgeFeature {
    pub sin_a: f64,
    pub cos_a: f64,
    pub sin_phi: f64,
    pub cos_phi: f64,
    pub d: f64,
    pub dt: f64,
}

impl RelEdgeFeature {
    pub const WIDTH: usize = 6;

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.sin_a,
            self.cos_a,
            self.sin_phi,
            self.cos_phi,
            self.d,
            self.dt,
        ]
    }
}

pub fn relative_edge_feature(m: &Pose2, n: &Pose2, dt: Option<f64>) -> Result<RelEdgeFeature> {
    if !m.is_finite() || !n.is_finite() || dt.is_some_and(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "non-finite pose in edge feature: {m:?} -> {n:?}"
        )));
    }
    Ok(rel_feature(m, n, dt.unwrap_or(0.0)))
}

/// Infallible variant for poses already known to be finite.
pub(crate) fn rel_feature(m: &Pose2, n: &Pose2, dt: f64) -> RelEdgeFeature {
    let alpha = normalize_angle(n.heading - m.heading);
    let (dx, dy) = rotate(n.x - m.x, n.y - m.y, -m.heading);
    let d = dx.hypot(dy);
    let phi = if d < 1e-9 { 0.0 } else { dy.atan2(dx) };
    let (sin_a, cos_a) = alpha.sin_cos();
    let (sin_phi, cos_phi) = phi.sin_cos();
    RelEdgeFeature {
        sin_a,
        cos_a,
        sin_phi,
        cos_phi,
        d,
        dt,
    }
}

/// Distance radii and window sizes used when wiring the graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub lane_lane_radius: f64,
    pub suc_window: usize,
    pub social_radius: f64,
    pub lane_agent_radius: f64,
    pub query_social_radius: f64,
    pub query_lane_radius: f64,
    pub reach_cap: f64,
    pub seed_radius: f64,
    pub nrb_circles: usize,
    pub nrb_points_per_ring: usize,
    pub nrb_ring_period: f64,
    pub nrb_min_speed: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            lane_lane_radius: 125.0,
            suc_window: 20,
            social_radius: 50.0,
            lane_agent_radius: 50.0,
            query_social_radius: 100.0,
            query_lane_radius: 150.0,
            reach_cap: 150.0,
            seed_radius: 50.0,
            nrb_circles: 8,
            nrb_points_per_ring: 8,
            nrb_ring_period: 1.0,
            nrb_min_speed: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaneRelation {
    None,
    Successor,
    Predecessor,
    LeftNeighbor,
    RightNeighbor,
}

impl LaneRelation {
    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Edge list of one edge type.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EdgeSet {
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub feats: Vec<RelEdgeFeature>,
    /// Only populated for lane-to-lane edges.
    pub relation: Vec<LaneRelation>,
}

impl EdgeSet {
    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    pub(crate) fn push(&mut self, src: usize, dst: usize, feat: RelEdgeFeature) {
        self.src.push(src);
        self.dst.push(dst);
        self.feats.push(feat);
    }

    pub fn feature_rows(&self) -> Vec<f64> {
        self.feats.iter().flat_map(|f| f.to_array()).collect()
    }

    /// Number of in-edges per destination node.
    pub fn in_degree(&self, n_dst: usize) -> Vec<usize> {
        let mut deg = vec![0; n_dst];
        for &d in &self.dst {
            deg[d] += 1;
        }
        deg
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentNode {
    /// Index into `Scene::agents`.
    pub agent: usize,
    pub t: usize,
    pub pose: Pose2,
    /// Velocity in the node's own frame.
    pub v_local: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryNode {
    pub agent: usize,
    pub mode: usize,
    pub pose: Pose2,
}

/// Poses of every node type before edges are wired.
#[derive(Debug, Clone, PartialEq)]
pub struct NodePoses {
    /// `agent_states[a][t]` for every state, including the future.
    pub agent_states: Vec<Vec<Pose2>>,
    pub lanes: Vec<Pose2>,
    pub points: Vec<Pose2>,
}

/// Heading of each agent state: velocity direction, carried forward through
/// near-stationary stretches, 0 before the agent first moves.
pub fn agent_headings(states: &[super::scene::AgentState]) -> Vec<f64> {
    let mut last: Option<f64> = None;
    states
        .iter()
        .map(|s| {
            if s.valid && s.speed() >= MIN_HEADING_SPEED {
                let h = s.vy.atan2(s.vx);
                last = Some(h);
                h
            } else {
                last.unwrap_or(0.0)
            }
        })
        .collect()
}

/// Half-length of the chord that sets a lane node's heading, meters.
const LANE_CHORD: f64 = 1.0;

/// Centerline midpoint, headed along a short chord around it. Taking the
/// heading of the segment under the midpoint would jump whenever the
/// midpoint sits on a vertex and rounding picks the other segment.
pub fn lane_pose(center: &[[f64; 2]], length: f64) -> Pose2 {
    let mid = 0.5 * length;
    let mut pose = polyline_at(center, mid);
    let half = LANE_CHORD.min(0.25 * length);
    if half > 0.0 {
        let a = polyline_at(center, mid - half);
        let b = polyline_at(center, mid + half);
        pose.heading = (b.y - a.y).atan2(b.x - a.x);
    }
    pose
}

pub fn assign_poses(scene: &Scene) -> NodePoses {
    let agent_states = scene
        .agents
        .iter()
        .map(|a| {
            agent_headings(&a.states)
                .into_iter()
                .zip(&a.states)
                .map(|(h, s)| Pose2::new(s.x, s.y, h))
                .collect()
        })
        .collect();
    let lanes = scene
        .lanes
        .iter()
        .map(|l| lane_pose(&l.centerline_xy(), l.length))
        .collect();
    let points = scene.points.iter().map(|p| p.pose).collect();
    NodePoses {
        agent_states,
        lanes,
        points,
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MapEdges {
    pub point_to_lane: EdgeSet,
    pub lane_to_lane: EdgeSet,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AgentEdges {
    pub suc: EdgeSet,
    pub social: EdgeSet,
    pub lane_to_agent: EdgeSet,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueryEdges {
    pub agent_self: EdgeSet,
    pub agent_social: EdgeSet,
    pub lane_to_query: EdgeSet,
    pub mode_to_mode: EdgeSet,
}

/// The full encoder/decoder graph of one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct HeteroGraph {
    pub poses: NodePoses,
    pub agent_nodes: Vec<AgentNode>,
    /// `agent_node_at[a][t]` for history steps.
    pub agent_node_at: Vec<Vec<Option<usize>>>,
    pub queries: Vec<QueryNode>,
    pub modes: usize,
    pub map: MapEdges,
    pub agent: AgentEdges,
    pub query: QueryEdges,
}

impl HeteroGraph {
    pub fn build(scene: &Scene, cfg: &GraphConfig, modes: usize) -> Result<Self> {
        let poses = assign_poses(scene);
        let (agent_nodes, agent_node_at) = agent_nodes(scene, &poses);
        let map = build_map_graph(scene, &poses, cfg);
        let agent = build_agent_graph(scene, &poses, &agent_nodes, &agent_node_at, cfg);
        let (queries, query) =
            build_query_graph(scene, &poses, &agent_nodes, &agent_node_at, cfg, modes)?;
        Ok(HeteroGraph {
            poses,
            agent_nodes,
            agent_node_at,
            queries,
            modes,
            map,
            agent,
            query,
        })
    }

    /// Query node of `(predicted agent slot, mode)`.
    pub fn query_index(&self, slot: usize, mode: usize) -> usize {
        slot * self.modes + mode
    }

    pub fn edge_sets(&self) -> [(&'static str, &EdgeSet); 9] {
        [
            ("(point,belongs-to,lane)", &self.map.point_to_lane),
            ("(lane,to,lane)", &self.map.lane_to_lane),
            ("(agent,suc,agent)", &self.agent.suc),
            ("(agent,social,agent)", &self.agent.social),
            ("(lane,gives-traffic-info,agent)", &self.agent.lane_to_agent),
            ("(agent,self,agent-query)", &self.query.agent_self),
            ("(agent,social,agent-query)", &self.query.agent_social),
            ("(lane,gives-traffic-info,agent-query)", &self.query.lane_to_query),
            ("(agent-query,self,agent-query)", &self.query.mode_to_mode),
        ]
    }
}

fn agent_nodes(scene: &Scene, poses: &NodePoses) -> (Vec<AgentNode>, Vec<Vec<Option<usize>>>) {
    let mut nodes = Vec::new();
    let mut at = Vec::with_capacity(scene.agents.len());
    for (a, agent) in scene.agents.iter().enumerate() {
        let mut row = vec![None; scene.t_history];
        for (t, slot) in row.iter_mut().enumerate() {
            let s = &agent.states[t];
            if !s.valid {
                continue;
            }
            let pose = poses.agent_states[a][t];
            let (vx, vy) = rotate(s.vx, s.vy, -pose.heading);
            *slot = Some(nodes.len());
            nodes.push(AgentNode {
                agent: a,
                t,
                pose,
                v_local: [vx, vy],
            });
        }
        at.push(row);
    }
    (nodes, at)
}

pub fn lane_relation(scene: &Scene, from: usize, to: usize) -> LaneRelation {
    let a = &scene.lanes[from];
    let id = scene.lanes[to].id;
    if a.successors.contains(&id) {
        LaneRelation::Successor
    } else if a.predecessors.contains(&id) {
        LaneRelation::Predecessor
    } else if a.left_neighbor.contains(&id) {
        LaneRelation::LeftNeighbor
    } else if a.right_neighbor.contains(&id) {
        LaneRelation::RightNeighbor
    } else {
        LaneRelation::None
    }
}

/// Relation label of the edge `src -> dst`, i.e. what `dst` is to `src`, with
/// successor/predecessor lists treated as mutually implied.
fn edge_relation(scene: &Scene, src: usize, dst: usize) -> LaneRelation {
    match lane_relation(scene, src, dst) {
        LaneRelation::None => match lane_relation(scene, dst, src) {
            LaneRelation::Successor => LaneRelation::Predecessor,
            LaneRelation::Predecessor => LaneRelation::Successor,
            _ => LaneRelation::None,
        },
        r => r,
    }
}

pub fn build_map_graph(scene: &Scene, poses: &NodePoses, cfg: &GraphConfig) -> MapEdges {
    let index: HashMap<u64, usize> = scene.lane_index();
    let mut out = MapEdges::default();
    for (p, point) in scene.points.iter().enumerate() {
        let l = index[&point.lane_id];
        out.point_to_lane
            .push(p, l, rel_feature(&poses.points[p], &poses.lanes[l], 0.0));
    }
    let n = scene.lanes.len();
    for dst in 0..n {
        for src in 0..n {
            if src == dst || poses.lanes[src].distance(&poses.lanes[dst]) > cfg.lane_lane_radius {
                continue;
            }
            out.lane_to_lane
                .push(src, dst, rel_feature(&poses.lanes[src], &poses.lanes[dst], 0.0));
            out.lane_to_lane.relation.push(edge_relation(scene, src, dst));
        }
    }
    out
}

pub fn build_agent_graph(
    scene: &Scene,
    poses: &NodePoses,
    nodes: &[AgentNode],
    node_at: &[Vec<Option<usize>>],
    cfg: &GraphConfig,
) -> AgentEdges {
    let mut out = AgentEdges::default();
    for (dst, node) in nodes.iter().enumerate() {
        let lo = node.t.saturating_sub(cfg.suc_window);
        for t in lo..node.t {
            if let Some(src) = node_at[node.agent][t] {
                let gap = (node.t - t) as f64 * scene.dt;
                out.suc.push(src, dst, rel_feature(&nodes[src].pose, &node.pose, gap));
            }
        }
    }
    for (dst, node) in nodes.iter().enumerate() {
        for (a, row) in node_at.iter().enumerate() {
            if a == node.agent {
                continue;
            }
            if let Some(src) = row[node.t] {
                if nodes[src].pose.distance(&node.pose) <= cfg.social_radius {
                    out.social
                        .push(src, dst, rel_feature(&nodes[src].pose, &node.pose, 0.0));
                }
            }
        }
    }
    for (dst, node) in nodes.iter().enumerate() {
        for (l, lp) in poses.lanes.iter().enumerate() {
            if lp.distance(&node.pose) <= cfg.lane_agent_radius {
                out.lane_to_agent.push(l, dst, rel_feature(lp, &node.pose, 0.0));
            }
        }
    }
    out
}

pub fn build_query_graph(
    scene: &Scene,
    poses: &NodePoses,
    nodes: &[AgentNode],
    node_at: &[Vec<Option<usize>>],
    cfg: &GraphConfig,
    modes: usize,
) -> Result<(Vec<QueryNode>, QueryEdges)> {
    if modes < 1 {
        return Err(Error::InvalidConfig("number of modes must be at least 1".into()));
    }
    let t_now = scene.current_step();
    let predicted = scene.predicted_agents();
    let mut queries = Vec::with_capacity(predicted.len() * modes);
    for &a in &predicted {
        let pose = poses.agent_states[a][t_now];
        for mode in 0..modes {
            queries.push(QueryNode { agent: a, mode, pose });
        }
    }
    let mut out = QueryEdges::default();
    for (q, query) in queries.iter().enumerate() {
        for t in 0..scene.t_history {
            if let Some(src) = node_at[query.agent][t] {
                let gap = (t_now - t) as f64 * scene.dt;
                out.agent_self
                    .push(src, q, rel_feature(&nodes[src].pose, &query.pose, gap));
            }
        }
        for (a, row) in node_at.iter().enumerate() {
            if a == query.agent {
                continue;
            }
            if let Some(src) = row[t_now] {
                if nodes[src].pose.distance(&query.pose) <= cfg.query_social_radius {
                    out.agent_social
                        .push(src, q, rel_feature(&nodes[src].pose, &query.pose, 0.0));
                }
            }
        }
        for (l, lp) in poses.lanes.iter().enumerate() {
            if lp.distance(&query.pose) <= cfg.query_lane_radius {
                out.lane_to_query.push(l, q, rel_feature(lp, &query.pose, 0.0));
            }
        }
        let base = q - query.mode;
        for m in 0..modes {
            if m != query.mode {
                let src = base + m;
                out.mode_to_mode
                    .push(src, q, rel_feature(&queries[src].pose, &query.pose, 0.0));
            }
        }
    }
    Ok((queries, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use std::f64::consts::PI;

    #[test]
    fn identity_feature() {
        let p = Pose2::new(3.0, 4.0, 0.3);
        let f = relative_edge_feature(&p, &p, None).unwrap();
        assert_eq!(f.to_array(), [0.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn axis_aligned_feature() {
        let m = Pose2::new(0.0, 0.0, 0.0);
        let n = Pose2::new(1.0, 0.0, PI / 2.0);
        let f = relative_edge_feature(&m, &n, Some(0.1)).unwrap();
        let want = [1.0, 0.0, 0.0, 1.0, 1.0, 0.1];
        for (a, b) in f.to_array().iter().zip(want) {
            assert!((a - b).abs() < 1e-15, "{f:?}");
        }
    }

    #[test]
    fn non_finite_rejected() {
        let m = Pose2 {
            x: f64::NAN,
            y: 0.0,
            heading: 0.0,
        };
        assert!(matches!(
            relative_edge_feature(&m, &m, None),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn heading_from_velocity_and_carry_forward() {
        use crate::scenegraph::AgentState;
        let mk = |vx: f64, vy: f64| AgentState {
            x: 0.0,
            y: 0.0,
            vx,
            vy,
            valid: true,
        };
        let h = agent_headings(&[mk(0.0, 0.0), mk(5.0, 0.0), mk(0.0, 2.0), mk(0.05, -0.05)]);
        assert_eq!(h[0], 0.0);
        assert_eq!(h[1], 0.0);
        assert!((h[2] - PI / 2.0).abs() < 1e-15);
        assert!((h[3] - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn straight_lane_pose_at_midpoint() {
        let lane = fixtures::straight_lane(1, [0.0, 0.0], [10.0, 0.0], 3.5);
        let scene = Scene::new("s", vec![], vec![lane], 1, 1, 0.1).unwrap();
        let p = assign_poses(&scene);
        assert!((p.lanes[0].x - 5.0).abs() < 1e-12);
        assert!(p.lanes[0].y.abs() < 1e-12 && p.lanes[0].heading.abs() < 1e-12);
    }

    #[test]
    fn lane_heading_is_stable_on_a_vertex() {
        // bend whose midpoint sits exactly on the corner vertex
        let pts = [[0.0, 0.0], [10.0, 0.0], [10.0 + 10.0 * 0.6f64.cos(), 10.0 * 0.6f64.sin()]];
        let p = lane_pose(&pts, 20.0);
        assert!((p.x - 10.0).abs() < 1e-12 && p.y.abs() < 1e-12);
        assert!((p.heading - 0.3).abs() < 1e-12);
        let nudged = lane_pose(&pts, 20.0 + 1e-12);
        assert!((nudged.heading - p.heading).abs() < 1e-9);
    }

    #[test]
    fn map_edges_respect_radius_and_labels() {
        let mut a = fixtures::straight_lane(1, [0.0, 0.0], [30.0, 0.0], 3.5);
        let b = fixtures::straight_lane(2, [30.0, 0.0], [60.0, 0.0], 3.5);
        let far = fixtures::straight_lane(3, [300.0, 0.0], [330.0, 0.0], 3.5);
        a.successors.push(2);
        let scene = Scene::new("s", vec![], vec![a, b, far], 1, 1, 0.1).unwrap();
        let poses = assign_poses(&scene);
        let map = build_map_graph(&scene, &poses, &GraphConfig::default());
        assert_eq!(map.lane_to_lane.len(), 2);
        for i in 0..2 {
            let (s, d, r) = (
                map.lane_to_lane.src[i],
                map.lane_to_lane.dst[i],
                map.lane_to_lane.relation[i],
            );
            match (s, d) {
                (0, 1) => assert_eq!(r, LaneRelation::Successor),
                (1, 0) => assert_eq!(r, LaneRelation::Predecessor),
                other => panic!("unexpected edge {other:?}"),
            }
        }
        let into_a = map.point_to_lane.dst.iter().filter(|&&d| d == 0).count();
        assert_eq!(into_a, 45);
    }

    #[test]
    fn suc_window_count() {
        let agent = fixtures::straight_agent(1, crate::scenegraph::AgentClass::Vehicle, [0.0, 0.0], 0.0, 5.0, 60, 0.1);
        let scene = Scene::new("s", vec![agent], vec![], 50, 10, 0.1).unwrap();
        let g = HeteroGraph::build(&scene, &GraphConfig::default(), 1).unwrap();
        let last = g.agent_node_at[0][49].unwrap();
        assert_eq!(g.agent.suc.dst.iter().filter(|&&d| d == last).count(), 20);
        assert_eq!(g.agent.suc.dst.iter().filter(|&&d| d == 0).count(), 0);
    }

    #[test]
    fn query_counts() {
        use crate::scenegraph::AgentClass;
        let agents = (0..3)
            .map(|i| fixtures::straight_agent(i, AgentClass::Vehicle, [0.0, 10.0 * i as f64], 0.0, 5.0, 8, 0.1))
            .collect();
        let scene = Scene::new("s", agents, vec![], 4, 4, 0.1).unwrap();
        let g = HeteroGraph::build(&scene, &GraphConfig::default(), 6).unwrap();
        assert_eq!(g.queries.len(), 18);
        let deg = g.query.mode_to_mode.in_degree(18);
        assert!(deg.iter().all(|&d| d == 5));
        let g1 = HeteroGraph::build(&scene, &GraphConfig::default(), 1).unwrap();
        assert!(g1.query.mode_to_mode.is_empty());
        assert!(matches!(
            HeteroGraph::build(&scene, &GraphConfig::default(), 0),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn isolated_agent_only_self_and_mode_edges() {
        use crate::scenegraph::AgentClass;
        let agent = fixtures::straight_agent(0, AgentClass::Pedestrian, [0.0, 0.0], 0.0, 1.0, 8, 0.1);
        let lane = fixtures::straight_lane(1, [1000.0, 0.0], [1020.0, 0.0], 3.5);
        let scene = Scene::new("s", vec![agent], vec![lane], 4, 4, 0.1).unwrap();
        let g = HeteroGraph::build(&scene, &GraphConfig::default(), 3).unwrap();
        assert_eq!(g.query.agent_self.len(), 12);
        assert_eq!(g.query.mode_to_mode.len(), 6);
        assert!(g.query.agent_social.is_empty() && g.query.lane_to_query.is_empty());
    }
}
