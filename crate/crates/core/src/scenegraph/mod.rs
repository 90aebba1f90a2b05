//! Scenes, heterogeneous graph construction and goal candidates.

mod goals;
mod graph;
mod scene;

pub use goals::{
    center_points_of_lane, decide_lane_edges, decide_nrb_edges, decide_point_edges, goal_mode,
    lane_distances, mean_history_speed, nrb_goal_candidates, reachable_lanes, seed_lanes,
    GoalMode, NrbCandidate, Reachability,
};
pub use graph::{
    agent_headings, assign_poses, build_agent_graph, build_map_graph, build_query_graph,
    lane_pose, lane_relation, relative_edge_feature, AgentEdges, AgentNode, EdgeSet, GraphConfig,
    HeteroGraph, LaneRelation, MapEdges, NodePoses, QueryEdges, QueryNode, RelEdgeFeature,
    MIN_HEADING_SPEED,
};
pub use scene::{
    derive_points, AgentClass, AgentState, AgentTrack, LaneDef, LaneType, PointSeg, PointType,
    Scene, Side,
};
pub(crate) use graph::rel_feature;
