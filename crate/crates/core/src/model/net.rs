//! Parameter layout of the network. Forward logic lives in `forward`.

use super::config::{ModelConfig, Variant};
use crate::error::Result;
use crate::nn::{Activation, GraphAttention, Linear, Mlp, ParamId, ParamStore, Tape, Tensor, Var};
use crate::scenegraph::{AgentClass, LaneRelation, LaneType, PointType, RelEdgeFeature, Side};

/// Fixed input scaling so raw meters and m/s land near unit range.
pub(crate) const SPEED_SCALE: f64 = 0.1;
pub(crate) const DIST_SCALE: f64 = 0.02;
pub(crate) const LENGTH_SCALE: f64 = 0.02;
pub(crate) const SEG_SCALE: f64 = 0.5;
pub(crate) const RADIUS_SCALE: f64 = 0.05;
pub(crate) const GOAL_SCALE: f64 = 0.1;

/// Continuous MLP plus lookup tables, summed, then a 2-layer MLP.
#[derive(Debug, Clone)]
pub struct EntityEmbed {
    pub cont: Mlp,
    pub tables: Vec<ParamId>,
    pub out: Mlp,
    pub width: usize,
}

impl EntityEmbed {
    pub fn new(store: &mut ParamStore, name: &str, n_cont: usize, tables: &[usize], d: usize) -> Self {
        Self {
            cont: Mlp::new(store, &format!("{name}.cont"), &[n_cont, d, d], Activation::LeakyRelu),
            tables: tables
                .iter()
                .enumerate()
                .map(|(i, &n)| store.embedding(&format!("{name}.table{i}"), n, d))
                .collect(),
            out: Mlp::new(store, &format!("{name}.out"), &[d, d, d], Activation::LeakyRelu),
            width: d,
        }
    }

    /// `cont` is `n x n_cont`; `cats[i]` holds one id per row for table `i`.
    pub fn forward(&self, tape: &mut Tape, cont: Tensor, cats: &[&[usize]]) -> Result<Var> {
        if cont.rows() == 0 {
            return Ok(tape.constant(Tensor::zeros(0, self.width)));
        }
        let x = tape.constant(cont);
        let mut h = self.cont.forward(tape, x)?;
        for (table, ids) in self.tables.iter().zip(cats) {
            let e = tape.embedding_lookup(*table, ids)?;
            h = tape.add(h, e)?;
        }
        self.out.forward(tape, h)
    }

    /// Embed relative edge features (and an optional relation label).
    pub fn edges(&self, tape: &mut Tape, feats: &[RelEdgeFeature], relation: Option<&[usize]>) -> Result<Var> {
        let mut data = Vec::with_capacity(feats.len() * RelEdgeFeature::WIDTH);
        for f in feats {
            data.extend_from_slice(&[f.sin_a, f.cos_a, f.sin_phi, f.cos_phi, f.d * DIST_SCALE, f.dt]);
        }
        let cont = Tensor::from_vec(feats.len(), RelEdgeFeature::WIDTH, data)?;
        match relation {
            Some(r) => self.forward(tape, cont, &[r]),
            None => self.forward(tape, cont, &[]),
        }
    }
}

/// Goal scoring head: `MLP(concat[f_query, f_goal, f_edge]) + f_edge`, then
/// an affine map to one logit. The first layer is kept as three blocks so the
/// query part can be computed once per query and the rest once per candidate.
#[derive(Debug, Clone)]
pub struct DecideScorer {
    pub w_query: Linear,
    pub w_goal: ParamId,
    pub w_edge: ParamId,
    pub hidden: Linear,
    pub logit: Linear,
}

impl DecideScorer {
    pub fn new(store: &mut ParamStore, name: &str, d: usize) -> Self {
        Self {
            w_query: Linear::new(store, &format!("{name}.in_query"), d, d),
            w_goal: store.weight(&format!("{name}.in_goal.w"), d, d),
            w_edge: store.weight(&format!("{name}.in_edge.w"), d, d),
            hidden: Linear::new(store, &format!("{name}.hidden"), d, d),
            logit: Linear::new(store, &format!("{name}.logit"), d, 1),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AgentBlock {
    pub suc: GraphAttention,
    pub social: GraphAttention,
    pub lane: GraphAttention,
}

#[derive(Debug, Clone)]
pub struct QueryBlock {
    pub agent_self: GraphAttention,
    pub social: GraphAttention,
    pub lane: GraphAttention,
    pub mode: GraphAttention,
}

#[derive(Debug, Clone)]
pub struct GoalHeads {
    pub lane_edge: EntityEmbed,
    pub point_edge: EntityEmbed,
    pub nrb_edge: EntityEmbed,
    pub nrb_node: EntityEmbed,
    pub lane_score: DecideScorer,
    pub point_score: DecideScorer,
    pub nrb_score: DecideScorer,
    pub offset_rb: Mlp,
    pub offset_nrb: Mlp,
    pub traj_rb: Mlp,
    pub traj_nrb: Mlp,
}

#[derive(Debug, Clone)]
pub struct BaselineHeads {
    pub rb: Mlp,
    pub nrb: Mlp,
}

#[derive(Debug, Clone)]
pub enum Heads {
    Goal(GoalHeads),
    Baseline(BaselineHeads),
}

#[derive(Debug, Clone)]
pub struct Net {
    pub agent_embed: EntityEmbed,
    pub lane_embed: EntityEmbed,
    pub point_embed: EntityEmbed,
    pub query_shared: ParamId,
    pub query_mode: ParamId,
    pub edge_point_lane: EntityEmbed,
    pub edge_lane_lane: EntityEmbed,
    pub edge_suc: EntityEmbed,
    pub edge_social: EntityEmbed,
    pub edge_lane_agent: EntityEmbed,
    pub edge_query_self: EntityEmbed,
    pub edge_query_social: EntityEmbed,
    pub edge_lane_query: EntityEmbed,
    pub edge_mode: EntityEmbed,
    pub map_point_lane: GraphAttention,
    pub map_lane_lane: GraphAttention,
    pub agent_blocks: Vec<AgentBlock>,
    pub query_blocks: Vec<QueryBlock>,
    pub heads: Heads,
}

impl Net {
    pub fn new(store: &mut ParamStore, cfg: &ModelConfig) -> Self {
        let d = cfg.d_h;
        let w = RelEdgeFeature::WIDTH;
        let gat = |store: &mut ParamStore, name: &str| {
            GraphAttention::new(store, name, d, cfg.heads, cfg.ffn_hidden, cfg.dropout)
        };
        let agent_embed = EntityEmbed::new(store, "embed.agent", 2, &[AgentClass::ALL.len()], d);
        let lane_embed = EntityEmbed::new(store, "embed.lane", 1, &[LaneType::COUNT], d);
        let point_embed =
            EntityEmbed::new(store, "embed.point", 1, &[PointType::COUNT, Side::COUNT], d);
        let query_shared = store.embedding("embed.query.shared", 1, d);
        let query_mode = store.embedding("embed.query.mode", cfg.k, d);
        let edge_point_lane = EntityEmbed::new(store, "edge.point_lane", w, &[], d);
        let edge_lane_lane = EntityEmbed::new(store, "edge.lane_lane", w, &[LaneRelation::COUNT], d);
        let edge_suc = EntityEmbed::new(store, "edge.suc", w, &[], d);
        let edge_social = EntityEmbed::new(store, "edge.social", w, &[], d);
        let edge_lane_agent = EntityEmbed::new(store, "edge.lane_agent", w, &[], d);
        let edge_query_self = EntityEmbed::new(store, "edge.query_self", w, &[], d);
        let edge_query_social = EntityEmbed::new(store, "edge.query_social", w, &[], d);
        let edge_lane_query = EntityEmbed::new(store, "edge.lane_query", w, &[], d);
        let edge_mode = EntityEmbed::new(store, "edge.mode", w, &[], d);
        let map_point_lane = gat(store, "map.point_lane");
        let map_lane_lane = gat(store, "map.lane_lane");
        let agent_blocks = (0..2)
            .map(|i| AgentBlock {
                suc: gat(store, &format!("agent{i}.suc")),
                social: gat(store, &format!("agent{i}.social")),
                lane: gat(store, &format!("agent{i}.lane")),
            })
            .collect();
        let query_blocks = (0..2)
            .map(|i| QueryBlock {
                agent_self: gat(store, &format!("query{i}.self")),
                social: gat(store, &format!("query{i}.social")),
                lane: gat(store, &format!("query{i}.lane")),
                mode: gat(store, &format!("query{i}.mode")),
            })
            .collect();
        let traj_out = 4 * cfg.t_future;
        let heads = match cfg.variant {
            Variant::Goal => Heads::Goal(GoalHeads {
                lane_edge: EntityEmbed::new(store, "goal.lane_edge", w, &[], d),
                point_edge: EntityEmbed::new(store, "goal.point_edge", w, &[], d),
                nrb_edge: EntityEmbed::new(store, "goal.nrb_edge", w, &[], d),
                nrb_node: EntityEmbed::new(store, "goal.nrb_node", 1, &[1], d),
                lane_score: DecideScorer::new(store, "goal.lane_score", d),
                point_score: DecideScorer::new(store, "goal.point_score", d),
                nrb_score: DecideScorer::new(store, "goal.nrb_score", d),
                offset_rb: Mlp::new(store, "goal.offset_rb", &[3 * d, d, 2], Activation::LeakyRelu),
                offset_nrb: Mlp::new(store, "goal.offset_nrb", &[3 * d, d, 2], Activation::LeakyRelu),
                traj_rb: Mlp::new(store, "traj.rb", &[d + 2, d, traj_out], Activation::LeakyRelu),
                traj_nrb: Mlp::new(store, "traj.nrb", &[d + 2, d, traj_out], Activation::LeakyRelu),
            }),
            Variant::Baseline => Heads::Baseline(BaselineHeads {
                rb: Mlp::new(store, "baseline.rb", &[d, d, traj_out + 1], Activation::LeakyRelu),
                nrb: Mlp::new(store, "baseline.nrb", &[d, d, traj_out + 1], Activation::LeakyRelu),
            }),
        };
        Self {
            agent_embed,
            lane_embed,
            point_embed,
            query_shared,
            query_mode,
            edge_point_lane,
            edge_lane_lane,
            edge_suc,
            edge_social,
            edge_lane_agent,
            edge_query_self,
            edge_query_social,
            edge_lane_query,
            edge_mode,
            map_point_lane,
            map_lane_lane,
            agent_blocks,
            query_blocks,
            heads,
        }
    }
}
