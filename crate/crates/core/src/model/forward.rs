//! Forward pass pieces shared by inference and training.

use std::rc::Rc;

use super::config::ModelConfig;
use super::net::*;
use crate::error::{Error, Result};
use crate::geometry::Pose2;
use crate::nn::{EdgeIndex, GraphAttention, Mlp, Tape, Tensor, Var};
use crate::scenegraph::rel_feature;
use crate::scenegraph::{
    center_points_of_lane, goal_mode, mean_history_speed, nrb_goal_candidates, EdgeSet,
    GoalMode, HeteroGraph, NrbCandidate, RelEdgeFeature, Scene,
};

/// Floor applied to the predicted Laplace scales.
pub const SCALE_FLOOR: f64 = 1e-3;

/// One predicted agent and its goal candidates.
#[derive(Debug, Clone)]
pub struct Slot {
    pub agent: usize,
    pub pose: Pose2,
    pub goal: GoalMode,
    /// Ring candidates; empty for road-bound slots.
    pub nrb: Vec<NrbCandidate>,
    /// First row of this slot in the stacked point-nrb matrix.
    pub nrb_offset: usize,
}

impl Slot {
    pub fn road_bound(&self) -> bool {
        self.goal.is_road_bound()
    }
}

/// Graph plus goal candidates for one scene.
#[derive(Debug, Clone)]
pub struct SceneInputs<'s> {
    pub scene: &'s Scene,
    pub graph: HeteroGraph,
    pub slots: Vec<Slot>,
    pub n_nrb: usize,
}

impl<'s> SceneInputs<'s> {
    pub fn new(scene: &'s Scene, cfg: &ModelConfig) -> Result<Self> {
        if scene.t_history != cfg.t_history || scene.t_future != cfg.t_future {
            return Err(Error::InvalidInput(format!(
                "scene `{}` has t_history={} t_future={}, model expects {} and {}",
                scene.id, scene.t_history, scene.t_future, cfg.t_history, cfg.t_future
            )));
        }
        let graph = HeteroGraph::build(scene, &cfg.graph, cfg.k)?;
        let t_now = scene.current_step();
        let mut slots = Vec::new();
        let mut n_nrb = 0;
        for a in scene.predicted_agents() {
            let pose = graph.poses.agent_states[a][t_now];
            let goal = goal_mode(scene, a, &cfg.graph);
            let nrb = if goal.is_road_bound() {
                Vec::new()
            } else {
                let v = mean_history_speed(scene, a, cfg.graph.nrb_min_speed);
                nrb_goal_candidates(&pose, v, &cfg.graph)
            };
            slots.push(Slot {
                agent: a,
                pose,
                goal,
                nrb_offset: n_nrb,
                nrb,
            });
            n_nrb += slots.last().map_or(0, |s| s.nrb.len());
        }
        Ok(Self {
            scene,
            graph,
            slots,
            n_nrb,
        })
    }

    pub fn k(&self) -> usize {
        self.graph.modes
    }

    pub fn n_queries(&self) -> usize {
        self.graph.queries.len()
    }

    pub fn slot_of_query(&self, q: usize) -> usize {
        q / self.graph.modes
    }
}

/// Node features after encoder and decoder.
#[derive(Debug, Clone, Copy)]
pub struct Encoded {
    pub agents: Var,
    pub lanes: Var,
    pub points: Var,
    pub queries: Var,
    /// Point-nrb embeddings (they skip the encoder).
    pub nrb: Option<Var>,
}

fn edge_index(e: &EdgeSet) -> EdgeIndex {
    EdgeIndex::new(&e.src, &e.dst)
}

fn attend(
    tape: &mut Tape,
    layer: &GraphAttention,
    embed: &EntityEmbed,
    src: Var,
    dst: Var,
    edges: &EdgeSet,
    emb_cache: &mut Option<Var>,
) -> Result<Var> {
    if edges.is_empty() {
        // Zero in-edges: skip + FFN path only.
        let e = tape.constant(Tensor::zeros(0, embed.width));
        return layer.forward(tape, src, dst, &EdgeIndex::new(&[], &[]), e);
    }
    let e = match *emb_cache {
        Some(e) => e,
        None => {
            let e = embed.edges(tape, &edges.feats, None)?;
            *emb_cache = Some(e);
            e
        }
    };
    layer.forward(tape, src, dst, &edge_index(edges), e)
}

/// Node embeddings, encoder and query decoder.
pub fn encode(tape: &mut Tape, net: &Net, inputs: &SceneInputs) -> Result<Encoded> {
    let scene = inputs.scene;
    let g = &inputs.graph;

    let mut cont = Vec::with_capacity(g.agent_nodes.len() * 2);
    let mut class = Vec::with_capacity(g.agent_nodes.len());
    for n in &g.agent_nodes {
        cont.extend_from_slice(&[n.v_local[0] * SPEED_SCALE, n.v_local[1] * SPEED_SCALE]);
        class.push(scene.agents[n.agent].class.index());
    }
    let mut agents = net.agent_embed.forward(
        tape,
        Tensor::from_vec(g.agent_nodes.len(), 2, cont)?,
        &[&class],
    )?;

    let lane_cont: Vec<f64> = scene.lanes.iter().map(|l| l.length * LENGTH_SCALE).collect();
    let lane_type: Vec<usize> = scene.lanes.iter().map(|l| l.lane_type.index()).collect();
    let mut lanes = net.lane_embed.forward(
        tape,
        Tensor::from_vec(scene.lanes.len(), 1, lane_cont)?,
        &[&lane_type],
    )?;

    let pt_cont: Vec<f64> = scene.points.iter().map(|p| p.seg_length * SEG_SCALE).collect();
    let pt_type: Vec<usize> = scene.points.iter().map(|p| p.point_type.index()).collect();
    let pt_side: Vec<usize> = scene.points.iter().map(|p| p.side.index()).collect();
    let points = net.point_embed.forward(
        tape,
        Tensor::from_vec(scene.points.len(), 1, pt_cont)?,
        &[&pt_type, &pt_side],
    )?;

    // Map block, once.
    if !scene.lanes.is_empty() {
        let mut none = None;
        lanes = attend(
            tape,
            &net.map_point_lane,
            &net.edge_point_lane,
            points,
            lanes,
            &g.map.point_to_lane,
            &mut none,
        )?;
        let ll = &g.map.lane_to_lane;
        if ll.is_empty() {
            let e = tape.constant(Tensor::zeros(0, net.edge_lane_lane.width));
            lanes = net.map_lane_lane.forward(tape, lanes, lanes, &EdgeIndex::new(&[], &[]), e)?;
        } else {
            let rel: Vec<usize> = ll.relation.iter().map(|r| r.index()).collect();
            let e = net.edge_lane_lane.edges(tape, &ll.feats, Some(&rel))?;
            lanes = net.map_lane_lane.forward(tape, lanes, lanes, &edge_index(ll), e)?;
        }
    }

    // Agent block, twice; edge embeddings are shared between the repetitions.
    if !g.agent_nodes.is_empty() {
        let (mut c_suc, mut c_soc, mut c_lane) = (None, None, None);
        for blk in &net.agent_blocks {
            agents = attend(tape, &blk.suc, &net.edge_suc, agents, agents, &g.agent.suc, &mut c_suc)?;
            agents = attend(
                tape,
                &blk.social,
                &net.edge_social,
                agents,
                agents,
                &g.agent.social,
                &mut c_soc,
            )?;
            agents = attend(
                tape,
                &blk.lane,
                &net.edge_lane_agent,
                lanes,
                agents,
                &g.agent.lane_to_agent,
                &mut c_lane,
            )?;
        }
    }

    // Query decoder.
    let nq = g.queries.len();
    let mut queries = tape.constant(Tensor::zeros(0, net.agent_embed.width));
    if nq > 0 {
        let shared = tape.embedding_lookup(net.query_shared, &vec![0; nq])?;
        let modes: Vec<usize> = g.queries.iter().map(|q| q.mode).collect();
        let per_mode = tape.embedding_lookup(net.query_mode, &modes)?;
        queries = tape.add(shared, per_mode)?;
        let (mut c_self, mut c_soc, mut c_lane, mut c_mode) = (None, None, None, None);
        for blk in &net.query_blocks {
            let q = &g.query;
            queries = attend(
                tape,
                &blk.agent_self,
                &net.edge_query_self,
                agents,
                queries,
                &q.agent_self,
                &mut c_self,
            )?;
            queries = attend(
                tape,
                &blk.social,
                &net.edge_query_social,
                agents,
                queries,
                &q.agent_social,
                &mut c_soc,
            )?;
            queries = attend(
                tape,
                &blk.lane,
                &net.edge_lane_query,
                lanes,
                queries,
                &q.lane_to_query,
                &mut c_lane,
            )?;
            queries = attend(
                tape,
                &blk.mode,
                &net.edge_mode,
                queries,
                queries,
                &q.mode_to_mode,
                &mut c_mode,
            )?;
        }
    }

    let nrb = match &net.heads {
        Heads::Goal(h) if inputs.n_nrb > 0 => {
            let radii: Vec<f64> = inputs
                .slots
                .iter()
                .flat_map(|s| s.nrb.iter().map(|c| c.radius * RADIUS_SCALE))
                .collect();
            let zeros = vec![0; radii.len()];
            Some(h.nrb_node.forward(tape, Tensor::from_vec(radii.len(), 1, radii)?, &[&zeros])?)
        }
        _ => None,
    };

    Ok(Encoded {
        agents,
        lanes,
        points,
        queries,
        nrb,
    })
}

/// What a decide edge points at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    /// Lane index into `Scene::lanes`.
    Lane(usize),
    /// Point index into `Scene::points`.
    Point(usize),
    /// Ring candidate index within the slot.
    Ring(usize),
}

#[derive(Debug, Clone)]
pub struct Candidate {
    pub slot: usize,
    pub target: Target,
    pub pose: Pose2,
    /// Tie-break key: lane id, segment index or ring index.
    pub key: u64,
}

/// Scored decide edges of one stage. Pairs of one query are contiguous.
#[derive(Debug, Clone)]
pub struct DecideStage {
    pub probs: Var,
    pub pair_query: Vec<usize>,
    pub pair_cand: Vec<usize>,
    pub cands: Vec<Candidate>,
    /// Goal-node features per candidate row.
    pub goal_feats: Var,
    /// Embedded decide-edge features per candidate row.
    pub edge_emb: Var,
    /// `query -> range of pair rows`.
    pub ranges: Vec<Option<std::ops::Range<usize>>>,
}

impl DecideStage {
    /// Pair row of `(query, candidate row)`, if scored.
    pub fn pair_of(&self, q: usize, cand: usize) -> Option<usize> {
        let r = self.ranges.get(q)?.clone()?;
        r.into_iter().find(|&p| self.pair_cand[p] == cand)
    }

    /// Argmax pair row per scored query; ties go to the smallest key.
    pub fn select(&self, tape: &mut Tape) -> Vec<Option<usize>> {
        let probs = tape.value(self.probs).clone();
        let picks: Vec<Option<usize>> = self
            .ranges
            .iter()
            .map(|r| {
                let r = r.clone()?;
                let mut best = r.start;
                for p in r {
                    let (pv, bv) = (probs.get(p, 0), probs.get(best, 0));
                    let key = |i: usize| self.cands[self.pair_cand[i]].key;
                    if pv > bv || (pv == bv && key(p) < key(best)) {
                        best = p;
                    }
                }
                Some(best)
            })
            .collect();
        for p in picks.iter().flatten() {
            tape.record_decision(*p);
        }
        picks
    }
}

/// Score decide edges. `requests[i] = (query, candidate rows)`.
fn decide_stage(
    tape: &mut Tape,
    scorer: &DecideScorer,
    edge_embed: &EntityEmbed,
    inputs: &SceneInputs,
    enc: &Encoded,
    cands: Vec<Candidate>,
    goal_feats: Var,
    requests: &[(usize, Vec<usize>)],
) -> Result<DecideStage> {
    let nq = inputs.n_queries();
    let feats: Vec<RelEdgeFeature> = cands
        .iter()
        .map(|c| rel_feature(&inputs.slots[c.slot].pose, &c.pose, 0.0))
        .collect();
    let edge_emb = edge_embed.edges(tape, &feats, None)?;
    let mut pair_query = Vec::new();
    let mut pair_cand = Vec::new();
    let mut ranges = vec![None; nq];
    for (q, rows) in requests {
        if rows.is_empty() {
            return Err(Error::Structural(format!("query {q} has no goal candidates")));
        }
        let start = pair_query.len();
        for &r in rows {
            pair_query.push(*q);
            pair_cand.push(r);
        }
        ranges[*q] = Some(start..pair_query.len());
    }
    let a = scorer.w_query.forward(tape, enc.queries)?;
    let wg = tape.param(scorer.w_goal);
    let wgv = tape.matmul(goal_feats, wg)?;
    let we = tape.param(scorer.w_edge);
    let wev = tape.matmul(edge_emb, we)?;
    let b = tape.add(wgv, wev)?;
    let pq: Rc<[usize]> = pair_query.clone().into();
    let pc: Rc<[usize]> = pair_cand.clone().into();
    let ha = tape.gather_rows(a, pq.clone())?;
    let hb = tape.gather_rows(b, pc.clone())?;
    let h = tape.add(ha, hb)?;
    let h = tape.leaky_relu(h);
    let h = scorer.hidden.forward(tape, h)?;
    let res = tape.gather_rows(edge_emb, pc)?;
    let h = tape.add(h, res)?;
    let logits = scorer.logit.forward(tape, h)?;
    let probs = tape.softmax_grouped(logits, pq, nq)?;
    Ok(DecideStage {
        probs,
        pair_query,
        pair_cand,
        cands,
        goal_feats,
        edge_emb,
        ranges,
    })
}

fn goal_heads(net: &Net) -> Result<&GoalHeads> {
    match &net.heads {
        Heads::Goal(h) => Ok(h),
        Heads::Baseline(_) => Err(Error::InvalidConfig(
            "goal stages requested from a baseline model".into(),
        )),
    }
}

/// Lane classification for every query of every road-bound slot.
pub fn lane_stage(
    tape: &mut Tape,
    net: &Net,
    inputs: &SceneInputs,
    enc: &Encoded,
) -> Result<Option<DecideStage>> {
    let h = goal_heads(net)?;
    let k = inputs.k();
    let mut cands = Vec::new();
    let mut requests = Vec::new();
    for (s, slot) in inputs.slots.iter().enumerate() {
        let GoalMode::RoadBound(lanes) = &slot.goal else { continue };
        let first = cands.len();
        for &l in lanes {
            cands.push(Candidate {
                slot: s,
                target: Target::Lane(l),
                pose: inputs.graph.poses.lanes[l],
                key: inputs.scene.lanes[l].id,
            });
        }
        let rows: Vec<usize> = (first..cands.len()).collect();
        for m in 0..k {
            requests.push((inputs.graph.query_index(s, m), rows.clone()));
        }
    }
    if requests.is_empty() {
        return Ok(None);
    }
    let idx: Vec<usize> = cands
        .iter()
        .map(|c| match c.target {
            Target::Lane(l) => l,
            _ => unreachable!(),
        })
        .collect();
    let goal_feats = tape.gather_rows(enc.lanes, idx)?;
    decide_stage(tape, &h.lane_score, &h.lane_edge, inputs, enc, cands, goal_feats, &requests).map(Some)
}

/// Point classification on the given lane for each `(query, lane)` request.
pub fn point_stage(
    tape: &mut Tape,
    net: &Net,
    inputs: &SceneInputs,
    enc: &Encoded,
    requests: &[(usize, usize)],
) -> Result<Option<DecideStage>> {
    if requests.is_empty() {
        return Ok(None);
    }
    let h = goal_heads(net)?;
    let mut cands = Vec::new();
    let mut seen = std::collections::HashMap::new();
    let mut reqs = Vec::with_capacity(requests.len());
    for &(q, lane) in requests {
        let s = inputs.slot_of_query(q);
        let pts = center_points_of_lane(inputs.scene, lane);
        let rows = pts
            .iter()
            .map(|&p| {
                *seen.entry((s, p)).or_insert_with(|| {
                    cands.push(Candidate {
                        slot: s,
                        target: Target::Point(p),
                        pose: inputs.graph.poses.points[p],
                        key: inputs.scene.points[p].seg_index as u64,
                    });
                    cands.len() - 1
                })
            })
            .collect();
        reqs.push((q, rows));
    }
    let idx: Vec<usize> = cands
        .iter()
        .map(|c| match c.target {
            Target::Point(p) => p,
            _ => unreachable!(),
        })
        .collect();
    let goal_feats = tape.gather_rows(enc.points, idx)?;
    decide_stage(tape, &h.point_score, &h.point_edge, inputs, enc, cands, goal_feats, &reqs).map(Some)
}

/// Ring-point classification for the given queries of non-road-bound slots.
pub fn nrb_stage(
    tape: &mut Tape,
    net: &Net,
    inputs: &SceneInputs,
    enc: &Encoded,
    queries: &[usize],
) -> Result<Option<DecideStage>> {
    if queries.is_empty() {
        return Ok(None);
    }
    let h = goal_heads(net)?;
    let nrb = enc
        .nrb
        .ok_or_else(|| Error::Structural("no point-nrb embeddings".into()))?;
    let mut cands = Vec::new();
    let mut rows_of_slot = std::collections::HashMap::new();
    let mut idx = Vec::new();
    let mut reqs = Vec::with_capacity(queries.len());
    for &q in queries {
        let s = inputs.slot_of_query(q);
        let slot = &inputs.slots[s];
        let rows = rows_of_slot
            .entry(s)
            .or_insert_with(|| {
                let first = cands.len();
                for (j, c) in slot.nrb.iter().enumerate() {
                    cands.push(Candidate {
                        slot: s,
                        target: Target::Ring(j),
                        pose: c.pose,
                        key: j as u64,
                    });
                    idx.push(slot.nrb_offset + j);
                }
                (first..cands.len()).collect::<Vec<_>>()
            })
            .clone();
        reqs.push((q, rows));
    }
    let goal_feats = tape.gather_rows(nrb, idx)?;
    decide_stage(tape, &h.nrb_score, &h.nrb_edge, inputs, enc, cands, goal_feats, &reqs).map(Some)
}

/// Regress goal offsets (goal-node frame) for `(query, candidate row)` picks
/// of one stage. Returns an `n x 2` variable.
pub fn regress_offsets(
    tape: &mut Tape,
    head: &Mlp,
    enc: &Encoded,
    stage: &DecideStage,
    picks: &[(usize, usize)],
) -> Result<Var> {
    let qs: Vec<usize> = picks.iter().map(|p| p.0).collect();
    let cs: Rc<[usize]> = picks.iter().map(|p| p.1).collect::<Vec<_>>().into();
    let fq = tape.gather_rows(enc.queries, qs)?;
    let fg = tape.gather_rows(stage.goal_feats, cs.clone())?;
    let fe = tape.gather_rows(stage.edge_emb, cs)?;
    let x = tape.concat(&[fq, fg, fe])?;
    head.forward(tape, x)
}

/// Goal position in the query's frame: `goal pose ⊕ offset` expressed
/// relative to `query`. Returns the `n x 2` variable and its values.
pub fn goal_local(
    tape: &mut Tape,
    offsets: Var,
    frames: &[(Pose2, Pose2)],
) -> Result<Var> {
    let n = frames.len();
    let mut base = Vec::with_capacity(2 * n);
    let mut cos = Vec::with_capacity(n);
    let mut sin = Vec::with_capacity(n);
    for (query, goal) in frames {
        base.extend_from_slice(&query.to_local(goal.xy()));
        let (s, c) = (goal.heading - query.heading).sin_cos();
        cos.push(c);
        sin.push(s);
    }
    let cos = Tensor::from_vec(n, 1, cos)?;
    let sin = Tensor::from_vec(n, 1, sin)?;
    let neg_sin = Tensor::from_vec(n, 1, sin.data().iter().map(|v| -v).collect())?;
    let ox = tape.slice(offsets, 0, 1)?;
    let oy = tape.slice(offsets, 1, 2)?;
    let xc = tape.mul_const(ox, cos.clone())?;
    let ys = tape.mul_const(oy, neg_sin)?;
    let xs = tape.mul_const(ox, sin)?;
    let yc = tape.mul_const(oy, cos)?;
    let lx = tape.add(xc, ys)?;
    let ly = tape.add(xs, yc)?;
    let rot = tape.concat(&[lx, ly])?;
    let base = tape.constant(Tensor::from_vec(n, 2, base)?);
    tape.add(rot, base)
}

/// Split a head output into cumulative means and floored positive scales,
/// each `n x 2T_f` with interleaved (x, y) columns.
pub fn trajectory_from_head(tape: &mut Tape, out: Var, t_future: usize) -> Result<(Var, Var)> {
    let delta = tape.slice(out, 0, 2 * t_future)?;
    let raw = tape.slice(out, 2 * t_future, 4 * t_future)?;
    let mu = tape.cumsum_strided(delta, 2);
    let b = tape.softplus(raw);
    let b = tape.clamp_min(b, SCALE_FLOOR);
    Ok((mu, b))
}

/// Trajectory completion conditioned on local goal positions.
pub fn complete_trajectory(
    tape: &mut Tape,
    head: &Mlp,
    enc: &Encoded,
    queries: &[usize],
    goal_local: Var,
    t_future: usize,
) -> Result<(Var, Var)> {
    let fq = tape.gather_rows(enc.queries, queries.to_vec())?;
    let g = tape.scalar_mul(goal_local, GOAL_SCALE);
    let x = tape.concat(&[fq, g])?;
    let out = head.forward(tape, x)?;
    trajectory_from_head(tape, out, t_future)
}
