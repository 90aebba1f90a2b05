use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, Variant};
use super::forward::*;
use super::net::{Heads, Net};
use crate::error::{Error, Result};
use crate::geometry::Pose2;
use crate::nn::{Checkpoint, ParamStore, Tape, Var};
use crate::scenegraph::Scene;

/// Network, its parameters and configuration.
#[derive(Debug, Clone)]
pub struct Model {
    pub cfg: ModelConfig,
    pub store: ParamStore,
    pub net: Net,
}

impl Model {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new(seed);
        let net = Net::new(&mut store, &cfg);
        Ok(Self { cfg, store, net })
    }

    pub fn checkpoint(&self, extra: serde_json::Value) -> Checkpoint {
        let meta = serde_json::json!({
            "model_config": self.cfg,
            "seed": self.store.seed(),
            "extra": extra,
        });
        Checkpoint::from_store(&self.store, meta)
    }

    /// Rebuild from a checkpoint. An explicit config replaces the embedded
    /// one; mismatching shapes are reported by parameter name.
    pub fn from_checkpoint(ckpt: &Checkpoint, cfg: Option<&ModelConfig>) -> Result<Self> {
        let cfg = match cfg {
            Some(c) => c.clone(),
            None => serde_json::from_value(ckpt.meta["model_config"].clone()).map_err(|e| {
                Error::Data(format!("checkpoint model_config unreadable: {e}"))
            })?,
        };
        let seed = ckpt.meta["seed"].as_u64().unwrap_or(0);
        let mut model = Self::new(cfg, seed)?;
        ckpt.apply_to(&mut model.store)?;
        Ok(model)
    }

    pub fn load(path: &Path, cfg: Option<&ModelConfig>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?, cfg)
    }

    pub fn predict(&self, scene: &Scene) -> Result<Vec<ModePrediction>> {
        match self.cfg.variant {
            Variant::Goal => predict(self, scene),
            Variant::Baseline => baseline_predict(self, scene),
        }
    }
}

/// Chosen goal node of one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedPoint {
    /// Index into `Scene::points`, or into the ring candidates for
    /// non-road-bound agents.
    pub index: usize,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModePrediction {
    pub agent_id: u64,
    pub agent_index: usize,
    pub mode: usize,
    pub road_bound: bool,
    pub selected_lane_id: Option<u64>,
    pub selected_point: Option<SelectedPoint>,
    /// Meters in the selected goal node's frame.
    pub goal_offset: Option<[f64; 2]>,
    /// Regressed goal, scene frame.
    pub goal: Option<[f64; 2]>,
    /// `T_f` waypoints in the agent's last observed frame.
    pub trajectory_mu: Vec<[f64; 2]>,
    pub trajectory_b: Vec<[f64; 2]>,
    pub trajectory_scene: Vec<[f64; 2]>,
    pub score: f64,
}

/// Per-query outcome of the goal stages.
#[derive(Debug, Clone)]
pub struct ModeGoal {
    pub lane: Option<usize>,
    pub lane_prob: f64,
    pub target: Target,
    pub goal_pose: Pose2,
    pub point_prob: f64,
    pub offset: [f64; 2],
    /// Regressed goal in the scene frame.
    pub goal_xy: [f64; 2],
}

/// Inference through the goal stages for every query.
#[derive(Debug)]
pub struct GoalPass {
    pub lane: Option<DecideStage>,
    pub point: Option<DecideStage>,
    pub nrb: Option<DecideStage>,
    pub goals: Vec<ModeGoal>,
    /// Local goal positions `n_queries x 2`, in query order.
    pub goal_local: Option<Var>,
}

pub fn goal_pass(tape: &mut Tape, net: &Net, inputs: &SceneInputs, enc: &Encoded) -> Result<GoalPass> {
    let Heads::Goal(h) = &net.heads else {
        return Err(Error::InvalidConfig("goal pass on a baseline model".into()));
    };
    let nq = inputs.n_queries();
    let lane = lane_stage(tape, net, inputs, enc)?;
    let mut lane_of = vec![None; nq];
    if let Some(st) = &lane {
        let picks = st.select(tape);
        let probs = tape.value(st.probs);
        for (q, p) in picks.iter().enumerate() {
            if let Some(p) = *p {
                if let Target::Lane(l) = st.cands[st.pair_cand[p]].target {
                    lane_of[q] = Some((l, probs.get(p, 0)));
                }
            }
        }
    }
    let rb_req: Vec<(usize, usize)> = (0..nq)
        .filter_map(|q| lane_of[q].map(|(l, _)| (q, l)))
        .collect();
    let nrb_q: Vec<usize> = (0..nq)
        .filter(|&q| !inputs.slots[inputs.slot_of_query(q)].road_bound())
        .collect();
    let point = point_stage(tape, net, inputs, enc, &rb_req)?;
    let nrb = nrb_stage(tape, net, inputs, enc, &nrb_q)?;

    let mut picks_of: Vec<Option<(bool, usize, usize)>> = vec![None; nq];
    let mut groups = Vec::new();
    for (rb, st) in [(true, &point), (false, &nrb)] {
        let Some(st) = st else { continue };
        let picks = st.select(tape);
        let mut rows = Vec::new();
        for (q, p) in picks.iter().enumerate() {
            if let Some(p) = *p {
                picks_of[q] = Some((rb, p, st.pair_cand[p]));
                rows.push((q, st.pair_cand[p]));
            }
        }
        let head = if rb { &h.offset_rb } else { &h.offset_nrb };
        let off = regress_offsets(tape, head, enc, st, &rows)?;
        groups.push((rb, rows, off));
    }

    let mut offsets = vec![[0.0; 2]; nq];
    for (_, rows, off) in &groups {
        let v = tape.value(*off);
        for (i, (q, _)) in rows.iter().enumerate() {
            offsets[*q] = [v.get(i, 0), v.get(i, 1)];
        }
    }
    let mut goals = Vec::with_capacity(nq);
    for q in 0..nq {
        let (rb, pair, cand) =
            picks_of[q].ok_or_else(|| Error::Structural(format!("query {q} selected no goal")))?;
        let st = if rb { point.as_ref() } else { nrb.as_ref() }.expect("stage exists");
        let c = &st.cands[cand];
        let off = offsets[q];
        goals.push(ModeGoal {
            lane: lane_of[q].map(|x| x.0),
            lane_prob: lane_of[q].map_or(1.0, |x| x.1),
            target: c.target,
            goal_pose: c.pose,
            point_prob: tape.value(st.probs).get(pair, 0),
            offset: off,
            goal_xy: c.pose.to_scene(off),
        });
    }

    // Local goals assembled in query order.
    let mut goal_local = None;
    for (_, rows, off) in &groups {
        let frames: Vec<(Pose2, Pose2)> = rows
            .iter()
            .map(|(q, _)| (inputs.graph.queries[*q].pose, goals[*q].goal_pose))
            .collect();
        let gl = super::forward::goal_local(tape, *off, &frames)?;
        let qs: Vec<usize> = rows.iter().map(|r| r.0).collect();
        let placed = tape.scatter_add_rows(gl, qs, nq)?;
        goal_local = Some(match goal_local {
            None => placed,
            Some(acc) => tape.add(acc, placed)?,
        });
    }
    Ok(GoalPass {
        lane,
        point,
        nrb,
        goals,
        goal_local,
    })
}

/// Trajectories for all queries, each group through its own head, merged
/// back into query order.
pub fn trajectories(
    tape: &mut Tape,
    net: &Net,
    inputs: &SceneInputs,
    enc: &Encoded,
    goal_local: Var,
    t_future: usize,
) -> Result<(Var, Var)> {
    let Heads::Goal(h) = &net.heads else {
        return Err(Error::InvalidConfig("trajectory completion on a baseline model".into()));
    };
    let nq = inputs.n_queries();
    let mut acc: Option<(Var, Var)> = None;
    for rb in [true, false] {
        let qs: Vec<usize> = (0..nq)
            .filter(|&q| inputs.slots[inputs.slot_of_query(q)].road_bound() == rb)
            .collect();
        if qs.is_empty() {
            continue;
        }
        let gl = tape.gather_rows(goal_local, qs.clone())?;
        let head = if rb { &h.traj_rb } else { &h.traj_nrb };
        let (mu, b) = complete_trajectory(tape, head, enc, &qs, gl, t_future)?;
        let mu = tape.scatter_add_rows(mu, qs.clone(), nq)?;
        let b = tape.scatter_add_rows(b, qs, nq)?;
        acc = Some(match acc {
            None => (mu, b),
            Some((m0, b0)) => (tape.add(m0, mu)?, tape.add(b0, b)?),
        });
    }
    acc.ok_or_else(|| Error::Structural("no queries to complete".into()))
}

/// Baseline head outputs merged into query order: `(mu, b, scores)`.
pub fn baseline_outputs(
    tape: &mut Tape,
    net: &Net,
    inputs: &SceneInputs,
    enc: &Encoded,
    t_future: usize,
) -> Result<(Var, Var, Var)> {
    let Heads::Baseline(h) = &net.heads else {
        return Err(Error::InvalidConfig("baseline heads missing".into()));
    };
    let nq = inputs.n_queries();
    let mut acc: Option<Var> = None;
    for rb in [true, false] {
        let qs: Vec<usize> = (0..nq)
            .filter(|&q| inputs.slots[inputs.slot_of_query(q)].road_bound() == rb)
            .collect();
        if qs.is_empty() {
            continue;
        }
        let fq = tape.gather_rows(enc.queries, qs.clone())?;
        let head = if rb { &h.rb } else { &h.nrb };
        let out = head.forward(tape, fq)?;
        let placed = tape.scatter_add_rows(out, qs, nq)?;
        acc = Some(match acc {
            None => placed,
            Some(a) => tape.add(a, placed)?,
        });
    }
    let out = acc.ok_or_else(|| Error::Structural("no queries".into()))?;
    let (mu, b) = trajectory_from_head(tape, out, t_future)?;
    let logits = tape.slice(out, 4 * t_future, 4 * t_future + 1)?;
    let groups: Vec<usize> = (0..nq).map(|q| inputs.slot_of_query(q)).collect();
    let scores = tape.softmax_grouped(logits, groups, inputs.slots.len())?;
    Ok((mu, b, scores))
}

fn rows_xy(v: &crate::nn::Tensor, r: usize) -> Vec<[f64; 2]> {
    v.row_slice(r).chunks_exact(2).map(|c| [c[0], c[1]]).collect()
}

fn assemble(
    inputs: &SceneInputs,
    mu: &crate::nn::Tensor,
    b: &crate::nn::Tensor,
    scores: &[f64],
    goals: Option<&[ModeGoal]>,
) -> Vec<ModePrediction> {
    let scene = inputs.scene;
    let mut out = Vec::with_capacity(inputs.n_queries());
    for (q, node) in inputs.graph.queries.iter().enumerate() {
        let slot = &inputs.slots[inputs.slot_of_query(q)];
        let traj = rows_xy(mu, q);
        let trajectory_scene = traj.iter().map(|p| node.pose.to_scene(*p)).collect();
        let g = goals.map(|g| &g[q]);
        out.push(ModePrediction {
            agent_id: scene.agents[node.agent].id,
            agent_index: node.agent,
            mode: node.mode,
            road_bound: slot.road_bound(),
            selected_lane_id: g.and_then(|g| g.lane).map(|l| scene.lanes[l].id),
            selected_point: g.map(|g| SelectedPoint {
                index: match g.target {
                    Target::Point(p) | Target::Ring(p) | Target::Lane(p) => p,
                },
                x: g.goal_pose.x,
                y: g.goal_pose.y,
                heading: g.goal_pose.heading,
            }),
            goal_offset: g.map(|g| g.offset),
            goal: g.map(|g| g.goal_xy),
            trajectory_mu: traj,
            trajectory_b: rows_xy(b, q),
            trajectory_scene,
            score: scores[q],
        });
    }
    out
}

/// Mode scores renormalized over the K modes of each agent.
pub fn renormalize(raw: &[f64], k: usize) -> Vec<f64> {
    raw.chunks(k)
        .flat_map(|c| {
            let s: f64 = c.iter().sum();
            c.iter()
                .map(move |v| if s > 0.0 { v / s } else { 1.0 / c.len() as f64 })
        })
        .collect()
}

/// Full goal pipeline, inference mode.
pub fn predict(model: &Model, scene: &Scene) -> Result<Vec<ModePrediction>> {
    let inputs = SceneInputs::new(scene, &model.cfg)?;
    if inputs.n_queries() == 0 {
        return Ok(Vec::new());
    }
    let mut tape = Tape::new(&model.store);
    let enc = encode(&mut tape, &model.net, &inputs)?;
    let pass = goal_pass(&mut tape, &model.net, &inputs, &enc)?;
    let gl = pass.goal_local.expect("queries exist");
    let (mu, b) = trajectories(&mut tape, &model.net, &inputs, &enc, gl, model.cfg.t_future)?;
    let raw: Vec<f64> = pass.goals.iter().map(|g| g.lane_prob * g.point_prob).collect();
    let scores = renormalize(&raw, model.cfg.k);
    Ok(assemble(
        &inputs,
        tape.value(mu),
        tape.value(b),
        &scores,
        Some(&pass.goals),
    ))
}

/// Direct-regression baseline, inference mode.
pub fn baseline_predict(model: &Model, scene: &Scene) -> Result<Vec<ModePrediction>> {
    let inputs = SceneInputs::new(scene, &model.cfg)?;
    if inputs.n_queries() == 0 {
        return Ok(Vec::new());
    }
    let mut tape = Tape::new(&model.store);
    let enc = encode(&mut tape, &model.net, &inputs)?;
    let (mu, b, s) = baseline_outputs(&mut tape, &model.net, &inputs, &enc, model.cfg.t_future)?;
    let scores = tape.value(s).data().to_vec();
    Ok(assemble(&inputs, tape.value(mu), tape.value(b), &scores, None))
}

#[derive(Serialize)]
struct DumpRecord<'a> {
    scene_id: &'a str,
    agent_id: u64,
    mode: usize,
    score: f64,
    goal: Option<[f64; 2]>,
    selected_lane_id: Option<u64>,
    trajectory: &'a [[f64; 2]],
}

/// JSON-lines dump, one record per mode prediction.
pub fn write_prediction_dump<W: Write>(
    w: &mut W,
    scene_id: &str,
    preds: &[ModePrediction],
) -> std::io::Result<()> {
    for p in preds {
        let rec = DumpRecord {
            scene_id,
            agent_id: p.agent_id,
            mode: p.mode,
            score: p.score,
            goal: p.goal,
            selected_lane_id: p.selected_lane_id,
            trajectory: &p.trajectory_scene,
        };
        serde_json::to_writer(&mut *w, &rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
