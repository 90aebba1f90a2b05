//! Winner-take-all training losses for both variants.

use std::cmp::Ordering;

use super::config::TrainConfig;
use crate::error::{Error, Result};
use crate::geometry::{dist, point_polyline_dist, Pose2};
use crate::model::{
    baseline_outputs, complete_trajectory, encode, goal_local, goal_pass, point_stage,
    regress_offsets, nrb_stage, DecideStage, Encoded, Heads, Model, SceneInputs, Target, Variant,
};
use crate::nn::{Tape, Tensor, Var};
use crate::scenegraph::{center_points_of_lane, GoalMode, Scene};

/// Per-mode distances compared lexicographically to pick the winner. `lane`
/// is zero for agents without lane selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WtaKey {
    pub lane: f64,
    pub point: f64,
    pub goal: f64,
}

fn cmp_keys(a: &WtaKey, b: &WtaKey) -> Ordering {
    a.lane
        .total_cmp(&b.lane)
        .then(a.point.total_cmp(&b.point))
        .then(a.goal.total_cmp(&b.goal))
}

/// Index of the lexicographically smallest key; ties go to the lower index.
pub fn select_winner(keys: &[WtaKey]) -> usize {
    let mut best = 0;
    for (i, k) in keys.iter().enumerate().skip(1) {
        if cmp_keys(k, &keys[best]) == Ordering::Less {
            best = i;
        }
    }
    best
}

/// Index of the smallest endpoint distance; ties go to the lower index.
pub fn select_nearest_endpoint(dists: &[f64]) -> usize {
    let mut best = 0;
    for (i, d) in dists.iter().enumerate().skip(1) {
        if *d < dists[best] {
            best = i;
        }
    }
    best
}

/// Loss terms of one scene, already averaged over supervised agents.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub lane: f64,
    pub point: f64,
    pub goal: f64,
    pub traj: f64,
}

impl LossParts {
    pub fn add_scaled(&mut self, o: &LossParts, s: f64) {
        self.lane += s * o.lane;
        self.point += s * o.point;
        self.goal += s * o.goal;
        self.traj += s * o.traj;
    }

    pub fn is_finite(&self) -> bool {
        [self.lane, self.point, self.goal, self.traj]
            .iter()
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone)]
pub struct SceneLoss {
    pub total: Var,
    pub parts: LossParts,
    pub agents: usize,
    /// Winning mode per supervised agent, in slot order.
    pub winners: Vec<(usize, usize)>,
}

/// Future positions of `agent` in the frame `pose`, interleaved (x, y).
fn future_local(scene: &Scene, agent: usize, pose: &Pose2) -> Vec<f64> {
    scene.agents[agent].states[scene.t_history..]
        .iter()
        .flat_map(|s| pose.to_local(s.xy()))
        .collect()
}

fn gt_end(scene: &Scene, agent: usize) -> [f64; 2] {
    scene.agents[agent].states[scene.total_steps() - 1].xy()
}

/// Lane whose centerline is nearest to `xy`; ties go to the lower index.
pub fn nearest_lane(scene: &Scene, xy: [f64; 2]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, l) in scene.lanes.iter().enumerate() {
        let d = point_polyline_dist(xy, &l.centerline_xy());
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best.map(|b| b.0)
}

/// Mean of a list of scalar variables; `None` when empty.
fn mean(tape: &mut Tape, terms: &[Var]) -> Result<Option<Var>> {
    if terms.is_empty() {
        return Ok(None);
    }
    let row = tape.concat(terms)?;
    let s = tape.sum_all(row);
    Ok(Some(tape.scalar_mul(s, 1.0 / terms.len() as f64)))
}

fn prob_at(tape: &mut Tape, stage: &DecideStage, pair: usize) -> Result<Var> {
    tape.gather_rows(stage.probs, vec![pair])
}

struct Assembled {
    parts: [Option<Var>; 4],
}

impl Assembled {
    fn finish(self, tape: &mut Tape, cfg: &TrainConfig) -> Result<(Var, LossParts)> {
        let val = |tape: &Tape, v: Option<Var>| v.map_or(0.0, |v| tape.value(v).item());
        let parts = LossParts {
            lane: val(tape, self.parts[0]),
            point: val(tape, self.parts[1]),
            goal: val(tape, self.parts[2]),
            traj: val(tape, self.parts[3]),
        };
        let mut terms = Vec::new();
        for (i, p) in self.parts.iter().enumerate() {
            if let Some(v) = *p {
                terms.push(if i == 3 {
                    tape.scalar_mul(v, cfg.traj_loss_weight)
                } else {
                    v
                });
            }
        }
        let row = tape.concat(&terms)?;
        Ok((tape.sum_all(row), parts))
    }
}

/// Combined training loss of one scene, or `None` when no agent is supervised.
pub fn scene_loss(tape: &mut Tape, model: &Model, scene: &Scene, cfg: &TrainConfig) -> Result<Option<SceneLoss>> {
    let inputs = SceneInputs::new(scene, &model.cfg)?;
    let supervised = scene.supervised_agents();
    let slots: Vec<usize> = (0..inputs.slots.len())
        .filter(|&s| supervised.binary_search(&inputs.slots[s].agent).is_ok())
        .collect();
    if slots.is_empty() {
        return Ok(None);
    }
    let enc = encode(tape, &model.net, &inputs)?;
    let (total, parts, winners) = match model.cfg.variant {
        Variant::Goal => goal_loss(tape, model, &inputs, &enc, &slots, cfg)?,
        Variant::Baseline => baseline_loss(tape, model, &inputs, &enc, &slots, cfg)?,
    };
    Ok(Some(SceneLoss {
        total,
        parts,
        agents: slots.len(),
        winners,
    }))
}

type LossOut = (Var, LossParts, Vec<(usize, usize)>);

fn goal_loss(
    tape: &mut Tape,
    model: &Model,
    inputs: &SceneInputs,
    enc: &Encoded,
    slots: &[usize],
    cfg: &TrainConfig,
) -> Result<LossOut> {
    let Heads::Goal(h) = &model.net.heads else {
        return Err(Error::InvalidConfig("goal loss on a baseline model".into()));
    };
    let scene = inputs.scene;
    let k = inputs.k();
    let pass = goal_pass(tape, &model.net, inputs, enc)?;

    // Winner per supervised slot.
    let mut winners = Vec::with_capacity(slots.len());
    for &s in slots {
        let end = gt_end(scene, inputs.slots[s].agent);
        let keys: Vec<WtaKey> = (0..k)
            .map(|m| {
                let g = &pass.goals[inputs.graph.query_index(s, m)];
                WtaKey {
                    lane: g.lane.map_or(0.0, |l| dist(inputs.graph.poses.lanes[l].xy(), end)),
                    point: dist(g.goal_pose.xy(), end),
                    goal: dist(g.goal_xy, end),
                }
            })
            .collect();
        let w = select_winner(&keys);
        tape.record_decision(w);
        winners.push((s, w));
    }

    let (alpha, gamma) = (cfg.focal_alpha, cfg.focal_gamma);
    let mut lane_terms = Vec::new();
    let mut point_terms = Vec::new();
    let mut rb_req = Vec::new();
    let mut rb_ends = Vec::new();
    let mut nrb_q = Vec::new();
    let mut nrb_ends = Vec::new();
    for &(s, w) in &winners {
        let q = inputs.graph.query_index(s, w);
        let slot = &inputs.slots[s];
        let end = gt_end(scene, slot.agent);
        match &slot.goal {
            GoalMode::RoadBound(_) => {
                let target = nearest_lane(scene, end)
                    .ok_or_else(|| Error::Structural("road-bound agent in a scene without lanes".into()))?;
                if let Some(st) = &pass.lane {
                    let row = st
                        .cands
                        .iter()
                        .position(|c| c.slot == s && c.target == Target::Lane(target));
                    if let Some(pair) = row.and_then(|r| st.pair_of(q, r)) {
                        let p = prob_at(tape, st, pair)?;
                        lane_terms.push(tape.focal(p, alpha, gamma)?);
                    }
                }
                if center_points_of_lane(scene, target).is_empty() {
                    return Err(Error::Structural(format!("lane {target} has no center points")));
                }
                rb_req.push((q, target));
                rb_ends.push(end);
            }
            GoalMode::NonRoadBound => {
                nrb_q.push(q);
                nrb_ends.push(end);
            }
        }
    }

    let mut goal_terms: Vec<(Var, usize)> = Vec::new();
    let mut traj_terms: Vec<(Var, usize)> = Vec::new();
    let point = point_stage(tape, &model.net, inputs, enc, &rb_req)?;
    let nrb = nrb_stage(tape, &model.net, inputs, enc, &nrb_q)?;
    let groups = [
        (point.as_ref(), rb_req.iter().map(|r| r.0).collect::<Vec<_>>(), &rb_ends, true),
        (nrb.as_ref(), nrb_q.clone(), &nrb_ends, false),
    ];
    for (stage, queries, ends, rb) in groups {
        let Some(st) = stage else { continue };
        let mut picks = Vec::with_capacity(queries.len());
        let mut off_target = Vec::with_capacity(2 * queries.len());
        let mut frames = Vec::with_capacity(queries.len());
        let mut fut = Vec::new();
        for (&q, &end) in queries.iter().zip(ends.iter()) {
            let range = st.ranges[q].clone().expect("requested query is scored");
            let pair = range
                .min_by(|&a, &b| {
                    let da = dist(st.cands[st.pair_cand[a]].pose.xy(), end);
                    let db = dist(st.cands[st.pair_cand[b]].pose.xy(), end);
                    da.total_cmp(&db).then(a.cmp(&b))
                })
                .expect("non-empty range");
            let row = st.pair_cand[pair];
            let p = prob_at(tape, st, pair)?;
            point_terms.push(tape.focal(p, alpha, gamma)?);
            let cand_pose = st.cands[row].pose;
            picks.push((q, row));
            off_target.extend_from_slice(&cand_pose.to_local(end));
            let qpose = inputs.graph.queries[q].pose;
            frames.push((qpose, cand_pose));
            fut.extend(future_local(scene, inputs.graph.queries[q].agent, &qpose));
        }
        let n = picks.len();
        let head = if rb { &h.offset_rb } else { &h.offset_nrb };
        let off = regress_offsets(tape, head, enc, st, &picks)?;
        goal_terms.push((tape.huber(off, Tensor::from_vec(n, 2, off_target)?, cfg.huber_delta)?, n));
        let gl = goal_local(tape, off, &frames)?;
        let traj_head = if rb { &h.traj_rb } else { &h.traj_nrb };
        let (mu, b) = complete_trajectory(tape, traj_head, enc, &queries, gl, model.cfg.t_future)?;
        let t2 = 2 * model.cfg.t_future;
        traj_terms.push((tape.laplace_nll(mu, b, Tensor::from_vec(n, t2, fut)?)?, n));
    }

    let weighted = |tape: &mut Tape, terms: &[(Var, usize)]| -> Result<Option<Var>> {
        let total: usize = terms.iter().map(|t| t.1).sum();
        if total == 0 {
            return Ok(None);
        }
        let scaled: Vec<Var> = terms
            .iter()
            .map(|(v, n)| tape.scalar_mul(*v, *n as f64 / total as f64))
            .collect();
        let row = tape.concat(&scaled)?;
        Ok(Some(tape.sum_all(row)))
    };
    let parts = [
        mean(tape, &lane_terms)?,
        mean(tape, &point_terms)?,
        weighted(tape, &goal_terms)?,
        weighted(tape, &traj_terms)?,
    ];
    let (total, parts) = Assembled { parts }.finish(tape, cfg)?;
    Ok((total, parts, winners))
}

fn baseline_loss(
    tape: &mut Tape,
    model: &Model,
    inputs: &SceneInputs,
    enc: &Encoded,
    slots: &[usize],
    cfg: &TrainConfig,
) -> Result<LossOut> {
    let scene = inputs.scene;
    let k = inputs.k();
    let tf = model.cfg.t_future;
    let (mu, b, scores) = baseline_outputs(tape, &model.net, inputs, enc, tf)?;
    let muv = tape.value(mu).clone();
    let mut winners = Vec::with_capacity(slots.len());
    let mut qs = Vec::with_capacity(slots.len());
    let mut fut = Vec::new();
    let mut score_terms = Vec::new();
    for &s in slots {
        let agent = inputs.slots[s].agent;
        let pose = inputs.graph.queries[inputs.graph.query_index(s, 0)].pose;
        let end = pose.to_local(gt_end(scene, agent));
        let dists: Vec<f64> = (0..k)
            .map(|m| {
                let q = inputs.graph.query_index(s, m);
                dist([muv.get(q, 2 * tf - 2), muv.get(q, 2 * tf - 1)], end)
            })
            .collect();
        let w = select_nearest_endpoint(&dists);
        tape.record_decision(w);
        winners.push((s, w));
        let q = inputs.graph.query_index(s, w);
        qs.push(q);
        fut.extend(future_local(scene, agent, &pose));
        let p = tape.gather_rows(scores, vec![q])?;
        score_terms.push(tape.focal(p, cfg.focal_alpha, cfg.focal_gamma)?);
    }
    let n = qs.len();
    let mu_w = tape.gather_rows(mu, qs.clone())?;
    let b_w = tape.gather_rows(b, qs)?;
    let traj = tape.laplace_nll(mu_w, b_w, Tensor::from_vec(n, 2 * tf, fut)?)?;
    let parts = [None, mean(tape, &score_terms)?, None, Some(traj)];
    let (total, parts) = Assembled { parts }.finish(tape, cfg)?;
    Ok((total, parts, winners))
}
