//! Displacement, miss-rate and offroad metrics over top-K scored modes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dist, point_in_polygon, polygon_boundary_dist};
use crate::model::{Model, ModePrediction};
use crate::scenegraph::{LaneDef, Scene};

/// Displacement threshold of both miss rates, meters.
pub const MISS_THRESHOLD: f64 = 2.0;
/// Tolerance around lane polygons for the offroad test, meters.
pub const LANE_EPS: f64 = 0.1;

/// Mode indices of the `k` highest scores; ties go to the lower index.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

fn check(trajs: &[Vec<[f64; 2]>], scores: &[f64], gt: &[[f64; 2]], k: usize) -> Result<()> {
    if trajs.is_empty() || k == 0 {
        return Err(Error::InvalidInput("need at least one mode and k >= 1".into()));
    }
    if trajs.len() != scores.len() {
        return Err(Error::InvalidInput(format!(
            "{} trajectories but {} scores",
            trajs.len(),
            scores.len()
        )));
    }
    if gt.is_empty() {
        return Err(Error::InvalidInput("empty ground truth".into()));
    }
    for t in trajs {
        if t.len() != gt.len() {
            return Err(Error::InvalidInput(format!(
                "trajectory length {} differs from ground truth length {}",
                t.len(),
                gt.len()
            )));
        }
    }
    Ok(())
}

fn ade(t: &[[f64; 2]], gt: &[[f64; 2]]) -> f64 {
    t.iter().zip(gt).map(|(a, b)| dist(*a, *b)).sum::<f64>() / gt.len() as f64
}

fn fde(t: &[[f64; 2]], gt: &[[f64; 2]]) -> f64 {
    dist(t[t.len() - 1], gt[gt.len() - 1])
}

pub fn min_ade_k(trajs: &[Vec<[f64; 2]>], scores: &[f64], gt: &[[f64; 2]], k: usize) -> Result<f64> {
    check(trajs, scores, gt, k)?;
    Ok(top_k(scores, k)
        .into_iter()
        .map(|m| ade(&trajs[m], gt))
        .fold(f64::INFINITY, f64::min))
}

pub fn min_fde_k(trajs: &[Vec<[f64; 2]>], scores: &[f64], gt: &[[f64; 2]], k: usize) -> Result<f64> {
    check(trajs, scores, gt, k)?;
    Ok(top_k(scores, k)
        .into_iter()
        .map(|m| fde(&trajs[m], gt))
        .fold(f64::INFINITY, f64::min))
}

/// minFDE plus a Brier term of the minimizing mode: `(1 - s)^2`, or the
/// literal `1 - s^2` when `literal` is set. Among equal-FDE modes the higher
/// score wins.
pub fn brier_min_fde_k(
    trajs: &[Vec<[f64; 2]>],
    scores: &[f64],
    gt: &[[f64; 2]],
    k: usize,
    literal: bool,
) -> Result<f64> {
    check(trajs, scores, gt, k)?;
    let mut best: Option<(f64, f64)> = None;
    for m in top_k(scores, k) {
        let e = fde(&trajs[m], gt);
        let s = scores[m];
        if best.is_none_or(|(be, bs)| e < be || (e == be && s > bs)) {
            best = Some((e, s));
        }
    }
    let (e, s) = best.expect("k >= 1");
    Ok(e + if literal { 1.0 - s * s } else { (1.0 - s) * (1.0 - s) })
}

/// Whether top-K minFDE exceeds the threshold.
pub fn is_final_miss(trajs: &[Vec<[f64; 2]>], scores: &[f64], gt: &[[f64; 2]], k: usize) -> Result<bool> {
    Ok(min_fde_k(trajs, scores, gt, k)? > MISS_THRESHOLD)
}

/// Whether every top-K mode has some waypoint off by more than the threshold.
pub fn is_any_waypoint_miss(
    trajs: &[Vec<[f64; 2]>],
    scores: &[f64],
    gt: &[[f64; 2]],
    k: usize,
) -> Result<bool> {
    check(trajs, scores, gt, k)?;
    Ok(top_k(scores, k).into_iter().all(|m| {
        trajs[m]
            .iter()
            .zip(gt)
            .any(|(a, b)| dist(*a, *b) > MISS_THRESHOLD)
    }))
}

/// One agent's modes and ground truth.
#[derive(Debug, Clone)]
pub struct AgentCase {
    pub trajs: Vec<Vec<[f64; 2]>>,
    pub scores: Vec<f64>,
    pub gt: Vec<[f64; 2]>,
}

fn rate<F: Fn(&AgentCase) -> Result<bool>>(cases: &[AgentCase], f: F) -> Result<f64> {
    if cases.is_empty() {
        return Err(Error::InvalidInput("no agents".into()));
    }
    let mut n = 0usize;
    for c in cases {
        if f(c)? {
            n += 1;
        }
    }
    Ok(n as f64 / cases.len() as f64)
}

/// Fraction of agents whose top-K minFDE exceeds 2 m.
pub fn min_mr_k(cases: &[AgentCase], k: usize) -> Result<f64> {
    rate(cases, |c| is_final_miss(&c.trajs, &c.scores, &c.gt, k))
}

/// Fraction of agents for which every top-K mode misses at some waypoint.
pub fn miss_rate_topk_2(cases: &[AgentCase], k: usize) -> Result<f64> {
    rate(cases, |c| is_any_waypoint_miss(&c.trajs, &c.scores, &c.gt, k))
}

/// Inside (or within `eps` of) at least one lane polygon, even-odd rule.
pub fn point_in_lanes(xy: [f64; 2], lanes: &[LaneDef], eps: f64) -> bool {
    lanes.iter().any(|l| {
        let poly = l.polygon();
        point_in_polygon(xy, &poly) || polygon_boundary_dist(xy, &poly) <= eps
    })
}

/// Precomputed lane polygons with bounding boxes for repeated queries.
pub struct LaneIndex {
    polys: Vec<(Vec<[f64; 2]>, [f64; 4])>,
}

impl LaneIndex {
    pub fn new(lanes: &[LaneDef]) -> Self {
        let polys = lanes
            .iter()
            .map(|l| {
                let p = l.polygon();
                let mut bb = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
                for q in &p {
                    bb[0] = bb[0].min(q[0]);
                    bb[1] = bb[1].min(q[1]);
                    bb[2] = bb[2].max(q[0]);
                    bb[3] = bb[3].max(q[1]);
                }
                (p, bb)
            })
            .collect();
        Self { polys }
    }

    pub fn contains(&self, xy: [f64; 2], eps: f64) -> bool {
        self.polys.iter().any(|(p, bb)| {
            xy[0] >= bb[0] - eps
                && xy[0] <= bb[2] + eps
                && xy[1] >= bb[1] - eps
                && xy[1] <= bb[3] + eps
                && (point_in_polygon(xy, p) || polygon_boundary_dist(xy, p) <= eps)
        })
    }
}

/// Number of offroad trajectories and number checked. Only road-bound
/// agents count; every mode is checked.
pub fn offroad_counts(preds: &[ModePrediction], scene: &Scene) -> (usize, usize) {
    let index = LaneIndex::new(&scene.lanes);
    let mut off = 0;
    let mut total = 0;
    for p in preds {
        if !scene.agents[p.agent_index].road_bound() {
            continue;
        }
        total += 1;
        if p.trajectory_scene.iter().any(|xy| !index.contains(*xy, LANE_EPS)) {
            off += 1;
        }
    }
    (off, total)
}

/// Fraction of road-bound trajectories with a waypoint outside every lane.
pub fn offroad_rate(preds: &[ModePrediction], scene: &Scene) -> f64 {
    let (off, total) = offroad_counts(preds, scene);
    if total == 0 {
        0.0
    } else {
        off as f64 / total as f64
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KMetrics {
    pub k: usize,
    #[serde(rename = "minADE")]
    pub min_ade: f64,
    #[serde(rename = "minFDE")]
    pub min_fde: f64,
    #[serde(rename = "b_minFDE")]
    pub b_min_fde: f64,
    #[serde(rename = "minMR")]
    pub min_mr: f64,
    #[serde(rename = "missRateTopK2")]
    pub miss_rate_topk2: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub agents: usize,
    pub per_k: Vec<KMetrics>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenes: usize,
    pub agents: usize,
    pub per_k: Vec<KMetrics>,
    #[serde(rename = "ORR")]
    pub orr: f64,
    pub offroad_trajectories: usize,
    pub roadbound_trajectories: usize,
    pub per_class: BTreeMap<String, ClassMetrics>,
    pub brier_literal: bool,
}

impl MetricsReport {
    pub fn get(&self, k: usize) -> Option<&KMetrics> {
        self.per_k.iter().find(|m| m.k == k)
    }

    pub const CSV_HEADER: &'static str =
        "dataset,variant,k,minADE,minFDE,b_minFDE,minMR,missRateTopK2,ORR,agents";

    pub fn csv_rows(&self, dataset: &str, variant: &str) -> String {
        let mut s = String::new();
        for m in &self.per_k {
            s.push_str(&format!(
                "{dataset},{variant},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}\n",
                m.k, m.min_ade, m.min_fde, m.b_min_fde, m.min_mr, m.miss_rate_topk2, self.orr, self.agents
            ));
        }
        s
    }
}

#[derive(Default, Clone)]
struct Sums {
    n: usize,
    ade: f64,
    fde: f64,
    bfde: f64,
    mr: usize,
    mr2: usize,
}

impl Sums {
    fn add(&mut self, c: &AgentCase, k: usize, literal: bool) -> Result<()> {
        self.n += 1;
        self.ade += min_ade_k(&c.trajs, &c.scores, &c.gt, k)?;
        self.fde += min_fde_k(&c.trajs, &c.scores, &c.gt, k)?;
        self.bfde += brier_min_fde_k(&c.trajs, &c.scores, &c.gt, k, literal)?;
        self.mr += is_final_miss(&c.trajs, &c.scores, &c.gt, k)? as usize;
        self.mr2 += is_any_waypoint_miss(&c.trajs, &c.scores, &c.gt, k)? as usize;
        Ok(())
    }

    fn finish(&self, k: usize) -> KMetrics {
        let n = self.n.max(1) as f64;
        KMetrics {
            k,
            min_ade: self.ade / n,
            min_fde: self.fde / n,
            b_min_fde: self.bfde / n,
            min_mr: self.mr as f64 / n,
            miss_rate_topk2: self.mr2 as f64 / n,
        }
    }
}

/// Supervised agents of a scene paired with their predicted modes.
pub fn agent_cases(scene: &Scene, preds: &[ModePrediction]) -> Vec<(usize, AgentCase)> {
    let mut out = Vec::new();
    for a in scene.supervised_agents() {
        let modes: Vec<&ModePrediction> = preds.iter().filter(|p| p.agent_index == a).collect();
        if modes.is_empty() {
            continue;
        }
        let gt = scene.agents[a].states[scene.t_history..]
            .iter()
            .map(|s| s.xy())
            .collect();
        out.push((
            a,
            AgentCase {
                trajs: modes.iter().map(|p| p.trajectory_scene.clone()).collect(),
                scores: modes.iter().map(|p| p.score).collect(),
                gt,
            },
        ));
    }
    out
}

/// Aggregate metrics of precomputed predictions (agent-weighted means).
pub fn report_from_predictions(
    scenes: &[Scene],
    preds: &[Vec<ModePrediction>],
    ks: &[usize],
    brier_literal: bool,
) -> Result<MetricsReport> {
    if scenes.is_empty() {
        return Err(Error::InvalidInput("cannot evaluate an empty dataset".into()));
    }
    let mut all = vec![Sums::default(); ks.len()];
    let mut by_class: BTreeMap<String, Vec<Sums>> = BTreeMap::new();
    let (mut off, mut total) = (0, 0);
    for (scene, p) in scenes.iter().zip(preds) {
        let (o, t) = offroad_counts(p, scene);
        off += o;
        total += t;
        for (a, case) in agent_cases(scene, p) {
            let class = scene.agents[a].class.name().to_string();
            let cls = by_class
                .entry(class)
                .or_insert_with(|| vec![Sums::default(); ks.len()]);
            for (i, &k) in ks.iter().enumerate() {
                all[i].add(&case, k, brier_literal)?;
                cls[i].add(&case, k, brier_literal)?;
            }
        }
    }
    let agents = all.first().map_or(0, |s| s.n);
    Ok(MetricsReport {
        scenes: scenes.len(),
        agents,
        per_k: ks.iter().zip(&all).map(|(&k, s)| s.finish(k)).collect(),
        orr: if total == 0 { 0.0 } else { off as f64 / total as f64 },
        offroad_trajectories: off,
        roadbound_trajectories: total,
        per_class: by_class
            .into_iter()
            .map(|(c, sums)| {
                (
                    c,
                    ClassMetrics {
                        agents: sums.first().map_or(0, |s| s.n),
                        per_k: ks.iter().zip(&sums).map(|(&k, s)| s.finish(k)).collect(),
                    },
                )
            })
            .collect(),
        brier_literal,
    })
}

/// Default evaluation cutoffs for a model with `k` modes.
pub fn default_ks(k: usize) -> Vec<usize> {
    let mut ks = vec![1, k.min(6)];
    ks.dedup();
    ks
}

/// Predict every scene and aggregate.
pub fn evaluate(model: &Model, scenes: &[Scene], ks: &[usize], brier_literal: bool) -> Result<MetricsReport> {
    if let Some(&bad) = ks.iter().find(|&&k| k == 0 || k > model.cfg.k) {
        return Err(Error::InvalidConfig(format!(
            "evaluation k={bad} outside 1..={} (model modes)",
            model.cfg.k
        )));
    }
    let preds = scenes
        .iter()
        .map(|s| model.predict(s))
        .collect::<Result<Vec<_>>>()?;
    report_from_predictions(scenes, &preds, ks, brier_literal)
}
