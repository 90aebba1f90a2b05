//! Acceptance checks. Each test prints one `A<n> PASS|FAIL ...` line.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use goalgraph::experiment::{compare, CompareInputs};
use goalgraph::fixtures::toy_scene;
use goalgraph::geometry::{dist, point_in_polygon, point_polyline_dist, Pose2, Se2};
use goalgraph::metrics::{
    brier_min_fde_k, evaluate, is_any_waypoint_miss, is_final_miss, min_ade_k, min_fde_k, min_mr_k,
    miss_rate_topk_2, offroad_rate, AgentCase,
};
use goalgraph::model::{Model, ModelConfig, ModePrediction, Variant};
use goalgraph::nn::{grad_check, GradCheckOptions, ParamStore, Tape, Tensor};
use goalgraph::render::render_svg;
use goalgraph::scenegraph::{
    nrb_goal_candidates, reachable_lanes, relative_edge_feature, AgentClass, GraphConfig,
    Reachability, Scene,
};
use goalgraph::synthgen::{gen_dataset, load_dataset, write_dataset, MapStyle, Timing};
use goalgraph::training::{
    lr_schedule, scene_loss, select_winner, train, TrainConfig, TrainOptions, WtaKey,
};

fn verdict(id: &str, pass: bool, detail: String) -> bool {
    println!("{id} {} {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn style_a(n: usize, seed: u64) -> Vec<Scene> {
    gen_dataset(&MapStyle::a(), &Timing::default(), n, seed, 1).unwrap()
}

// ---------------------------------------------------------------- A1

const A1_EDGE_TOL: f64 = 1e-9;
const A1_PRED_TOL: f64 = 1e-6;
const A1_SCENES: usize = 100;
const A1_MAX_SECONDS: f64 = 120.0;

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

fn a1_rigid_motion_invariance() -> bool {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut edge_err: f64 = 0.0;
    for _ in 0..10_000 {
        let pose = |rng: &mut ChaCha8Rng| {
            Pose2::new(
                rng.random_range(-200.0..200.0),
                rng.random_range(-200.0..200.0),
                rng.random_range(-4.0..4.0),
            )
        };
        let (m, n) = (pose(&mut rng), pose(&mut rng));
        let tf = Se2::new(
            rng.random_range(-1000.0..1000.0),
            rng.random_range(-1000.0..1000.0),
            rng.random_range(-3.2..3.2),
        );
        let a = relative_edge_feature(&m, &n, Some(0.5)).unwrap().to_array();
        let b = relative_edge_feature(&tf.apply_pose(&m), &tf.apply_pose(&n), Some(0.5))
            .unwrap()
            .to_array();
        for (x, y) in a.iter().zip(&b) {
            edge_err = edge_err.max((x - y).abs());
        }
    }

    let mut scenes = style_a(A1_SCENES / 2, 7);
    scenes.extend(gen_dataset(&MapStyle::b(), &Timing::default(), A1_SCENES - scenes.len(), 8, 1).unwrap());
    let mut pred_err: f64 = 0.0;
    let mut choice_mismatch = 0usize;
    let mut compared = 0usize;
    for variant in [Variant::Goal, Variant::Baseline] {
        let cfg = ModelConfig {
            d_h: 64,
            heads: 8,
            k: 6,
            ffn_hidden: 256,
            dropout: 0.0,
            variant,
            ..Default::default()
        };
        let model = Model::new(cfg, 3).unwrap();
        for s in &scenes {
            let tf = Se2::new(
                rng.random_range(-1000.0..1000.0),
                rng.random_range(-1000.0..1000.0),
                rng.random_range(-3.2..3.2),
            );
            let p = model.predict(s).unwrap();
            let q = model.predict(&s.transformed(&tf)).unwrap();
            assert_eq!(p.len(), q.len());
            let mut by_agent: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
            for (a, b) in p.iter().zip(&q) {
                compared += 1;
                if a.selected_lane_id != b.selected_lane_id
                    || a.selected_point.as_ref().map(|x| x.index)
                        != b.selected_point.as_ref().map(|x| x.index)
                {
                    choice_mismatch += 1;
                }
                pred_err = pred_err.max((a.score - b.score).abs());
                for (x, y) in a.trajectory_mu.iter().zip(&b.trajectory_mu) {
                    pred_err = pred_err.max((x[0] - y[0]).abs()).max((x[1] - y[1]).abs());
                }
                for (x, y) in a.trajectory_b.iter().zip(&b.trajectory_b) {
                    pred_err = pred_err.max((x[0] - y[0]).abs()).max((x[1] - y[1]).abs());
                }
                if let (Some(o), Some(r)) = (a.goal_offset, b.goal_offset) {
                    pred_err = pred_err.max((o[0] - r[0]).abs()).max((o[1] - r[1]).abs());
                }
                let e = by_agent.entry(a.agent_index).or_default();
                e.0.push(a.score);
                e.1.push(b.score);
            }
            for (sa, sb) in by_agent.values() {
                if argmax(sa) != argmax(sb) {
                    choice_mismatch += 1;
                }
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    verdict(
        "A1",
        edge_err < A1_EDGE_TOL && pred_err < A1_PRED_TOL && choice_mismatch == 0 && secs < A1_MAX_SECONDS,
        format!(
            "edge max err {edge_err:.2e} (tol {A1_EDGE_TOL:.0e}), prediction max err {pred_err:.2e} \
             (tol {A1_PRED_TOL:.0e}) over {} scenes / {compared} modes, choice/argmax mismatches \
             {choice_mismatch}, {secs:.0}s (limit {A1_MAX_SECONDS:.0}s)",
            scenes.len()
        ),
    )
}

// ---------------------------------------------------------------- A2

const A2_H: f64 = 1e-5;
const A2_REL_TOL: f64 = 1e-4;
const A2_MIN_FRACTION: f64 = 0.99;
/// Relative-error denominator floor. Central differences on a loss near 1e2
/// carry about 5e-9 of roundoff, so gradients below this are judged on an
/// absolute 1e-8 instead.
const A2_ABS_FLOOR: f64 = 1e-4;
/// Too many excluded coordinates would make the pass fraction meaningless.
const A2_MAX_EXCLUDED_FRACTION: f64 = 0.05;
const A2_MAX_SECONDS: f64 = 600.0;

fn a2_gradient_check() -> bool {
    let scene = toy_scene(10, 10);
    assert_eq!(scene.agents.len(), 3);
    let t0 = Instant::now();
    let mut lines = Vec::new();
    let mut pass = true;
    {
        let variant = Variant::Goal;
        let cfg = ModelConfig {
            d_h: 16,
            heads: 2,
            k: 2,
            t_history: 10,
            t_future: 10,
            ffn_hidden: 32,
            dropout: 0.0,
            variant,
            ..Default::default()
        };
        let model = Model::new(cfg, 5).unwrap();
        let tc = TrainConfig {
            dropout: 0.0,
            ..Default::default()
        };
        let mut store: ParamStore = model.store.clone();
        let opts = GradCheckOptions {
            h: A2_H,
            tol: A2_REL_TOL,
            abs_floor: A2_ABS_FLOOR,
            ..Default::default()
        };
        let report = grad_check(&mut store, opts, |t: &mut Tape| {
            Ok(scene_loss(t, &model, &scene, &tc)?.expect("supervised agents").total)
        })
        .unwrap();
        let total = report.checked() + report.excluded();
        let excluded = report.excluded() as f64 / total as f64;
        let frac = report.pass_fraction();
        pass &= frac >= A2_MIN_FRACTION && excluded <= A2_MAX_EXCLUDED_FRACTION;
        lines.push(format!(
            "{}: {}/{} coords pass ({:.4}), {} excluded at kinks",
            variant.name(),
            report.passed(),
            report.checked(),
            frac,
            report.excluded()
        ));
    }
    let secs = t0.elapsed().as_secs_f64();
    verdict(
        "A2",
        pass && secs < A2_MAX_SECONDS,
        format!(
            "{} (h {A2_H:.0e}, rel tol {A2_REL_TOL:.0e}, floor {A2_ABS_FLOOR:.0e}, need {A2_MIN_FRACTION}), \
             {secs:.0}s (limit {A2_MAX_SECONDS:.0}s)",
            lines.join("; ")
        ),
    )
}

// ---------------------------------------------------------------- A3

const A3_SOFTMAX_TOL: f64 = 1e-9;
const A3_FOCAL_TOL: f64 = 1e-10;
const A3_LOSS_TOL: f64 = 1e-12;
const A3_LR_TOL: f64 = 1e-12;

fn a3_closed_forms() -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let store = ParamStore::new(0);
    let mut softmax_err: f64 = 0.0;
    let mut focal_err: f64 = 0.0;
    let mut loss_err: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(1..40);
        let cols = rng.random_range(1..4);
        let n_groups = rng.random_range(1..=n);
        // every group non-empty
        let mut groups: Vec<usize> = (0..n).map(|i| i % n_groups).collect();
        for i in (1..n).rev() {
            groups.swap(i, rng.random_range(0..=i));
        }
        let logits: Vec<f64> = (0..n * cols).map(|_| rng.random_range(-30.0..30.0)).collect();
        let mut tape = Tape::new(&store);
        let x = tape.constant(Tensor::from_vec(n, cols, logits.clone()).unwrap());
        let sm = tape.softmax_grouped(x, groups.clone(), n_groups).unwrap();
        for c in 0..cols {
            let mut sums = vec![0.0; n_groups];
            for r in 0..n {
                sums[groups[r]] += tape.value(sm).get(r, c);
            }
            for s in sums {
                softmax_err = softmax_err.max((s - 1.0).abs());
            }
        }
        // focal with gamma 0 and alpha 1 against cross-entropy from log-sum-exp
        let r = rng.random_range(0..n);
        let g = groups[r];
        let members: Vec<f64> = (0..n).filter(|&i| groups[i] == g).map(|i| logits[i * cols]).collect();
        let mx = members.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = mx + members.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
        let ce = lse - logits[r * cols];
        let col0 = tape.slice(sm, 0, 1).unwrap();
        let p = tape.gather_rows(col0, vec![r]).unwrap();
        if tape.value(p).item() > 1e-12 {
            let f = tape.focal(p, 1.0, 0.0).unwrap();
            focal_err = focal_err.max((tape.value(f).item() - ce).abs());
        }

        let m = rng.random_range(1..20);
        let mu: Vec<f64> = (0..m).map(|_| rng.random_range(-5.0..5.0)).collect();
        let b: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..3.0)).collect();
        let tgt: Vec<f64> = (0..m).map(|_| rng.random_range(-5.0..5.0)).collect();
        let delta = rng.random_range(0.2..2.0);
        let muv = tape.constant(Tensor::from_vec(1, m, mu.clone()).unwrap());
        let bv = tape.constant(Tensor::from_vec(1, m, b.clone()).unwrap());
        let nll = tape
            .laplace_nll(muv, bv, Tensor::from_vec(1, m, tgt.clone()).unwrap())
            .unwrap();
        let want_nll = (0..m)
            .map(|i| (2.0 * b[i]).ln() + (tgt[i] - mu[i]).abs() / b[i])
            .sum::<f64>()
            / m as f64;
        let hub = tape
            .huber(muv, Tensor::from_vec(1, m, tgt.clone()).unwrap(), delta)
            .unwrap();
        let want_hub = (0..m)
            .map(|i| {
                let e = (mu[i] - tgt[i]).abs();
                if e <= delta {
                    0.5 * e * e
                } else {
                    delta * e - 0.5 * delta * delta
                }
            })
            .sum::<f64>()
            / m as f64;
        loss_err = loss_err
            .max((tape.value(nll).item() - want_nll).abs())
            .max((tape.value(hub).item() - want_hub).abs());
    }

    let peak = TrainConfig::default().lr_peak;
    let (warmup, total) = (25, 1000);
    let lr0 = lr_schedule(0, warmup, total, peak);
    let lr_w = lr_schedule(warmup, warmup, total, peak);
    let lr_end = lr_schedule(total, warmup, total, peak);
    let lr_err = lr0.abs().max((lr_w - 5e-4).abs()).max(lr_end.abs());
    let monotone = (warmup..total).all(|s| {
        lr_schedule(s + 1, warmup, total, peak) <= lr_schedule(s, warmup, total, peak)
    });

    verdict(
        "A3",
        softmax_err <= A3_SOFTMAX_TOL
            && focal_err <= A3_FOCAL_TOL
            && loss_err <= A3_LOSS_TOL
            && lr_err <= A3_LR_TOL
            && monotone,
        format!(
            "softmax sum err {softmax_err:.1e} (tol {A3_SOFTMAX_TOL:.0e}), focal-CE err {focal_err:.1e} \
             (tol {A3_FOCAL_TOL:.0e}), NLL/Huber err {loss_err:.1e} (tol {A3_LOSS_TOL:.0e}), \
             lr at 0/warmup/end = {lr0:.1e}/{lr_w:.1e}/{lr_end:.1e} (tol {A3_LR_TOL:.0e})"
        ),
    )
}

// ---------------------------------------------------------------- A4

const A4_TOL: f64 = 1e-12;
const A4_INSTANCES: usize = 1000;

/// Modes in the top `k`: a mode is in when fewer than `k` modes beat it,
/// where a higher score beats, and an equal score at a lower index beats.
fn oracle_top(scores: &[f64], k: usize) -> Vec<usize> {
    (0..scores.len())
        .filter(|&m| {
            let beaten_by = (0..scores.len())
                .filter(|&o| scores[o] > scores[m] || (scores[o] == scores[m] && o < m))
                .count();
            beaten_by < k
        })
        .collect()
}

fn euclid(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn a4_metrics_match_brute_force() -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut max_err: f64 = 0.0;
    let mut flag_mismatch = 0usize;
    let mut cases = Vec::new();
    let mut want_mr = BTreeMap::<usize, (usize, usize)>::new();
    for _ in 0..A4_INSTANCES {
        let modes = rng.random_range(1..=8);
        let t = rng.random_range(1..=30);
        let spread = rng.random_range(0.5..6.0);
        let gt: Vec<[f64; 2]> = (0..t)
            .map(|i| [i as f64 * 0.8 + rng.random_range(-1.0..1.0), rng.random_range(-2.0..2.0)])
            .collect();
        let trajs: Vec<Vec<[f64; 2]>> = (0..modes)
            .map(|_| {
                gt.iter()
                    .map(|p| [p[0] + rng.random_range(-spread..spread), p[1] + rng.random_range(-spread..spread)])
                    .collect()
            })
            .collect();
        // coarse scores so ties happen
        let scores: Vec<f64> = (0..modes).map(|_| rng.random_range(0..5) as f64 / 4.0).collect();
        let k = rng.random_range(1..=modes);
        let top = oracle_top(&scores, k);
        let ade = |m: usize| (0..t).map(|i| euclid(trajs[m][i], gt[i])).sum::<f64>() / t as f64;
        let fde = |m: usize| euclid(trajs[m][t - 1], gt[t - 1]);
        let want_ade = top.iter().map(|&m| ade(m)).fold(f64::INFINITY, f64::min);
        let want_fde = top.iter().map(|&m| fde(m)).fold(f64::INFINITY, f64::min);
        let best_score = top
            .iter()
            .filter(|&&m| fde(m) == want_fde)
            .map(|&m| scores[m])
            .fold(f64::NEG_INFINITY, f64::max);
        let want_brier = want_fde + (1.0 - best_score).powi(2);
        let want_brier_lit = want_fde + 1.0 - best_score * best_score;
        let want_final = want_fde > 2.0;
        let want_any = top
            .iter()
            .all(|&m| (0..t).any(|i| euclid(trajs[m][i], gt[i]) > 2.0));

        max_err = max_err
            .max((min_ade_k(&trajs, &scores, &gt, k).unwrap() - want_ade).abs())
            .max((min_fde_k(&trajs, &scores, &gt, k).unwrap() - want_fde).abs())
            .max((brier_min_fde_k(&trajs, &scores, &gt, k, false).unwrap() - want_brier).abs())
            .max((brier_min_fde_k(&trajs, &scores, &gt, k, true).unwrap() - want_brier_lit).abs());
        if is_final_miss(&trajs, &scores, &gt, k).unwrap() != want_final
            || is_any_waypoint_miss(&trajs, &scores, &gt, k).unwrap() != want_any
        {
            flag_mismatch += 1;
        }
        // aggregate rates at a fixed k = 1 over all instances
        let top1 = oracle_top(&scores, 1)[0];
        let e = want_mr.entry(1).or_default();
        e.0 += usize::from(fde(top1) > 2.0);
        e.1 += usize::from((0..t).any(|i| euclid(trajs[top1][i], gt[i]) > 2.0));
        cases.push(AgentCase { trajs, scores, gt });
    }
    let mut winner_mismatch = 0usize;
    for _ in 0..A4_INSTANCES {
        let modes = rng.random_range(1..=8);
        // small integer grids so every stage sees ties
        let keys: Vec<WtaKey> = (0..modes)
            .map(|_| WtaKey {
                lane: rng.random_range(0..3) as f64,
                point: rng.random_range(0..3) as f64 * 0.5,
                goal: rng.random_range(0..4) as f64 * 0.25,
            })
            .collect();
        // a mode wins when no other mode is strictly better, lowest index first
        let better = |a: &WtaKey, b: &WtaKey| {
            (a.lane, a.point, a.goal).partial_cmp(&(b.lane, b.point, b.goal)) == Some(std::cmp::Ordering::Less)
        };
        let want = (0..modes)
            .find(|&m| (0..modes).all(|o| !better(&keys[o], &keys[m])))
            .unwrap();
        if select_winner(&keys) != want {
            winner_mismatch += 1;
        }
    }
    let (final_n, any_n) = want_mr[&1];
    let n = A4_INSTANCES as f64;
    max_err = max_err
        .max((min_mr_k(&cases, 1).unwrap() - final_n as f64 / n).abs())
        .max((miss_rate_topk_2(&cases, 1).unwrap() - any_n as f64 / n).abs());
    verdict(
        "A4",
        max_err <= A4_TOL && flag_mismatch == 0 && winner_mismatch == 0,
        format!(
            "{A4_INSTANCES} instances, max abs err {max_err:.1e} (tol {A4_TOL:.0e}), miss flag mismatches \
             {flag_mismatch}, winner mismatches {winner_mismatch}"
        ),
    )
}

// ---------------------------------------------------------------- A5

const A5_TARGET_MIN_FDE: f64 = 0.5;
const A5_MAX_EPOCHS: usize = 500;
const A5_MAX_SECONDS: f64 = 15.0 * 60.0;
const A5_EVAL_EVERY: usize = 25;

fn a5_toy_overfit() -> bool {
    let scenes = style_a(16, 11);
    let mc = ModelConfig {
        d_h: 64,
        heads: 8,
        k: 6,
        t_history: 10,
        t_future: 30,
        ffn_hidden: 256,
        ..Default::default()
    };
    let tc = TrainConfig {
        total_epochs: A5_MAX_EPOCHS,
        warmup_epochs: 10,
        batch_size: 2,
        lr_peak: 5e-4,
        dropout: 0.0,
        augment: false,
        seed: 1,
        ..Default::default()
    };
    let t0 = Instant::now();
    let mut best = (f64::INFINITY, 0usize);
    train(&mc, &tc, &scenes, &TrainOptions::default(), |model, log| {
        if log.epoch % A5_EVAL_EVERY != 0 {
            return true;
        }
        let r = evaluate(model, &scenes, &[6], false).unwrap();
        let fde = r.get(6).unwrap().min_fde;
        if fde < best.0 {
            best = (fde, log.epoch);
        }
        fde >= A5_TARGET_MIN_FDE && t0.elapsed().as_secs_f64() < A5_MAX_SECONDS
    })
    .unwrap();
    let secs = t0.elapsed().as_secs_f64();
    verdict(
        "A5",
        best.0 < A5_TARGET_MIN_FDE && secs < A5_MAX_SECONDS,
        format!(
            "training minFDE_6 {:.3} at epoch {} (target < {A5_TARGET_MIN_FDE} within {A5_MAX_EPOCHS} epochs), \
             {secs:.0}s (limit {A5_MAX_SECONDS:.0}s)",
            best.0, best.1
        ),
    )
}

// ---------------------------------------------------------------- A6

const A6_NRB_CANDIDATES: usize = 288;

/// Seeds then label-correcting relaxation to a fixpoint, all from scratch.
fn oracle_reachable(scene: &Scene, agent: usize, cfg: &GraphConfig) -> Option<BTreeSet<usize>> {
    let xy = scene.agents[agent].states[scene.t_history - 1].xy();
    let mut seeds: Vec<usize> = (0..scene.lanes.len())
        .filter(|&i| point_in_polygon(xy, &scene.lanes[i].polygon()))
        .collect();
    if seeds.is_empty() {
        let mut best: Option<(f64, usize)> = None;
        for (i, l) in scene.lanes.iter().enumerate() {
            let d = point_polyline_dist(xy, &l.centerline_xy());
            if d <= cfg.seed_radius && best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, i));
            }
        }
        seeds = best.into_iter().map(|(_, i)| i).collect();
    }
    if seeds.is_empty() {
        return None;
    }
    let pos: BTreeMap<u64, usize> = scene.lanes.iter().enumerate().map(|(i, l)| (l.id, i)).collect();
    let mut d = vec![f64::INFINITY; scene.lanes.len()];
    for s in seeds {
        d[s] = 0.0;
    }
    let mut queue: std::collections::VecDeque<usize> =
        (0..d.len()).filter(|&i| d[i] == 0.0).collect();
    while let Some(i) = queue.pop_front() {
        let l = &scene.lanes[i];
        let steps = l
            .successors
            .iter()
            .map(|id| (pos[id], d[i] + l.length))
            .chain(l.left_neighbor.iter().chain(&l.right_neighbor).map(|id| (pos[id], d[i])));
        for (j, nd) in steps.collect::<Vec<_>>() {
            if nd <= cfg.reach_cap && nd < d[j] {
                d[j] = nd;
                queue.push_back(j);
            }
        }
    }
    Some((0..d.len()).filter(|&i| d[i].is_finite()).collect())
}

fn gt_prediction(scene: &Scene, agent: usize) -> ModePrediction {
    let fut: Vec<[f64; 2]> = scene.agents[agent].states[scene.t_history..]
        .iter()
        .map(|s| s.xy())
        .collect();
    ModePrediction {
        agent_id: scene.agents[agent].id,
        agent_index: agent,
        mode: 0,
        road_bound: true,
        selected_lane_id: None,
        selected_point: None,
        goal_offset: None,
        goal: None,
        trajectory_mu: fut.clone(),
        trajectory_b: vec![[1.0, 1.0]; fut.len()],
        trajectory_scene: fut,
        score: 1.0,
    }
}

fn a6_candidates_and_reachability() -> bool {
    let cfg = GraphConfig::default();
    let cands = nrb_goal_candidates(&Pose2::new(3.0, -2.0, 0.4), 1.4, &cfg);
    let ring_ok = cands.iter().all(|c| {
        (dist(c.pose.xy(), [3.0, -2.0]) - c.ring as f64 * 1.4 * cfg.nrb_ring_period).abs() < 1e-9
    });
    // arc length between neighbours on a ring, the same on every ring
    let spacing = 2.0 * std::f64::consts::PI * 1.4 * cfg.nrb_ring_period / cfg.nrb_points_per_ring as f64;
    let mut spacing_err: f64 = 0.0;
    for ring in 1..=cfg.nrb_circles {
        let on: Vec<_> = cands.iter().filter(|c| c.ring == ring).collect();
        for (i, c) in on.iter().enumerate() {
            let next = on[(i + 1) % on.len()];
            let angle = (next.pose.heading - c.pose.heading).rem_euclid(2.0 * std::f64::consts::PI);
            spacing_err = spacing_err.max((angle * c.radius - spacing).abs());
        }
    }
    let ring_ok = ring_ok && spacing_err < 1e-9;

    let toy = toy_scene(10, 30);
    let toy_lanes: BTreeSet<u64> = match reachable_lanes(&toy, 0, &cfg) {
        Reachability::Lanes(l) => l.iter().map(|&i| toy.lanes[i].id).collect(),
        Reachability::NoLaneNearby => BTreeSet::new(),
    };
    let toy_ok = toy_lanes == BTreeSet::from([10, 11, 12, 20, 21]);

    let mut scenes = style_a(32, 61);
    scenes.extend(gen_dataset(&MapStyle::b(), &Timing::default(), 32, 62, 1).unwrap());
    let mut agents_checked = 0usize;
    let mut reach_mismatch = 0usize;
    let mut vehicle_preds = 0usize;
    let mut orr_max: f64 = 0.0;
    for s in &scenes {
        let mut preds = Vec::new();
        for a in 0..s.agents.len() {
            if !s.agents[a].road_bound() || !s.agents[a].states[s.t_history - 1].valid {
                continue;
            }
            agents_checked += 1;
            let got = match reachable_lanes(s, a, &cfg) {
                Reachability::Lanes(l) => Some(l.into_iter().collect::<BTreeSet<_>>()),
                Reachability::NoLaneNearby => None,
            };
            if got != oracle_reachable(s, a, &cfg) {
                reach_mismatch += 1;
            }
            let fully_observed = s.agents[a].states[s.t_history..].iter().all(|st| st.valid);
            if s.agents[a].class == AgentClass::Vehicle && fully_observed {
                preds.push(gt_prediction(s, a));
            }
        }
        vehicle_preds += preds.len();
        orr_max = orr_max.max(offroad_rate(&preds, s));
    }
    verdict(
        "A6",
        cands.len() == A6_NRB_CANDIDATES && ring_ok && toy_ok && reach_mismatch == 0 && orr_max == 0.0,
        format!(
            "{} ring candidates (want {A6_NRB_CANDIDATES}), radii/spacing ok {ring_ok} (spacing err {spacing_err:.1e}), toy fork lanes ok {toy_ok}, \
             reachability mismatches {reach_mismatch}/{agents_checked}, GT ORR max {orr_max} over {vehicle_preds} vehicles",
            cands.len()
        ),
    )
}

// ---------------------------------------------------------------- A7

/// Scene counts and seeds; the environment override exists only to shorten
/// local iterations and is printed with the result.
fn a7_size() -> (usize, usize, Vec<u64>) {
    let n_train = std::env::var("GOALGRAPH_A7_TRAIN")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(512);
    let n_eval = std::env::var("GOALGRAPH_A7_EVAL")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(128);
    (n_train, n_eval, vec![0, 1, 2])
}

const A7_MIN_SEEDS_WON: usize = 2;

fn a7_style_shift() -> bool {
    let (n_train, n_eval, seeds) = a7_size();
    let train_a = style_a(n_train, 100);
    let eval_a = style_a(n_eval, 101);
    let eval_b = gen_dataset(&MapStyle::b(), &Timing::default(), n_eval, 200, 1).unwrap();
    let mc = ModelConfig {
        d_h: 64,
        heads: 8,
        k: 6,
        ffn_hidden: 256,
        ..Default::default()
    };
    let tc = TrainConfig {
        batch_size: 16,
        total_epochs: 40,
        ..Default::default()
    };
    let t0 = Instant::now();
    let report = compare(
        &CompareInputs {
            train: &train_a,
            eval_a: Some(&eval_a),
            eval_b: &eval_b,
            model: &mc,
            train_cfg: &tc,
            seeds: &seeds,
            workers: 1,
        },
        |_| {},
    )
    .unwrap();
    let per_seed: Vec<String> = report
        .verdicts
        .iter()
        .map(|v| {
            format!(
                "seed {}: ORR_B goal {:.3} vs base {:.3}, degradation goal {:.3} vs base {:.3} -> {}",
                v.seed,
                v.orr_goal,
                v.orr_baseline,
                v.degradation_goal,
                v.degradation_baseline,
                if v.goal_wins { "goal" } else { "baseline" }
            )
        })
        .collect();
    let won = report.seeds_won();
    let finite = report
        .rows
        .iter()
        .all(|r| r.metrics.min_fde.is_finite() && r.orr.is_finite());
    assert!(finite, "non-finite comparison metrics");
    let pass = won >= A7_MIN_SEEDS_WON;
    let line = format!(
        "{} of {} seeds favour goal (need {A7_MIN_SEEDS_WON}); train {n_train} A, eval {n_eval} A/B; {} [{:.0}s]",
        won,
        seeds.len(),
        per_seed.join("; "),
        t0.elapsed().as_secs_f64()
    );
    println!("A7 {} {line}", if pass { "PASS" } else { "FAIL" });
    // Directional claim: reported, never fails the suite.
    true
}

// ---------------------------------------------------------------- A8

fn run_pipeline(dir: &Path) {
    let data = dir.join("data");
    let scenes = style_a(6, 808);
    write_dataset(&data, &MapStyle::a(), &Timing::default(), 808, &scenes).unwrap();
    let scenes = load_dataset(&data).unwrap();
    let mc = ModelConfig {
        d_h: 32,
        heads: 4,
        k: 6,
        ffn_hidden: 64,
        ..Default::default()
    };
    let tc = TrainConfig {
        batch_size: 4,
        total_epochs: 3,
        seed: 8,
        ..Default::default()
    };
    let run = dir.join("run");
    let opts = TrainOptions {
        out_dir: Some(run.clone()),
        workers: 1,
    };
    let out = train(&mc, &tc, &scenes, &opts, |_, _| true).unwrap();
    let report = evaluate(&out.model, &scenes, &[1, 6], false).unwrap();
    fs::write(run.join("metrics.json"), serde_json::to_vec_pretty(&report).unwrap()).unwrap();
    fs::write(run.join("metrics.csv"), report.csv_rows("data", "goal")).unwrap();
    let preds = out.model.predict(&scenes[0]).unwrap();
    fs::write(run.join("pred.json"), serde_json::to_vec(&preds).unwrap()).unwrap();
    fs::write(run.join("pred.svg"), render_svg(&scenes[0], &preds)).unwrap();
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn a8_rerun_is_byte_identical() -> bool {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_pipeline(a.path());
    run_pipeline(b.path());
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    let differing: Vec<&String> = ta
        .keys()
        .chain(tb.keys())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .filter(|k| ta.get(*k) != tb.get(*k))
        .collect();
    verdict(
        "A8",
        differing.is_empty() && ta.len() >= 10,
        format!("{} files compared, differing: {:?}", ta.len(), differing),
    )
}

type Check = (&'static str, fn() -> bool);

const CHECKS: [Check; 8] = [
    ("a1_rigid_motion_invariance", a1_rigid_motion_invariance),
    ("a2_gradient_check", a2_gradient_check),
    ("a3_closed_forms", a3_closed_forms),
    ("a4_metrics_match_brute_force", a4_metrics_match_brute_force),
    ("a5_toy_overfit", a5_toy_overfit),
    ("a6_candidates_and_reachability", a6_candidates_and_reachability),
    ("a7_style_shift", a7_style_shift),
    ("a8_rerun_is_byte_identical", a8_rerun_is_byte_identical),
];

/// Runs the checks one after another so their runtimes are not shared.
/// Non-flag arguments select checks by name fragment.
fn main() {
    let filters: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-') && a.parse::<usize>().is_err())
        .collect();
    let mut failed = Vec::new();
    for (name, check) in CHECKS {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        if !check() {
            failed.push(name);
        }
    }
    if !failed.is_empty() {
        eprintln!("failed acceptance checks: {}", failed.join(", "));
        std::process::exit(1);
    }
}
