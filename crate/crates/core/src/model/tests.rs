use std::f64::consts::FRAC_PI_2;

use super::*;
use crate::fixtures::toy_scene;
use crate::geometry::{Pose2, Se2};
use crate::nn::{Tape, Tensor};
use crate::scenegraph::{Scene, Side};

fn small_cfg(variant: Variant) -> ModelConfig {
    ModelConfig {
        d_h: 16,
        heads: 2,
        k: 3,
        t_history: 5,
        t_future: 8,
        dropout: 0.0,
        variant,
        ffn_hidden: 32,
        ..Default::default()
    }
}

fn scene() -> Scene {
    toy_scene(5, 8)
}

#[test]
fn config_validation() {
    let mut c = small_cfg(Variant::Goal);
    c.heads = 3;
    assert!(c.validate().is_err());
    c.heads = 2;
    c.k = 0;
    assert!(c.validate().is_err());
    assert!(ModelConfig::from_json_str(r#"{"d_h": 16, "heads": 2, "bogus": 1}"#, "x".as_ref()).is_err());
}

#[test]
fn prediction_counts_and_scores() {
    for variant in [Variant::Goal, Variant::Baseline] {
        let model = Model::new(small_cfg(variant), 1).unwrap();
        let preds = model.predict(&scene()).unwrap();
        assert_eq!(preds.len(), 3 * 3);
        for agent in preds.chunks(3) {
            let s: f64 = agent.iter().map(|p| p.score).sum();
            assert!((s - 1.0).abs() < 1e-6);
            for p in agent {
                assert_eq!(p.trajectory_mu.len(), 8);
                assert!(p.trajectory_b.iter().flatten().all(|&b| b >= SCALE_FLOOR));
                assert_eq!(p.goal.is_some(), variant == Variant::Goal);
            }
        }
        let rb: Vec<bool> = preds.iter().step_by(3).map(|p| p.road_bound).collect();
        assert_eq!(rb, vec![true, true, false]);
    }
}

#[test]
fn empty_scene_gives_no_predictions() {
    let mut s = scene();
    s.agents.clear();
    let model = Model::new(small_cfg(Variant::Goal), 1).unwrap();
    assert!(model.predict(&s).unwrap().is_empty());
}

#[test]
fn deterministic_predictions() {
    let model = Model::new(small_cfg(Variant::Goal), 4).unwrap();
    let a = model.predict(&scene()).unwrap();
    let b = model.predict(&scene()).unwrap();
    assert_eq!(a, b);
}

fn assert_local_equal(a: &[ModePrediction], b: &[ModePrediction], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (p, q) in a.iter().zip(b) {
        assert_eq!(p.selected_lane_id, q.selected_lane_id);
        assert_eq!(
            p.selected_point.as_ref().map(|s| s.index),
            q.selected_point.as_ref().map(|s| s.index)
        );
        assert!((p.score - q.score).abs() < tol);
        for (x, y) in p.trajectory_mu.iter().zip(&q.trajectory_mu) {
            assert!((x[0] - y[0]).abs() < tol && (x[1] - y[1]).abs() < tol);
        }
        if let (Some(o), Some(r)) = (p.goal_offset, q.goal_offset) {
            assert!((o[0] - r[0]).abs() < tol && (o[1] - r[1]).abs() < tol);
        }
    }
}

#[test]
fn rigid_transform_invariance() {
    for variant in [Variant::Goal, Variant::Baseline] {
        let model = Model::new(small_cfg(variant), 2).unwrap();
        let s = scene();
        let t = s.transformed(&Se2::new(-130.0, 55.0, 2.1));
        assert_local_equal(&model.predict(&s).unwrap(), &model.predict(&t).unwrap(), 1e-6);
    }
}

#[test]
fn agent_permutation_equivariance() {
    let model = Model::new(small_cfg(Variant::Goal), 3).unwrap();
    let s = scene();
    let mut p = s.clone();
    p.agents.reverse();
    let a = model.predict(&s).unwrap();
    let b = model.predict(&p).unwrap();
    for x in &a {
        let y = b
            .iter()
            .find(|y| y.agent_id == x.agent_id && y.mode == x.mode)
            .unwrap();
        assert_eq!(x.selected_lane_id, y.selected_lane_id);
        for (u, v) in x.trajectory_mu.iter().zip(&y.trajectory_mu) {
            assert!((u[0] - v[0]).abs() < 1e-12 && (u[1] - v[1]).abs() < 1e-12);
        }
        assert!((x.score - y.score).abs() < 1e-12);
    }
}

fn zero_params(model: &mut Model, prefix: &str) {
    for p in model.store.iter_mut() {
        if p.name.starts_with(prefix) {
            p.value.fill(0.0);
        }
    }
}

#[test]
fn zero_offset_head_keeps_goal_on_node() {
    let mut model = Model::new(small_cfg(Variant::Goal), 5).unwrap();
    zero_params(&mut model, "goal.offset");
    for p in model.predict(&scene()).unwrap() {
        let sp = p.selected_point.unwrap();
        assert_eq!(p.goal.unwrap(), [sp.x, sp.y]);
        assert_eq!(p.goal_offset.unwrap(), [0.0, 0.0]);
    }
}

#[test]
fn offset_rotation_into_scene_frame() {
    let goal = Pose2::new(3.0, 4.0, FRAC_PI_2);
    let g = goal.to_scene([1.0, 0.0]);
    assert!((g[0] - 3.0).abs() < 1e-15 && (g[1] - 5.0).abs() < 1e-15);
}

#[test]
fn zero_trajectory_head_stays_put() {
    let mut model = Model::new(small_cfg(Variant::Goal), 5).unwrap();
    zero_params(&mut model, "traj.");
    for p in model.predict(&scene()).unwrap() {
        assert!(p.trajectory_mu.iter().flatten().all(|&v| v == 0.0));
    }
}

#[test]
fn trajectory_cumsum_and_scale_floor() {
    let store = crate::nn::ParamStore::new(0);
    let mut tape = Tape::new(&store);
    let tf = 4;
    let mut row = Vec::new();
    for _ in 0..tf {
        row.extend_from_slice(&[0.1, 0.0]);
    }
    row.extend(std::iter::repeat_n(-100.0, 2 * tf));
    let out = tape.constant(Tensor::row(&row));
    let (mu, b) = trajectory_from_head(&mut tape, out, tf).unwrap();
    let mu = tape.value(mu);
    for t in 0..tf {
        assert!((mu.get(0, 2 * t) - 0.1 * (t + 1) as f64).abs() < 1e-15);
        assert_eq!(mu.get(0, 2 * t + 1), 0.0);
    }
    assert!(tape.value(b).data().iter().all(|&v| v == SCALE_FLOOR));
}

#[test]
fn goal_local_combines_base_and_rotated_offset() {
    let store = crate::nn::ParamStore::new(0);
    let mut tape = Tape::new(&store);
    let query = Pose2::new(1.0, 1.0, 0.3);
    let goal = Pose2::new(10.0, -2.0, 1.2);
    let off = tape.constant(Tensor::row(&[0.7, -0.4]));
    let gl = goal_local(&mut tape, off, &[(query, goal)]).unwrap();
    let want = query.to_local(goal.to_scene([0.7, -0.4]));
    let v = tape.value(gl);
    assert!((v.get(0, 0) - want[0]).abs() < 1e-12 && (v.get(0, 1) - want[1]).abs() < 1e-12);
}

#[test]
fn point_embedding_is_pure_and_sided() {
    let model = Model::new(small_cfg(Variant::Goal), 6).unwrap();
    let s = scene();
    let inputs = SceneInputs::new(&s, &model.cfg).unwrap();
    let mut tape = Tape::new(&model.store);
    let enc = encode(&mut tape, &model.net, &inputs).unwrap();
    let _ = enc;
    // Identical raw features give identical embeddings.
    let emb = |tape: &mut Tape, side: Side| {
        let v = model
            .net
            .point_embed
            .forward(tape, Tensor::row(&[1.0]), &[&[0], &[side.index()]])
            .unwrap();
        tape.value(v).clone()
    };
    assert_eq!(emb(&mut tape, Side::Left), emb(&mut tape, Side::Left));
    assert_ne!(emb(&mut tape, Side::Left), emb(&mut tape, Side::Right));
}

#[test]
fn unknown_category_is_config_error() {
    let model = Model::new(small_cfg(Variant::Goal), 6).unwrap();
    let mut tape = Tape::new(&model.store);
    let r = model.net.point_embed.forward(&mut tape, Tensor::row(&[1.0]), &[&[0], &[9]]);
    assert!(matches!(r, Err(crate::Error::InvalidConfig(_))));
}

#[test]
fn modes_of_one_agent_differ() {
    let model = Model::new(small_cfg(Variant::Goal), 7).unwrap();
    let s = scene();
    let inputs = SceneInputs::new(&s, &model.cfg).unwrap();
    let mut tape = Tape::new(&model.store);
    let enc = encode(&mut tape, &model.net, &inputs).unwrap();
    let q = tape.value(enc.queries);
    assert_ne!(q.row_slice(0), q.row_slice(1));
}

#[test]
fn removing_a_social_edge_changes_agents() {
    let model = Model::new(small_cfg(Variant::Goal), 8).unwrap();
    let s = scene();
    let inputs = SceneInputs::new(&s, &model.cfg).unwrap();
    let mut ablated = inputs.clone();
    let soc = &mut ablated.graph.agent.social;
    assert!(!soc.is_empty());
    soc.src.pop();
    soc.dst.pop();
    soc.feats.pop();
    let run = |i: &SceneInputs| {
        let mut tape = Tape::new(&model.store);
        let enc = encode(&mut tape, &model.net, i).unwrap();
        tape.value(enc.agents).clone()
    };
    assert_ne!(run(&inputs), run(&ablated));
}

#[test]
fn scene_without_agents_still_encodes_map() {
    let model = Model::new(small_cfg(Variant::Goal), 8).unwrap();
    let mut s = scene();
    s.agents.clear();
    let inputs = SceneInputs::new(&s, &model.cfg).unwrap();
    let mut tape = Tape::new(&model.store);
    let enc = encode(&mut tape, &model.net, &inputs).unwrap();
    assert_eq!(tape.value(enc.lanes).rows(), s.lanes.len());
    assert!(tape.value(enc.lanes).all_finite());
}

#[test]
fn two_stage_selection_matches_brute_force() {
    let model = Model::new(small_cfg(Variant::Goal), 9).unwrap();
    let s = scene();
    let preds = model.predict(&s).unwrap();
    let inputs = SceneInputs::new(&s, &model.cfg).unwrap();
    let mut tape = Tape::new(&model.store);
    let enc = encode(&mut tape, &model.net, &inputs).unwrap();
    let lanes = lane_stage(&mut tape, &model.net, &inputs, &enc).unwrap().unwrap();
    let probs = tape.value(lanes.probs).clone();
    for (q, pred) in preds.iter().enumerate() {
        if !pred.road_bound {
            continue;
        }
        // Enumerate (probability desc, lane id asc).
        let best = lanes
            .ranges[q]
            .clone()
            .unwrap()
            .map(|p| (probs.get(p, 0), lanes.cands[lanes.pair_cand[p]].key, lanes.cands[lanes.pair_cand[p]].target))
            .fold(None::<(f64, u64, Target)>, |acc, c| match acc {
                Some(a) if a.0 > c.0 || (a.0 == c.0 && a.1 < c.1) => Some(a),
                _ => Some(c),
            })
            .unwrap();
        assert_eq!(pred.selected_lane_id, Some(best.1));
        let Target::Lane(l) = best.2 else { panic!() };
        let pts = point_stage(&mut tape, &model.net, &inputs, &enc, &[(q, l)]).unwrap().unwrap();
        let pp = tape.value(pts.probs).clone();
        let mut bi = 0;
        for i in 0..pts.pair_cand.len() {
            if pp.get(i, 0) > pp.get(bi, 0) {
                bi = i;
            }
        }
        let Target::Point(p) = pts.cands[pts.pair_cand[bi]].target else { panic!() };
        assert_eq!(pred.selected_point.as_ref().unwrap().index, p);
    }
}

#[test]
fn single_candidate_scores_one() {
    let store = crate::nn::ParamStore::new(0);
    let mut tape = Tape::new(&store);
    let x = tape.constant(Tensor::from_vec(4, 1, vec![0.3, 2.0, 0.0, 0.0]).unwrap());
    let p = tape.softmax_grouped(x, vec![0, 1, 1, 1], 2).unwrap();
    let v = tape.value(p);
    assert_eq!(v.get(0, 0), 1.0);
    assert!((v.get(1, 0) - 0.787).abs() < 1e-3);
    assert!((v.get(2, 0) - 0.107).abs() < 1e-3);
}

#[test]
fn mismatched_horizon_rejected() {
    let model = Model::new(small_cfg(Variant::Goal), 1).unwrap();
    assert!(model.predict(&toy_scene(4, 8)).is_err());
}

#[test]
fn checkpoint_roundtrip_and_mismatch() {
    let model = Model::new(small_cfg(Variant::Goal), 11).unwrap();
    let ck = model.checkpoint(serde_json::Value::Null);
    let back = Model::from_checkpoint(&ck, None).unwrap();
    assert_eq!(back.store.flat_values(), model.store.flat_values());
    let mut other = small_cfg(Variant::Goal);
    other.d_h = 32;
    other.ffn_hidden = 64;
    match Model::from_checkpoint(&ck, Some(&other)) {
        Err(crate::Error::ParamShape { name, .. }) => assert!(!name.is_empty()),
        e => panic!("unexpected {e:?}"),
    }
}

#[test]
fn dump_has_one_line_per_mode() {
    let model = Model::new(small_cfg(Variant::Goal), 1).unwrap();
    let preds = model.predict(&scene()).unwrap();
    let mut buf = Vec::new();
    write_prediction_dump(&mut buf, "toy", &preds).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), preds.len());
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["scene_id"], "toy");
}

