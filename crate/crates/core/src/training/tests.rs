use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::fixtures::toy_scene;
use crate::model::{Model, ModelConfig, Variant};
use crate::nn::{ParamKind, Tape};
use crate::scenegraph::Scene;

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

fn quick_cfg() -> TrainConfig {
    TrainConfig {
        total_epochs: 3,
        batch_size: 2,
        dropout: 0.1,
        seed: 5,
        ..Default::default()
    }
}

fn scenes() -> Vec<Scene> {
    (0..3).map(|_| toy_scene(5, 8)).collect()
}

#[test]
fn schedule_endpoints() {
    let (w, t, peak) = (10, 100, 5e-4);
    assert_eq!(lr_schedule(0, w, t, peak), 0.0);
    assert!((lr_schedule(5, w, t, peak) - 2.5e-4).abs() < 1e-15);
    assert!((lr_schedule(w, w, t, peak) - peak).abs() < 1e-15);
    assert!(lr_schedule(t, w, t, peak).abs() < 1e-12);
    assert!(lr_schedule(t - 1, w, t, peak) > 0.0);
    for s in w..t {
        assert!(lr_schedule(s + 1, w, t, peak) <= lr_schedule(s, w, t, peak));
    }
}

#[test]
fn adamw_first_step_and_decay_scope() {
    let mut model = Model::new(small_cfg(Variant::Goal), 1).unwrap();
    let cfg = TrainConfig {
        weight_decay: 0.5,
        ..Default::default()
    };
    let before = model.store.clone();
    let grads = {
        let s = toy_scene(5, 8);
        let mut tape = Tape::new(&model.store);
        let out = scene_loss(&mut tape, &model, &s, &cfg).unwrap().unwrap();
        tape.backward(out.total).unwrap()
    };
    let mut opt = AdamW::new(&model.store, &cfg);
    let lr = 1e-2;
    opt.step(&mut model.store, &grads, lr);
    for ((id, p0), (_, p1)) in before.iter().zip(model.store.iter()) {
        let g = grads.dense(id, &before);
        let decay = if p0.kind == ParamKind::Weight { 0.5 } else { 0.0 };
        for k in 0..p0.value.len() {
            // First bias-corrected step: m/sqrt(v) = sign(g).
            let gk = g.data()[k];
            let w = p0.value.data()[k];
            let upd = if gk == 0.0 { 0.0 } else { gk / (gk.abs() + cfg.adam_eps) };
            let expect = w - lr * (upd + decay * w);
            assert!((p1.value.data()[k] - expect).abs() < 1e-12, "{}", p0.name);
        }
    }
}

#[derive(Debug, Clone)]
struct Keys(Vec<WtaKey>);

fn keys() -> impl Strategy<Value = Keys> {
    // Small integer grids make exact ties common.
    proptest::collection::vec((0..3u8, 0..3u8, 0..3u8), 1..7).prop_map(|v| {
        Keys(
            v.into_iter()
                .map(|(a, b, c)| WtaKey {
                    lane: a as f64,
                    point: b as f64,
                    goal: c as f64,
                })
                .collect(),
        )
    })
}

proptest! {
    #[test]
    fn winner_matches_pairwise_oracle(k in keys()) {
        let w = select_winner(&k.0);
        let t = |x: &WtaKey| (x.lane, x.point, x.goal);
        for (i, o) in k.0.iter().enumerate() {
            let (a, b) = (t(&k.0[w]), t(o));
            prop_assert!(a < b || (a == b && w <= i));
        }
    }
}

#[test]
fn nearest_endpoint_ties_low() {
    assert_eq!(select_nearest_endpoint(&[2.0, 1.0, 1.0]), 1);
    assert_eq!(select_nearest_endpoint(&[0.5]), 0);
}

#[test]
fn scaling_by_one_is_identity() {
    let s = toy_scene(5, 8);
    assert_eq!(scale_scene(&s, 1.0).unwrap(), s);
    let t = scale_scene(&s, 1.2).unwrap();
    assert!((t.lanes[0].length - 1.2 * s.lanes[0].length).abs() < 1e-9);
    let v0 = s.agents[0].states[0].speed();
    assert!((t.agents[0].states[0].speed() - 1.2 * v0).abs() < 1e-9);
}

#[test]
fn dropping_keeps_focal_agent() {
    let mut s = toy_scene(5, 8);
    let base = s.agents[2].clone();
    for i in 0..17 {
        let mut a = base.clone();
        a.id = 100 + i;
        s.agents.push(a);
    }
    assert_eq!(s.agents.len(), 20);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let d = drop_agents(&s, 0.1, &mut rng);
    assert_eq!(d.agents.len(), 18);
    assert_eq!(d.agents[0], s.agents[0]);
    let small = drop_agents(&toy_scene(5, 8), 0.1, &mut rng);
    assert_eq!(small.agents.len(), 3);
}

#[test]
fn losses_are_finite_for_both_variants() {
    let s = toy_scene(5, 8);
    for v in [Variant::Goal, Variant::Baseline] {
        let model = Model::new(small_cfg(v), 2).unwrap();
        let mut tape = Tape::new(&model.store);
        let out = scene_loss(&mut tape, &model, &s, &TrainConfig::default())
            .unwrap()
            .unwrap();
        assert!(tape.value(out.total).item().is_finite());
        assert_eq!(out.agents, s.supervised_agents().len());
        assert_eq!(out.winners.len(), out.agents);
        let p = out.parts;
        let recombined = p.lane + p.point + p.goal + 10.0 * p.traj;
        assert!((recombined - tape.value(out.total).item()).abs() < 1e-9);
        if v == Variant::Baseline {
            assert_eq!((p.lane, p.goal), (0.0, 0.0));
        }
    }
}

#[test]
fn unsupervised_scene_has_no_loss() {
    let mut s = toy_scene(5, 8);
    for a in &mut s.agents {
        a.states.last_mut().unwrap().valid = false;
    }
    let model = Model::new(small_cfg(Variant::Goal), 2).unwrap();
    let mut tape = Tape::new(&model.store);
    assert!(scene_loss(&mut tape, &model, &s, &TrainConfig::default())
        .unwrap()
        .is_none());
}

#[test]
fn training_is_deterministic_across_workers() {
    let data = scenes();
    let run = |workers| {
        let opts = TrainOptions {
            out_dir: None,
            workers,
        };
        train(&small_cfg(Variant::Goal), &quick_cfg(), &data, &opts, |_, _| true).unwrap()
    };
    let (a, b) = (run(1), run(2));
    assert_eq!(a.logs, b.logs);
    assert_eq!(a.model.store.flat_values(), b.model.store.flat_values());
}

#[test]
fn training_writes_logs_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let opts = TrainOptions {
        out_dir: Some(dir.path().to_path_buf()),
        workers: 1,
    };
    let out = train(&small_cfg(Variant::Baseline), &quick_cfg(), &scenes(), &opts, |_, _| true).unwrap();
    let csv = std::fs::read_to_string(dir.path().join(LOSS_CSV)).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], LOSS_CSV_HEADER);
    assert_eq!(lines.len(), 4);
    assert!(dir.path().join(EPOCH_CHECKPOINT).exists());
    let m = Model::load(&dir.path().join(FINAL_CHECKPOINT), None).unwrap();
    assert_eq!(m.store.flat_values(), out.model.store.flat_values());
    // Warmup over the first epoch, cosine to zero at the last step.
    assert!(out.logs.last().unwrap().lr.abs() < 1e-12);
}

#[test]
fn early_stop_callback() {
    let out = train(&small_cfg(Variant::Goal), &quick_cfg(), &scenes(), &TrainOptions::default(), |_, l| {
        l.epoch < 2
    })
    .unwrap();
    assert_eq!(out.logs.len(), 2);
}

#[test]
fn loss_decreases_on_a_fixed_scene() {
    let cfg = TrainConfig {
        total_epochs: 40,
        warmup_epochs: 2,
        batch_size: 4,
        dropout: 0.0,
        augment: false,
        lr_peak: 3e-3,
        ..Default::default()
    };
    let out = train(&small_cfg(Variant::Goal), &cfg, &scenes(), &TrainOptions::default(), |_, _| true).unwrap();
    let first = out.logs[0].loss;
    let last = out.logs.last().unwrap().loss;
    assert!(last < 0.5 * first, "{first} -> {last}");
}

#[test]
fn nan_parameter_aborts() {
    let cfg = quick_cfg();
    let mut t = Trainer::new(&small_cfg(Variant::Goal), &cfg, 1).unwrap();
    let id = t.model.store.id("traj.rb.1.b").unwrap();
    t.model.store.get_mut(id).value.data_mut()[0] = f64::NAN;
    match t.epoch(&scenes(), 1) {
        Err(crate::Error::Numeric(m)) => assert!(m.contains("non-finite"), "{m}"),
        other => panic!("expected numeric error, got {:?}", other.map(|l| l.loss)),
    }
}

#[test]
fn config_rejects_unknown_keys() {
    assert!(TrainConfig::from_json_str(r#"{"lr": 1}"#, "x".as_ref()).is_err());
    let c = TrainConfig::from_json_str(r#"{"total_epochs": 5}"#, "x".as_ref()).unwrap();
    assert_eq!(c.total_epochs, 5);
    assert_eq!(c.batch_size, 64);
}

#[test]
fn target_lane_is_nearest_centerline() {
    let s = toy_scene(5, 8);
    assert_eq!(nearest_lane(&s, [45.0, 0.2]), Some(1));
    assert_eq!(nearest_lane(&s, [10.0, 3.4]), Some(3));
}
