//! Mini-batch training loop.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::augment::augment_scene;
use super::config::TrainConfig;
use super::loss::{scene_loss, LossParts};
use super::optim::{lr_schedule, AdamW};
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::nn::{Gradients, Tape};
use crate::scenegraph::Scene;

pub const LOSS_CSV_HEADER: &str = "epoch,loss,l_lane,l_point,l_goal,l_traj,lr";
pub const FINAL_CHECKPOINT: &str = "model.ckpt";
pub const EPOCH_CHECKPOINT: &str = "checkpoint_last.ckpt";
pub const LOSS_CSV: &str = "loss.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub parts: LossParts,
    /// Learning rate of the last update in the epoch.
    pub lr: f64,
    /// Scenes that contributed a loss.
    pub scenes: usize,
}

impl EpochLog {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9e}",
            self.epoch,
            self.loss,
            self.parts.lane,
            self.parts.point,
            self.parts.goal,
            self.parts.traj,
            self.lr
        )
    }
}

pub fn loss_csv(logs: &[EpochLog]) -> String {
    let mut s = String::from(LOSS_CSV_HEADER);
    s.push('\n');
    for l in logs {
        let _ = writeln!(s, "{}", l.csv_row());
    }
    s
}

/// Write `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

struct SceneStep {
    grads: Gradients,
    loss: f64,
    parts: LossParts,
}

fn scene_step(
    model: &Model,
    scene: &Scene,
    cfg: &TrainConfig,
    aug_seed: u64,
    dropout_seed: u64,
) -> Result<Option<SceneStep>> {
    let scene = if cfg.augment {
        augment_scene(scene, cfg, &mut ChaCha8Rng::seed_from_u64(aug_seed))?
    } else {
        scene.clone()
    };
    let mut tape = Tape::with_mode(&model.store, true, dropout_seed);
    let Some(out) = scene_loss(&mut tape, model, &scene, cfg)? else {
        return Ok(None);
    };
    let loss = tape.value(out.total).item();
    if !loss.is_finite() || !out.parts.is_finite() {
        let origin = tape
            .first_non_finite()
            .map_or(String::new(), |(node, op)| format!(" (first at node {node}, op {op})"));
        return Err(Error::Numeric(format!(
            "non-finite loss on scene {}: loss={loss} l_lane={} l_point={} l_goal={} l_traj={}{origin}",
            scene.id, out.parts.lane, out.parts.point, out.parts.goal, out.parts.traj
        )));
    }
    let grads = tape.backward(out.total)?;
    Ok(Some(SceneStep {
        grads,
        loss,
        parts: out.parts,
    }))
}

/// Model, optimizer and sampling state across epochs.
pub struct Trainer {
    pub model: Model,
    pub cfg: TrainConfig,
    opt: AdamW,
    rng: ChaCha8Rng,
    step: usize,
    pool: rayon::ThreadPool,
}

impl Trainer {
    /// Fresh model seeded from the training seed; training dropout replaces
    /// the model config's.
    pub fn new(model_cfg: &ModelConfig, cfg: &TrainConfig, workers: usize) -> Result<Self> {
        cfg.validate()?;
        let mut mc = model_cfg.clone();
        mc.dropout = cfg.dropout;
        let model = Model::new(mc, cfg.seed)?;
        let opt = AdamW::new(&model.store, cfg);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        Ok(Self {
            model,
            cfg: cfg.clone(),
            opt,
            rng,
            step: 0,
            pool,
        })
    }

    pub fn steps_per_epoch(&self, n_scenes: usize) -> usize {
        n_scenes.div_ceil(self.cfg.batch_size)
    }

    /// One pass over `scenes` in shuffled mini-batches.
    pub fn epoch(&mut self, scenes: &[Scene], epoch: usize) -> Result<EpochLog> {
        if scenes.is_empty() {
            return Err(Error::Data("training set is empty".into()));
        }
        let per_epoch = self.steps_per_epoch(scenes.len());
        let total = per_epoch * self.cfg.total_epochs;
        let warmup = per_epoch * self.cfg.warmup_epochs;
        let mut order: Vec<usize> = (0..scenes.len()).collect();
        order.shuffle(&mut self.rng);
        let mut sum = LossParts::default();
        let mut loss_sum = 0.0;
        let mut used = 0;
        let mut lr = 0.0;
        for batch in order.chunks(self.cfg.batch_size) {
            let seeds: Vec<(usize, u64, u64)> = batch
                .iter()
                .map(|&i| (i, self.rng.random(), self.rng.random()))
                .collect();
            let (model, cfg) = (&self.model, &self.cfg);
            let results: Vec<Result<Option<SceneStep>>> = self.pool.install(|| {
                seeds
                    .par_iter()
                    .map(|&(i, a, d)| scene_step(model, &scenes[i], cfg, a, d))
                    .collect()
            });
            let mut grads: Option<Gradients> = None;
            let mut n = 0;
            for r in results {
                let Some(s) = r.map_err(|e| match e {
                    Error::Numeric(m) => Error::Numeric(format!("epoch {epoch} step {}: {m}", self.step)),
                    other => other,
                })?
                else {
                    continue;
                };
                n += 1;
                loss_sum += s.loss;
                sum.add_scaled(&s.parts, 1.0);
                match grads.as_mut() {
                    None => grads = Some(s.grads),
                    Some(g) => g.add(&s.grads),
                }
            }
            lr = lr_schedule(self.step + 1, warmup, total, self.cfg.lr_peak);
            self.step += 1;
            let Some(mut g) = grads else { continue };
            g.scale(1.0 / n as f64);
            if !g.all_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite gradient at epoch {epoch} step {}",
                    self.step
                )));
            }
            used += n;
            self.opt.step(&mut self.model.store, &g, lr);
        }
        let d = used.max(1) as f64;
        let mut parts = LossParts::default();
        parts.add_scaled(&sum, 1.0 / d);
        Ok(EpochLog {
            epoch,
            loss: loss_sum / d,
            parts,
            lr,
            scenes: used,
        })
    }

    pub fn checkpoint_meta(&self, epoch: usize) -> serde_json::Value {
        serde_json::json!({
            "epoch": epoch,
            "step": self.step,
            "train_config": self.cfg,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    /// Directory for the loss CSV and checkpoints; nothing is written when unset.
    pub out_dir: Option<PathBuf>,
    pub workers: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            out_dir: None,
            workers: 1,
        }
    }
}

pub struct TrainOutcome {
    pub model: Model,
    pub logs: Vec<EpochLog>,
}

/// Train for `total_epochs` or until `on_epoch` returns false.
pub fn train<F>(
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    scenes: &[Scene],
    opts: &TrainOptions,
    mut on_epoch: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&Model, &EpochLog) -> bool,
{
    let mut t = Trainer::new(model_cfg, cfg, opts.workers)?;
    if let Some(dir) = &opts.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut logs = Vec::new();
    for epoch in 1..=cfg.total_epochs {
        let log = t.epoch(scenes, epoch)?;
        logs.push(log.clone());
        if let Some(dir) = &opts.out_dir {
            write_atomic(&dir.join(LOSS_CSV), loss_csv(&logs).as_bytes())?;
            t.model
                .checkpoint(t.checkpoint_meta(epoch))
                .save(&dir.join(EPOCH_CHECKPOINT))?;
        }
        if !on_epoch(&t.model, &log) {
            break;
        }
    }
    if let Some(dir) = &opts.out_dir {
        let epoch = logs.last().map_or(0, |l| l.epoch);
        t.model
            .checkpoint(t.checkpoint_meta(epoch))
            .save(&dir.join(FINAL_CHECKPOINT))?;
    }
    Ok(TrainOutcome { model: t.model, logs })
}
