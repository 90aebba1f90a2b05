//! AdamW and the learning-rate schedule.

use std::f64::consts::PI;

use super::config::TrainConfig;
use crate::nn::{Gradients, ParamKind, ParamStore, Tensor};

/// Linear warmup from 0 to `peak` over `warmup` steps, then cosine decay to
/// 0 at `total`.
pub fn lr_schedule(step: usize, warmup: usize, total: usize, peak: f64) -> f64 {
    if step >= total {
        return 0.0;
    }
    if step < warmup {
        return peak * step as f64 / warmup as f64;
    }
    let span = (total - warmup) as f64;
    let t = (step - warmup) as f64 / span;
    0.5 * peak * (1.0 + (PI * t).cos())
}

/// Adam with decoupled weight decay on affine weights only.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl AdamW {
    pub fn new(store: &ParamStore, cfg: &TrainConfig) -> Self {
        let zeros = || {
            store
                .iter()
                .map(|(_, p)| Tensor::zeros(p.value.rows(), p.value.cols()))
                .collect::<Vec<_>>()
        };
        Self {
            beta1: cfg.betas[0],
            beta2: cfg.betas[1],
            eps: cfg.adam_eps,
            weight_decay: cfg.weight_decay,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update with gradients already averaged over the batch.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
        for id in ids {
            let i = id.index();
            let g = grads.get(id);
            let p = store.get_mut(id);
            let decay = if p.kind == ParamKind::Weight {
                self.weight_decay
            } else {
                0.0
            };
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            let w = p.value.data_mut();
            for k in 0..w.len() {
                let gk = g.map_or(0.0, |g| g.data()[k]);
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * gk;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * gk * gk;
                let mh = m[k] / c1;
                let vh = v[k] / c2;
                w[k] -= lr * (mh / (vh.sqrt() + self.eps) + decay * w[k]);
            }
        }
    }
}
