//! Goal vs baseline under a map-style shift: train on one style, evaluate on
//! both, report the relative minFDE degradation.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{evaluate, KMetrics, MetricsReport};
use crate::model::{ModelConfig, Variant};
use crate::scenegraph::Scene;
use crate::training::{train, TrainConfig, TrainOptions};

/// Mode count the comparison is reported at.
pub const COMPARE_K: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub variant: Variant,
    pub seed: u64,
    pub eval_set: String,
    pub metrics: KMetrics,
    #[serde(rename = "ORR")]
    pub orr: f64,
    /// `(minFDE_B - minFDE_A) / minFDE_A`; only on the shifted set.
    pub degradation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedVerdict {
    pub seed: u64,
    pub orr_goal: f64,
    pub orr_baseline: f64,
    pub degradation_goal: f64,
    pub degradation_baseline: f64,
    /// Goal ORR not above baseline and goal degradation not above baseline.
    pub goal_wins: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub k: usize,
    pub rows: Vec<CompareRow>,
    pub verdicts: Vec<SeedVerdict>,
}

impl CompareReport {
    pub const CSV_HEADER: &'static str =
        "variant,seed,eval_set,k,minADE,minFDE,b_minFDE,minMR,missRateTopK2,ORR,degradation";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let m = &r.metrics;
            let _ = writeln!(
                s,
                "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
                r.variant.name(),
                r.seed,
                r.eval_set,
                m.k,
                m.min_ade,
                m.min_fde,
                m.b_min_fde,
                m.min_mr,
                m.miss_rate_topk2,
                r.orr,
                r.degradation.map_or(String::new(), |d| format!("{d:.6}"))
            );
        }
        s
    }

    pub fn seeds_won(&self) -> usize {
        self.verdicts.iter().filter(|v| v.goal_wins).count()
    }
}

pub struct CompareInputs<'a> {
    pub train: &'a [Scene],
    /// Same-style evaluation set; the training set itself when `None`.
    pub eval_a: Option<&'a [Scene]>,
    pub eval_b: &'a [Scene],
    pub model: &'a ModelConfig,
    pub train_cfg: &'a TrainConfig,
    pub seeds: &'a [u64],
    pub workers: usize,
}

fn k_metrics(r: &MetricsReport, k: usize) -> Result<KMetrics> {
    r.get(k)
        .cloned()
        .ok_or_else(|| Error::Structural(format!("report lacks k={k}")))
}

/// Train both variants per seed and evaluate on both styles.
pub fn compare(inp: &CompareInputs, mut progress: impl FnMut(&str)) -> Result<CompareReport> {
    if inp.seeds.is_empty() {
        return Err(Error::InvalidConfig("no seeds given".into()));
    }
    let k = COMPARE_K.min(inp.model.k);
    let eval_a = inp.eval_a.unwrap_or(inp.train);
    let mut rows = Vec::new();
    let mut verdicts = Vec::new();
    for &seed in inp.seeds {
        let mut per_variant = Vec::new();
        for variant in [Variant::Goal, Variant::Baseline] {
            let mc = ModelConfig {
                variant,
                ..inp.model.clone()
            };
            let tc = TrainConfig {
                seed,
                ..inp.train_cfg.clone()
            };
            let opts = TrainOptions {
                out_dir: None,
                workers: inp.workers,
            };
            let out = train(&mc, &tc, inp.train, &opts, |_, log| {
                progress(&format!(
                    "{} seed {seed} epoch {} loss {:.4}",
                    variant.name(),
                    log.epoch,
                    log.loss
                ));
                true
            })?;
            let ra = evaluate(&out.model, eval_a, &[k], false)?;
            let rb = evaluate(&out.model, inp.eval_b, &[k], false)?;
            let (ma, mb) = (k_metrics(&ra, k)?, k_metrics(&rb, k)?);
            let degradation = (mb.min_fde - ma.min_fde) / ma.min_fde;
            rows.push(CompareRow {
                variant,
                seed,
                eval_set: "A".into(),
                metrics: ma,
                orr: ra.orr,
                degradation: None,
            });
            rows.push(CompareRow {
                variant,
                seed,
                eval_set: "B".into(),
                metrics: mb,
                orr: rb.orr,
                degradation: Some(degradation),
            });
            per_variant.push((rb.orr, degradation));
        }
        let (g, b) = (per_variant[0], per_variant[1]);
        verdicts.push(SeedVerdict {
            seed,
            orr_goal: g.0,
            orr_baseline: b.0,
            degradation_goal: g.1,
            degradation_baseline: b.1,
            goal_wins: g.0 <= b.0 && g.1 <= b.1,
        });
    }
    Ok(CompareReport { k, rows, verdicts })
}
