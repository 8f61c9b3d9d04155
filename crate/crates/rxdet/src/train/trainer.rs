//! The training loop: seeded shuffling, augmentation, batched forward and
//! backward passes, SGD with the burn-in schedule, periodic mAP validation
//! with best-weights keeping, and patience-based early stopping.
//!
//! A single thread owns the model; augmentation fans out over worker tasks
//! whose RNG streams derive from `(seed, batch, slot)`, so two runs with the
//! same seed produce bit-identical weights and metrics at any thread count.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::data::augment::{apply as apply_augment, AugmentConfig};
use crate::data::{Annotation, Dataset};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::net::graph::Phase;
use crate::net::{DetectOptions, Model, NmsMode};
use crate::par;
use crate::rng::{derive_rng, STREAM_AUGMENT, STREAM_SHUFFLE};
use crate::tensor::Tensor;
use crate::train::assign::assign_targets;
use crate::train::loss::{loss_and_grads, LossConfig, LossParts};
use crate::train::optimizer::{lr_schedule, Sgd};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f32,
    pub momentum: f32,
    pub weight_decay: f32,
    pub mini_batch: usize,
    /// Burn-in mini-batches for the quartic learning-rate ramp.
    pub burn_in: u64,
    pub ignore_threshold: f32,
    pub lambda_obj: f32,
    pub lambda_background: f32,
    pub max_batches: u64,
    /// Evaluations without improvement before stopping early.
    pub patience: u64,
    /// Mini-batches between validation runs.
    pub eval_interval: u64,
    pub seed: u64,
    /// Augmentation configuration; `None` disables augmentation.
    pub augment: Option<AugmentConfig>,
    /// Confidence threshold used by the periodic validation.
    pub eval_conf_threshold: f32,
    /// NMS IoU threshold used by the periodic validation.
    pub eval_nms_iou: f32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            momentum: 0.9,
            weight_decay: 5e-4,
            mini_batch: 32,
            burn_in: 6000,
            ignore_threshold: 0.7,
            lambda_obj: 1.0,
            lambda_background: 0.5,
            max_batches: 30_000,
            patience: 20,
            eval_interval: 200,
            seed: 0,
            augment: Some(AugmentConfig::default()),
            eval_conf_threshold: 0.5,
            eval_nms_iou: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("lambda_obj", self.lambda_obj),
            ("lambda_background", self.lambda_background),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must be in [0,1), got {}", self.momentum)));
        }
        if self.weight_decay < 0.0 || !self.weight_decay.is_finite() {
            return Err(Error::Config(format!("weight_decay must be non-negative, got {}", self.weight_decay)));
        }
        if !(0.0..1.0).contains(&self.ignore_threshold) || self.ignore_threshold == 0.0 {
            return Err(Error::Config(format!(
                "ignore_threshold must be in (0,1), got {}",
                self.ignore_threshold
            )));
        }
        if self.mini_batch == 0 || self.max_batches == 0 || self.eval_interval == 0 {
            return Err(Error::Config("mini_batch, max_batches, eval_interval must be positive".into()));
        }
        Ok(())
    }
}

/// One metrics-log row; the mAP columns are filled on evaluation batches.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub batch: u64,
    pub lr: f32,
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub total: f64,
    pub map50: Option<f64>,
    pub map75: Option<f64>,
}

impl MetricsRow {
    pub const CSV_HEADER: &'static str = "batch,lr,L1,L2,L3,L_total,mAP50,mAP75";

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.batch,
            self.lr,
            self.l1,
            self.l2,
            self.l3,
            self.total,
            opt(self.map50),
            opt(self.map75)
        )
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub batches_run: u64,
    pub best_map50: f64,
    pub best_map75: f64,
    pub best_batch: u64,
    pub stopped_early: bool,
    pub metrics: Vec<MetricsRow>,
}

/// Deterministic epoch shuffling: a fresh permutation per epoch from the
/// shuffle stream.
struct BatchSampler {
    order: Vec<usize>,
    cursor: usize,
    epoch: u64,
    seed: u64,
    len: usize,
}

impl BatchSampler {
    fn new(seed: u64, len: usize) -> Self {
        let mut s = BatchSampler {
            order: Vec::new(),
            cursor: 0,
            epoch: 0,
            seed,
            len,
        };
        s.reshuffle();
        s
    }

    fn reshuffle(&mut self) {
        use rand::seq::SliceRandom;
        let mut rng = derive_rng(self.seed, STREAM_SHUFFLE, self.epoch);
        self.order = (0..self.len).collect();
        self.order.shuffle(&mut rng);
        self.cursor = 0;
        self.epoch += 1;
    }

    fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.cursor >= self.order.len() {
                self.reshuffle();
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }
}

pub fn train_loop(
    model: &mut Model,
    train_set: &Dataset,
    test_set: &Dataset,
    cfg: &TrainConfig,
    metrics_path: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() || test_set.is_empty() {
        return Err(Error::Input("training and test sets must be non-empty".into()));
    }

    let input_size = model.spec().input_size;
    // preprocess once: raw series -> normalized input-size values
    let prepared: Vec<(Vec<f32>, Vec<Annotation>)> = {
        let results = par::map_indexed(&train_set.samples, |_, s| {
            model.preprocess(&s.values).map(|v| (v, s.annotations.clone()))
        });
        let mut ok = Vec::with_capacity(results.len());
        for r in results {
            ok.push(r?);
        }
        ok
    };

    let mut csv = match metrics_path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            writeln!(w, "{}", MetricsRow::CSV_HEADER)?;
            Some(w)
        }
        None => None,
    };

    let batch = cfg.mini_batch;
    let loss_cfg = LossConfig::<f32> {
        lambda_obj: cfg.lambda_obj,
        lambda_background: cfg.lambda_background,
        ignore_threshold: cfg.ignore_threshold,
    };
    let eval_opts = DetectOptions {
        conf_threshold: cfg.eval_conf_threshold,
        nms: NmsMode::Hard { iou: cfg.eval_nms_iou },
        multi_label_top_n: 1,
    };

    let mut sampler = BatchSampler::new(cfg.seed, prepared.len());
    let mut sgd = Sgd::new(cfg.momentum, cfg.weight_decay);
    let mut ctx = model.network().alloc_activations(batch, true);
    let mut input = Tensor::<f32>::zeros(batch, 1, input_size);

    let mut metrics = Vec::new();
    let mut best_map50 = -1.0f64;
    let mut best_map75 = 0.0f64;
    let mut best_batch = 0u64;
    let mut best_state: Option<Vec<f32>> = None;
    let mut stale_evals = 0u64;
    let mut stopped_early = false;
    let mut batches_run = 0u64;

    let anchors = model.anchors().clone();
    let spec = model.spec().clone();

    for t in 1..=cfg.max_batches {
        let indices = sampler.next_batch(batch);

        // augmented copies of the selected samples, one derived RNG per slot
        let slots: Vec<(usize, usize)> = indices.iter().copied().enumerate().collect();
        let prepared_ref = &prepared;
        let augmented: Vec<(Vec<f32>, Vec<Annotation>)> = par::map_indexed(&slots, |_, (slot, idx)| {
            let (values, annotations) = &prepared_ref[*idx];
            let mut values = values.clone();
            let mut annotations = annotations.clone();
            if let Some(aug) = &cfg.augment {
                let stream_index = (t - 1) * batch as u64 + *slot as u64;
                let mut rng = derive_rng(cfg.seed, STREAM_AUGMENT, stream_index);
                apply_augment(&mut values, &mut annotations, aug, &mut rng);
            }
            (values, annotations)
        });

        let mut targets = Vec::with_capacity(batch);
        for (slot, (values, annotations)) in augmented.iter().enumerate() {
            input.row_mut(slot, 0).copy_from_slice(values);
            targets.push(assign_targets(annotations, &anchors, &spec));
        }
        let ann_refs: Vec<&[Annotation]> = augmented.iter().map(|(_, a)| a.as_slice()).collect();

        ctx.zero_grads();
        model.network_mut().zero_param_grads();
        model.network_mut().forward(&input, &mut ctx, Phase::Train);

        let parts = {
            let pred_ids: Vec<usize> = model.network().prediction_nodes().to_vec();
            let mut maps = take_maps(&mut ctx.outs, &pred_ids);
            let mut map_refs: Vec<&mut Tensor<f32>> = maps.iter_mut().collect();
            let parts = loss_and_grads(&mut map_refs, &mut targets, &ann_refs, &spec, &anchors, &loss_cfg, true);
            restore_maps(&mut ctx.outs, &pred_ids, maps);
            parts
        };
        if !parts.total().is_finite() {
            return Err(Error::Numeric(format!("non-finite loss at batch {t}: {parts:?}")));
        }

        model.network_mut().backward(&mut ctx);
        let lr = lr_schedule(t, cfg.learning_rate, cfg.burn_in);
        sgd.step(model.network_mut(), lr)?;
        batches_run = t;

        let mut row = make_row(t, lr, &parts);
        if t % cfg.eval_interval == 0 || t == cfg.max_batches {
            let report = evaluate(model, test_set, &[0.5, 0.75], &eval_opts)?;
            row.map50 = Some(report.map50());
            row.map75 = Some(report.map75());
            if report.map50() > best_map50 {
                best_map50 = report.map50();
                best_map75 = report.map75();
                best_batch = t;
                best_state = Some(model.network().export_state());
                stale_evals = 0;
            } else {
                stale_evals += 1;
            }
            log::info!(
                "batch {t}: loss {:.4} mAP50 {:.4} mAP75 {:.4} (best {:.4} @ {best_batch})",
                parts.total(),
                report.map50(),
                report.map75(),
                best_map50
            );
        }
        if let Some(w) = &mut csv {
            writeln!(w, "{}", row.to_csv())?;
        }
        metrics.push(row);

        if stale_evals >= cfg.patience {
            stopped_early = true;
            break;
        }
    }

    if let Some(state) = best_state {
        model.network_mut().import_state(&state)?;
    }
    if let Some(w) = &mut csv {
        w.flush()?;
    }

    Ok(TrainOutcome {
        batches_run,
        best_map50: best_map50.max(0.0),
        best_map75,
        best_batch,
        stopped_early,
        metrics,
    })
}

fn make_row(batch: u64, lr: f32, parts: &LossParts) -> MetricsRow {
    MetricsRow {
        batch,
        lr,
        l1: parts.l1,
        l2: parts.l2,
        l3: parts.l3,
        total: parts.total(),
        map50: None,
        map75: None,
    }
}

/// Temporarily move the prediction tensors out of the context so the loss
/// can hold several of them mutably at once.
fn take_maps(outs: &mut [Tensor<f32>], ids: &[usize]) -> Vec<Tensor<f32>> {
    ids.iter()
        .map(|id| std::mem::replace(&mut outs[*id], Tensor::zeros(1, 1, 1)))
        .collect()
}

fn restore_maps(outs: &mut [Tensor<f32>], ids: &[usize], maps: Vec<Tensor<f32>>) {
    for (id, map) in ids.iter().zip(maps) {
        outs[*id] = map;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{generate_synthetic, ClassMix};

    #[test]
    fn sampler_reshuffles_deterministically() {
        let mut a = BatchSampler::new(9, 10);
        let mut b = BatchSampler::new(9, 10);
        for _ in 0..7 {
            assert_eq!(a.next_batch(4), b.next_batch(4));
        }
        // every index appears within one epoch
        let mut s = BatchSampler::new(1, 6);
        let mut seen: Vec<usize> = s.next_batch(6);
        seen.sort_unstable();
        assert_eq!(seen, [0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn config_validation() {
        let mut cfg = TrainConfig::default();
        cfg.validate().unwrap();
        cfg.momentum = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig { ignore_threshold: 0.0, ..Default::default() };
        assert!(cfg.validate().is_err());
        cfg = TrainConfig { mini_batch: 0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn short_training_runs_and_logs() {
        let train = generate_synthetic(50, &ClassMix::uniform(), 12);
        let test = generate_synthetic(51, &ClassMix::uniform(), 4);
        let mut model = Model::reference(3).unwrap();
        let cfg = TrainConfig {
            mini_batch: 4,
            max_batches: 3,
            eval_interval: 3,
            burn_in: 10,
            augment: Some(AugmentConfig::default()),
            seed: 4,
            ..Default::default()
        };
        let out = train_loop(&mut model, &train, &test, &cfg, None).unwrap();
        assert_eq!(out.batches_run, 3);
        assert_eq!(out.metrics.len(), 3);
        assert!(out.metrics.iter().all(|r| r.total.is_finite()));
        assert!(out.metrics[2].map50.is_some());
        // lr follows the quartic ramp
        let expect = lr_schedule(1, cfg.learning_rate, cfg.burn_in);
        assert_eq!(out.metrics[0].lr, expect);
    }

    #[test]
    fn same_seed_same_trajectory() {
        let train = generate_synthetic(60, &ClassMix::uniform(), 10);
        let test = generate_synthetic(61, &ClassMix::uniform(), 3);
        let cfg = TrainConfig {
            mini_batch: 4,
            max_batches: 4,
            eval_interval: 4,
            burn_in: 10,
            seed: 77,
            ..Default::default()
        };
        let mut m1 = Model::reference(8).unwrap();
        let o1 = train_loop(&mut m1, &train, &test, &cfg, None).unwrap();
        let mut m2 = Model::reference(8).unwrap();
        let o2 = train_loop(&mut m2, &train, &test, &cfg, None).unwrap();
        assert_eq!(o1.metrics, o2.metrics);
        assert_eq!(m1.network().export_state(), m2.network().export_state());
    }
}
