//! The three training losses and their gradients with respect to the raw
//! prediction maps.
//!
//! - localization: scale-weighted squared error on decoded centers and
//!   root-widths at responsible slots, weight `gamma = 2 - w`
//! - confidence: weighted BCE over all non-ignored slots (object weight 1,
//!   background weight 0.5); slots whose decoded box overlaps any truth
//!   above the ignore threshold join neither side
//! - classification: per-class sigmoid BCE at responsible slots only
//!
//! Losses are summed per sample and averaged over the mini-batch; gradients
//! carry the same scaling. Log arguments are clamped to
//! `[1e-7, 1 - 1e-7]`; gradients use the standard unclamped sigmoid-BCE
//! form.

use crate::data::Annotation;
use crate::net::nms::interval_iou;
use crate::net::spec::{AnchorSet, NetworkSpec, BOX_FIELDS};
use crate::nn::sigmoid;
use crate::tensor::{Scalar, Tensor};
use crate::train::assign::{Slot, TargetAssignment};

pub const LOG_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy)]
pub struct LossConfig<T> {
    pub lambda_obj: T,
    pub lambda_background: T,
    pub ignore_threshold: T,
}

impl<T: Scalar> Default for LossConfig<T> {
    fn default() -> Self {
        LossConfig {
            lambda_obj: T::of(1.0),
            lambda_background: T::of(0.5),
            ignore_threshold: T::of(0.7),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
}

impl LossParts {
    pub fn total(&self) -> f64 {
        self.l1 + self.l2 + self.l3
    }
}

/// One responsible slot's localization contribution:
/// `[gamma (x - x_hat)]^2 + [gamma (sqrt w - sqrt w_hat)]^2`, `gamma = 2 - w`.
pub fn localization_term<T: Scalar>(x: T, w: T, x_hat: T, w_hat: T) -> T {
    let gamma = T::of(2.0) - w;
    let dc = gamma * (x - x_hat);
    let dw = gamma * (w.sqrt() - w_hat.sqrt());
    dc * dc + dw * dw
}

/// Binary cross-entropy with clamped logs.
pub fn bce<T: Scalar>(p_hat: T, p: T) -> T {
    let lo = T::of(LOG_CLAMP);
    let hi = T::one() - lo;
    let q = p_hat.max(lo).min(hi);
    -(p * q.ln() + (T::one() - p) * (T::one() - q).ln())
}

struct SlotView<T> {
    p_center: T,
    x_hat: T,
    w_hat: T,
    conf_hat: T,
}

fn read_slot<T: Scalar>(
    map: &Tensor<T>,
    sample: usize,
    ch0: usize,
    grid: usize,
    n_grids: usize,
    anchor_width: T,
    input_size: T,
) -> SlotView<T> {
    let p_center = map.row(sample, ch0)[grid];
    let p_width = map.row(sample, ch0 + 1)[grid];
    let p_conf = map.row(sample, ch0 + 2)[grid];
    let x_hat = (sigmoid(p_center) + T::from_usize(grid).unwrap()) / T::from_usize(n_grids).unwrap();
    let w_hat = p_width.exp() * anchor_width / input_size;
    SlotView {
        p_center,
        x_hat,
        w_hat,
        conf_hat: sigmoid(p_conf),
    }
}

/// Compute all three losses for a mini-batch and seed `d loss / d raw` into
/// the prediction maps' gradient buffers (which must be zeroed by the
/// caller).
///
/// With `refresh_ignore` the dynamic ignore mask is recomputed from the
/// decoded predictions (the training behavior); without it the flags
/// already in `targets` are honored, which keeps the loss differentiable
/// for gradient checking.
pub fn loss_and_grads<T: Scalar>(
    maps: &mut [&mut Tensor<T>],
    targets: &mut [TargetAssignment],
    annotations: &[&[Annotation]],
    spec: &NetworkSpec,
    anchors: &AnchorSet,
    cfg: &LossConfig<T>,
    refresh_ignore: bool,
) -> LossParts {
    let batch = targets.len();
    assert_eq!(annotations.len(), batch);
    let inv_batch = T::one() / T::from_usize(batch).unwrap();
    let layer_anchors = spec.layer_anchors();
    let fields = BOX_FIELDS + spec.n_classes;
    let input_size = T::from_usize(spec.input_size).unwrap();
    let two = T::of(2.0);

    let mut parts = LossParts::default();

    for (layer, map) in maps.iter_mut().enumerate() {
        let n_grids = map.len();
        map.alloc_grad();
        for b in 0..batch {
            for a in 0..spec.anchors_per_layer {
                let ch0 = a * fields;
                let anchor_width = T::of(anchors.width(layer_anchors[layer][a]) as f64);
                for g in 0..n_grids {
                    let view = read_slot(*map, b, ch0, g, n_grids, anchor_width, input_size);
                    let lt = &mut targets[b].layers[layer];
                    let slot_idx = lt.index(g, a);
                    match lt.slots[slot_idx] {
                        Slot::Responsible { x, w, class } => {
                            lt.ignore[slot_idx] = false;
                            let x_t = T::of(x as f64);
                            let w_t = T::of(w as f64);
                            // localization
                            parts.l1 += localization_term(x_t, w_t, view.x_hat, view.w_hat).to_f64()
                                * inv_batch.to_f64();
                            let gamma = two - w_t;
                            let g2 = gamma * gamma;
                            let sig = sigmoid(view.p_center);
                            let d_center = two * g2 * (view.x_hat - x_t) * sig * (T::one() - sig)
                                / T::from_usize(n_grids).unwrap();
                            let sw_hat = view.w_hat.sqrt();
                            let d_width = g2 * (sw_hat - w_t.sqrt()) * sw_hat;
                            // confidence (object)
                            parts.l2 += (cfg.lambda_obj * bce(view.conf_hat, T::one())).to_f64()
                                * inv_batch.to_f64();
                            let d_conf = cfg.lambda_obj * (view.conf_hat - T::one());
                            // classification
                            let mut d_class = [T::zero(); 32];
                            for c in 0..spec.n_classes {
                                let logit = map.row(b, ch0 + BOX_FIELDS + c)[g];
                                let p_hat = sigmoid(logit);
                                let p = if c == class { T::one() } else { T::zero() };
                                parts.l3 += bce(p_hat, p).to_f64() * inv_batch.to_f64();
                                d_class[c] = p_hat - p;
                            }

                            let grad = map.grad_mut();
                            let base = |ch: usize| (b * fields * spec.anchors_per_layer + ch) * n_grids + g;
                            grad[base(ch0)] += d_center * inv_batch;
                            grad[base(ch0 + 1)] += d_width * inv_batch;
                            grad[base(ch0 + 2)] += d_conf * inv_batch;
                            for c in 0..spec.n_classes {
                                grad[base(ch0 + BOX_FIELDS + c)] += d_class[c] * inv_batch;
                            }
                        }
                        Slot::Background => {
                            // ignore slots that sit on top of some truth
                            if refresh_ignore {
                                let x_hat = view.x_hat.to_f64() as f32;
                                let w_hat = view.w_hat.to_f64() as f32;
                                let overlapping = annotations[b].iter().any(|ann| {
                                    interval_iou(x_hat, w_hat, ann.x, ann.w)
                                        > cfg.ignore_threshold.to_f64() as f32
                                });
                                lt.ignore[slot_idx] = overlapping;
                            }
                            if lt.ignore[slot_idx] {
                                continue;
                            }
                            parts.l2 += (cfg.lambda_background * bce(view.conf_hat, T::zero())).to_f64()
                                * inv_batch.to_f64();
                            let d_conf = cfg.lambda_background * view.conf_hat;
                            let grad = map.grad_mut();
                            let idx = (b * fields * spec.anchors_per_layer + ch0 + 2) * n_grids + g;
                            grad[idx] += d_conf * inv_batch;
                        }
                    }
                }
            }
        }
    }
    parts
}

/// Localization loss only (batch mean), from immutable maps.
pub fn loss_localization<T: Scalar>(
    maps: &[&Tensor<T>],
    targets: &[TargetAssignment],
    spec: &NetworkSpec,
    anchors: &AnchorSet,
) -> f64 {
    let inv_batch = 1.0 / targets.len() as f64;
    let layer_anchors = spec.layer_anchors();
    let fields = BOX_FIELDS + spec.n_classes;
    let input_size = T::from_usize(spec.input_size).unwrap();
    let mut total = 0.0;
    for (layer, map) in maps.iter().enumerate() {
        let n_grids = map.len();
        for (b, target) in targets.iter().enumerate() {
            let lt = &target.layers[layer];
            for a in 0..spec.anchors_per_layer {
                let ch0 = a * fields;
                let anchor_width = T::of(anchors.width(layer_anchors[layer][a]) as f64);
                for g in 0..n_grids {
                    if let Slot::Responsible { x, w, .. } = lt.slots[lt.index(g, a)] {
                        let view = read_slot(*map, b, ch0, g, n_grids, anchor_width, input_size);
                        total += localization_term(T::of(x as f64), T::of(w as f64), view.x_hat, view.w_hat)
                            .to_f64()
                            * inv_batch;
                    }
                }
            }
        }
    }
    total
}

/// Confidence loss only (batch mean); uses the ignore flags already present
/// in `targets`.
pub fn loss_confidence<T: Scalar>(
    maps: &[&Tensor<T>],
    targets: &[TargetAssignment],
    spec: &NetworkSpec,
    cfg: &LossConfig<T>,
) -> f64 {
    let inv_batch = 1.0 / targets.len() as f64;
    let fields = BOX_FIELDS + spec.n_classes;
    let mut total = 0.0;
    for (layer, map) in maps.iter().enumerate() {
        let n_grids = map.len();
        for (b, target) in targets.iter().enumerate() {
            let lt = &target.layers[layer];
            for a in 0..spec.anchors_per_layer {
                let ch0 = a * fields;
                for g in 0..n_grids {
                    let idx = lt.index(g, a);
                    let conf_hat = sigmoid(map.row(b, ch0 + 2)[g]);
                    match lt.slots[idx] {
                        Slot::Responsible { .. } => {
                            total += (cfg.lambda_obj * bce(conf_hat, T::one())).to_f64() * inv_batch;
                        }
                        Slot::Background => {
                            if !lt.ignore[idx] {
                                total += (cfg.lambda_background * bce(conf_hat, T::zero())).to_f64()
                                    * inv_batch;
                            }
                        }
                    }
                }
            }
        }
    }
    total
}

/// Classification loss only (batch mean): responsible slots, all classes.
pub fn loss_classification<T: Scalar>(
    maps: &[&Tensor<T>],
    targets: &[TargetAssignment],
    spec: &NetworkSpec,
) -> f64 {
    let inv_batch = 1.0 / targets.len() as f64;
    let fields = BOX_FIELDS + spec.n_classes;
    let mut total = 0.0;
    for (layer, map) in maps.iter().enumerate() {
        let n_grids = map.len();
        for (b, target) in targets.iter().enumerate() {
            let lt = &target.layers[layer];
            for a in 0..spec.anchors_per_layer {
                let ch0 = a * fields;
                for g in 0..n_grids {
                    if let Slot::Responsible { class, .. } = lt.slots[lt.index(g, a)] {
                        for c in 0..spec.n_classes {
                            let p_hat = sigmoid(map.row(b, ch0 + BOX_FIELDS + c)[g]);
                            let p = if c == class { T::one() } else { T::zero() };
                            total += bce(p_hat, p).to_f64() * inv_batch;
                        }
                    }
                }
            }
        }
    }
    total
}
