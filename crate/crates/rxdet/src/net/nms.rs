//! Per-class non-maximum suppression, hard and soft.
//!
//! Both variants process each class independently, which keeps overlapping
//! detections of *different* classes alive. Widths are floored at one
//! input-size unit before IoU, since spikes can decode to sub-grid widths.
//! Multi-label detections are exploded into one single-class detection per
//! label first; with the default single-label decoding this is the identity.

use crate::net::decode::Detection;

/// Plain 1-D IoU of two (center, width) intervals.
pub fn interval_iou(c1: f32, w1: f32, c2: f32, w2: f32) -> f32 {
    let (a_lo, a_hi) = (c1 - w1 / 2.0, c1 + w1 / 2.0);
    let (b_lo, b_hi) = (c2 - w2 / 2.0, c2 + w2 / 2.0);
    let inter = (a_hi.min(b_hi) - a_lo.max(b_lo)).max(0.0);
    let union = w1 + w2 - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

fn iou_floored(a: &Detection, b: &Detection, input_size: usize) -> f32 {
    let floor = 1.0 / input_size as f32;
    interval_iou(a.center, a.width.max(floor), b.center, b.width.max(floor))
}

fn explode(dets: Vec<Detection>) -> Vec<Detection> {
    let mut out = Vec::with_capacity(dets.len());
    for d in dets {
        if d.classes.len() == 1 {
            out.push(d);
        } else {
            for c in &d.classes {
                out.push(Detection {
                    classes: vec![*c],
                    ..d.clone()
                });
            }
        }
    }
    out
}

/// Deterministic processing order: confidence descending, ties broken by
/// lower center, then lower anchor index.
fn rank_key(d: &Detection) -> (f32, f32, usize) {
    (d.confidence, d.center, d.anchor)
}

fn sort_for_processing(idx: &mut [usize], dets: &[Detection]) {
    idx.sort_by(|&i, &j| {
        let (ci, xi, ai) = rank_key(&dets[i]);
        let (cj, xj, aj) = rank_key(&dets[j]);
        cj.partial_cmp(&ci)
            .unwrap()
            .then(xi.partial_cmp(&xj).unwrap())
            .then(ai.cmp(&aj))
    });
}

/// Greedy per-class NMS: keep the most confident detection, suppress others
/// of the same class with IoU strictly above `iou_threshold`, repeat.
pub fn nms(dets: Vec<Detection>, iou_threshold: f32, input_size: usize) -> Vec<Detection> {
    let dets = explode(dets);
    let mut keep = vec![false; dets.len()];
    let mut classes: Vec<usize> = dets.iter().map(|d| d.classes[0]).collect();
    classes.sort_unstable();
    classes.dedup();

    for class in classes {
        let mut order: Vec<usize> = (0..dets.len()).filter(|&i| dets[i].classes[0] == class).collect();
        sort_for_processing(&mut order, &dets);
        let mut suppressed = vec![false; order.len()];
        for i in 0..order.len() {
            if suppressed[i] {
                continue;
            }
            keep[order[i]] = true;
            for j in i + 1..order.len() {
                if !suppressed[j]
                    && iou_floored(&dets[order[i]], &dets[order[j]], input_size) > iou_threshold
                {
                    suppressed[j] = true;
                }
            }
        }
    }

    let survivors: Vec<Detection> = dets
        .into_iter()
        .zip(keep)
        .filter_map(|(d, k)| k.then_some(d))
        .collect();
    sorted_by_rank(survivors)
}

/// Soft-NMS: instead of removing overlaps, decay their confidence by a
/// Gaussian of the overlap, `conf' = conf * exp(-IoU^2 / sigma)`, then drop
/// detections that end below `final_threshold`.
pub fn soft_nms(
    dets: Vec<Detection>,
    sigma: f32,
    final_threshold: f32,
    input_size: usize,
) -> Vec<Detection> {
    assert!(sigma > 0.0, "soft-NMS sigma must be positive");
    let dets = explode(dets);
    let mut out = Vec::with_capacity(dets.len());

    let mut classes: Vec<usize> = dets.iter().map(|d| d.classes[0]).collect();
    classes.sort_unstable();
    classes.dedup();

    for class in classes {
        let mut pool: Vec<Detection> = dets.iter().filter(|d| d.classes[0] == class).cloned().collect();
        while !pool.is_empty() {
            let mut order: Vec<usize> = (0..pool.len()).collect();
            sort_for_processing(&mut order, &pool);
            let best = pool.swap_remove(order[0]);
            for other in &mut pool {
                let iou = iou_floored(&best, other, input_size);
                other.confidence *= (-(iou * iou) / sigma).exp();
            }
            out.push(best);
        }
    }

    let survivors: Vec<Detection> = out
        .into_iter()
        .filter(|d| d.confidence >= final_threshold)
        .collect();
    sorted_by_rank(survivors)
}

fn sorted_by_rank(mut dets: Vec<Detection>) -> Vec<Detection> {
    dets.sort_by(|a, b| {
        let (ca, xa, aa) = rank_key(a);
        let (cb, xb, ab) = rank_key(b);
        cb.partial_cmp(&ca)
            .unwrap()
            .then(xa.partial_cmp(&xb).unwrap())
            .then(aa.cmp(&ab))
    });
    dets
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(class: usize, conf: f32, center: f32, width: f32) -> Detection {
        Detection {
            classes: vec![class],
            confidence: conf,
            center,
            width,
            anchor: 0,
        }
    }

    #[test]
    fn identical_boxes_same_class() {
        let kept = nms(vec![det(0, 0.9, 0.5, 0.2), det(0, 0.8, 0.5, 0.2)], 0.5, 416);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].confidence, 0.9);
    }

    #[test]
    fn identical_boxes_different_classes_survive() {
        let kept = nms(vec![det(0, 0.9, 0.5, 0.2), det(1, 0.8, 0.5, 0.2)], 0.5, 416);
        assert_eq!(kept.len(), 2);
    }

    #[test]
    fn disjoint_boxes_survive() {
        // (0.3, 0.2) and (0.6, 0.2): IoU 0
        let kept = nms(vec![det(0, 0.9, 0.3, 0.2), det(0, 0.8, 0.6, 0.2)], 0.5, 416);
        assert_eq!(kept.len(), 2);
    }

    #[test]
    fn order_invariance() {
        let a = det(0, 0.9, 0.5, 0.2);
        let b = det(0, 0.8, 0.52, 0.2);
        let c = det(0, 0.7, 0.9, 0.05);
        let k1 = nms(vec![a.clone(), b.clone(), c.clone()], 0.5, 416);
        let k2 = nms(vec![c, b, a], 0.5, 416);
        assert_eq!(k1, k2);
    }

    #[test]
    fn soft_nms_decays_duplicates() {
        // identical boxes, sigma 0.5: second becomes 0.8 * e^-2
        let kept = soft_nms(vec![det(0, 0.9, 0.5, 0.2), det(0, 0.8, 0.5, 0.2)], 0.5, 0.0, 416);
        assert_eq!(kept.len(), 2);
        let low = kept.iter().map(|d| d.confidence).fold(f32::INFINITY, f32::min);
        assert!((low - 0.8 * (-2.0f32).exp()).abs() < 1e-6, "got {low}");
    }

    #[test]
    fn soft_nms_keeps_disjoint_untouched() {
        let kept = soft_nms(vec![det(0, 0.9, 0.2, 0.1), det(0, 0.8, 0.7, 0.1)], 0.5, 0.5, 416);
        assert_eq!(kept.len(), 2);
        assert!(kept.iter().any(|d| d.confidence == 0.9));
        assert!(kept.iter().any(|d| d.confidence == 0.8));
    }

    #[test]
    fn multilabel_participates_per_class() {
        let mut d = det(0, 0.9, 0.5, 0.2);
        d.classes = vec![0, 1];
        let kept = nms(vec![d, det(1, 0.95, 0.5, 0.2)], 0.5, 416);
        // class 0 copy survives; class 1 copy loses to the stronger box
        assert_eq!(kept.len(), 2);
        assert!(kept.iter().any(|k| k.classes == vec![0] && k.confidence == 0.9));
        assert!(kept.iter().any(|k| k.classes == vec![1] && k.confidence == 0.95));
    }
}
