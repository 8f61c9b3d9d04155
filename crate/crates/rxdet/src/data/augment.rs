//! Training-time augmentations. All of them operate on normalized,
//! input-size-length samples, keep the annotation count unchanged, and are
//! driven by an explicit RNG so batches reproduce bit-for-bit from a seed.
//!
//! Values may leave `[0, 1]` slightly after floor shifting; that is the
//! point of the technique and the network consumes them as-is.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Annotation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Independent selection probability per technique.
    pub p_scale_shift: f32,
    pub p_flip: f32,
    pub p_floor_shift: f32,
    pub p_noise: f32,
    pub p_smooth: f32,
    pub p_cut_paste: f32,
    pub scale_range: (f32, f32),
    pub level_range: (f32, f32),
    pub noise_range: (f32, f32),
    pub smooth_windows: Vec<usize>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            p_scale_shift: 0.5,
            p_flip: 0.5,
            p_floor_shift: 0.5,
            p_noise: 0.5,
            p_smooth: 0.5,
            p_cut_paste: 0.5,
            scale_range: (0.3, 3.0),
            level_range: (-0.2, 0.2),
            noise_range: (-0.002, 0.002),
            smooth_windows: vec![3, 5, 7],
        }
    }
}

/// `v <- (v - mean) * r_scale + v`. The sample mean is preserved.
pub fn augment_scale_shift(values: &mut [f32], r_scale: f32) {
    if values.is_empty() {
        return;
    }
    let mean = values.iter().map(|v| *v as f64).sum::<f64>() / values.len() as f64;
    let r = r_scale as f64;
    for v in values.iter_mut() {
        let x = *v as f64;
        *v = ((x - mean) * r + x) as f32;
    }
}

/// Left-right flip; annotation centers map to `1 - x`, widths unchanged.
pub fn augment_flip(values: &mut [f32], annotations: &mut [Annotation]) {
    values.reverse();
    for a in annotations.iter_mut() {
        a.x = 1.0 - a.x;
    }
}

/// Add one shared offset to every value.
pub fn augment_floor_shift(values: &mut [f32], r_level: f32) {
    for v in values.iter_mut() {
        *v += r_level;
    }
}

/// Add an independent uniform offset in `range` to every value.
pub fn augment_noise<R: Rng>(values: &mut [f32], rng: &mut R, range: (f32, f32)) {
    for v in values.iter_mut() {
        *v += rng.gen_range(range.0..=range.1);
    }
}

/// Savitzky-Golay quadratic smoothing over an odd window. The window's
/// half-width at each edge is left untouched. Samples shorter than the
/// window are skipped with a warning.
pub fn augment_smooth(values: &mut [f32], window: usize) {
    assert!(window % 2 == 1 && window >= 3, "window must be odd and >= 3");
    if values.len() < window {
        log::warn!("smooth: sample of {} values shorter than window {window}, skipped", values.len());
        return;
    }
    let coeffs = savgol_coefficients(window);
    let m = window / 2;
    let src = values.to_vec();
    for p in m..src.len() - m {
        let mut acc = 0.0f64;
        for (j, c) in coeffs.iter().enumerate() {
            acc += c * src[p + j - m] as f64;
        }
        values[p] = acc as f32;
    }
}

/// Central Savitzky-Golay smoothing coefficients for a quadratic fit:
/// `c_j = (3(3m^2 + 3m - 1) - 15 j^2) / ((2m+3)(2m+1)(2m-1))`.
pub fn savgol_coefficients(window: usize) -> Vec<f64> {
    let m = (window / 2) as i64;
    let denom = ((2 * m + 3) * (2 * m + 1) * (2 * m - 1)) as f64;
    (-m..=m)
        .map(|j| (3 * (3 * m * m + 3 * m - 1) - 15 * j * j) as f64 / denom)
        .collect()
}

fn intervals_overlap(a: (f32, f32), b: (f32, f32)) -> bool {
    a.0 < b.1 && b.0 < a.1
}

/// Cut one randomly chosen anomaly's segment and paste it at a random
/// position that does not overlap any other annotation. The vacated gap is
/// filled with a linear baseline plus local-scale noise. Returns whether a
/// move happened (placement can fail, in which case the sample is left
/// unchanged).
pub fn augment_cut_paste<R: Rng>(values: &mut [f32], annotations: &mut [Annotation], rng: &mut R) -> bool {
    if annotations.is_empty() {
        return false;
    }
    let n = values.len();
    let pick = rng.gen_range(0..annotations.len());
    let ann = annotations[pick];
    let (lo, hi) = ann.interval();
    let start = ((lo.max(0.0) * n as f32).round() as usize).min(n - 1);
    let end = ((hi.min(1.0) * n as f32).round() as usize).clamp(start + 1, n);
    let seg_len = end - start;
    if seg_len >= n {
        return false;
    }

    let mut destination = None;
    for _ in 0..32 {
        let new_start = rng.gen_range(0..=n - seg_len);
        // widen the candidate by the index-rounding slack so the updated
        // annotation interval cannot brush a neighbor
        let cand = (
            (new_start as f32 - 2.0) / n as f32,
            (new_start + seg_len + 2) as f32 / n as f32,
        );
        let clash = annotations
            .iter()
            .enumerate()
            .any(|(k, other)| k != pick && intervals_overlap(cand, other.interval()));
        if !clash {
            destination = Some(new_start);
            break;
        }
    }
    let Some(new_start) = destination else {
        return false;
    };

    let segment: Vec<f32> = values[start..end].to_vec();

    // fill the gap: linear baseline between the neighbors, noise scaled to
    // the local first-difference spread
    let left = if start > 0 { values[start - 1] } else { values[end.min(n - 1)] };
    let right = if end < n { values[end] } else { left };
    let ctx_lo = start.saturating_sub(24);
    let mut spread = 0.0f64;
    let mut count = 0usize;
    for i in ctx_lo + 1..start {
        spread += (values[i] as f64 - values[i - 1] as f64).powi(2);
        count += 1;
    }
    let sigma = if count > 1 { (spread / count as f64 / 2.0).sqrt() } else { 0.005 };
    let noise = Normal::new(0.0, sigma.max(1e-4)).unwrap();
    for (i, slot) in values[start..end].iter_mut().enumerate() {
        let t = (i + 1) as f32 / (seg_len + 1) as f32;
        *slot = left * (1.0 - t) + right * t + noise.sample(rng) as f32;
    }

    values[new_start..new_start + seg_len].copy_from_slice(&segment);
    annotations[pick].x = (new_start as f32 + seg_len as f32 / 2.0) / n as f32;
    true
}

/// Apply each configured technique with its selection probability, in a
/// fixed order so a given RNG stream reproduces exactly.
pub fn apply<R: Rng>(values: &mut Vec<f32>, annotations: &mut [Annotation], cfg: &AugmentConfig, rng: &mut R) {
    if rng.gen::<f32>() < cfg.p_scale_shift {
        let r = rng.gen_range(cfg.scale_range.0..=cfg.scale_range.1);
        augment_scale_shift(values, r);
    }
    if rng.gen::<f32>() < cfg.p_flip {
        augment_flip(values, annotations);
    }
    if rng.gen::<f32>() < cfg.p_floor_shift {
        let r = rng.gen_range(cfg.level_range.0..=cfg.level_range.1);
        augment_floor_shift(values, r);
    }
    if rng.gen::<f32>() < cfg.p_noise {
        augment_noise(values, rng, cfg.noise_range);
    }
    if rng.gen::<f32>() < cfg.p_smooth && !cfg.smooth_windows.is_empty() {
        let w = cfg.smooth_windows[rng.gen_range(0..cfg.smooth_windows.len())];
        augment_smooth(values, w);
    }
    if rng.gen::<f32>() < cfg.p_cut_paste {
        augment_cut_paste(values, annotations, rng);
    }
}
