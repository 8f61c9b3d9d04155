//! Anchor computation: 1-D k-means over annotation widths (in input-size
//! units), seeded from kernel density estimate modes.
//!
//! Seeding: k quantile seeds are computed first, then each KDE mode
//! (Gaussian kernel, Silverman bandwidth), strongest first, snaps its
//! nearest unclaimed seed to the mode location. Lloyd iteration then
//! refines. The procedure is deterministic. Datasets with fewer than k
//! distinct widths fall back to the published anchor table with a warning.

use crate::data::Dataset;
use crate::net::spec::AnchorSet;

pub const DEFAULT_K: usize = 9;

pub fn compute_anchors(dataset: &Dataset, k: usize, input_size: usize) -> AnchorSet {
    assert_eq!(k, DEFAULT_K, "anchor sets hold exactly 9 widths");
    let mut widths: Vec<f64> = dataset
        .samples
        .iter()
        .flat_map(|s| s.annotations.iter())
        .map(|a| (a.w as f64 * input_size as f64).max(1.0))
        .collect();
    widths.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut distinct = widths.clone();
    distinct.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    if distinct.len() < k {
        log::warn!(
            "anchor computation: only {} distinct widths (< {k}), using table defaults",
            distinct.len()
        );
        return AnchorSet::table_defaults();
    }

    let mut seeds = quantile_seeds(&widths, k);
    for mode in kde_modes(&widths) {
        // snap the seed nearest to this mode; if that seed already belongs
        // to a stronger mode, the mode is dropped rather than displacing a
        // far-away seed
        let mut nearest: Option<(usize, f64)> = None;
        for (i, (seed, _)) in seeds.iter().enumerate() {
            let d = (seed - mode).abs();
            if nearest.map_or(true, |(_, bd)| d < bd) {
                nearest = Some((i, d));
            }
        }
        if let Some((i, _)) = nearest {
            if !seeds[i].1 {
                seeds[i] = (mode, true);
            }
        }
    }
    let mut centroids: Vec<f64> = seeds.into_iter().map(|(s, _)| s).collect();
    centroids.sort_by(|a, b| a.partial_cmp(b).unwrap());

    lloyd(&widths, &mut centroids, 100);
    centroids.sort_by(|a, b| a.partial_cmp(b).unwrap());

    // strict ascent and bounds for the AnchorSet invariants
    let mut out = [0f32; 9];
    let mut prev = 0.0f64;
    for (i, c) in centroids.iter().enumerate() {
        let v = c.max(prev + 1e-3).min(input_size as f64);
        out[i] = v as f32;
        prev = v;
    }
    match AnchorSet::new(out, input_size) {
        Ok(set) => set,
        Err(_) => {
            log::warn!("anchor computation produced a degenerate set, using table defaults");
            AnchorSet::table_defaults()
        }
    }
}

fn quantile_seeds(sorted: &[f64], k: usize) -> Vec<(f64, bool)> {
    (0..k)
        .map(|i| {
            let q = (i as f64 + 0.5) / k as f64;
            let idx = ((q * sorted.len() as f64) as usize).min(sorted.len() - 1);
            (sorted[idx], false)
        })
        .collect()
}

/// Density modes on a 512-point grid, strongest first.
fn kde_modes(sorted: &[f64]) -> Vec<f64> {
    let n = sorted.len();
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let var = sorted.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    let q1 = sorted[n / 4];
    let q3 = sorted[(3 * n) / 4];
    let iqr = (q3 - q1).max(0.0);
    let mut spread = std.min(iqr / 1.34);
    if spread <= 0.0 {
        spread = std.max(1e-3);
    }
    let bandwidth = (0.9 * spread * (n as f64).powf(-0.2)).max(1e-3);

    let lo = sorted[0];
    let hi = sorted[n - 1];
    if hi <= lo {
        return vec![lo];
    }
    const GRID: usize = 512;
    let step = (hi - lo) / (GRID - 1) as f64;
    let density: Vec<f64> = (0..GRID)
        .map(|g| {
            let x = lo + g as f64 * step;
            sorted
                .iter()
                .map(|w| {
                    let u = (x - w) / bandwidth;
                    (-0.5 * u * u).exp()
                })
                .sum::<f64>()
        })
        .collect();

    let mut modes: Vec<(f64, f64)> = Vec::new(); // (density, location)
    for g in 0..GRID {
        let left = if g == 0 { f64::NEG_INFINITY } else { density[g - 1] };
        let right = if g == GRID - 1 { f64::NEG_INFINITY } else { density[g + 1] };
        if density[g] > left && density[g] >= right {
            modes.push((density[g], lo + g as f64 * step));
        }
    }
    modes.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    modes.into_iter().map(|(_, x)| x).collect()
}

fn lloyd(points: &[f64], centroids: &mut [f64], iterations: usize) {
    let k = centroids.len();
    let mut sums = vec![0.0f64; k];
    let mut counts = vec![0usize; k];
    for _ in 0..iterations {
        sums.fill(0.0);
        counts.fill(0);
        for p in points {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (i, c) in centroids.iter().enumerate() {
                let d = (p - c).abs();
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
            sums[best] += p;
            counts[best] += 1;
        }
        let mut moved = false;
        for i in 0..k {
            if counts[i] > 0 {
                let next = sums[i] / counts[i] as f64;
                if (next - centroids[i]).abs() > 1e-12 {
                    moved = true;
                }
                centroids[i] = next;
            }
        }
        if !moved {
            break;
        }
    }
}
