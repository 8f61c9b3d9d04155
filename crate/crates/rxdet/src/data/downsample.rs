//! Binning-minimum down-sampling and input normalization.
//!
//! The detector cares about dips, so length reduction keeps each bin's
//! minimum. When the source length is not a multiple of the target, the
//! series is first nearest-neighbor interpolated up to the nearest multiple
//! `n * T` (`n = ceil(S / T)`); source index for up-sampled position `j` is
//! `floor(j * S / D)`.

use crate::data::MER_MAX;
use crate::error::{Error, Result};

/// Down-sample `values` to exactly `target` elements, keeping bin minima.
pub fn binning_min_downsample(values: &[f32], target: usize) -> Result<Vec<f32>> {
    let size = values.len();
    if size == 0 || target == 0 {
        return Err(Error::Input("binning requires non-empty input and positive target".into()));
    }
    if size < target {
        return Err(Error::Input(format!(
            "binning source ({size}) shorter than target ({target})"
        )));
    }
    let n = size.div_ceil(target);
    let d = n * target;
    let mut out = Vec::with_capacity(target);
    for j in 0..target {
        let mut min = f32::INFINITY;
        for u in j * n..(j + 1) * n {
            // nearest-neighbor up-sampled value without materializing it
            let v = values[u * size / d];
            if v < min {
                min = v;
            }
        }
        out.push(min);
    }
    Ok(out)
}

/// Nearest-neighbor resample to an arbitrary target length (used when a
/// series is shorter than the network input).
pub fn nearest_resample(values: &[f32], target: usize) -> Vec<f32> {
    let size = values.len();
    (0..target).map(|j| values[j * size / target]).collect()
}

/// Scale raw MER values into `[0, 1]`. Out-of-range inputs are clamped and
/// counted with a warning.
pub fn normalize(values: &[f32]) -> Vec<f32> {
    let mut clamped = 0usize;
    let out = values
        .iter()
        .map(|v| {
            let v = if v.is_finite() { *v } else { 0.0 };
            if !(0.0..=MER_MAX).contains(&v) {
                clamped += 1;
            }
            v.clamp(0.0, MER_MAX) / MER_MAX
        })
        .collect();
    if clamped > 0 {
        log::warn!("normalize: clamped {clamped} values outside [0, {MER_MAX}]");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn even_split_takes_bin_minima() {
        // n = 2, bins [5,1][4,2][9,0]
        let out = binning_min_downsample(&[5.0, 1.0, 4.0, 2.0, 9.0, 0.0], 3).unwrap();
        assert_eq!(out, [1.0, 2.0, 0.0]);
    }

    #[test]
    fn same_length_is_identity() {
        let v = [3.0, 1.0, 4.0, 1.0, 5.0];
        assert_eq!(binning_min_downsample(&v, 5).unwrap(), v);
    }

    #[test]
    fn uneven_split_interpolates_first() {
        // S=5, T=3: n=2, D=6; floor-rule upsample -> [3,3,7,2,8,6];
        // bins [3,3][7,2][8,6] -> [3,2,6]
        let out = binning_min_downsample(&[3.0, 7.0, 2.0, 8.0, 6.0], 3).unwrap();
        assert_eq!(out, [3.0, 2.0, 6.0]);
    }

    #[test]
    fn preconditions_rejected() {
        assert!(binning_min_downsample(&[], 3).is_err());
        assert!(binning_min_downsample(&[1.0], 0).is_err());
        assert!(binning_min_downsample(&[1.0, 2.0], 3).is_err());
    }

    #[test]
    fn normalize_endpoints() {
        let out = normalize(&[63.75, 0.0, 31.875]);
        assert_eq!(out, [1.0, 0.0, 0.5]);
    }

    #[test]
    fn normalize_clamps_out_of_range() {
        let out = normalize(&[-5.0, 100.0]);
        assert_eq!(out, [0.0, 1.0]);
    }
}
