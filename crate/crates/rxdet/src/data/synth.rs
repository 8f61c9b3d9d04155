//! Synthetic RxMER capture generation with exact ground truth.
//!
//! Each sample starts from a noisy flat base and receives 0..=4 impairments
//! drawn from the class mix, placed at non-overlapping positions:
//!
//! - spike: 1-3 input-size units wide, a sharp dip of 6-30 dB
//! - suck_out: 10-120 units, a V-shaped dip from two random power curves
//! - wave: a sinusoid over 0.2-1.0 of the span, 3-40 periods, 1-6 dB
//! - roll_off: the terminal 3-15% of either edge dropping 5-40 dB along a
//!   power curve
//! - lte_ingress: a 40-120 unit band depressed 8-25 dB with elevated
//!   internal noise
//!
//! Annotations are emitted exactly at the injected intervals. Generation is
//! reproducible: sample `i` of a seed uses its own derived RNG stream, so
//! the parallel and sequential paths produce identical datasets.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{Annotation, Dataset, ImpairmentClass, Sample, SourceTag, MER_MAX, N_CLASSES};
use crate::error::{Error, Result};
use crate::net::spec::DEFAULT_INPUT_SIZE;
use crate::par;
use crate::rng::{derive_rng, STREAM_SYNTH};

/// Class sampling weights; they need not sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMix {
    weights: [f64; N_CLASSES],
    total: f64,
}

impl Default for ClassMix {
    fn default() -> Self {
        ClassMix::uniform()
    }
}

impl ClassMix {
    pub fn uniform() -> Self {
        ClassMix { weights: [1.0; N_CLASSES], total: N_CLASSES as f64 }
    }

    pub fn new(weights: [f64; N_CLASSES]) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config("class mix weights must be non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::Config("class mix needs at least one positive weight".into()));
        }
        Ok(ClassMix { weights, total })
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> ImpairmentClass {
        let mut t = rng.gen_range(0.0..self.total);
        for (i, w) in self.weights.iter().enumerate() {
            if t < *w {
                return ImpairmentClass::ALL[i];
            }
            t -= w;
        }
        ImpairmentClass::ALL[N_CLASSES - 1]
    }
}

pub fn generate_synthetic(seed: u64, mix: &ClassMix, count: usize) -> Dataset {
    let samples = par::build_indexed(count, |i| {
        generate_sample(&mut derive_rng(seed, STREAM_SYNTH, i as u64), mix)
    });
    Dataset { samples }
}

/// Sequential variant; bit-identical to [`generate_synthetic`].
pub fn generate_synthetic_seq(seed: u64, mix: &ClassMix, count: usize) -> Dataset {
    let samples = par::build_indexed_seq(count, |i| {
        generate_sample(&mut derive_rng(seed, STREAM_SYNTH, i as u64), mix)
    });
    Dataset { samples }
}

/// Gap kept between impairment intervals, in units of the span. Keeps two
/// anomalies from landing in one prediction grid cell.
const MIN_GAP: f32 = 10.0 / DEFAULT_INPUT_SIZE as f32;

fn overlaps_any(cand: (f32, f32), taken: &[(f32, f32)]) -> bool {
    taken
        .iter()
        .any(|t| cand.0 - MIN_GAP < t.1 && t.0 - MIN_GAP < cand.1)
}

fn place_center<R: Rng>(rng: &mut R, w: f32, taken: &[(f32, f32)]) -> Option<f32> {
    let half = w / 2.0;
    if half > 0.5 {
        return None;
    }
    for _ in 0..20 {
        let x = if half >= 0.5 { 0.5 } else { rng.gen_range(half..=1.0 - half) };
        if !overlaps_any((x - half, x + half), taken) {
            return Some(x);
        }
    }
    None
}

fn generate_sample(rng: &mut ChaCha8Rng, mix: &ClassMix) -> Sample {
    let len = rng.gen_range(1800..=2000usize);
    let base = rng.gen_range(35.0..=45.0f32);
    let sigma = rng.gen_range(0.3..=1.5f64);
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut values: Vec<f32> = (0..len).map(|_| base + noise.sample(rng) as f32).collect();

    let unit = 1.0 / DEFAULT_INPUT_SIZE as f32; // one input-size unit, proportional
    let mut annotations: Vec<Annotation> = Vec::new();
    let mut taken: Vec<(f32, f32)> = Vec::new();

    let n_impairments = rng.gen_range(0..=4usize);
    for _ in 0..n_impairments {
        let class = mix.sample(rng);
        match class {
            ImpairmentClass::Spike => {
                // spikes live on the input-size grid: width 1-3 units,
                // position snapped to unit boundaries, so the annotation is
                // exactly recoverable after binning-minimum down-sampling
                let bins = rng.gen_range(1..=3u32);
                let w = bins as f32 * unit;
                if let Some(x) = place_center(rng, w, &taken) {
                    let start_bin = ((x - w / 2.0) / unit).round().max(0.0) as usize;
                    let start_bin = start_bin.min(DEFAULT_INPUT_SIZE - bins as usize);
                    let x = (start_bin as f32 + bins as f32 / 2.0) * unit;
                    let depth = rng.gen_range(6.0..=30.0f32);
                    // keep a quarter-unit margin so the dip darkens exactly
                    // the intended bins after nearest-neighbor resampling
                    let n = values.len() as f32;
                    let last = values.len() - 1;
                    let lo = (((start_bin as f32 + 0.25) * unit * n).ceil() as usize).min(last);
                    let hi = ((start_bin as f32 + bins as f32 - 0.25) * unit * n).floor() as usize;
                    let hi = hi.clamp(lo + 1, values.len());
                    for v in values[lo..hi].iter_mut() {
                        *v -= depth;
                    }
                    push(&mut annotations, &mut taken, class, x, w);
                }
            }
            ImpairmentClass::SuckOut => {
                let w = rng.gen_range(10.0..=120.0f32) * unit;
                if let Some(x) = place_center(rng, w, &taken) {
                    let depth = rng.gen_range(5.0..=25.0f32);
                    let p_left = rng.gen_range(0.5..=2.5f32);
                    let p_right = rng.gen_range(0.5..=2.5f32);
                    // V shape: sharp corner at the center, tapering to zero
                    // at both edges along two power curves
                    apply_dip(&mut values, x, w, |u| {
                        let p = if u < 0.0 { p_left } else { p_right };
                        depth * (1.0 - u.abs()).powf(p)
                    });
                    push(&mut annotations, &mut taken, class, x, w);
                }
            }
            ImpairmentClass::Wave => {
                let w = rng.gen_range(0.2..=1.0f32);
                if let Some(x) = place_center(rng, w, &taken) {
                    let amplitude = rng.gen_range(1.0..=6.0f32);
                    let periods = rng.gen_range(3.0..=40.0f32);
                    let phase = rng.gen_range(0.0..std::f32::consts::TAU);
                    let n = values.len();
                    let (lo, hi) = span_indices(x, w, n);
                    for (k, v) in values[lo..hi].iter_mut().enumerate() {
                        let t = k as f32 / (hi - lo).max(1) as f32;
                        *v += amplitude * (std::f32::consts::TAU * periods * t + phase).sin();
                    }
                    push(&mut annotations, &mut taken, class, x, w);
                }
            }
            ImpairmentClass::RollOff => {
                let frac = rng.gen_range(0.03..=0.15f32);
                let first_side = rng.gen_bool(0.5);
                let mut placed = false;
                for side_right in [first_side, !first_side] {
                    let x = if side_right { 1.0 - frac / 2.0 } else { frac / 2.0 };
                    let half = frac / 2.0;
                    if overlaps_any((x - half, x + half), &taken) {
                        continue;
                    }
                    let depth = rng.gen_range(5.0..=40.0f32);
                    let power = rng.gen_range(1.5..=4.0f32);
                    let n = values.len();
                    let (lo, hi) = span_indices(x, frac, n);
                    for (k, v) in values[lo..hi].iter_mut().enumerate() {
                        // t runs 0 -> 1 toward the spectrum edge
                        let t = if side_right {
                            (k + 1) as f32 / (hi - lo) as f32
                        } else {
                            1.0 - k as f32 / (hi - lo) as f32
                        };
                        *v -= depth * t.powf(power);
                    }
                    push(&mut annotations, &mut taken, class, x, frac);
                    placed = true;
                    break;
                }
                let _ = placed;
            }
            ImpairmentClass::LteIngress => {
                let w = rng.gen_range(40.0..=120.0f32) * unit;
                if let Some(x) = place_center(rng, w, &taken) {
                    let drop = rng.gen_range(8.0..=25.0f32);
                    let extra = rng.gen_range(1.0..=3.0f64);
                    let band_noise = Normal::new(0.0, extra).unwrap();
                    let n = values.len();
                    let (lo, hi) = span_indices(x, w, n);
                    for v in values[lo..hi].iter_mut() {
                        *v -= drop + band_noise.sample(rng).abs() as f32;
                    }
                    push(&mut annotations, &mut taken, class, x, w);
                }
            }
        }
    }

    for v in values.iter_mut() {
        *v = v.clamp(0.0, MER_MAX);
    }

    Sample { values, annotations, source: SourceTag::Synthetic }
}

fn push(
    annotations: &mut Vec<Annotation>,
    taken: &mut Vec<(f32, f32)>,
    class: ImpairmentClass,
    x: f32,
    w: f32,
) {
    annotations.push(Annotation { class, x, w });
    taken.push((x - w / 2.0, x + w / 2.0));
}

fn span_indices(x: f32, w: f32, n: usize) -> (usize, usize) {
    let lo = (((x - w / 2.0) * n as f32).round().max(0.0)) as usize;
    let hi = (((x + w / 2.0) * n as f32).round() as usize).min(n);
    (lo.min(n - 1), hi.max(lo + 1))
}

/// Subtract `depth(u)` over the interval, `u` in [-1, 1] across its width.
fn apply_dip(values: &mut [f32], x: f32, w: f32, depth: impl Fn(f32) -> f32) {
    let n = values.len();
    let (lo, hi) = span_indices(x, w, n);
    let span = (hi - lo).max(1) as f32;
    for (k, v) in values[lo..hi].iter_mut().enumerate() {
        let u = ((k as f32 + 0.5) / span) * 2.0 - 1.0;
        *v -= depth(u);
    }
}
