//! Batch normalization over `(batch, position)` per channel.
//!
//! Train phase normalizes with the mini-batch statistics and blends them
//! into the running estimates (`running <- m * running + (1 - m) * batch`);
//! infer phase uses the running estimates only. Variance is the biased
//! estimator, consistent between normalization and the running blend.

use crate::error::{Error, Result};
use crate::par;
use crate::tensor::Scalar;

pub const DEFAULT_EPSILON: f64 = 1e-5;
pub const DEFAULT_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone)]
pub struct BatchNormParams<T> {
    pub channels: usize,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub epsilon: T,
    /// Fraction of the old running statistic kept per update.
    pub momentum: T,
    pub grad_gamma: Vec<T>,
    pub grad_beta: Vec<T>,
}

/// Forward-pass context needed by [`BatchNormParams::backward`].
#[derive(Debug, Clone)]
pub struct BnCache<T> {
    /// Normalized pre-affine values, same shape as the input.
    pub x_hat: Vec<T>,
    /// Per-channel `1 / sqrt(var + eps)` from the forward pass.
    pub inv_std: Vec<T>,
}

impl<T: Scalar> BatchNormParams<T> {
    pub fn new(channels: usize) -> Result<Self> {
        if channels == 0 {
            return Err(Error::Config("batchnorm channels must be positive".into()));
        }
        Ok(BatchNormParams {
            channels,
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            epsilon: T::of(DEFAULT_EPSILON),
            momentum: T::of(DEFAULT_MOMENTUM),
            grad_gamma: vec![T::zero(); channels],
            grad_beta: vec![T::zero(); channels],
        })
    }

    pub fn param_count(&self) -> usize {
        self.gamma.len() + self.beta.len()
    }

    /// Train-phase forward: returns the cache backward needs and updates the
    /// running statistics.
    pub fn forward_train(&mut self, x: &[T], batch: usize, len: usize, y: &mut [T]) -> BnCache<T> {
        assert_eq!(x.len(), batch * self.channels * len, "batchnorm input shape mismatch");
        assert_eq!(y.len(), x.len());
        let m = T::from_usize(batch * len).unwrap();

        let mut mean = vec![T::zero(); self.channels];
        let mut var = vec![T::zero(); self.channels];
        for c in 0..self.channels {
            let mut sum = T::zero();
            for b in 0..batch {
                let row = &x[(b * self.channels + c) * len..][..len];
                for v in row {
                    sum += *v;
                }
            }
            let mu = sum / m;
            let mut sq = T::zero();
            for b in 0..batch {
                let row = &x[(b * self.channels + c) * len..][..len];
                for v in row {
                    let d = *v - mu;
                    sq += d * d;
                }
            }
            mean[c] = mu;
            var[c] = sq / m;
        }

        for c in 0..self.channels {
            self.running_mean[c] = self.momentum * self.running_mean[c] + (T::one() - self.momentum) * mean[c];
            self.running_var[c] = self.momentum * self.running_var[c] + (T::one() - self.momentum) * var[c];
        }

        let inv_std: Vec<T> = var.iter().map(|v| T::one() / (*v + self.epsilon).sqrt()).collect();
        let mut x_hat = vec![T::zero(); x.len()];

        let channels = self.channels;
        par::for_each_chunk_mut(&mut x_hat, len, |row, xh_row| {
            let c = row % channels;
            let base = row * len;
            for (xh, xv) in xh_row.iter_mut().zip(&x[base..base + len]) {
                *xh = (*xv - mean[c]) * inv_std[c];
            }
        });

        let gamma = &self.gamma;
        let beta = &self.beta;
        let x_hat_ref = &x_hat;
        par::for_each_chunk_mut(y, len, |row, y_row| {
            let c = row % channels;
            let base = row * len;
            for (yo, xh) in y_row.iter_mut().zip(&x_hat_ref[base..base + len]) {
                *yo = gamma[c] * *xh + beta[c];
            }
        });

        BnCache { x_hat, inv_std }
    }

    /// Infer-phase forward using running statistics; immutable, so safe to
    /// call from many threads over a shared model.
    pub fn forward_infer(&self, x: &[T], batch: usize, len: usize, y: &mut [T]) {
        assert_eq!(x.len(), batch * self.channels * len, "batchnorm input shape mismatch");
        assert_eq!(y.len(), x.len());
        for b in 0..batch {
            for c in 0..self.channels {
                let inv = T::one() / (self.running_var[c] + self.epsilon).sqrt();
                let scale = self.gamma[c] * inv;
                let shift = self.beta[c] - self.running_mean[c] * scale;
                let base = (b * self.channels + c) * len;
                for (yo, xv) in y[base..base + len].iter_mut().zip(&x[base..base + len]) {
                    *yo = scale * *xv + shift;
                }
            }
        }
    }

    /// Train-phase backward. Accumulates gamma/beta gradients and writes the
    /// input gradient.
    pub fn backward(&mut self, cache: &BnCache<T>, gy: &[T], gx: &mut [T], batch: usize, len: usize) {
        assert_eq!(gy.len(), batch * self.channels * len);
        assert_eq!(gx.len(), gy.len());
        let m = T::from_usize(batch * len).unwrap();

        // per-channel reductions in fixed order
        let mut sum_gy = vec![T::zero(); self.channels];
        let mut sum_gy_xhat = vec![T::zero(); self.channels];
        for c in 0..self.channels {
            let mut s1 = T::zero();
            let mut s2 = T::zero();
            for b in 0..batch {
                let base = (b * self.channels + c) * len;
                for (g, xh) in gy[base..base + len].iter().zip(&cache.x_hat[base..base + len]) {
                    s1 += *g;
                    s2 += *g * *xh;
                }
            }
            sum_gy[c] = s1;
            sum_gy_xhat[c] = s2;
        }
        for c in 0..self.channels {
            self.grad_beta[c] += sum_gy[c];
            self.grad_gamma[c] += sum_gy_xhat[c];
        }

        let channels = self.channels;
        let gamma = &self.gamma;
        let inv_std = &cache.inv_std;
        let x_hat = &cache.x_hat;
        par::for_each_chunk_mut(gx, len, |row, gx_row| {
            let c = row % channels;
            let base = row * len;
            let k = gamma[c] * inv_std[c];
            let mean_gy = sum_gy[c] / m;
            let mean_gy_xhat = sum_gy_xhat[c] / m;
            for (p, go) in gx_row.iter_mut().enumerate() {
                let g = gy[base + p];
                let xh = x_hat[base + p];
                *go += k * (g - mean_gy - xh * mean_gy_xhat);
            }
        });
    }

    pub fn zero_grads(&mut self) {
        self.grad_gamma.fill(T::zero());
        self.grad_beta.fill(T::zero());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_channel_is_zeroed() {
        // zero variance: epsilon keeps the division finite, output is 0
        let mut bn = BatchNormParams::<f32>::new(1).unwrap();
        let x = vec![3.5f32; 8];
        let mut y = vec![0.0; 8];
        bn.forward_train(&x, 4, 2, &mut y);
        for v in y {
            assert!(v.abs() < 1e-4, "expected ~0, got {v}");
        }
    }

    #[test]
    fn two_point_normalization() {
        // inputs {1,3}: mean 2, var 1 -> outputs {-1,+1} as eps -> 0
        let mut bn = BatchNormParams::<f64>::new(1).unwrap();
        bn.epsilon = 1e-12;
        let mut y = vec![0.0; 2];
        bn.forward_train(&[1.0, 3.0], 2, 1, &mut y);
        assert!((y[0] + 1.0).abs() < 1e-5);
        assert!((y[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn infer_identity_with_unit_stats() {
        let mut bn = BatchNormParams::<f32>::new(2).unwrap();
        bn.epsilon = 0.0;
        let x: Vec<f32> = (0..12).map(|i| i as f32 * 0.25 - 1.0).collect();
        let mut y = vec![0.0; 12];
        bn.forward_infer(&x, 2, 3, &mut y);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn train_stats_near_standard() {
        // batch >= 8 of non-degenerate inputs: |mean| < 1e-5, |var - 1| < 1e-3
        let mut bn = BatchNormParams::<f32>::new(3).unwrap();
        let batch = 8;
        let len = 16;
        let x: Vec<f32> = (0..batch * 3 * len)
            .map(|i| ((i as f32 * 0.7).sin() * 2.0 + (i % 5) as f32) * 0.9)
            .collect();
        let mut y = vec![0.0; x.len()];
        bn.forward_train(&x, batch, len, &mut y);
        let m = (batch * len) as f64;
        for c in 0..3 {
            let mut sum = 0.0f64;
            let mut sq = 0.0f64;
            for b in 0..batch {
                for p in 0..len {
                    let v = y[(b * 3 + c) * len + p] as f64;
                    sum += v;
                    sq += v * v;
                }
            }
            let mean = sum / m;
            let var = sq / m - mean * mean;
            assert!(mean.abs() < 1e-5, "channel {c} mean {mean}");
            assert!((var - 1.0).abs() < 1e-3, "channel {c} var {var}");
        }
    }

    #[test]
    fn running_stats_blend() {
        let mut bn = BatchNormParams::<f64>::new(1).unwrap();
        bn.momentum = 0.9;
        let x = vec![1.0, 3.0];
        let mut y = vec![0.0; 2];
        bn.forward_train(&x, 2, 1, &mut y);
        // running_mean: 0.9*0 + 0.1*2 = 0.2; running_var: 0.9*1 + 0.1*1 = 1.0
        assert!((bn.running_mean[0] - 0.2).abs() < 1e-12);
        assert!((bn.running_var[0] - 1.0).abs() < 1e-12);
        assert!(bn.running_var[0] >= 0.0);
    }
}
