//! 1-D convolution with hand-written forward and backward passes.
//!
//! Layout: input `[batch][in_ch][len]`, weights `[out_ch][in_ch][k]`,
//! output `[batch][out_ch][out_len]`. Kernel sizes are 1 or 3, strides 1
//! or 2, with zero padding `(k - 1) / 2` on both sides so stride-1 convs
//! preserve length.
//!
//! A full mini-batch is processed per call; the batched paths run one
//! rayon task per output row (forward, input grads) or per output channel
//! (weight grads), each of which iterates its reduction dimension in a
//! fixed order, so results do not depend on the thread count.

use rand::Rng;

use crate::error::{Error, Result};
use crate::par;
use crate::tensor::Scalar;

#[derive(Debug, Clone)]
pub struct ConvParams<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub zero_pad: usize,
    /// `[out_ch][in_ch][k]`, row-major.
    pub weights: Vec<T>,
    /// Present only when no batchnorm follows the convolution.
    pub bias: Option<Vec<T>>,
    pub grad_weights: Vec<T>,
    pub grad_bias: Option<Vec<T>>,
}

impl<T: Scalar> ConvParams<T> {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        stride: usize,
        with_bias: bool,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 {
            return Err(Error::Config("conv channels must be positive".into()));
        }
        if kernel_size != 1 && kernel_size != 3 {
            return Err(Error::Config(format!("conv kernel size {kernel_size} not in {{1,3}}")));
        }
        if stride != 1 && stride != 2 {
            return Err(Error::Config(format!("conv stride {stride} not in {{1,2}}")));
        }
        let n_w = out_channels * in_channels * kernel_size;
        Ok(ConvParams {
            in_channels,
            out_channels,
            kernel_size,
            stride,
            zero_pad: (kernel_size - 1) / 2,
            weights: vec![T::zero(); n_w],
            bias: with_bias.then(|| vec![T::zero(); out_channels]),
            grad_weights: vec![T::zero(); n_w],
            grad_bias: with_bias.then(|| vec![T::zero(); out_channels]),
        })
    }

    /// Fan-in-scaled uniform init (He-style); biases stay zero.
    pub fn init_he<R: Rng>(&mut self, rng: &mut R) {
        self.init_he_scaled(rng, 1.0);
    }

    /// He-style init shrunk by `scale`. Prediction heads start near zero so
    /// their sigmoid-decoded offsets begin mid-cell instead of saturated.
    pub fn init_he_scaled<R: Rng>(&mut self, rng: &mut R, scale: f64) {
        let fan_in = (self.in_channels * self.kernel_size) as f64;
        let limit = (6.0 / fan_in).sqrt() * scale;
        for w in &mut self.weights {
            *w = T::of(rng.gen_range(-limit..limit));
        }
    }

    #[inline]
    pub fn output_len(&self, in_len: usize) -> usize {
        (in_len + 2 * self.zero_pad - self.kernel_size) / self.stride + 1
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.as_ref().map_or(0, Vec::len)
    }

    pub fn forward(&self, x: &[T], batch: usize, in_len: usize, y: &mut [T]) {
        let out_len = self.output_len(in_len);
        assert_eq!(x.len(), batch * self.in_channels * in_len, "conv input shape mismatch");
        assert_eq!(y.len(), batch * self.out_channels * out_len, "conv output shape mismatch");

        let run_row = |row: usize, out_row: &mut [T]| {
            let b = row / self.out_channels;
            let oc = row % self.out_channels;
            out_row.fill(self.bias.as_ref().map_or(T::zero(), |bias| bias[oc]));
            for ic in 0..self.in_channels {
                let in_row = &x[(b * self.in_channels + ic) * in_len..][..in_len];
                let w = &self.weights[(oc * self.in_channels + ic) * self.kernel_size..][..self.kernel_size];
                match (self.kernel_size, self.stride) {
                    (1, 1) => axpy(w[0], in_row, out_row),
                    (3, 1) => corr3_s1(in_row, w[0], w[1], w[2], out_row),
                    (1, 2) => {
                        for (p, o) in out_row.iter_mut().enumerate() {
                            *o += w[0] * in_row[2 * p];
                        }
                    }
                    (3, 2) => corr3_s2(in_row, w[0], w[1], w[2], out_row),
                    _ => unreachable!("validated in constructor"),
                }
            }
        };

        if batch == 1 {
            for (row, out_row) in y.chunks_mut(out_len).enumerate() {
                run_row(row, out_row);
            }
        } else {
            par::for_each_chunk_mut(y, out_len, run_row);
        }
    }

    /// Accumulates weight/bias gradients and, when `gx` is given, the input
    /// gradient. `gy` is the gradient at the output, `x` the stored forward
    /// input.
    pub fn backward(&mut self, x: &[T], gx: Option<&mut [T]>, gy: &[T], batch: usize, in_len: usize) {
        let out_len = self.output_len(in_len);
        assert_eq!(x.len(), batch * self.in_channels * in_len);
        assert_eq!(gy.len(), batch * self.out_channels * out_len);

        if let Some(gx) = gx {
            assert_eq!(gx.len(), x.len());
            let run_row = |row: usize, gx_row: &mut [T]| {
                let b = row / self.in_channels;
                let ic = row % self.in_channels;
                for oc in 0..self.out_channels {
                    let gy_row = &gy[(b * self.out_channels + oc) * out_len..][..out_len];
                    let w = &self.weights[(oc * self.in_channels + ic) * self.kernel_size..][..self.kernel_size];
                    match (self.kernel_size, self.stride) {
                        (1, 1) => axpy(w[0], gy_row, gx_row),
                        // adjoint of stride-1 correlation = correlation with
                        // the reversed kernel
                        (3, 1) => corr3_s1(gy_row, w[2], w[1], w[0], gx_row),
                        (1, 2) => {
                            for (p, g) in gy_row.iter().enumerate() {
                                gx_row[2 * p] += w[0] * *g;
                            }
                        }
                        (3, 2) => {
                            for (p, g) in gy_row.iter().enumerate() {
                                let base = 2 * p as isize - 1;
                                for (k, wk) in w.iter().enumerate() {
                                    let q = base + k as isize;
                                    if q >= 0 && (q as usize) < in_len {
                                        gx_row[q as usize] += *wk * *g;
                                    }
                                }
                            }
                        }
                        _ => unreachable!(),
                    }
                }
            };
            if batch == 1 {
                for (row, gx_row) in gx.chunks_mut(in_len).enumerate() {
                    run_row(row, gx_row);
                }
            } else {
                par::for_each_chunk_mut(gx, in_len, run_row);
            }
        }

        // Weight (and bias) gradients: one task per output channel, summing
        // over batch and positions in order.
        let per_oc = self.in_channels * self.kernel_size;
        let in_channels = self.in_channels;
        let kernel_size = self.kernel_size;
        let stride = self.stride;
        let out_channels = self.out_channels;
        par::for_each_chunk_mut(&mut self.grad_weights, per_oc, |oc, gw| {
            for b in 0..batch {
                let gy_row = &gy[(b * out_channels + oc) * out_len..][..out_len];
                for ic in 0..in_channels {
                    let x_row = &x[(b * in_channels + ic) * in_len..][..in_len];
                    let gw_k = &mut gw[ic * kernel_size..][..kernel_size];
                    match (kernel_size, stride) {
                        (1, 1) => gw_k[0] += dot(x_row, gy_row),
                        (3, 1) => {
                            let n = in_len;
                            gw_k[0] += dot(&x_row[..n - 1], &gy_row[1..]);
                            gw_k[1] += dot(x_row, gy_row);
                            gw_k[2] += dot(&x_row[1..], &gy_row[..n - 1]);
                        }
                        (1, 2) => {
                            let mut acc = T::zero();
                            for (p, g) in gy_row.iter().enumerate() {
                                acc += x_row[2 * p] * *g;
                            }
                            gw_k[0] += acc;
                        }
                        (3, 2) => {
                            for (k, gwk) in gw_k.iter_mut().enumerate() {
                                let mut acc = T::zero();
                                for (p, g) in gy_row.iter().enumerate() {
                                    let q = 2 * p as isize - 1 + k as isize;
                                    if q >= 0 && (q as usize) < in_len {
                                        acc += x_row[q as usize] * *g;
                                    }
                                }
                                *gwk += acc;
                            }
                        }
                        _ => unreachable!(),
                    }
                }
            }
        });

        if let Some(gb) = &mut self.grad_bias {
            for b in 0..batch {
                for (oc, gbo) in gb.iter_mut().enumerate() {
                    let gy_row = &gy[(b * self.out_channels + oc) * out_len..][..out_len];
                    let mut acc = T::zero();
                    for g in gy_row {
                        acc += *g;
                    }
                    *gbo += acc;
                }
            }
        }
    }

    pub fn zero_grads(&mut self) {
        self.grad_weights.fill(T::zero());
        if let Some(gb) = &mut self.grad_bias {
            gb.fill(T::zero());
        }
    }
}

#[inline]
fn axpy<T: Scalar>(a: T, x: &[T], y: &mut [T]) {
    for (o, v) in y.iter_mut().zip(x) {
        *o += a * *v;
    }
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b) {
        acc += *x * *y;
    }
    acc
}

/// Stride-1 3-tap correlation with one zero pad each side; `y.len() == x.len()`.
#[inline]
fn corr3_s1<T: Scalar>(x: &[T], w0: T, w1: T, w2: T, y: &mut [T]) {
    let n = x.len();
    if n == 1 {
        y[0] += w1 * x[0];
        return;
    }
    y[0] += w1 * x[0] + w2 * x[1];
    for (o, t) in y[1..n - 1].iter_mut().zip(x.windows(3)) {
        *o += w0 * t[0] + w1 * t[1] + w2 * t[2];
    }
    y[n - 1] += w0 * x[n - 2] + w1 * x[n - 1];
}

/// Stride-2 3-tap correlation with one zero pad each side.
#[inline]
fn corr3_s2<T: Scalar>(x: &[T], w0: T, w1: T, w2: T, y: &mut [T]) {
    let n = x.len();
    let out_len = y.len();
    let mut acc = w1 * x[0];
    if n > 1 {
        acc += w2 * x[1];
    }
    y[0] += acc;
    // last p whose 3-value window stays in bounds
    let p_full = if n >= 3 { (n - 2) / 2 } else { 0 };
    for p in 1..=p_full.min(out_len - 1) {
        let t = &x[2 * p - 1..2 * p + 2];
        y[p] += w0 * t[0] + w1 * t[1] + w2 * t[2];
    }
    for p in (p_full + 1).max(1)..out_len {
        let base = 2 * p - 1;
        let mut acc = w0 * x[base];
        if base + 1 < n {
            acc += w1 * x[base + 1];
        }
        y[p] += acc;
    }
}
