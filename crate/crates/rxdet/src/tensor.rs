//! Minimal batched 1-D tensor.
//!
//! Layout is `[batch][channel][position]`, contiguous `T`. The production
//! network runs on `f32`; every layer is generic over [`Scalar`] so the
//! gradient checks can instantiate the identical code at `f64`, where
//! central finite differences are quiet enough to compare against.

use std::fmt::{Debug, Display};
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};

/// Element type of the network: `f32` in production, `f64` in the
/// finite-difference shadow build used by tests.
pub trait Scalar:
    Float
    + FromPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Convert a config/constant value. Lossy for `f32`.
    fn of(x: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn of(x: f64) -> Self {
        x
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}

/// A batch of 1-D multi-channel feature maps.
///
/// `grad`, when allocated, always has the same shape as `data`.
#[derive(Debug, Clone)]
pub struct Tensor<T = f32> {
    batch: usize,
    channels: usize,
    len: usize,
    pub data: Vec<T>,
    pub grad: Option<Vec<T>>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(batch: usize, channels: usize, len: usize) -> Self {
        assert!(batch > 0 && channels > 0 && len > 0, "degenerate tensor shape");
        Tensor {
            batch,
            channels,
            len,
            data: vec![T::zero(); batch * channels * len],
            grad: None,
        }
    }

    pub fn from_vec(batch: usize, channels: usize, len: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), batch * channels * len, "value count must match shape");
        Tensor {
            batch,
            channels,
            len,
            data,
            grad: None,
        }
    }

    /// Single-sample, single-channel series.
    pub fn from_series(values: &[T]) -> Self {
        Tensor::from_vec(1, 1, values.len(), values.to_vec())
    }

    #[inline]
    pub fn batch(&self) -> usize {
        self.batch
    }
    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }
    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
    /// Values per sample (`channels * len`).
    #[inline]
    pub fn sample_size(&self) -> usize {
        self.channels * self.len
    }

    #[inline]
    pub fn row(&self, b: usize, c: usize) -> &[T] {
        let start = (b * self.channels + c) * self.len;
        &self.data[start..start + self.len]
    }

    #[inline]
    pub fn row_mut(&mut self, b: usize, c: usize) -> &mut [T] {
        let start = (b * self.channels + c) * self.len;
        &mut self.data[start..start + self.len]
    }

    /// All channels of one sample.
    #[inline]
    pub fn sample(&self, b: usize) -> &[T] {
        let size = self.sample_size();
        &self.data[b * size..(b + 1) * size]
    }

    pub fn alloc_grad(&mut self) {
        if self.grad.is_none() {
            self.grad = Some(vec![T::zero(); self.data.len()]);
        }
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = &mut self.grad {
            g.fill(T::zero());
        }
    }

    pub fn grad_slice(&self) -> &[T] {
        self.grad.as_deref().expect("gradient buffer not allocated")
    }

    pub fn grad_mut(&mut self) -> &mut [T] {
        self.grad.as_deref_mut().expect("gradient buffer not allocated")
    }
}
