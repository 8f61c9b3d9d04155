//! Activation functions: leaky ReLU layers plus the sigmoid/softmax used by
//! decoding and the losses.

use crate::par;
use crate::tensor::Scalar;

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.1;

pub fn leaky_relu_forward<T: Scalar>(x: &[T], y: &mut [T], slope: T, batch: usize) {
    assert_eq!(x.len(), y.len());
    let apply = |src: &[T], dst: &mut [T]| {
        for (o, v) in dst.iter_mut().zip(src) {
            *o = if *v >= T::zero() { *v } else { slope * *v };
        }
    };
    if batch == 1 || x.len() < 1024 {
        apply(x, y);
    } else {
        let chunk = x.len() / batch;
        par::for_each_chunk_mut(y, chunk, |i, dst| apply(&x[i * chunk..(i + 1) * chunk], dst));
    }
}

/// Backward from the layer *output*: leaky ReLU with positive slope keeps the
/// sign of its input, so the output is enough to pick the branch.
pub fn leaky_relu_backward<T: Scalar>(y: &[T], gy: &[T], gx: &mut [T], slope: T) {
    assert_eq!(y.len(), gy.len());
    assert_eq!(y.len(), gx.len());
    for ((go, g), v) in gx.iter_mut().zip(gy).zip(y) {
        *go += if *v >= T::zero() { *g } else { slope * *g };
    }
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// In-place softmax, shifted by the max for stability.
pub fn softmax<T: Scalar>(v: &mut [T]) {
    if v.is_empty() {
        return;
    }
    let mut max = v[0];
    for x in v.iter() {
        if *x > max {
            max = *x;
        }
    }
    let mut sum = T::zero();
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x = *x / sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leaky_values() {
        let x = [2.0f32, -2.0, 0.0];
        let mut y = [0.0; 3];
        leaky_relu_forward(&x, &mut y, 0.1, 1);
        assert_eq!(y, [2.0, -0.2, 0.0]);
    }

    #[test]
    fn leaky_backward_slopes() {
        let y = [3.0f64, -0.1, 0.0];
        let gy = [1.0, 1.0, 1.0];
        let mut gx = [0.0; 3];
        leaky_relu_backward(&y, &gy, &mut gx, 0.1);
        assert_eq!(gx, [1.0, 0.1, 1.0]);
    }

    #[test]
    fn sigmoid_points() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        // sigmoid(ln 3) = 1 / (1 + 1/3) = 0.75
        assert!((sigmoid(3.0f64.ln()) - 0.75).abs() < 1e-12);
        // stable far out
        assert!(sigmoid(100.0f32) <= 1.0);
        assert!(sigmoid(-100.0f32) >= 0.0);
    }

    #[test]
    fn softmax_uniform_and_sum() {
        let mut v = [0.0f32; 5];
        softmax(&mut v);
        for x in v {
            assert!((x - 0.2).abs() < 1e-6);
        }
        let mut big = [100.0f32, 99.0, 98.0, 0.0];
        softmax(&mut big);
        let sum: f32 = big.iter().sum();
        assert!((sum - 1.0).abs() < 1e-5);
        assert!(big.iter().all(|x| x.is_finite()));
    }
}
