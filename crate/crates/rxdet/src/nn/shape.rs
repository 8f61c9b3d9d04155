//! Shape-manipulating layers: shortcut addition, route concatenation, and
//! nearest-neighbor up-sampling.

use crate::tensor::Scalar;

/// Elementwise sum of two same-shape maps.
pub fn shortcut_forward<T: Scalar>(a: &[T], b: &[T], y: &mut [T]) {
    assert_eq!(a.len(), b.len(), "shortcut shape mismatch");
    assert_eq!(a.len(), y.len());
    for ((o, x), z) in y.iter_mut().zip(a).zip(b) {
        *o = *x + *z;
    }
}

/// Backward of the sum: the gradient flows to both parents unchanged.
pub fn shortcut_backward<T: Scalar>(gy: &[T], ga: &mut [T], gb: &mut [T]) {
    for ((g, a), b) in gy.iter().zip(ga.iter_mut()).zip(gb.iter_mut()) {
        *a += *g;
        *b += *g;
    }
}

/// Concatenate inputs along the channel axis. All inputs share `len`; a
/// single input is forwarded unchanged.
///
/// `inputs` items are `(data, channels)`; output layout is
/// `[batch][sum_channels][len]`.
pub fn route_forward<T: Scalar>(inputs: &[(&[T], usize)], batch: usize, len: usize, y: &mut [T]) {
    let total: usize = inputs.iter().map(|(_, c)| c).sum();
    assert_eq!(y.len(), batch * total * len, "route output shape mismatch");
    for (data, channels) in inputs {
        assert_eq!(data.len(), batch * channels * len, "route input length mismatch");
    }
    for b in 0..batch {
        let mut c_off = 0;
        for (data, channels) in inputs {
            let src = &data[b * channels * len..(b + 1) * channels * len];
            let dst_start = (b * total + c_off) * len;
            y[dst_start..dst_start + channels * len].copy_from_slice(src);
            c_off += channels;
        }
    }
}

/// Split the output gradient back over the inputs' channel ranges.
pub fn route_backward<T: Scalar>(gy: &[T], grads: &mut [(&mut [T], usize)], batch: usize, len: usize) {
    let total: usize = grads.iter().map(|(_, c)| c).sum();
    assert_eq!(gy.len(), batch * total * len);
    for b in 0..batch {
        let mut c_off = 0;
        for (g, channels) in grads.iter_mut() {
            let channels = *channels;
            let src = &gy[(b * total + c_off) * len..][..channels * len];
            let dst = &mut g[b * channels * len..(b + 1) * channels * len];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += *s;
            }
            c_off += channels;
        }
    }
}

/// Nearest-neighbor up-sampling by an integer factor: every value is
/// duplicated `factor` times.
pub fn upsample_forward<T: Scalar>(x: &[T], rows: usize, len: usize, factor: usize, y: &mut [T]) {
    assert_eq!(x.len(), rows * len);
    assert_eq!(y.len(), rows * len * factor);
    for r in 0..rows {
        let src = &x[r * len..(r + 1) * len];
        let dst = &mut y[r * len * factor..(r + 1) * len * factor];
        for (p, v) in src.iter().enumerate() {
            for f in 0..factor {
                dst[p * factor + f] = *v;
            }
        }
    }
}

/// Adjoint of duplication: gradients of each duplicated group are summed.
pub fn upsample_backward<T: Scalar>(gy: &[T], rows: usize, len: usize, factor: usize, gx: &mut [T]) {
    assert_eq!(gx.len(), rows * len);
    assert_eq!(gy.len(), rows * len * factor);
    for r in 0..rows {
        let src = &gy[r * len * factor..(r + 1) * len * factor];
        let dst = &mut gx[r * len..(r + 1) * len];
        for (p, o) in dst.iter_mut().enumerate() {
            let mut acc = T::zero();
            for f in 0..factor {
                acc += src[p * factor + f];
            }
            *o += acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shortcut_add_and_grad() {
        let a = [1.0f32, 2.0];
        let b = [3.0, 4.0];
        let mut y = [0.0; 2];
        shortcut_forward(&a, &b, &mut y);
        assert_eq!(y, [4.0, 6.0]);

        let gy = [0.5, -1.0];
        let mut ga = [0.0; 2];
        let mut gb = [0.0; 2];
        shortcut_backward(&gy, &mut ga, &mut gb);
        assert_eq!(ga, gy);
        assert_eq!(gb, gy);
    }

    #[test]
    fn route_concat_channels() {
        // 4x13 ++ 8x13 -> 12x13
        let a = vec![1.0f32; 4 * 13];
        let b = vec![2.0f32; 8 * 13];
        let mut y = vec![0.0; 12 * 13];
        route_forward(&[(&a, 4), (&b, 8)], 1, 13, &mut y);
        assert!(y[..4 * 13].iter().all(|v| *v == 1.0));
        assert!(y[4 * 13..].iter().all(|v| *v == 2.0));
    }

    #[test]
    fn route_single_is_identity() {
        let a: Vec<f32> = (0..6).map(|i| i as f32).collect();
        let mut y = vec![0.0; 6];
        route_forward(&[(&a, 2)], 1, 3, &mut y);
        assert_eq!(y, a);
    }

    #[test]
    fn route_grad_roundtrip_lossless() {
        let gy: Vec<f64> = (0..2 * 5 * 3).map(|i| (i as f64).sin()).collect();
        let mut ga = vec![0.0; 2 * 2 * 3];
        let mut gb = vec![0.0; 2 * 3 * 3];
        {
            let mut grads: [(&mut [f64], usize); 2] = [(&mut ga, 2), (&mut gb, 3)];
            route_backward(&gy, &mut grads, 2, 3);
        }
        // re-concatenate and compare
        let mut back = vec![0.0; gy.len()];
        route_forward(&[(&ga, 2), (&gb, 3)], 2, 3, &mut back);
        assert_eq!(back, gy);
    }

    #[test]
    fn upsample_duplicates_and_sums() {
        let x = [1.0f32, 2.0];
        let mut y = [0.0; 4];
        upsample_forward(&x, 1, 2, 2, &mut y);
        assert_eq!(y, [1.0, 1.0, 2.0, 2.0]);

        let gy = [1.0f32, 2.0, 3.0, 4.0];
        let mut gx = [0.0; 2];
        upsample_backward(&gy, 1, 2, 2, &mut gx);
        assert_eq!(gx, [3.0, 7.0]);
    }

    #[test]
    fn upsample_doubles_grid() {
        let x = vec![0.5f32; 3 * 13];
        let mut y = vec![0.0; 3 * 26];
        upsample_forward(&x, 3, 13, 2, &mut y);
        assert_eq!(y.len(), 3 * 26);
    }
}
