//! Value-level compute kernels shared by the tape and by inference
//! paths that skip recording.

use crate::error::{Error, Result};
use crate::real::Real;

pub(crate) fn matmul_shape(a: &[usize], b: &[usize]) -> Result<(usize, usize)> {
    if a.len() != 2 || b.len() != 2 || a[1] != b[0] {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            lhs: a.to_vec(),
            rhs: b.to_vec(),
        });
    }
    Ok((a[0], b[1]))
}

/// `out = a · b` for row-major 2-D buffers. Shapes must already agree.
pub(crate) fn matmul_into<T: Real>(
    a: &[T],
    a_shape: &[usize],
    b: &[T],
    b_shape: &[usize],
    out: &mut [T],
) {
    let (m, k, n) = (a_shape[0], a_shape[1], b_shape[1]);
    debug_assert_eq!(out.len(), m * n);
    unsafe {
        T::gemm(
            m,
            k,
            n,
            T::ONE,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            T::ZERO,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[inline]
pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    T::ONE / (T::ONE + (-x).exp())
}

/// Biased squared MMD between the row sets of `a` and `b` (both
/// `rows × dim`) under `k(u,v) = c / (c + ‖u-v‖²)`. The diagonal is
/// included, so identical inputs give exactly zero.
pub(crate) fn mmd_imq_value<T: Real>(a: &[T], b: &[T], rows: usize, dim: usize, c: T) -> T {
    let kmean = |x: &[T], y: &[T]| -> T {
        let mut s = T::ZERO;
        for i in 0..rows {
            for j in 0..rows {
                let mut d2 = T::ZERO;
                for t in 0..dim {
                    let d = x[i * dim + t] - y[j * dim + t];
                    d2 += d * d;
                }
                s += c / (c + d2);
            }
        }
        s / T::from_f64((rows * rows) as f64)
    };
    kmean(a, a) + kmean(b, b) - T::from_f64(2.0) * kmean(a, b)
}

/// Gradients of `g0 * mmd_imq_value(a, b)` with respect to `a` and `b`.
pub(crate) fn mmd_imq_grads<T: Real>(
    a: &[T],
    b: &[T],
    rows: usize,
    dim: usize,
    c: T,
    g0: T,
) -> (Vec<T>, Vec<T>) {
    let mut ga = vec![T::ZERO; a.len()];
    let mut gb = vec![T::ZERO; b.len()];
    let n2 = T::from_f64((rows * rows) as f64);
    let two = T::from_f64(2.0);

    // For one ordered pair, ∂k(u,v)/∂u = -(2k²/c)(u-v) and the
    // v-position gradient is its negative. `weight` is the term's
    // coefficient in the estimator.
    let pair = |x: &[T], y: &[T], gx: &mut [T], gy: &mut [T], weight: T| {
        for i in 0..rows {
            for j in 0..rows {
                let mut d2 = T::ZERO;
                for t in 0..dim {
                    let d = x[i * dim + t] - y[j * dim + t];
                    d2 += d * d;
                }
                let k = c / (c + d2);
                let coef = weight * two * k * k / c;
                for t in 0..dim {
                    let d = x[i * dim + t] - y[j * dim + t];
                    gx[i * dim + t] -= coef * d;
                    gy[j * dim + t] += coef * d;
                }
            }
        }
    };

    // Same-set terms hit both argument positions of the same buffer;
    // routing the second position through a scratch buffer and adding
    // keeps the closure free of aliasing.
    let w_same = g0 / n2;
    let mut scratch = vec![T::ZERO; a.len()];
    pair(a, a, &mut ga, &mut scratch, w_same);
    for (g, s) in ga.iter_mut().zip(&scratch) {
        *g += *s;
    }
    scratch.iter_mut().for_each(|s| *s = T::ZERO);
    pair(b, b, &mut gb, &mut scratch, w_same);
    for (g, s) in gb.iter_mut().zip(&scratch) {
        *g += *s;
    }
    // Cross term carries weight -2/n².
    let w_cross = -two * g0 / n2;
    pair(a, b, &mut ga, &mut gb, w_cross);

    (ga, gb)
}
