//! Allocation-free kernels on row-major slices.
//!
//! `ld` is the leading dimension (row stride) of a matrix stored in a larger
//! buffer, so the same routines serve both compact blocks and windows into
//! the preallocated factor.

use super::{LinalgError, Real};

/// Rows processed together by the Cholesky sweep; each previously finished
/// row is streamed once per tile instead of once per row.
const ROW_TILE: usize = 32;

#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] = acc[0] + x[0] * y[0];
        acc[1] = acc[1] + x[1] * y[1];
        acc[2] = acc[2] + x[2] * y[2];
        acc[3] = acc[3] + x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s = s + *x * *y;
    }
    s
}

/// In-place lower Cholesky factorization of the leading `n×n` window of `a`.
///
/// Only the lower triangle is read. On success the lower triangle holds `L`
/// and the strict upper triangle of the window is zeroed. Fails on the first
/// pivot that is not strictly positive and finite; no jitter is added.
pub fn cholesky_lower<T: Real>(a: &mut [T], n: usize, ld: usize) -> Result<(), LinalgError> {
    debug_assert!(ld >= n && a.len() >= n.saturating_sub(1) * ld + n);
    let mut tile_start = 0;
    while tile_start < n {
        let tile_end = (tile_start + ROW_TILE).min(n);
        for j in 0..tile_end {
            let first = j.max(tile_start);
            for i in first..tile_end {
                let s = {
                    let row_i = &a[i * ld..i * ld + j];
                    let row_j = &a[j * ld..j * ld + j];
                    a[i * ld + j] - dot(row_i, row_j)
                };
                if i == j {
                    if !(s > T::zero()) || !s.is_finite() {
                        return Err(LinalgError::NotPositiveDefinite { pivot_index: j });
                    }
                    a[j * ld + j] = s.sqrt();
                } else {
                    a[i * ld + j] = s / a[j * ld + j];
                }
            }
        }
        tile_start = tile_end;
    }
    for i in 0..n {
        for v in &mut a[i * ld + i + 1..i * ld + n] {
            *v = T::zero();
        }
    }
    Ok(())
}

/// Solve `L·Y = B` in place, where `b` holds `n` rows of width `m`.
pub fn forward_substitute<T: Real>(
    l: &[T],
    ld: usize,
    n: usize,
    b: &mut [T],
    m: usize,
) -> Result<(), LinalgError> {
    debug_assert!(b.len() >= n * m);
    for i in 0..n {
        let lii = l[i * ld + i];
        if lii == T::zero() || !lii.is_finite() {
            return Err(LinalgError::SingularFactor { index: i });
        }
        let (done, rest) = b.split_at_mut(i * m);
        let row = &mut rest[..m];
        for (p, &lip) in l[i * ld..i * ld + i].iter().enumerate() {
            let yp = &done[p * m..(p + 1) * m];
            for (r, &y) in row.iter_mut().zip(yp) {
                *r = *r - lip * y;
            }
        }
        for r in row.iter_mut() {
            *r = *r / lii;
        }
    }
    Ok(())
}

/// `M ← M − Yᵀ·Y` where `y` holds rows of width `n` and `m` is `n×n`.
pub fn schur_update<T: Real>(m: &mut [T], y: &[T], n: usize) {
    for yrow in y.chunks_exact(n) {
        for (a, &ya) in yrow.iter().enumerate() {
            let mrow = &mut m[a * n..(a + 1) * n];
            for (mv, &yb) in mrow.iter_mut().zip(yrow) {
                *mv = *mv - ya * yb;
            }
        }
    }
}

/// Replace `M` by `(M + Mᵀ)/2`.
pub fn symmetrize<T: Real>(m: &mut [T], n: usize) {
    let half = T::narrow(0.5);
    for a in 0..n {
        for b in a + 1..n {
            let v = (m[a * n + b] + m[b * n + a]) * half;
            m[a * n + b] = v;
            m[b * n + a] = v;
        }
    }
}

/// `2·Σ log L_ii` over the leading `n×n` window.
pub fn logdet_lower<T: Real>(l: &[T], n: usize, ld: usize) -> Result<f64, LinalgError> {
    let mut acc = 0.0f64;
    for i in 0..n {
        let d = l[i * ld + i].widen();
        if !(d > 0.0) || !d.is_finite() {
            return Err(LinalgError::NonFiniteResult { index: i });
        }
        acc += d.ln();
    }
    Ok(2.0 * acc)
}
