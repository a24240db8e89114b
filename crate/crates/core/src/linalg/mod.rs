//! Dense blocked linear algebra used by the selector.
//!
//! Everything here works on row-major storage. The slice-level kernels in
//! [`kernels`] operate in place on caller-provided buffers and never allocate;
//! [`DenseBlock`] and [`LowerTriangularFactor`] are thin owners around them.

mod block;
mod factor;
pub mod kernels;

use std::fmt::Debug;

use num_traits::Float;
use serde::{Deserialize, Serialize};

pub use block::DenseBlock;
pub use factor::{FactorView, LowerTriangularFactor};

/// Errors raised by the dense kernels.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("matrix is not positive definite (pivot {pivot_index} is not strictly positive)")]
    NotPositiveDefinite { pivot_index: usize },
    #[error("triangular factor is singular at diagonal entry {index}")]
    SingularFactor { index: usize },
    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("log-determinant is not finite (diagonal entry {index} is not strictly positive)")]
    NonFiniteResult { index: usize },
    #[error("factor capacity of {capacity} blocks exhausted")]
    BudgetExceeded { capacity: usize },
}

/// Floating-point precision used by the candidate-scoring kernels.
///
/// Storage and reported objectives are always `f64`; `F32` only changes the
/// arithmetic inside the factor, triangular solves and Schur complements.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F64,
    F32,
}

/// Scalar type accepted by the kernels.
pub trait Real: Float + Default + Debug + Send + Sync + 'static {
    /// Round an `f64` into this precision.
    fn narrow(x: f64) -> Self;
    /// Widen to `f64` without loss.
    fn widen(self) -> f64;
}

impl Real for f64 {
    #[inline]
    fn narrow(x: f64) -> Self {
        x
    }
    #[inline]
    fn widen(self) -> f64 {
        self
    }
}

impl Real for f32 {
    #[inline]
    fn narrow(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn widen(self) -> f64 {
        self as f64
    }
}

/// Copy `src` into `dst`, rounding to the destination precision.
#[inline]
pub fn narrow_into<T: Real>(dst: &mut [T], src: &[f64]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = T::narrow(s);
    }
}

/// Factor `block` in place; see [`kernels::cholesky_lower`].
pub fn cholesky_in_place<T: Real>(block: &mut DenseBlock<T>) -> Result<(), LinalgError> {
    let n = block.rows();
    if block.cols() != n {
        return Err(LinalgError::DimensionMismatch {
            expected: (n, n),
            got: (block.rows(), block.cols()),
        });
    }
    kernels::cholesky_lower(block.as_mut_slice(), n, n)
}

/// Solve `L·Y = rhs` by forward substitution, writing `Y` into `out`.
pub fn solve_lower_triangular<T: Real>(
    l: FactorView<'_, T>,
    rhs: &DenseBlock<T>,
    out: &mut DenseBlock<T>,
) -> Result<(), LinalgError> {
    if rhs.rows() != l.dim() {
        return Err(LinalgError::DimensionMismatch {
            expected: (l.dim(), rhs.cols()),
            got: (rhs.rows(), rhs.cols()),
        });
    }
    if out.rows() != rhs.rows() || out.cols() != rhs.cols() {
        return Err(LinalgError::DimensionMismatch {
            expected: (rhs.rows(), rhs.cols()),
            got: (out.rows(), out.cols()),
        });
    }
    out.as_mut_slice().copy_from_slice(rhs.as_slice());
    kernels::forward_substitute(l.data(), l.ld(), l.dim(), out.as_mut_slice(), rhs.cols())
}

/// `K_ss − Yᵀ·Y`, symmetrized.
pub fn schur_complement<T: Real>(
    k_ss: &DenseBlock<T>,
    y: &DenseBlock<T>,
) -> Result<DenseBlock<T>, LinalgError> {
    let n = k_ss.rows();
    if k_ss.cols() != n || y.cols() != n {
        return Err(LinalgError::DimensionMismatch {
            expected: (n, n),
            got: (y.cols(), k_ss.cols()),
        });
    }
    let mut m = k_ss.clone();
    kernels::schur_update(m.as_mut_slice(), y.as_slice(), n);
    kernels::symmetrize(m.as_mut_slice(), n);
    Ok(m)
}

/// `2·Σ log(diag(L))`, accumulated in `f64`.
pub fn logdet_from_factor<T: Real>(l: FactorView<'_, T>) -> Result<f64, LinalgError> {
    kernels::logdet_lower(l.data(), l.dim(), l.ld())
}
