use super::{kernels, DenseBlock, LinalgError, Real};

/// Borrowed lower-triangular factor: the leading `dim×dim` window of a
/// row-major buffer with row stride `ld`.
#[derive(Debug, Clone, Copy)]
pub struct FactorView<'a, T> {
    data: &'a [T],
    dim: usize,
    ld: usize,
}

impl<'a, T: Real> FactorView<'a, T> {
    pub fn new(data: &'a [T], dim: usize, ld: usize) -> Self {
        assert!(ld >= dim && data.len() >= dim.saturating_sub(1) * ld + dim);
        Self { data, dim, ld }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn ld(&self) -> usize {
        self.ld
    }

    #[inline]
    pub fn data(&self) -> &'a [T] {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.ld + j]
    }
}

/// Block lower-triangular Cholesky factor grown one block column at a time.
///
/// The whole `(capacity·N_t)²` buffer is allocated once; appending a block
/// only writes the new block row, so the factor never reallocates.
#[derive(Debug, Clone)]
pub struct LowerTriangularFactor<T = f64> {
    storage: Vec<T>,
    capacity_blocks: usize,
    block_size: usize,
    n_blocks: usize,
}

impl<T: Real> LowerTriangularFactor<T> {
    pub fn new(capacity_blocks: usize, block_size: usize) -> Self {
        let ld = capacity_blocks * block_size;
        Self {
            storage: vec![T::zero(); ld * ld],
            capacity_blocks,
            block_size,
            n_blocks: 0,
        }
    }

    #[inline]
    pub fn block_size(&self) -> usize {
        self.block_size
    }

    #[inline]
    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    #[inline]
    pub fn capacity_blocks(&self) -> usize {
        self.capacity_blocks
    }

    #[inline]
    pub fn active_dim(&self) -> usize {
        self.n_blocks * self.block_size
    }

    #[inline]
    fn ld(&self) -> usize {
        self.capacity_blocks * self.block_size
    }

    pub fn view(&self) -> FactorView<'_, T> {
        FactorView {
            data: &self.storage,
            dim: self.active_dim(),
            ld: self.ld(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.storage[i * self.ld() + j]
    }

    /// Append `[Yᵀ L_M]` as the next block row.
    ///
    /// `y` holds the `active_dim × N_t` solution of `L·Y = K_{S,s}` and
    /// `l_m` the `N_t × N_t` Cholesky factor of the Schur complement. Only the
    /// lower triangle of `l_m` is copied.
    pub fn append_block_column(&mut self, y: &[T], l_m: &[T]) -> Result<(), LinalgError> {
        let nt = self.block_size;
        let k_dim = self.active_dim();
        if self.n_blocks >= self.capacity_blocks {
            return Err(LinalgError::BudgetExceeded {
                capacity: self.capacity_blocks,
            });
        }
        if y.len() < k_dim * nt || l_m.len() < nt * nt {
            return Err(LinalgError::DimensionMismatch {
                expected: (k_dim, nt),
                got: (y.len() / nt.max(1), nt),
            });
        }
        let ld = self.ld();
        for a in 0..nt {
            let row = &mut self.storage[(k_dim + a) * ld..(k_dim + a + 1) * ld];
            for (c, v) in row[..k_dim].iter_mut().enumerate() {
                *v = y[c * nt + a];
            }
            for b in 0..nt {
                row[k_dim + b] = if b <= a { l_m[a * nt + b] } else { T::zero() };
            }
        }
        self.n_blocks += 1;
        Ok(())
    }

    /// Overwrite with a factor computed elsewhere (the naive baseline).
    pub(crate) fn load_from(
        &mut self,
        src: &[T],
        src_ld: usize,
        n_blocks: usize,
    ) -> Result<(), LinalgError> {
        if n_blocks > self.capacity_blocks {
            return Err(LinalgError::BudgetExceeded {
                capacity: self.capacity_blocks,
            });
        }
        let dim = n_blocks * self.block_size;
        let ld = self.ld();
        for i in 0..dim {
            self.storage[i * ld..i * ld + dim].copy_from_slice(&src[i * src_ld..i * src_ld + dim]);
        }
        self.n_blocks = n_blocks;
        Ok(())
    }

    pub fn logdet(&self) -> Result<f64, LinalgError> {
        kernels::logdet_lower(&self.storage, self.active_dim(), self.ld())
    }

    /// Active window copied out as a compact matrix.
    pub fn to_dense(&self) -> DenseBlock<T> {
        let n = self.active_dim();
        let ld = self.ld();
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            data.extend_from_slice(&self.storage[i * ld..i * ld + n]);
        }
        DenseBlock::from_vec(n, n, data).expect("sized above")
    }

    /// `L·Lᵀ` of the active window, in `f64`.
    pub fn reconstruct(&self) -> DenseBlock<f64> {
        self.to_dense().cast::<f64>().lower_gram()
    }

    pub fn clear(&mut self) {
        self.storage.iter_mut().for_each(|v| *v = T::zero());
        self.n_blocks = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_append_copies_schur_factor() {
        let mut f = LowerTriangularFactor::<f64>::new(2, 1);
        f.append_block_column(&[], &[2.0]).unwrap();
        assert_eq!(f.to_dense(), DenseBlock::from_rows(&[&[2.0]]));
    }

    #[test]
    fn second_append_builds_two_by_two() {
        let mut f = LowerTriangularFactor::<f64>::new(2, 1);
        f.append_block_column(&[], &[2.0]).unwrap();
        f.append_block_column(&[1.0], &[2.0]).unwrap();
        assert_eq!(
            f.to_dense(),
            DenseBlock::from_rows(&[&[2.0, 0.0], &[1.0, 2.0]])
        );
        assert_eq!(
            f.reconstruct(),
            DenseBlock::from_rows(&[&[4.0, 2.0], &[2.0, 5.0]])
        );
    }

    #[test]
    fn append_past_capacity_fails() {
        let mut f = LowerTriangularFactor::<f64>::new(1, 1);
        f.append_block_column(&[], &[1.0]).unwrap();
        assert_eq!(
            f.append_block_column(&[0.0], &[1.0]),
            Err(LinalgError::BudgetExceeded { capacity: 1 })
        );
    }

    #[test]
    fn upper_part_of_schur_factor_is_not_copied() {
        let mut f = LowerTriangularFactor::<f64>::new(1, 2);
        f.append_block_column(&[], &[1.0, 9.0, 0.5, 1.0]).unwrap();
        assert_eq!(f.get(0, 1), 0.0);
    }
}
