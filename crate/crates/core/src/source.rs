//! Block-granular access to `K`, in memory or on disk.

use crate::kstore::StoreError;
use crate::lti::DataSpaceHessian;

/// Read-only access to the blocks of a data-space Hessian.
///
/// Implementations must be safe to read from several threads at once.
pub trait BlockSource: Sync {
    fn n_sensors(&self) -> usize;

    fn n_steps(&self) -> usize;

    /// Noise variance on the diagonal of block `(i, i)`.
    fn noise_variance(&self, i: usize) -> f64;

    /// Copy block `(i, j)` (row-major, `N_t × N_t`) into `out`.
    fn read_block(&self, i: usize, j: usize, out: &mut [f64]) -> Result<(), StoreError>;

    /// Stack blocks `(chosen[0], s), …, (chosen[k-1], s)` into `out`, which
    /// then holds the `k·N_t × N_t` matrix `K_{S,s}` row-major.
    fn read_test_column(
        &self,
        chosen: &[usize],
        s: usize,
        out: &mut [f64],
    ) -> Result<(), StoreError> {
        let nb = self.n_steps() * self.n_steps();
        if out.len() < chosen.len() * nb {
            return Err(StoreError::BufferSize {
                expected: chosen.len() * nb,
                got: out.len(),
            });
        }
        for (k, &i) in chosen.iter().enumerate() {
            self.read_block(i, s, &mut out[k * nb..(k + 1) * nb])?;
        }
        Ok(())
    }

    /// `Σ_i N_t·ln(noise_variance(i))` over `sensors`.
    fn noise_logdet(&self, sensors: &[usize]) -> f64 {
        let nt = self.n_steps() as f64;
        sensors
            .iter()
            .map(|&i| nt * self.noise_variance(i).ln())
            .sum()
    }

    /// True when every sensor shares one noise variance.
    fn isotropic_noise(&self) -> bool {
        let n = self.n_sensors();
        n == 0 || (1..n).all(|i| self.noise_variance(i) == self.noise_variance(0))
    }
}

pub(crate) fn check_block_request(
    n_sensors: usize,
    n_steps: usize,
    i: usize,
    j: usize,
    out_len: usize,
) -> Result<(), StoreError> {
    if i >= n_sensors || j >= n_sensors {
        return Err(StoreError::IndexOutOfRange { i, j, n_sensors });
    }
    if out_len != n_steps * n_steps {
        return Err(StoreError::BufferSize {
            expected: n_steps * n_steps,
            got: out_len,
        });
    }
    Ok(())
}

impl BlockSource for DataSpaceHessian {
    fn n_sensors(&self) -> usize {
        DataSpaceHessian::n_sensors(self)
    }

    fn n_steps(&self) -> usize {
        DataSpaceHessian::n_steps(self)
    }

    fn noise_variance(&self, i: usize) -> f64 {
        self.noise_diag()[i]
    }

    fn read_block(&self, i: usize, j: usize, out: &mut [f64]) -> Result<(), StoreError> {
        check_block_request(
            DataSpaceHessian::n_sensors(self),
            DataSpaceHessian::n_steps(self),
            i,
            j,
            out.len(),
        )?;
        out.copy_from_slice(self.block(i, j));
        Ok(())
    }
}

impl<S: BlockSource + ?Sized> BlockSource for &S {
    fn n_sensors(&self) -> usize {
        (**self).n_sensors()
    }

    fn n_steps(&self) -> usize {
        (**self).n_steps()
    }

    fn noise_variance(&self, i: usize) -> f64 {
        (**self).noise_variance(i)
    }

    fn read_block(&self, i: usize, j: usize, out: &mut [f64]) -> Result<(), StoreError> {
        (**self).read_block(i, j, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_by_one() -> DataSpaceHessian {
        let data = vec![4.0, 1.0, 2.0, 1.0, 5.0, 3.0, 2.0, 3.0, 6.0];
        DataSpaceHessian::from_blocks(3, 1, data, vec![1.0; 3]).unwrap()
    }

    #[test]
    fn test_column_follows_chosen_order() {
        let k = three_by_one();
        let mut out = [0.0; 2];
        k.read_test_column(&[2, 0], 1, &mut out).unwrap();
        assert_eq!(out, [3.0, 1.0]);
    }

    #[test]
    fn empty_test_column_is_noop() {
        let k = three_by_one();
        let mut out: [f64; 0] = [];
        k.read_test_column(&[], 1, &mut out).unwrap();
    }

    #[test]
    fn out_of_range_block() {
        let k = three_by_one();
        let mut out = [0.0];
        assert!(matches!(
            k.read_block(3, 0, &mut out),
            Err(StoreError::IndexOutOfRange { i: 3, j: 0, n_sensors: 3 })
        ));
    }
}
