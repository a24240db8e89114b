use rayon::prelude::*;

use super::{LtiProblem, ModelError, WeightSpec};
use crate::linalg::DenseBlock;

/// Dense data-space Hessian `K = Γ_noise + F Γ_prior F*` stored as an
/// `N_d × N_d` grid of `N_t × N_t` blocks.
///
/// The payload is block-row-major: block `(i, j)` starts at
/// `(i · N_d + j) · N_t²` and is itself row-major. This is the same layout
/// the on-disk store uses.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSpaceHessian {
    n_sensors: usize,
    n_steps: usize,
    data: Vec<f64>,
    noise_diag: Vec<f64>,
}

impl DataSpaceHessian {
    pub fn from_blocks(
        n_sensors: usize,
        n_steps: usize,
        data: Vec<f64>,
        noise_diag: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let n = n_sensors * n_steps;
        if data.len() != n * n {
            return Err(ModelError::DimensionMismatch {
                what: "hessian payload",
                expected: (n, n),
                got: (data.len(), 1),
            });
        }
        if noise_diag.len() != n_sensors {
            return Err(ModelError::DimensionMismatch {
                what: "noise variances",
                expected: (n_sensors, 1),
                got: (noise_diag.len(), 1),
            });
        }
        Ok(Self {
            n_sensors,
            n_steps,
            data,
            noise_diag,
        })
    }

    /// Re-block a dense `(N_d·N_t)²` matrix whose rows are ordered
    /// `sensor · N_t + step`.
    pub fn from_dense(
        dense: &DenseBlock,
        n_steps: usize,
        noise_diag: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let n = dense.rows();
        if dense.cols() != n || n_steps == 0 || n % n_steps != 0 {
            return Err(ModelError::DimensionMismatch {
                what: "dense hessian",
                expected: (n, n),
                got: (dense.rows(), dense.cols()),
            });
        }
        let nd = n / n_steps;
        let mut data = vec![0.0; n * n];
        for r in 0..n {
            let (i, a) = (r / n_steps, r % n_steps);
            for (c, &v) in dense.row(r).iter().enumerate() {
                let (j, b) = (c / n_steps, c % n_steps);
                data[((i * nd + j) * n_steps + a) * n_steps + b] = v;
            }
        }
        Self::from_blocks(nd, n_steps, data, noise_diag)
    }

    pub fn n_sensors(&self) -> usize {
        self.n_sensors
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Per-sensor noise variance `w_c(i) · γ²` on the diagonal blocks.
    pub fn noise_diag(&self) -> &[f64] {
        &self.noise_diag
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn block(&self, i: usize, j: usize) -> &[f64] {
        let nb = self.n_steps * self.n_steps;
        let off = (i * self.n_sensors + j) * nb;
        &self.data[off..off + nb]
    }

    pub fn block_matrix(&self, i: usize, j: usize) -> DenseBlock {
        DenseBlock::from_vec(self.n_steps, self.n_steps, self.block(i, j).to_vec())
            .expect("block is N_t × N_t")
    }

    pub fn to_dense(&self) -> DenseBlock {
        let all: Vec<usize> = (0..self.n_sensors).collect();
        self.principal_submatrix(&all)
    }

    /// `K_S` with blocks in the order given by `sensors`.
    pub fn principal_submatrix(&self, sensors: &[usize]) -> DenseBlock {
        let nt = self.n_steps;
        let n = sensors.len() * nt;
        let mut out = DenseBlock::zeros(n, n);
        for (bi, &i) in sensors.iter().enumerate() {
            for (bj, &j) in sensors.iter().enumerate() {
                let blk = self.block(i, j);
                for a in 0..nt {
                    out.as_mut_slice()[(bi * nt + a) * n + bj * nt..(bi * nt + a) * n + (bj + 1) * nt]
                        .copy_from_slice(&blk[a * nt..(a + 1) * nt]);
                }
            }
        }
        out
    }

    /// Largest `|K_ij − K_ji|` relative to the largest entry.
    pub fn max_asymmetry(&self) -> f64 {
        let nt = self.n_steps;
        let scale = self
            .data
            .iter()
            .fold(0.0f64, |a, v| a.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for i in 0..self.n_sensors {
            for j in 0..=i {
                let (bij, bji) = (self.block(i, j), self.block(j, i));
                for a in 0..nt {
                    for b in 0..nt {
                        worst = worst.max((bij[a * nt + b] - bji[b * nt + a]).abs());
                    }
                }
            }
        }
        worst / scale
    }

    /// `c · K` with noise variances scaled to match.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            n_sensors: self.n_sensors,
            n_steps: self.n_steps,
            data: self.data.iter().map(|v| c * v).collect(),
            noise_diag: self.noise_diag.iter().map(|v| c * v).collect(),
        }
    }

    fn symmetrize(&mut self) {
        let (nd, nt) = (self.n_sensors, self.n_steps);
        let nb = nt * nt;
        for i in 0..nd {
            for j in 0..=i {
                for a in 0..nt {
                    for b in 0..nt {
                        if i == j && b >= a {
                            continue;
                        }
                        let p = (i * nd + j) * nb + a * nt + b;
                        let q = (j * nd + i) * nb + b * nt + a;
                        let v = 0.5 * (self.data[p] + self.data[q]);
                        self.data[p] = v;
                        self.data[q] = v;
                    }
                }
            }
        }
    }
}

/// Assemble `K = W_c Γ_noise + F (W_m Γ_prior W_m) F*`.
///
/// Each column `(c, t0)` is formed by pushing the unit data impulse through
/// `F*`, then the (masked) prior, then `F`; the noise variance `w_c(c)·γ²`
/// lands on the diagonal. The result is symmetrized. Passing `None` is the
/// same as passing all-ones weights.
pub fn assemble_k(
    problem: &LtiProblem,
    weights: Option<&WeightSpec>,
) -> Result<DataSpaceHessian, ModelError> {
    if let Some(w) = weights {
        w.validate(problem)?;
    }
    let (nd, nm, nt) = (problem.n_sensors(), problem.n_params(), problem.n_steps());
    let n = nd * nt;
    let gamma2 = problem.noise_sigma() * problem.noise_sigma();
    let noise_diag: Vec<f64> = (0..nd)
        .map(|i| match weights {
            Some(w) => w.cost_weights[i] * gamma2,
            None => gamma2,
        })
        .collect();
    let mask = weights.map(|w| w.mask_weights.as_slice());

    let columns: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|q| {
            let (c, t0) = (q / nt, q % nt);
            let mut field = vec![0.0; nm * nt];
            let mut scratch = vec![0.0; nm * nt];
            problem.adjoint_of_impulse(c, t0, &mut field);
            problem.apply_prior(&mut field, mask, &mut scratch);
            let m = DenseBlock::from_vec(nm, nt, field).expect("sized above");
            let mut col = problem
                .apply_forward(&m)
                .expect("shape checked above")
                .into_vec();
            col[q] += noise_diag[c];
            col
        })
        .collect();

    let mut data = vec![0.0; n * n];
    for (q, col) in columns.iter().enumerate() {
        let (c, t0) = (q / nt, q % nt);
        for (r, &v) in col.iter().enumerate() {
            let (i, t) = (r / nt, r % nt);
            data[((i * nd + c) * nt + t) * nt + t0] = v;
        }
    }
    let mut k = DataSpaceHessian::from_blocks(nd, nt, data, noise_diag)?;
    k.symmetrize();
    Ok(k)
}
