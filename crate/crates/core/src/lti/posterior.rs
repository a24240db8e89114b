use super::{assemble_k, DataSpaceHessian, LtiProblem, ModelError};
use crate::linalg::{cholesky_in_place, kernels, DenseBlock};

/// Largest parameter-space dimension `N_m·N_t` materialized densely.
pub const POSTERIOR_SIZE_LIMIT: usize = 4096;

/// Data-space evaluation of posterior covariances for sensor subsets.
///
/// Holds the unweighted `K` and the rows of `G = F Γ_prior` for every
/// candidate so repeated queries only pay for the subset factorization.
/// For a subset `S`, with `L_S Lᵀ_S = K_S` and `Z = L_S⁻¹ G_S`,
/// `Γ_post = Γ_prior − Zᵀ Z`.
pub struct PosteriorEvaluator<'a> {
    problem: &'a LtiProblem,
    k: DataSpaceHessian,
    g_rows: Vec<f64>,
}

impl<'a> PosteriorEvaluator<'a> {
    pub fn new(problem: &'a LtiProblem) -> Result<Self, ModelError> {
        let n = problem.n_params() * problem.n_steps();
        if n > POSTERIOR_SIZE_LIMIT {
            return Err(ModelError::TooLarge {
                size: n,
                limit: POSTERIOR_SIZE_LIMIT,
            });
        }
        let k = assemble_k(problem, None)?;
        let (nd, nt) = (problem.n_sensors(), problem.n_steps());
        let mut g_rows = vec![0.0; nd * nt * n];
        let mut scratch = vec![0.0; n];
        for (q, row) in g_rows.chunks_exact_mut(n).enumerate() {
            problem.adjoint_of_impulse(q / nt, q % nt, row);
            problem.apply_prior(row, None, &mut scratch);
        }
        Ok(Self { problem, k, g_rows })
    }

    pub fn hessian(&self) -> &DataSpaceHessian {
        &self.k
    }

    fn dim(&self) -> usize {
        self.problem.n_params() * self.problem.n_steps()
    }

    /// Dense `Γ_prior = C ⊗ I_{N_t}`.
    pub fn prior_covariance(&self) -> DenseBlock {
        let (nm, nt) = (self.problem.n_params(), self.problem.n_steps());
        let c = self.problem.prior_space();
        let n = nm * nt;
        let mut out = DenseBlock::zeros(n, n);
        for j in 0..nm {
            for jp in 0..nm {
                for t in 0..nt {
                    out.set(j * nt + t, jp * nt + t, c[j * nm + jp]);
                }
            }
        }
        out
    }

    fn check_subset(&self, sensors: &[usize]) -> Result<(), ModelError> {
        let nd = self.problem.n_sensors();
        let mut seen = vec![false; nd];
        for &s in sensors {
            if s >= nd || seen[s] {
                return Err(ModelError::InvalidConfig(format!(
                    "sensor subset must hold distinct indices below {nd}, got {s}"
                )));
            }
            seen[s] = true;
        }
        Ok(())
    }

    /// `Z = L_S⁻¹ G_S`, `|S|·N_t` rows of width `N_m·N_t`.
    fn whitened_gain(&self, sensors: &[usize]) -> Result<Vec<f64>, ModelError> {
        self.check_subset(sensors)?;
        let (nt, n) = (self.problem.n_steps(), self.dim());
        let mut ks = self.k.principal_submatrix(sensors);
        cholesky_in_place(&mut ks)?;
        let r = sensors.len() * nt;
        let mut z = Vec::with_capacity(r * n);
        for &s in sensors {
            z.extend_from_slice(&self.g_rows[s * nt * n..(s + 1) * nt * n]);
        }
        kernels::forward_substitute(ks.as_slice(), r, r, &mut z, n)?;
        Ok(z)
    }

    pub fn covariance(&self, sensors: &[usize]) -> Result<DenseBlock, ModelError> {
        let n = self.dim();
        let mut post = self.prior_covariance();
        if sensors.is_empty() {
            return Ok(post);
        }
        let z = self.whitened_gain(sensors)?;
        kernels::schur_update(post.as_mut_slice(), &z, n);
        kernels::symmetrize(post.as_mut_slice(), n);
        Ok(post)
    }

    /// Diagonal of `Γ_post`, shaped `N_m × N_t`.
    pub fn pointwise_variance(&self, sensors: &[usize]) -> Result<DenseBlock, ModelError> {
        let (nm, nt) = (self.problem.n_params(), self.problem.n_steps());
        let n = nm * nt;
        let c = self.problem.prior_space();
        let mut var = vec![0.0; n];
        for j in 0..nm {
            var[j * nt..(j + 1) * nt].fill(c[j * nm + j]);
        }
        if !sensors.is_empty() {
            let z = self.whitened_gain(sensors)?;
            for row in z.chunks_exact(n) {
                for (v, zr) in var.iter_mut().zip(row) {
                    *v -= zr * zr;
                }
            }
        }
        Ok(DenseBlock::from_vec(nm, nt, var)?)
    }
}

/// `Γ_prior − G_S* K_S⁻¹ G_S` for a small problem.
pub fn posterior_covariance_small(
    problem: &LtiProblem,
    sensors: &[usize],
) -> Result<DenseBlock, ModelError> {
    PosteriorEvaluator::new(problem)?.covariance(sensors)
}

/// Pointwise posterior variance field (`N_m × N_t`).
pub fn pointwise_variance(
    problem: &LtiProblem,
    sensors: &[usize],
) -> Result<DenseBlock, ModelError> {
    PosteriorEvaluator::new(problem)?.pointwise_variance(sensors)
}
