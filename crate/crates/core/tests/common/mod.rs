#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sensorsel::linalg::DenseBlock;
use sensorsel::lti::{LtiProblem, PriorSpec, WaveSpec};
use sensorsel::{assemble_k, DataSpaceHessian};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// `G Gᵀ / n + noise·I`, a well-conditioned SPD matrix.
pub fn random_spd(rng: &mut impl Rng, n: usize, noise: f64) -> DMatrix<f64> {
    let g = random_matrix(rng, n, n);
    &g * g.transpose() / n as f64 + DMatrix::identity(n, n) * noise
}

pub fn to_na(b: &DenseBlock) -> DMatrix<f64> {
    DMatrix::from_row_slice(b.rows(), b.cols(), b.as_slice())
}

pub fn from_na(m: &DMatrix<f64>) -> DenseBlock {
    let mut out = DenseBlock::zeros(m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.set(i, j, m[(i, j)]);
        }
    }
    out
}

pub fn random_k(rng: &mut impl Rng, nd: usize, nt: usize) -> DataSpaceHessian {
    let noise = rng.random_range(0.05..0.5);
    let dense = from_na(&random_spd(rng, nd * nt, noise));
    DataSpaceHessian::from_dense(&dense, nt, vec![noise; nd]).unwrap()
}

/// Random small LTI problem with causal kernels.
pub fn random_problem(rng: &mut impl Rng, nm: usize, nd: usize, nt: usize) -> LtiProblem {
    let impulse = (0..nd * nm * nt).map(|_| rng.random_range(-1.0..1.0)).collect();
    let prior = if rng.random_bool(0.5) {
        PriorSpec::identity(rng.random_range(0.5..2.0))
    } else {
        PriorSpec::exponential(rng.random_range(0.5..2.0), rng.random_range(0.5..3.0))
    };
    LtiProblem::from_kernels(nm, nd, nt, impulse, prior, rng.random_range(0.2..1.0)).unwrap()
}

pub fn standard_problem() -> LtiProblem {
    WaveSpec::standard().build().unwrap()
}

pub fn standard_k() -> (LtiProblem, DataSpaceHessian) {
    let p = standard_problem();
    let k = assemble_k(&p, None).unwrap();
    (p, k)
}

pub fn logdet_na(m: &DMatrix<f64>) -> f64 {
    let l = m.clone().cholesky().expect("SPD").l();
    2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Dense `K_S` with blocks ordered as `sensors`.
pub fn principal_na(k: &DataSpaceHessian, sensors: &[usize]) -> DMatrix<f64> {
    to_na(&k.principal_submatrix(sensors))
}

/// `F` as an explicit `(N_d·N_t) × (N_m·N_t)` matrix, built column by
/// column from unit impulses.
pub fn materialize_f(p: &LtiProblem) -> DMatrix<f64> {
    let (nm, nd, nt) = (p.n_params(), p.n_sensors(), p.n_steps());
    let mut f = DMatrix::zeros(nd * nt, nm * nt);
    for j in 0..nm {
        for t in 0..nt {
            let mut m = DenseBlock::zeros(nm, nt);
            m.set(j, t, 1.0);
            let d = p.apply_forward(&m).unwrap();
            for (r, v) in d.as_slice().iter().enumerate() {
                f[(r, j * nt + t)] = *v;
            }
        }
    }
    f
}

pub fn prior_matrix(p: &LtiProblem) -> DMatrix<f64> {
    let (nm, nt) = (p.n_params(), p.n_steps());
    let c = p.prior().spatial_covariance(nm);
    DMatrix::from_fn(nm * nt, nm * nt, |r, q| {
        if r % nt == q % nt {
            c[(r / nt) * nm + q / nt]
        } else {
            0.0
        }
    })
}

/// `(F_Sᵀ Γ_noise⁻¹ F_S + Γ_prior⁻¹)⁻¹`.
pub fn direct_posterior(p: &LtiProblem, sensors: &[usize]) -> DMatrix<f64> {
    let nt = p.n_steps();
    let f = materialize_f(p);
    let rows: Vec<usize> = sensors.iter().flat_map(|&s| s * nt..(s + 1) * nt).collect();
    let fs = f.select_rows(&rows);
    let g2 = p.noise_sigma().powi(2);
    let h = fs.transpose() * &fs / g2 + prior_matrix(p).try_inverse().unwrap();
    h.try_inverse().unwrap()
}
