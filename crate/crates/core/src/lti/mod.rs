//! Synthetic linear time-invariant inverse problems.
//!
//! Parameters and sensors sit on a 1-D line. Each (sensor, parameter) pair
//! has a causal impulse response `h[s][j][τ]`: a pulse that arrives after
//! the travel time `distance / wave_speed`, with amplitude decaying
//! exponentially in distance. The parameter-to-observable map `F` is causal
//! convolution with these kernels, so as a matrix it is block lower
//! triangular Toeplitz in time.
//!
//! Fields are stored as [`DenseBlock`]s: a parameter field is `N_m × N_t`
//! and a data field is `N_d × N_t`.

mod hessian;
mod posterior;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{DenseBlock, LinalgError};

pub use hessian::{assemble_k, DataSpaceHessian};
pub use posterior::{
    pointwise_variance, posterior_covariance_small, PosteriorEvaluator, POSTERIOR_SIZE_LIMIT,
};

/// Width (in time steps) of the arriving pulse.
pub const PULSE_WIDTH: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{what}: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        what: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("parameter space of {size} entries exceeds the dense limit of {limit}; shrink n_params·n_steps")]
    TooLarge { size: usize, limit: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorKind {
    Identity,
    Exponential,
}

/// Zero-mean Gaussian prior over the parameter field.
///
/// Correlated across parameter index with `σ²·exp(−|i−j|/ℓ)` (or `σ²·I`)
/// and white in time, i.e. `Γ_prior = C ⊗ I_{N_t}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub kind: PriorKind,
    pub variance: f64,
    pub length_scale: f64,
}

impl PriorSpec {
    pub fn identity(variance: f64) -> Self {
        Self {
            kind: PriorKind::Identity,
            variance,
            length_scale: 1.0,
        }
    }

    pub fn exponential(variance: f64, length_scale: f64) -> Self {
        Self {
            kind: PriorKind::Exponential,
            variance,
            length_scale,
        }
    }

    /// Exponential kernel with unit variance and `ℓ = N_m / 8`.
    pub fn default_for(n_params: usize) -> Self {
        Self::exponential(1.0, n_params as f64 / 8.0)
    }

    fn validate(&self) -> Result<(), ModelError> {
        if !(self.variance > 0.0) || !self.variance.is_finite() {
            return Err(ModelError::InvalidConfig(format!(
                "prior.variance must be positive, got {}",
                self.variance
            )));
        }
        if self.kind == PriorKind::Exponential && !(self.length_scale > 0.0) {
            return Err(ModelError::InvalidConfig(format!(
                "prior.length_scale must be positive, got {}",
                self.length_scale
            )));
        }
        Ok(())
    }

    /// The `N_m × N_m` spatial factor `C`, row-major.
    pub fn spatial_covariance(&self, n_params: usize) -> Vec<f64> {
        let mut c = vec![0.0; n_params * n_params];
        for i in 0..n_params {
            for j in 0..n_params {
                c[i * n_params + j] = match self.kind {
                    PriorKind::Identity => {
                        if i == j {
                            self.variance
                        } else {
                            0.0
                        }
                    }
                    PriorKind::Exponential => {
                        let d = (i as f64 - j as f64).abs();
                        self.variance * (-d / self.length_scale).exp()
                    }
                };
            }
        }
        c
    }
}

/// Diagonal design weights: `W_c` scales each sensor's noise variance and
/// `W_m` reweights the parameter field (indexed `param · N_t + step`).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSpec {
    pub cost_weights: Vec<f64>,
    pub mask_weights: Vec<f64>,
}

impl WeightSpec {
    pub fn uniform(problem: &LtiProblem) -> Self {
        Self {
            cost_weights: vec![1.0; problem.n_sensors()],
            mask_weights: vec![1.0; problem.n_params() * problem.n_steps()],
        }
    }

    pub fn validate(&self, problem: &LtiProblem) -> Result<(), ModelError> {
        if self.cost_weights.len() != problem.n_sensors() {
            return Err(ModelError::DimensionMismatch {
                what: "cost weights",
                expected: (problem.n_sensors(), 1),
                got: (self.cost_weights.len(), 1),
            });
        }
        let n = problem.n_params() * problem.n_steps();
        if self.mask_weights.len() != n {
            return Err(ModelError::DimensionMismatch {
                what: "mask weights",
                expected: (n, 1),
                got: (self.mask_weights.len(), 1),
            });
        }
        if let Some(w) = self.cost_weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(ModelError::InvalidConfig(format!(
                "cost weights must be positive, got {w}"
            )));
        }
        if let Some(w) = self.mask_weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(ModelError::InvalidConfig(format!(
                "mask weights must be nonnegative, got {w}"
            )));
        }
        Ok(())
    }
}

/// A linear inverse problem with a convolutional forward map.
#[derive(Debug, Clone)]
pub struct LtiProblem {
    n_params: usize,
    n_sensors: usize,
    n_steps: usize,
    impulse: Vec<f64>,
    prior: PriorSpec,
    prior_space: Vec<f64>,
    noise_sigma: f64,
}

impl LtiProblem {
    /// `impulse` is indexed `((s · N_m) + j) · N_t + τ`.
    pub fn from_kernels(
        n_params: usize,
        n_sensors: usize,
        n_steps: usize,
        impulse: Vec<f64>,
        prior: PriorSpec,
        noise_sigma: f64,
    ) -> Result<Self, ModelError> {
        for (key, v) in [
            ("n_params", n_params),
            ("n_sensors", n_sensors),
            ("n_steps", n_steps),
        ] {
            if v == 0 {
                return Err(ModelError::InvalidConfig(format!("{key} must be at least 1")));
            }
        }
        let expected = n_sensors * n_params * n_steps;
        if impulse.len() != expected {
            return Err(ModelError::DimensionMismatch {
                what: "impulse responses",
                expected: (expected, 1),
                got: (impulse.len(), 1),
            });
        }
        if impulse.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidConfig(
                "impulse responses must be finite".into(),
            ));
        }
        if !(noise_sigma > 0.0) || !noise_sigma.is_finite() {
            return Err(ModelError::InvalidConfig(format!(
                "noise_sigma must be positive, got {noise_sigma}"
            )));
        }
        prior.validate()?;
        Ok(Self {
            n_params,
            n_sensors,
            n_steps,
            prior_space: prior.spatial_covariance(n_params),
            impulse,
            prior,
            noise_sigma,
        })
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn n_sensors(&self) -> usize {
        self.n_sensors
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn prior(&self) -> &PriorSpec {
        &self.prior
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn kernel(&self, sensor: usize, param: usize) -> &[f64] {
        let off = (sensor * self.n_params + param) * self.n_steps;
        &self.impulse[off..off + self.n_steps]
    }

    pub fn kernels(&self) -> &[f64] {
        &self.impulse
    }

    pub fn max_kernel_amplitude(&self) -> f64 {
        self.impulse.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Copy of this problem with a different noise level.
    pub fn with_noise_sigma(&self, noise_sigma: f64) -> Result<Self, ModelError> {
        Self::from_kernels(
            self.n_params,
            self.n_sensors,
            self.n_steps,
            self.impulse.clone(),
            self.prior,
            noise_sigma,
        )
    }

    /// Copy of this problem with the kernels of `params` zeroed.
    pub fn without_params(&self, params: &[usize]) -> Self {
        let mut p = self.clone();
        for s in 0..self.n_sensors {
            for &j in params {
                let off = (s * self.n_params + j) * self.n_steps;
                p.impulse[off..off + self.n_steps].fill(0.0);
            }
        }
        p
    }

    pub(crate) fn prior_space(&self) -> &[f64] {
        &self.prior_space
    }

    fn check_shape(&self, what: &'static str, f: &DenseBlock, rows: usize) -> Result<(), ModelError> {
        if f.rows() != rows || f.cols() != self.n_steps {
            return Err(ModelError::DimensionMismatch {
                what,
                expected: (rows, self.n_steps),
                got: (f.rows(), f.cols()),
            });
        }
        Ok(())
    }

    /// `d = F m`: `d[s][t] = Σ_j Σ_{τ≤t} h[s][j][τ] · m[j][t−τ]`.
    pub fn apply_forward(&self, m: &DenseBlock) -> Result<DenseBlock, ModelError> {
        self.check_shape("parameter field", m, self.n_params)?;
        let nt = self.n_steps;
        let mut d = DenseBlock::zeros(self.n_sensors, nt);
        for s in 0..self.n_sensors {
            let out = &mut d.as_mut_slice()[s * nt..(s + 1) * nt];
            for j in 0..self.n_params {
                convolve_accumulate(self.kernel(s, j), m.row(j), out);
            }
        }
        Ok(d)
    }

    /// Exact discrete adjoint: `(F* d)[j][t'] = Σ_s Σ_{t≥t'} h[s][j][t−t'] · d[s][t]`.
    pub fn apply_adjoint(&self, d: &DenseBlock) -> Result<DenseBlock, ModelError> {
        self.check_shape("data field", d, self.n_sensors)?;
        let nt = self.n_steps;
        let mut m = DenseBlock::zeros(self.n_params, nt);
        for j in 0..self.n_params {
            let out = &mut m.as_mut_slice()[j * nt..(j + 1) * nt];
            for s in 0..self.n_sensors {
                correlate_accumulate(self.kernel(s, j), d.row(s), out);
            }
        }
        Ok(m)
    }

    /// `F*` applied to the unit data impulse at `(sensor, step)`, written
    /// into `out` (`N_m × N_t`, row-major).
    pub(crate) fn adjoint_of_impulse(&self, sensor: usize, step: usize, out: &mut [f64]) {
        let nt = self.n_steps;
        out.fill(0.0);
        for j in 0..self.n_params {
            let h = self.kernel(sensor, j);
            let row = &mut out[j * nt..(j + 1) * nt];
            for (tp, v) in row[..=step].iter_mut().enumerate() {
                *v = h[step - tp];
            }
        }
    }

    /// Apply `Γ_prior` (optionally sandwiched by the mask `W_m`) in place.
    pub(crate) fn apply_prior(&self, field: &mut [f64], mask: Option<&[f64]>, scratch: &mut [f64]) {
        let (nm, nt) = (self.n_params, self.n_steps);
        if let Some(w) = mask {
            for (v, w) in field.iter_mut().zip(w) {
                *v *= w;
            }
        }
        scratch.fill(0.0);
        for j in 0..nm {
            let out = &mut scratch[j * nt..(j + 1) * nt];
            for jp in 0..nm {
                let c = self.prior_space[j * nm + jp];
                if c == 0.0 {
                    continue;
                }
                for (o, &v) in out.iter_mut().zip(&field[jp * nt..(jp + 1) * nt]) {
                    *o += c * v;
                }
            }
        }
        field.copy_from_slice(scratch);
        if let Some(w) = mask {
            for (v, w) in field.iter_mut().zip(w) {
                *v *= w;
            }
        }
    }
}

/// `out[t] += Σ_{τ≤t} h[τ] · x[t−τ]`.
#[inline]
fn convolve_accumulate(h: &[f64], x: &[f64], out: &mut [f64]) {
    for (t, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for tau in 0..=t {
            acc += h[tau] * x[t - tau];
        }
        *o += acc;
    }
}

/// `out[t'] += Σ_{t≥t'} h[t−t'] · y[t]`.
#[inline]
fn correlate_accumulate(h: &[f64], y: &[f64], out: &mut [f64]) {
    let n = out.len();
    for (tp, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for t in tp..n {
            acc += h[t - tp] * y[t];
        }
        *o += acc;
    }
}

/// Geometry and propagation settings for the synthetic wave problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveSpec {
    pub n_params: usize,
    pub n_sensors: usize,
    pub n_steps: usize,
    pub wave_speed: f64,
    pub decay: f64,
    pub seed: u64,
}

impl WaveSpec {
    /// The desk-scale benchmark used throughout the test suite.
    pub fn standard() -> Self {
        Self {
            n_params: 48,
            n_sensors: 32,
            n_steps: 16,
            wave_speed: 4.0,
            decay: 0.05,
            seed: 0,
        }
    }

    /// Parameters on the integer grid `0..N_m`; sensors drawn uniformly on
    /// `[0, N_m − 1]` from `seed` and sorted by position.
    pub fn positions(&self) -> (Vec<f64>, Vec<f64>) {
        let params: Vec<f64> = (0..self.n_params).map(|j| j as f64).collect();
        let span = self.n_params.saturating_sub(1) as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut sensors: Vec<f64> = (0..self.n_sensors)
            .map(|_| rng.random::<f64>() * span)
            .collect();
        sensors.sort_by(f64::total_cmp);
        (params, sensors)
    }

    /// Build with the default prior and noise level `0.1 ×` the largest
    /// kernel amplitude.
    pub fn build(&self) -> Result<LtiProblem, ModelError> {
        self.build_with(PriorSpec::default_for(self.n_params), None)
    }

    pub fn build_with(
        &self,
        prior: PriorSpec,
        noise_sigma: Option<f64>,
    ) -> Result<LtiProblem, ModelError> {
        for (key, v) in [
            ("n_params", self.n_params),
            ("n_sensors", self.n_sensors),
            ("n_steps", self.n_steps),
        ] {
            if v == 0 {
                return Err(ModelError::InvalidConfig(format!("{key} must be at least 1")));
            }
        }
        let (params, sensors) = self.positions();
        wave_problem_at(
            &params,
            &sensors,
            self.n_steps,
            self.wave_speed,
            self.decay,
            prior,
            noise_sigma,
        )
    }
}

/// Synthetic wave problem with the default prior and noise level.
pub fn make_wave_problem(
    n_params: usize,
    n_sensors: usize,
    n_steps: usize,
    wave_speed: f64,
    decay: f64,
    seed: u64,
) -> Result<LtiProblem, ModelError> {
    WaveSpec {
        n_params,
        n_sensors,
        n_steps,
        wave_speed,
        decay,
        seed,
    }
    .build()
}

/// Pulse kernel for a given source–receiver distance.
pub fn wave_kernel(distance: f64, wave_speed: f64, decay: f64, n_steps: usize) -> Vec<f64> {
    let delay = distance / wave_speed;
    let amplitude = (-decay * distance).exp();
    (0..n_steps)
        .map(|tau| {
            let tau = tau as f64;
            if tau < delay {
                0.0
            } else {
                let x = (tau - delay) / PULSE_WIDTH;
                amplitude * (-0.5 * x * x).exp()
            }
        })
        .collect()
}

/// Wave problem with explicit parameter and sensor positions.
pub fn wave_problem_at(
    param_positions: &[f64],
    sensor_positions: &[f64],
    n_steps: usize,
    wave_speed: f64,
    decay: f64,
    prior: PriorSpec,
    noise_sigma: Option<f64>,
) -> Result<LtiProblem, ModelError> {
    if !(wave_speed > 0.0) || !wave_speed.is_finite() {
        return Err(ModelError::InvalidConfig(format!(
            "wave_speed must be positive, got {wave_speed}"
        )));
    }
    if !(decay >= 0.0) || !decay.is_finite() {
        return Err(ModelError::InvalidConfig(format!(
            "decay must be nonnegative, got {decay}"
        )));
    }
    if param_positions.is_empty() || sensor_positions.is_empty() || n_steps == 0 {
        return Err(ModelError::InvalidConfig(
            "n_params, n_sensors and n_steps must be at least 1".into(),
        ));
    }
    let mut impulse = Vec::with_capacity(sensor_positions.len() * param_positions.len() * n_steps);
    for &xs in sensor_positions {
        for &xp in param_positions {
            impulse.extend(wave_kernel((xs - xp).abs(), wave_speed, decay, n_steps));
        }
    }
    let max_amp = impulse.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let sigma = match noise_sigma {
        Some(s) => s,
        None if max_amp > 0.0 => 0.1 * max_amp,
        None => 0.1,
    };
    LtiProblem::from_kernels(
        param_positions.len(),
        sensor_positions.len(),
        n_steps,
        impulse,
        prior,
        sigma,
    )
}
