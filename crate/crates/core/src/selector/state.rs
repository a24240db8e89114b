use super::SelectError;
use crate::kstore::StoreError;
use crate::linalg::{kernels, narrow_into, LinalgError, LowerTriangularFactor, Real};
use crate::source::BlockSource;

/// Ordered chosen set `S` together with the growing factor of `K_S`.
#[derive(Debug, Clone)]
pub struct SelectionState<T: Real = f64> {
    chosen: Vec<usize>,
    in_set: Vec<bool>,
    factor: LowerTriangularFactor<T>,
    log_det: f64,
    noise_logdet: f64,
}

impl<T: Real> SelectionState<T> {
    /// Empty state able to hold `capacity` sensors out of `n_sensors`.
    pub fn new(n_sensors: usize, capacity: usize, n_steps: usize) -> Self {
        Self {
            chosen: Vec::with_capacity(capacity),
            in_set: vec![false; n_sensors],
            factor: LowerTriangularFactor::new(capacity, n_steps),
            log_det: 0.0,
            noise_logdet: 0.0,
        }
    }

    pub fn chosen(&self) -> &[usize] {
        &self.chosen
    }

    pub fn len(&self) -> usize {
        self.chosen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chosen.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.factor.capacity_blocks()
    }

    pub fn contains(&self, s: usize) -> bool {
        self.in_set.get(s).copied().unwrap_or(false)
    }

    pub fn factor(&self) -> &LowerTriangularFactor<T> {
        &self.factor
    }

    pub fn n_steps(&self) -> usize {
        self.factor.block_size()
    }

    /// `log det K_S`, accumulated from the marginal gains.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// `log det K_S − Σ_{s∈S} log det(Γ_noise,s)`; zero for the empty set.
    pub fn normalized_objective(&self) -> f64 {
        self.log_det - self.noise_logdet
    }

    pub fn objective(&self, mode: super::ObjectiveMode) -> f64 {
        match mode {
            super::ObjectiveMode::Raw => self.log_det,
            super::ObjectiveMode::Normalized => self.normalized_objective(),
        }
    }

    /// Append `s` using the solve and Schur factor left in `ws` by
    /// [`score_fetched`]; `d` is the score it returned and `noise_logdet`
    /// the log-determinant of the sensor's noise block.
    pub fn commit(
        &mut self,
        s: usize,
        ws: &ScoreWorkspace<T>,
        d: f64,
        noise_logdet: f64,
    ) -> Result<(), SelectError> {
        let nt = self.n_steps();
        let kdim = self.factor.active_dim();
        self.factor
            .append_block_column(&ws.y[..kdim * nt], &ws.m[..nt * nt])?;
        self.record(s, d, noise_logdet);
        Ok(())
    }

    /// Bookkeeping for a sensor whose factor rows were written elsewhere.
    pub(crate) fn record(&mut self, s: usize, d: f64, noise_logdet: f64) {
        self.chosen.push(s);
        self.in_set[s] = true;
        self.log_det += d;
        self.noise_logdet += noise_logdet;
    }

    pub(crate) fn factor_mut(&mut self) -> &mut LowerTriangularFactor<T> {
        &mut self.factor
    }
}

/// Raw `f64` blocks for one candidate: `K_{s,s}` and the stacked `K_{S,s}`.
#[derive(Debug, Clone, Default)]
pub struct CandidateBuffer {
    pub(crate) diag: Vec<f64>,
    pub(crate) column: Vec<f64>,
    pub(crate) candidate: usize,
    pub(crate) k: usize,
}

impl CandidateBuffer {
    pub fn new(capacity: usize, n_steps: usize) -> Self {
        let nb = n_steps * n_steps;
        Self {
            diag: vec![0.0; nb],
            column: vec![0.0; capacity * nb],
            candidate: usize::MAX,
            k: 0,
        }
    }

    pub fn candidate(&self) -> usize {
        self.candidate
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// The `k·N_t × N_t` test column.
    pub fn column(&self) -> &[f64] {
        let nb = self.diag.len();
        &self.column[..self.k * nb]
    }
}

/// Read everything needed to score `s` against `chosen` into `buf`.
pub fn fetch_candidate<S: BlockSource + ?Sized>(
    source: &S,
    chosen: &[usize],
    s: usize,
    buf: &mut CandidateBuffer,
) -> Result<(), StoreError> {
    source.read_block(s, s, &mut buf.diag)?;
    source.read_test_column(chosen, s, &mut buf.column)?;
    buf.candidate = s;
    buf.k = chosen.len();
    Ok(())
}

/// Scratch space for one candidate evaluation in precision `T`.
///
/// After a successful [`score_fetched`], `y()` holds `Y_s = L_S⁻¹ K_{S,s}`
/// and `l_m()` the Cholesky factor of `M_s = K_{s,s} − Y_sᵀ Y_s`.
#[derive(Debug, Clone)]
pub struct ScoreWorkspace<T: Real = f64> {
    pub(crate) y: Vec<T>,
    pub(crate) m: Vec<T>,
    pub(crate) k: usize,
    n_steps: usize,
}

impl<T: Real> ScoreWorkspace<T> {
    pub fn new(capacity: usize, n_steps: usize) -> Self {
        let nb = n_steps * n_steps;
        Self {
            y: vec![T::zero(); capacity * nb],
            m: vec![T::zero(); nb],
            k: 0,
            n_steps,
        }
    }

    pub fn y(&self) -> &[T] {
        &self.y[..self.k * self.n_steps * self.n_steps]
    }

    pub fn l_m(&self) -> &[T] {
        &self.m
    }
}

/// `d_s = log det M_s` for the candidate held in `buf`. Allocation-free.
pub fn score_fetched<T: Real>(
    state: &SelectionState<T>,
    buf: &CandidateBuffer,
    ws: &mut ScoreWorkspace<T>,
) -> Result<f64, LinalgError> {
    let nt = state.n_steps();
    let k = state.len();
    if buf.k != k || buf.diag.len() != nt * nt || ws.m.len() != nt * nt {
        return Err(LinalgError::DimensionMismatch {
            expected: (k * nt, nt),
            got: (buf.k * nt, buf.diag.len() / nt.max(1)),
        });
    }
    let kdim = k * nt;
    let ncol = kdim * nt;
    narrow_into(&mut ws.m, &buf.diag);
    if k > 0 {
        let view = state.factor().view();
        let y = &mut ws.y[..ncol];
        narrow_into(y, &buf.column[..ncol]);
        kernels::forward_substitute(view.data(), view.ld(), kdim, y, nt)?;
        kernels::schur_update(&mut ws.m, y, nt);
        kernels::symmetrize(&mut ws.m, nt);
    }
    ws.k = k;
    kernels::cholesky_lower(&mut ws.m, nt, nt)?;
    kernels::logdet_lower(&ws.m, nt, nt)
}

/// Fetch and score in one call.
pub fn score_candidate<T: Real, S: BlockSource + ?Sized>(
    state: &SelectionState<T>,
    source: &S,
    s: usize,
    buf: &mut CandidateBuffer,
    ws: &mut ScoreWorkspace<T>,
) -> Result<f64, SelectError> {
    if state.contains(s) {
        return Err(SelectError::InvalidCandidates(format!(
            "sensor {s} is already selected"
        )));
    }
    fetch_candidate(source, state.chosen(), s, buf)?;
    Ok(score_fetched(state, buf, ws)?)
}

/// Per-sensor offset subtracted from `d_s` before comparison.
///
/// Zero when all noise variances agree, so the comparison is on the raw
/// log-determinant; otherwise `N_t·ln σ²_s`, which ranks candidates by their
/// information gain under per-sensor noise weights.
pub fn selection_offsets<S: BlockSource + ?Sized>(source: &S) -> Vec<f64> {
    let n = source.n_sensors();
    if source.isotropic_noise() {
        vec![0.0; n]
    } else {
        (0..n).map(|i| source.noise_logdet(&[i])).collect()
    }
}

/// Strict improvement, ties to the lower index.
#[inline]
pub fn beats(key: f64, s: usize, best: Option<(f64, usize)>) -> bool {
    match best {
        None => true,
        Some((bk, bs)) => key > bk || (key == bk && s < bs),
    }
}

pub(crate) fn is_infeasible(e: &LinalgError) -> bool {
    matches!(
        e,
        LinalgError::NotPositiveDefinite { .. } | LinalgError::NonFiniteResult { .. }
    )
}
