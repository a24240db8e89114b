use std::time::Instant;

use super::state::{
    beats, fetch_candidate, is_infeasible, score_fetched, selection_offsets, CandidateBuffer,
    ScoreWorkspace, SelectionState,
};
use super::trace::{SelectionTrace, TraceRecord};
use super::{ObjectiveMode, SelectError};
use crate::linalg::{kernels, LinalgError, Real};
use crate::source::BlockSource;

/// Check `candidates` against the source and clamp `budget` to `|C|`.
pub(crate) fn prepare_candidates<S: BlockSource + ?Sized>(
    source: &S,
    candidates: &[usize],
    budget: usize,
) -> Result<usize, SelectError> {
    let nd = source.n_sensors();
    let mut seen = vec![false; nd];
    for &c in candidates {
        if c >= nd {
            return Err(SelectError::InvalidCandidates(format!(
                "candidate {c} out of range for {nd} sensors"
            )));
        }
        if std::mem::replace(&mut seen[c], true) {
            return Err(SelectError::InvalidCandidates(format!(
                "candidate {c} listed twice"
            )));
        }
    }
    if budget > candidates.len() {
        log::warn!(
            "budget {budget} exceeds the {} candidates; selecting all of them",
            candidates.len()
        );
    }
    Ok(budget.min(candidates.len()))
}

pub(crate) fn trace_record(
    k: usize,
    s: usize,
    objective: f64,
    gain: f64,
    n_evaluated: usize,
    n_infeasible: usize,
    started: Instant,
) -> TraceRecord {
    let wall_ms = started.elapsed().as_secs_f64() * 1e3;
    TraceRecord {
        k,
        chosen_index: s,
        objective,
        gain,
        n_evaluated,
        n_infeasible,
        wall_ms,
        mean_candidate_ms: wall_ms / (n_evaluated + n_infeasible).max(1) as f64,
    }
}

/// Reported gain of adding `s` whose raw marginal log-determinant is `d`.
pub(crate) fn reported_gain<S: BlockSource + ?Sized>(
    source: &S,
    mode: ObjectiveMode,
    s: usize,
    d: f64,
) -> f64 {
    match mode {
        ObjectiveMode::Raw => d,
        ObjectiveMode::Normalized => d - source.noise_logdet(&[s]),
    }
}

/// Greedy selection with block Schur-complement updates in `f64`.
pub fn greedy_select<S: BlockSource + ?Sized>(
    source: &S,
    candidates: &[usize],
    budget: usize,
    mode: ObjectiveMode,
) -> Result<(SelectionState<f64>, SelectionTrace), SelectError> {
    greedy_select_in::<f64, S>(source, candidates, budget, mode)
}

/// Greedy selection with the scoring kernels running in precision `T`.
///
/// Each round scores every remaining candidate by `d_s = log det M_s`,
/// keeps the strict maximizer (ties to the lowest index) and appends it to
/// the factor using the solve already computed while scoring it.
pub fn greedy_select_in<T: Real, S: BlockSource + ?Sized>(
    source: &S,
    candidates: &[usize],
    budget: usize,
    mode: ObjectiveMode,
) -> Result<(SelectionState<T>, SelectionTrace), SelectError> {
    let budget = prepare_candidates(source, candidates, budget)?;
    let nt = source.n_steps();
    let offsets = selection_offsets(source);
    let mut state = SelectionState::<T>::new(source.n_sensors(), budget, nt);
    let mut trace = SelectionTrace::new(mode);
    let mut buf = CandidateBuffer::new(budget, nt);
    let mut ws = ScoreWorkspace::<T>::new(budget, nt);
    let mut best_ws = ScoreWorkspace::<T>::new(budget, nt);

    for round in 0..budget {
        let started = Instant::now();
        let mut best: Option<(f64, usize)> = None;
        let mut best_d = f64::NEG_INFINITY;
        let (mut n_eval, mut n_inf) = (0, 0);
        for &s in candidates {
            if state.contains(s) {
                continue;
            }
            fetch_candidate(source, state.chosen(), s, &mut buf)?;
            match score_fetched(&state, &buf, &mut ws) {
                Ok(d) => {
                    n_eval += 1;
                    let key = d - offsets[s];
                    if beats(key, s, best) {
                        best = Some((key, s));
                        best_d = d;
                        std::mem::swap(&mut ws, &mut best_ws);
                    }
                }
                Err(e) if is_infeasible(&e) => {
                    n_inf += 1;
                    log::warn!("round {round}: candidate {s} infeasible ({e}); skipped");
                }
                Err(e) => return Err(e.into()),
            }
        }
        let Some((_, s)) = best else {
            return Err(SelectError::InfeasibleRound {
                round,
                n_infeasible: n_inf,
            });
        };
        state.commit(s, &best_ws, best_d, source.noise_logdet(&[s]))?;
        trace.records.push(trace_record(
            state.len(),
            s,
            state.objective(mode),
            reported_gain(source, mode, s, best_d),
            n_eval,
            n_inf,
            started,
        ));
    }
    Ok((state, trace))
}

/// Baseline that refactorizes the whole augmented matrix `K_{S∪{s}}` for
/// every candidate instead of updating the factor of `K_S`.
pub fn naive_select<S: BlockSource + ?Sized>(
    source: &S,
    candidates: &[usize],
    budget: usize,
    mode: ObjectiveMode,
) -> Result<(SelectionState<f64>, SelectionTrace), SelectError> {
    let budget = prepare_candidates(source, candidates, budget)?;
    let nt = source.n_steps();
    let offsets = selection_offsets(source);
    let big = budget * nt;
    let mut state = SelectionState::<f64>::new(source.n_sensors(), budget, nt);
    let mut trace = SelectionTrace::new(mode);
    let mut ks = vec![0.0; big * big];
    let mut test = vec![0.0; big * big];
    let mut best_test = vec![0.0; big * big];
    let mut buf = CandidateBuffer::new(budget, nt);
    let mut best_buf = CandidateBuffer::new(budget, nt);

    for round in 0..budget {
        let started = Instant::now();
        let k = state.len();
        let (kdim, dim) = (k * nt, (k + 1) * nt);
        let mut best: Option<(f64, usize)> = None;
        let mut best_d = f64::NEG_INFINITY;
        let (mut n_eval, mut n_inf) = (0, 0);
        for &s in candidates {
            if state.contains(s) {
                continue;
            }
            fetch_candidate(source, state.chosen(), s, &mut buf)?;
            match refactor_score(&ks, big, &buf, nt, &mut test) {
                Ok(total) => {
                    n_eval += 1;
                    let d = total - state.log_det();
                    let key = d - offsets[s];
                    if beats(key, s, best) {
                        best = Some((key, s));
                        best_d = d;
                        std::mem::swap(&mut test, &mut best_test);
                        std::mem::swap(&mut buf, &mut best_buf);
                    }
                }
                Err(e) if is_infeasible(&e) => {
                    n_inf += 1;
                    log::warn!("round {round}: candidate {s} infeasible ({e}); skipped");
                }
                Err(e) => return Err(e.into()),
            }
        }
        let Some((_, s)) = best else {
            return Err(SelectError::InfeasibleRound {
                round,
                n_infeasible: n_inf,
            });
        };
        state.factor_mut().load_from(&best_test, dim, k + 1)?;
        state.record(s, best_d, source.noise_logdet(&[s]));
        extend_principal(&mut ks, big, &best_buf, kdim, nt);
        trace.records.push(trace_record(
            state.len(),
            s,
            state.objective(mode),
            reported_gain(source, mode, s, best_d),
            n_eval,
            n_inf,
            started,
        ));
    }
    Ok((state, trace))
}

/// `log det K_{S∪{s}}` by factorizing the augmented matrix from scratch.
///
/// `ks` holds `K_S` with row stride `ld`; `test` is scratch of at least
/// `((k+1)·N_t)²` entries and holds the factor afterwards.
pub fn refactor_score(
    ks: &[f64],
    ld: usize,
    buf: &CandidateBuffer,
    nt: usize,
    test: &mut [f64],
) -> Result<f64, LinalgError> {
    let kdim = buf.k * nt;
    let dim = kdim + nt;
    build_augmented(ks, ld, buf, kdim, nt, &mut test[..dim * dim]);
    kernels::cholesky_lower(test, dim, dim)?;
    kernels::logdet_lower(test, dim, dim)
}

/// Write `[[K_S, ·], [K_{s,S}, K_{s,s}]]` (lower part suffices) into the
/// compact `dim × dim` buffer `test`.
fn build_augmented(ks: &[f64], ld: usize, buf: &CandidateBuffer, kdim: usize, nt: usize, test: &mut [f64]) {
    let dim = kdim + nt;
    for r in 0..kdim {
        test[r * dim..r * dim + kdim].copy_from_slice(&ks[r * ld..r * ld + kdim]);
    }
    let col = buf.column();
    let diag = buf.diag();
    for a in 0..nt {
        let row = &mut test[(kdim + a) * dim..(kdim + a + 1) * dim];
        for (rb, v) in row[..kdim].iter_mut().enumerate() {
            *v = col[rb * nt + a];
        }
        row[kdim..].copy_from_slice(&diag[a * nt..(a + 1) * nt]);
    }
}

/// Grow `K_S` (row stride `ld`, currently `kdim` wide) by the candidate in
/// `buf`.
pub fn extend_principal(ks: &mut [f64], ld: usize, buf: &CandidateBuffer, kdim: usize, nt: usize) {
    let col = buf.column();
    let diag = buf.diag();
    for a in 0..nt {
        for rb in 0..kdim {
            let v = col[rb * nt + a];
            ks[(kdim + a) * ld + rb] = v;
            ks[rb * ld + kdim + a] = v;
        }
        ks[(kdim + a) * ld + kdim..(kdim + a) * ld + kdim + nt]
            .copy_from_slice(&diag[a * nt..(a + 1) * nt]);
    }
}
