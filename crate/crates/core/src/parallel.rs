//! In-process reproduction of the distributed selection protocol.
//!
//! Every round the surviving candidates (in a fixed, seeded shuffle order)
//! are cut into contiguous shards, one per worker. Workers score their shard
//! against a private replica of the factor, reading the next candidate's
//! blocks while the current one is scored, and send back only their local
//! best `(d, s)`. The coordinator reduces these to the global winner and
//! broadcasts its index; each worker then re-reads and re-scores the winner
//! to extend its own replica. No factor data crosses a channel.

use std::io;
use std::mem;
use std::ops::Range;
use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, SendError, Sender};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::Real;
use crate::selector::{
    beats, fetch_candidate, is_infeasible, prepare_candidates, reported_gain, score_fetched,
    selection_offsets, trace_record, CandidateBuffer, ObjectiveMode, ScoreWorkspace, SelectError,
    SelectionState, SelectionTrace,
};
use crate::source::BlockSource;

#[derive(Debug, thiserror::Error)]
pub enum ParallelError {
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error("worker {worker} failed in round {round}: {message}")]
    WorkerFailure {
        round: usize,
        worker: usize,
        message: String,
    },
    #[error("no feasible candidate in any local result")]
    AllInfeasible,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Artificial per-candidate latencies, for exercising the pipeline.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDelay {
    pub io: Duration,
    pub compute: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParallelConfig {
    pub n_workers: usize,
    pub seed: u64,
    /// Overlap block reads with scoring.
    pub pipeline: bool,
    pub mode: ObjectiveMode,
    pub delay: Option<SyntheticDelay>,
    /// Check replica agreement and factor reconstruction after every round.
    pub audit: bool,
    /// Make `worker` panic in `round`; used to test failure handling.
    #[doc(hidden)]
    pub inject_failure: Option<(usize, usize)>,
}

impl Default for ParallelConfig {
    fn default() -> Self {
        Self {
            n_workers: 1,
            seed: 0,
            pipeline: true,
            mode: ObjectiveMode::Normalized,
            delay: None,
            audit: false,
            inject_failure: None,
        }
    }
}

impl ParallelConfig {
    pub fn with_workers(n_workers: usize) -> Self {
        Self {
            n_workers,
            ..Self::default()
        }
    }
}

/// `candidates` in a seeded random order.
pub fn shuffled_order(candidates: &[usize], seed: u64) -> Vec<usize> {
    let mut order = candidates.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

/// Contiguous shard ranges over a candidate list; sizes differ by at most one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkerPlan {
    shards: Vec<Range<usize>>,
}

impl WorkerPlan {
    pub fn new(n_workers: usize, n_candidates: usize) -> Self {
        let n = n_workers.max(1);
        let (base, extra) = (n_candidates / n, n_candidates % n);
        let mut start = 0;
        let shards = (0..n)
            .map(|w| {
                let len = base + usize::from(w < extra);
                let r = start..start + len;
                start += len;
                r
            })
            .collect();
        Self { shards }
    }

    pub fn n_workers(&self) -> usize {
        self.shards.len()
    }

    pub fn shard(&self, worker: usize) -> Range<usize> {
        self.shards[worker].clone()
    }

    pub fn shards(&self) -> &[Range<usize>] {
        &self.shards
    }
}

/// Shared tally of bytes pushed through [`CountingSender`]s.
#[derive(Debug, Clone, Default)]
pub struct ByteCounter(Arc<AtomicUsize>);

impl ByteCounter {
    pub fn total(&self) -> usize {
        self.0.load(Ordering::Relaxed)
    }
}

/// `mpsc::Sender` that adds the in-memory size of every message to a
/// [`ByteCounter`]. Message types used here hold no heap data, so the size
/// is exactly what a serialized message would carry.
#[derive(Debug)]
pub struct CountingSender<M> {
    inner: Sender<M>,
    counter: ByteCounter,
}

impl<M> Clone for CountingSender<M> {
    fn clone(&self) -> Self {
        Self {
            inner: self.inner.clone(),
            counter: self.counter.clone(),
        }
    }
}

impl<M> CountingSender<M> {
    pub fn new(inner: Sender<M>, counter: ByteCounter) -> Self {
        Self { inner, counter }
    }

    pub fn send(&self, msg: M) -> Result<(), SendError<M>> {
        self.counter.0.fetch_add(mem::size_of::<M>(), Ordering::Relaxed);
        self.inner.send(msg)
    }
}

/// Best feasible candidate of a shard.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalBest {
    /// Comparison key: `d` minus the per-sensor offset.
    pub key: f64,
    pub d: f64,
    pub s: usize,
}

/// Timing for one worker in one round.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkerTiming {
    pub worker: usize,
    pub n_candidates: usize,
    pub io_ms: f64,
    pub compute_ms: f64,
    pub wall_ms: f64,
    /// `max(0, 1 − wall / (io + compute))`.
    pub overlap: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LocalOutcome {
    pub best: Option<LocalBest>,
    pub n_evaluated: usize,
    pub n_infeasible: usize,
    pub timing: WorkerTiming,
}

/// Argmax over `(d, s)` pairs: largest `d`, ties to the smallest `s`.
/// NaN entries are ignored.
pub fn reduce_argmax(locals: &[(f64, usize)]) -> Result<(f64, usize), ParallelError> {
    locals
        .iter()
        .filter(|(d, _)| !d.is_nan())
        .fold(None, |best: Option<(f64, usize)>, &(d, s)| {
            if beats(d, s, best) {
                Some((d, s))
            } else {
                best
            }
        })
        .ok_or(ParallelError::AllInfeasible)
}

fn overlap(io_ms: f64, compute_ms: f64, wall_ms: f64) -> f64 {
    let busy = io_ms + compute_ms;
    if busy > 0.0 {
        (1.0 - wall_ms / busy).max(0.0)
    } else {
        0.0
    }
}

/// Score a shard against `state`, keeping only the local best.
///
/// With `pipeline` set, a reader thread fills one buffer of `buffers` while
/// the other is scored, so reads of candidate `i+1` overlap scoring of
/// candidate `i`. Results are identical either way.
#[allow(clippy::too_many_arguments)]
pub fn pipelined_evaluate<T: Real, S: BlockSource + ?Sized>(
    source: &S,
    state: &SelectionState<T>,
    shard: &[usize],
    offsets: &[f64],
    buffers: &mut [CandidateBuffer; 2],
    ws: &mut ScoreWorkspace<T>,
    pipeline: bool,
    delay: Option<SyntheticDelay>,
) -> Result<LocalOutcome, SelectError> {
    let started = Instant::now();
    let mut out = LocalOutcome::default();
    let (mut io, mut compute) = (Duration::ZERO, Duration::ZERO);
    let mut best: Option<(f64, usize)> = None;
    let mut best_d = f64::NEG_INFINITY;

    let mut score = |buf: &CandidateBuffer, out: &mut LocalOutcome| -> Result<(), SelectError> {
        let t = Instant::now();
        let s = buf.candidate();
        match score_fetched(state, buf, ws) {
            Ok(d) => {
                out.n_evaluated += 1;
                let key = d - offsets[s];
                if beats(key, s, best) {
                    best = Some((key, s));
                    best_d = d;
                }
            }
            Err(e) if is_infeasible(&e) => {
                out.n_infeasible += 1;
                log::warn!("candidate {s} infeasible ({e}); skipped this round");
            }
            Err(e) => return Err(e.into()),
        }
        if let Some(d) = delay {
            thread::sleep(d.compute);
        }
        compute += t.elapsed();
        Ok(())
    };

    if !pipeline || shard.len() < 2 {
        let buf = &mut buffers[0];
        for &s in shard {
            let t = Instant::now();
            fetch_candidate(source, state.chosen(), s, buf)?;
            if let Some(d) = delay {
                thread::sleep(d.io);
            }
            io += t.elapsed();
            score(buf, &mut out)?;
        }
    } else {
        let chosen = state.chosen();
        let result = thread::scope(|sc| -> Result<(), SelectError> {
            let (full_tx, full_rx) = mpsc::sync_channel::<(CandidateBuffer, Result<Duration, SelectError>)>(2);
            let (empty_tx, empty_rx) = mpsc::sync_channel::<CandidateBuffer>(2);
            for b in buffers.iter_mut() {
                empty_tx.send(mem::take(b)).expect("receiver alive");
            }
            let reader = sc.spawn(move || {
                for &s in shard {
                    let Ok(mut buf) = empty_rx.recv() else { break };
                    let t = Instant::now();
                    let r = fetch_candidate(source, chosen, s, &mut buf);
                    if let Some(d) = delay {
                        thread::sleep(d.io);
                    }
                    let failed = r.is_err();
                    let r = r.map(|_| t.elapsed()).map_err(SelectError::from);
                    if full_tx.send((buf, r)).is_err() || failed {
                        break;
                    }
                }
                empty_rx
            });
            let mut status = Ok(());
            for _ in shard {
                let Ok((buf, r)) = full_rx.recv() else { break };
                match r {
                    Ok(t) => io += t,
                    Err(e) => {
                        status = Err(e);
                        break;
                    }
                }
                if let Err(e) = score(&buf, &mut out) {
                    status = Err(e);
                    break;
                }
                let _ = empty_tx.send(buf);
            }
            drop(empty_tx);
            drop(full_rx);
            let empty_rx = match reader.join() {
                Ok(rx) => rx,
                Err(p) => panic::resume_unwind(p),
            };
            for b in buffers.iter_mut() {
                *b = empty_rx.recv().unwrap_or_default();
            }
            status
        });
        result?;
        if buffers.iter().any(|b| b.diag.is_empty()) {
            let (cap, nt) = (state.capacity(), state.n_steps());
            for b in buffers.iter_mut().filter(|b| b.diag.is_empty()) {
                *b = CandidateBuffer::new(cap, nt);
            }
        }
    }

    out.best = best.map(|(key, s)| LocalBest { key, d: best_d, s });
    let wall_ms = started.elapsed().as_secs_f64() * 1e3;
    let (io_ms, compute_ms) = (io.as_secs_f64() * 1e3, compute.as_secs_f64() * 1e3);
    out.timing = WorkerTiming {
        worker: 0,
        n_candidates: shard.len(),
        io_ms,
        compute_ms,
        wall_ms,
        overlap: overlap(io_ms, compute_ms, wall_ms),
    };
    Ok(out)
}

/// Everything one worker keeps between rounds.
#[derive(Debug, Clone)]
struct Replica<T: Real> {
    state: SelectionState<T>,
    buffers: [CandidateBuffer; 2],
    ws: ScoreWorkspace<T>,
}

impl<T: Real> Replica<T> {
    fn new(n_sensors: usize, capacity: usize, n_steps: usize) -> Self {
        Self {
            state: SelectionState::new(n_sensors, capacity, n_steps),
            buffers: [
                CandidateBuffer::new(capacity, n_steps),
                CandidateBuffer::new(capacity, n_steps),
            ],
            ws: ScoreWorkspace::new(capacity, n_steps),
        }
    }

    /// Re-read and re-score the winner, then append it.
    fn apply_winner<S: BlockSource + ?Sized>(
        &mut self,
        source: &S,
        s: usize,
    ) -> Result<f64, SelectError> {
        let buf = &mut self.buffers[0];
        fetch_candidate(source, self.state.chosen(), s, buf)?;
        let d = score_fetched(&self.state, buf, &mut self.ws)?;
        self.state
            .commit(s, &self.ws, d, source.noise_logdet(&[s]))?;
        Ok(d)
    }
}

#[derive(Debug, Clone, Copy)]
enum Report {
    Done {
        worker: usize,
        best: Option<LocalBest>,
        n_evaluated: usize,
        n_infeasible: usize,
        timing: WorkerTiming,
    },
    Failed,
}

#[derive(Debug, Clone, Copy)]
enum Decision {
    Commit { s: usize },
    Abort,
}

/// Outcome of one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundResult {
    pub round: usize,
    pub d_max: f64,
    pub s_star: usize,
    pub n_evaluated: usize,
    pub n_infeasible: usize,
    pub wall_ms: f64,
    pub workers: Vec<WorkerTiming>,
    /// Bytes sent over channels during the round, in both directions.
    pub bytes: usize,
    /// Largest entrywise difference between worker factors (audit only).
    pub replica_divergence: Option<f64>,
    /// Relative error of `L·Lᵀ` against `K_S` read from the source (audit only).
    pub reconstruction_error: Option<f64>,
}

pub const ROUNDS_CSV_HEADER: [&str; 6] = ["round", "worker", "io_ms", "compute_ms", "wall_ms", "overlap"];

pub fn write_rounds_csv<W: io::Write>(rounds: &[RoundResult], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(ROUNDS_CSV_HEADER)?;
    for r in rounds {
        for t in &r.workers {
            out.write_record([
                r.round.to_string(),
                t.worker.to_string(),
                format!("{:.6}", t.io_ms),
                format!("{:.6}", t.compute_ms),
                format!("{:.6}", t.wall_ms),
                format!("{:.6}", t.overlap),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// A pool of worker replicas driven round by round.
#[derive(Debug)]
pub struct ParallelEngine<'s, T: Real, S: BlockSource + ?Sized> {
    source: &'s S,
    config: ParallelConfig,
    replicas: Vec<Replica<T>>,
    offsets: Vec<f64>,
    counter: ByteCounter,
    rounds: usize,
}

impl<T: Real, S: BlockSource + ?Sized> Clone for ParallelEngine<'_, T, S> {
    fn clone(&self) -> Self {
        Self {
            source: self.source,
            config: self.config.clone(),
            replicas: self.replicas.clone(),
            offsets: self.offsets.clone(),
            counter: self.counter.clone(),
            rounds: self.rounds,
        }
    }
}

impl<'s, T: Real, S: BlockSource + ?Sized> ParallelEngine<'s, T, S> {
    pub fn new(source: &'s S, capacity: usize, config: ParallelConfig) -> Result<Self, ParallelError> {
        if config.n_workers == 0 {
            return Err(ParallelError::InvalidConfig("n_workers must be at least 1".into()));
        }
        let (nd, nt) = (source.n_sensors(), source.n_steps());
        let replicas = (0..config.n_workers)
            .map(|_| Replica::new(nd, capacity, nt))
            .collect();
        Ok(Self {
            source,
            offsets: selection_offsets(source),
            config,
            replicas,
            counter: ByteCounter::default(),
            rounds: 0,
        })
    }

    /// Copy of this engine with `n_workers` replicas of worker 0.
    pub fn with_workers(&self, n_workers: usize) -> Result<Self, ParallelError> {
        if n_workers == 0 {
            return Err(ParallelError::InvalidConfig("n_workers must be at least 1".into()));
        }
        let mut e = self.clone();
        e.config.n_workers = n_workers;
        e.replicas = vec![self.replicas[0].clone(); n_workers];
        e.counter = ByteCounter::default();
        Ok(e)
    }

    pub fn state(&self) -> &SelectionState<T> {
        &self.replicas[0].state
    }

    pub fn worker_state(&self, worker: usize) -> &SelectionState<T> {
        &self.replicas[worker].state
    }

    pub fn n_workers(&self) -> usize {
        self.replicas.len()
    }

    pub fn bytes_sent(&self) -> usize {
        self.counter.total()
    }

    pub fn config(&self) -> &ParallelConfig {
        &self.config
    }

    /// Run one round over `pool` (already ordered; may repeat sensors) and
    /// append the winner on every replica.
    pub fn step(&mut self, pool: &[usize]) -> Result<RoundResult, ParallelError> {
        let round = self.rounds;
        let started = Instant::now();
        let bytes_before = self.counter.total();
        let n = self.replicas.len();
        let plan = WorkerPlan::new(n, pool.len());
        let (source, offsets, cfg) = (self.source, &self.offsets, &self.config);
        let counter = &self.counter;

        let (report_tx, report_rx) = mpsc::channel::<Report>();
        let (decision_txs, decision_rxs): (Vec<_>, Vec<_>) =
            (0..n).map(|_| mpsc::channel::<Decision>()).unzip();

        let mut reports = Vec::with_capacity(n);
        let mut failures: Vec<(usize, String)> = Vec::new();
        let mut winner: Option<LocalBest> = None;

        thread::scope(|sc| {
            let handles: Vec<_> = self
                .replicas
                .iter_mut()
                .zip(decision_rxs)
                .enumerate()
                .map(|(w, (rep, drx))| {
                    let tx = CountingSender::new(report_tx.clone(), counter.clone());
                    let shard = &pool[plan.shard(w)];
                    sc.spawn(move || worker_round(w, round, rep, source, shard, offsets, cfg, tx, drx))
                })
                .collect();
            drop(report_tx);

            for msg in report_rx.iter().take(n) {
                reports.push(msg);
            }
            let failed = reports.len() < n || reports.iter().any(|r| matches!(r, Report::Failed));
            let locals: Vec<LocalBest> = reports
                .iter()
                .filter_map(|r| match r {
                    Report::Done { best, .. } => *best,
                    Report::Failed => None,
                })
                .collect();
            let decision = if failed {
                Decision::Abort
            } else {
                let keyed: Vec<(f64, usize)> = locals.iter().map(|b| (b.key, b.s)).collect();
                match reduce_argmax(&keyed) {
                    Ok((_, s)) => {
                        winner = locals.iter().copied().find(|b| b.s == s);
                        Decision::Commit { s }
                    }
                    Err(_) => Decision::Abort,
                }
            };
            for tx in decision_txs {
                let _ = CountingSender::new(tx, counter.clone()).send(decision);
            }
            for (w, h) in handles.into_iter().enumerate() {
                match h.join() {
                    Ok(Ok(())) => {}
                    Ok(Err(m)) => failures.push((w, m)),
                    Err(p) => failures.push((w, panic_message(&p))),
                }
            }
        });

        if let Some((worker, message)) = failures.into_iter().next() {
            return Err(ParallelError::WorkerFailure {
                round,
                worker,
                message,
            });
        }
        let mut timings = Vec::with_capacity(n);
        let (mut n_eval, mut n_inf) = (0, 0);
        for r in &reports {
            if let Report::Done {
                worker,
                n_evaluated,
                n_infeasible,
                timing,
                ..
            } = r
            {
                n_eval += n_evaluated;
                n_inf += n_infeasible;
                timings.push(WorkerTiming {
                    worker: *worker,
                    ..*timing
                });
            }
        }
        timings.sort_by_key(|t| t.worker);
        let Some(win) = winner else {
            return Err(SelectError::InfeasibleRound {
                round,
                n_infeasible: n_inf,
            }
            .into());
        };
        self.rounds += 1;
        let (replica_divergence, reconstruction_error) = if cfg.audit {
            (Some(self.replica_divergence()), Some(self.reconstruction_error()?))
        } else {
            (None, None)
        };
        Ok(RoundResult {
            round,
            d_max: win.d,
            s_star: win.s,
            n_evaluated: n_eval,
            n_infeasible: n_inf,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
            workers: timings,
            bytes: self.counter.total() - bytes_before,
            replica_divergence,
            reconstruction_error,
        })
    }

    /// Largest entrywise difference between any replica's factor and
    /// worker 0's.
    pub fn replica_divergence(&self) -> f64 {
        let reference = self.replicas[0].state.factor().to_dense();
        self.replicas[1..]
            .iter()
            .map(|r| {
                let f = r.state.factor().to_dense();
                reference
                    .as_slice()
                    .iter()
                    .zip(f.as_slice())
                    .map(|(a, b)| (a.widen() - b.widen()).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// Worst relative error of any replica's `L·Lᵀ` against `K_S`.
    pub fn reconstruction_error(&self) -> Result<f64, SelectError> {
        let chosen = self.state().chosen();
        let nt = self.source.n_steps();
        let dim = chosen.len() * nt;
        let mut ks = crate::linalg::DenseBlock::<f64>::zeros(dim, dim);
        let mut blk = vec![0.0; nt * nt];
        for (bi, &i) in chosen.iter().enumerate() {
            for (bj, &j) in chosen.iter().enumerate() {
                self.source.read_block(i, j, &mut blk)?;
                for a in 0..nt {
                    for b in 0..nt {
                        ks.set(bi * nt + a, bj * nt + b, blk[a * nt + b]);
                    }
                }
            }
        }
        Ok(self
            .replicas
            .iter()
            .map(|r| ks.max_rel_diff(&r.state.factor().reconstruct()))
            .fold(0.0, f64::max))
    }
}

#[allow(clippy::too_many_arguments)]
fn worker_round<T: Real, S: BlockSource + ?Sized>(
    worker: usize,
    round: usize,
    rep: &mut Replica<T>,
    source: &S,
    shard: &[usize],
    offsets: &[f64],
    cfg: &ParallelConfig,
    tx: CountingSender<Report>,
    decisions: Receiver<Decision>,
) -> Result<(), String> {
    let evaluated = panic::catch_unwind(AssertUnwindSafe(|| {
        if cfg.inject_failure == Some((round, worker)) {
            panic!("injected failure");
        }
        pipelined_evaluate(
            source,
            &rep.state,
            shard,
            offsets,
            &mut rep.buffers,
            &mut rep.ws,
            cfg.pipeline,
            cfg.delay,
        )
    }));
    let local = match evaluated {
        Ok(Ok(local)) => local,
        Ok(Err(e)) => {
            let _ = tx.send(Report::Failed);
            return Err(e.to_string());
        }
        Err(p) => {
            let _ = tx.send(Report::Failed);
            return Err(panic_message(&p));
        }
    };
    let _ = tx.send(Report::Done {
        worker,
        best: local.best,
        n_evaluated: local.n_evaluated,
        n_infeasible: local.n_infeasible,
        timing: local.timing,
    });
    match decisions.recv() {
        Ok(Decision::Commit { s }) => {
            panic::catch_unwind(AssertUnwindSafe(|| rep.apply_winner(source, s)))
                .map_err(|p| panic_message(&p))?
                .map_err(|e| e.to_string())?;
            Ok(())
        }
        Ok(Decision::Abort) | Err(_) => Ok(()),
    }
}

fn panic_message(p: &Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = p.downcast_ref::<String>() {
        s.clone()
    } else {
        "worker panicked".to_string()
    }
}

/// Full result of [`run_parallel_greedy`].
#[derive(Debug, Clone)]
pub struct ParallelRun<T: Real = f64> {
    pub state: SelectionState<T>,
    pub trace: SelectionTrace,
    pub rounds: Vec<RoundResult>,
}

/// Greedy selection over `n_workers` replicas. The chosen sequence equals
/// that of [`crate::selector::greedy_select_in`] for every worker count.
pub fn run_parallel_greedy<T: Real, S: BlockSource + ?Sized>(
    source: &S,
    candidates: &[usize],
    budget: usize,
    config: &ParallelConfig,
) -> Result<ParallelRun<T>, ParallelError> {
    let budget = prepare_candidates(source, candidates, budget)?;
    let order = shuffled_order(candidates, config.seed);
    let mut engine = ParallelEngine::<T, S>::new(source, budget, config.clone())?;
    let mut trace = SelectionTrace::new(config.mode);
    let mut rounds = Vec::with_capacity(budget);
    let mut pool = Vec::with_capacity(order.len());
    for _ in 0..budget {
        let started = Instant::now();
        pool.clear();
        pool.extend(order.iter().copied().filter(|&s| !engine.state().contains(s)));
        let r = engine.step(&pool)?;
        let state = engine.state();
        trace.records.push(trace_record(
            state.len(),
            r.s_star,
            state.objective(config.mode),
            reported_gain(source, config.mode, r.s_star, r.d_max),
            r.n_evaluated,
            r.n_infeasible,
            started,
        ));
        rounds.push(r);
    }
    Ok(ParallelRun {
        state: engine.replicas.swap_remove(0).state,
        trace,
        rounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_balances_shards() {
        let p = WorkerPlan::new(4, 10);
        let sizes: Vec<usize> = p.shards().iter().map(|r| r.len()).collect();
        assert_eq!(sizes, vec![3, 3, 2, 2]);
        assert_eq!(p.shard(0).start, 0);
        assert_eq!(p.shard(3).end, 10);
        let p = WorkerPlan::new(8, 3);
        assert_eq!(p.shards().iter().map(|r| r.len()).sum::<usize>(), 3);
    }

    #[test]
    fn reduce_examples() {
        assert_eq!(reduce_argmax(&[(1.0, 5), (2.0, 3)]).unwrap(), (2.0, 3));
        assert_eq!(reduce_argmax(&[(2.0, 7), (2.0, 3)]).unwrap(), (2.0, 3));
        assert!(matches!(reduce_argmax(&[]), Err(ParallelError::AllInfeasible)));
    }

    #[test]
    fn shuffle_is_seeded_permutation() {
        let c: Vec<usize> = (0..20).collect();
        let a = shuffled_order(&c, 3);
        assert_eq!(a, shuffled_order(&c, 3));
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, c);
    }

    #[test]
    fn overlap_is_clamped() {
        assert_eq!(overlap(5.0, 5.0, 12.0), 0.0);
        assert!((overlap(5.0, 5.0, 5.0) - 0.5).abs() < 1e-15);
        assert_eq!(overlap(0.0, 0.0, 1.0), 0.0);
    }
}
