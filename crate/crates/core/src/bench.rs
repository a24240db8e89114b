//! Timing harness: per-candidate cost against `k` for both scoring
//! strategies, and strong/weak scaling of the worker pool.

use std::io;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::kstore::StoreError;
use crate::linalg::Real;
use crate::parallel::{shuffled_order, ParallelConfig, ParallelEngine, ParallelError};
use crate::selector::{
    extend_principal, fetch_candidate, refactor_score, score_fetched, CandidateBuffer,
    ScoreWorkspace, SelectError, SelectionState,
};
use crate::source::{check_block_request, BlockSource};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Parallel(#[from] ParallelError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("invalid benchmark configuration: {0}")]
    InvalidConfig(String),
    #[error("assertion failed: {0}")]
    Assertion(String),
}

/// `K = A ⊗ T + δ·I` generated on the fly, with `A` and `T` exponential
/// kernels. Cheap to read, SPD, and sized independently of any physics.
#[derive(Debug, Clone)]
pub struct KroneckerSource {
    n_sensors: usize,
    n_steps: usize,
    spatial: Vec<f64>,
    temporal: Vec<f64>,
    noise: f64,
}

impl KroneckerSource {
    pub fn new(n_sensors: usize, n_steps: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..n_sensors)
            .map(|_| rng.random_range(0.0..n_sensors as f64))
            .collect();
        let ell_x = 2.0;
        let ell_t = n_steps.max(1) as f64 / 4.0;
        let mut spatial = vec![0.0; n_sensors * n_sensors];
        for i in 0..n_sensors {
            for j in 0..n_sensors {
                spatial[i * n_sensors + j] = (-(x[i] - x[j]).abs() / ell_x).exp();
            }
        }
        let mut temporal = vec![0.0; n_steps * n_steps];
        for a in 0..n_steps {
            for b in 0..n_steps {
                temporal[a * n_steps + b] = (-(a as f64 - b as f64).abs() / ell_t).exp();
            }
        }
        Self {
            n_sensors,
            n_steps,
            spatial,
            temporal,
            noise: 0.1,
        }
    }

    pub fn to_hessian(&self) -> Result<crate::lti::DataSpaceHessian, BenchError> {
        let (nd, nt) = (self.n_sensors, self.n_steps);
        let nb = nt * nt;
        let mut data = vec![0.0; nd * nd * nb];
        for q in 0..nd * nd {
            self.read_block(q / nd, q % nd, &mut data[q * nb..(q + 1) * nb])?;
        }
        crate::lti::DataSpaceHessian::from_blocks(nd, nt, data, vec![self.noise; nd])
            .map_err(|e| BenchError::InvalidConfig(e.to_string()))
    }
}

impl BlockSource for KroneckerSource {
    fn n_sensors(&self) -> usize {
        self.n_sensors
    }

    fn n_steps(&self) -> usize {
        self.n_steps
    }

    fn noise_variance(&self, _i: usize) -> f64 {
        self.noise
    }

    fn read_block(&self, i: usize, j: usize, out: &mut [f64]) -> Result<(), StoreError> {
        check_block_request(self.n_sensors, self.n_steps, i, j, out.len())?;
        let a = self.spatial[i * self.n_sensors + j];
        for (o, t) in out.iter_mut().zip(&self.temporal) {
            *o = a * t;
        }
        if i == j {
            for d in 0..self.n_steps {
                out[d * self.n_steps + d] += self.noise;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub n_steps: usize,
    pub k_max: usize,
    pub step: usize,
    pub reps: usize,
    /// Candidates scored per timed run.
    pub batch: usize,
    /// Skip any `k` whose buffers would exceed this many bytes.
    pub memory_budget: usize,
    /// Time the refactorization kernel in the Schur column as well
    /// (a deliberately broken configuration for negative tests).
    pub disable_schur: bool,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n_steps: 32,
            k_max: 64,
            step: 4,
            reps: 5,
            batch: 2,
            memory_budget: 2 << 30,
            disable_schur: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub mean_ms: f64,
    pub std_ms: f64,
}

impl Timing {
    fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len().max(1) as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean_ms: mean,
            std_ms: var.sqrt(),
        }
    }
}

/// `None` marks a point skipped for exceeding the memory budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityRow {
    pub k: usize,
    pub naive: Option<Timing>,
    pub schur: Option<Timing>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityTable {
    pub config: SweepConfig,
    pub rows: Vec<ComplexityRow>,
}

pub const COMPLEXITY_CSV_HEADER: [&str; 3] = ["k", "naive_ms", "schur_ms"];
pub const OOM_MARKER: &str = "OOM";

/// Slope bounds checked by [`ComplexityTable::check`].
pub const SCHUR_SLOPE: (f64, f64) = (1.6, 2.4);
pub const NAIVE_SLOPE: (f64, f64) = (2.5, 3.5);

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|(x, y)| (x.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

impl ComplexityTable {
    fn top_decade(&self, pick: impl Fn(&ComplexityRow) -> Option<Timing>) -> Vec<(f64, f64)> {
        let k_top = self
            .rows
            .iter()
            .filter(|r| pick(r).is_some())
            .map(|r| r.k)
            .max()
            .unwrap_or(0);
        self.rows
            .iter()
            .filter(|r| r.k * 10 >= k_top && r.k > 0)
            .filter_map(|r| pick(r).map(|t| (r.k as f64, t.mean_ms)))
            .collect()
    }

    pub fn schur_slope(&self) -> Option<f64> {
        loglog_slope(&self.top_decade(|r| r.schur))
    }

    pub fn naive_slope(&self) -> Option<f64> {
        loglog_slope(&self.top_decade(|r| r.naive))
    }

    /// Slopes within bounds and Schur faster wherever `k ≥ 5`.
    pub fn check(&self) -> Result<(), BenchError> {
        let s = self
            .schur_slope()
            .ok_or_else(|| BenchError::Assertion("too few Schur points for a slope".into()))?;
        let n = self
            .naive_slope()
            .ok_or_else(|| BenchError::Assertion("too few naive points for a slope".into()))?;
        if !(SCHUR_SLOPE.0..=SCHUR_SLOPE.1).contains(&s) {
            return Err(BenchError::Assertion(format!(
                "Schur slope {s:.3} outside [{}, {}]",
                SCHUR_SLOPE.0, SCHUR_SLOPE.1
            )));
        }
        if !(NAIVE_SLOPE.0..=NAIVE_SLOPE.1).contains(&n) {
            return Err(BenchError::Assertion(format!(
                "naive slope {n:.3} outside [{}, {}]",
                NAIVE_SLOPE.0, NAIVE_SLOPE.1
            )));
        }
        for r in self.rows.iter().filter(|r| r.k >= 5) {
            if let (Some(sc), Some(nv)) = (r.schur, r.naive) {
                if sc.mean_ms >= nv.mean_ms {
                    return Err(BenchError::Assertion(format!(
                        "Schur ({:.4} ms) not faster than naive ({:.4} ms) at k={}",
                        sc.mean_ms, nv.mean_ms, r.k
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn write_csv<W: io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(COMPLEXITY_CSV_HEADER)?;
        let cell = |t: Option<Timing>| t.map_or_else(|| OOM_MARKER.to_string(), |t| format!("{:.6}", t.mean_ms));
        for r in &self.rows {
            out.write_record([r.k.to_string(), cell(r.naive), cell(r.schur)])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn sweep_points(cfg: &SweepConfig) -> Vec<usize> {
    (1..=cfg.k_max / cfg.step).map(|m| m * cfg.step).collect()
}

/// Bytes held by the sweep at iterate `k`: the factor, the stored `K_S`,
/// the refactorization scratch and the candidate buffers.
pub fn sweep_bytes(k: usize, n_steps: usize) -> usize {
    let dim = (k + 1) * n_steps;
    8 * (3 * dim * dim + 4 * dim * n_steps)
}

/// Mean per-candidate scoring time for naive and Schur scoring at each
/// `k ∈ {step, 2·step, …, k_max}`, after one warm-up run.
pub fn complexity_sweep(cfg: &SweepConfig) -> Result<ComplexityTable, BenchError> {
    if cfg.step == 0 || cfg.k_max < cfg.step || cfg.reps == 0 || cfg.batch == 0 || cfg.n_steps == 0 {
        return Err(BenchError::InvalidConfig(
            "need step ≥ 1, k_max ≥ step, reps ≥ 1, batch ≥ 1, n_steps ≥ 1".into(),
        ));
    }
    let points = sweep_points(cfg);
    let fits = |k: usize| sweep_bytes(k, cfg.n_steps) <= cfg.memory_budget;
    let k_cap = points.iter().copied().filter(|&k| fits(k)).max().unwrap_or(0);
    let nt = cfg.n_steps;
    let source = KroneckerSource::new(k_cap + cfg.batch, nt, cfg.seed);
    let cap = k_cap + 1;
    let big = cap * nt;

    let mut rows = Vec::with_capacity(points.len());
    let mut state = SelectionState::<f64>::new(source.n_sensors(), cap, nt);
    let mut ks: Vec<f64> = Vec::new();
    let mut test: Vec<f64> = Vec::new();
    if k_cap > 0 {
        for v in [&mut ks, &mut test] {
            v.try_reserve_exact(big * big)
                .map_err(|e| BenchError::InvalidConfig(format!("allocation failed: {e}")))?;
            v.resize(big * big, 0.0);
        }
    }
    let mut buf = CandidateBuffer::new(cap, nt);
    let mut ws = ScoreWorkspace::<f64>::new(cap, nt);
    let batch: Vec<usize> = (k_cap..k_cap + cfg.batch).collect();

    for &k in &points {
        if !fits(k) {
            log::warn!("k={k} exceeds the memory budget; marked {OOM_MARKER}");
            rows.push(ComplexityRow {
                k,
                naive: None,
                schur: None,
            });
            continue;
        }
        while state.len() < k {
            let s = state.len();
            fetch_candidate(&source, state.chosen(), s, &mut buf)?;
            extend_principal(&mut ks, big, &buf, s * nt, nt);
            let d = score_fetched(&state, &buf, &mut ws).map_err(SelectError::from)?;
            state.commit(s, &ws, d, 0.0)?;
        }

        let mut time_mode = |naive: bool| -> Result<Timing, BenchError> {
            let mut samples = Vec::with_capacity(cfg.reps);
            for rep in 0..=cfg.reps {
                let t = Instant::now();
                for &s in &batch {
                    fetch_candidate(&source, state.chosen(), s, &mut buf)?;
                    if naive {
                        refactor_score(&ks, big, &buf, nt, &mut test).map_err(SelectError::from)?;
                    } else {
                        score_fetched(&state, &buf, &mut ws).map_err(SelectError::from)?;
                    }
                }
                if rep > 0 {
                    samples.push(t.elapsed().as_secs_f64() * 1e3 / batch.len() as f64);
                }
            }
            Ok(Timing::from_samples(&samples))
        };
        let naive = time_mode(true)?;
        let schur = time_mode(cfg.disable_schur)?;
        log::info!("k={k}: naive {:.4} ms, schur {:.4} ms", naive.mean_ms, schur.mean_ms);
        rows.push(ComplexityRow {
            k,
            naive: Some(naive),
            schur: Some(schur),
        });
    }
    Ok(ComplexityTable {
        config: cfg.clone(),
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalingMode {
    Strong,
    Weak,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub mode: ScalingMode,
    pub workers: usize,
    pub n_candidates: usize,
    pub wall_ms: f64,
    pub efficiency: f64,
}

pub const SCALING_CSV_HEADER: [&str; 5] = ["mode", "workers", "n_candidates", "wall_ms", "efficiency"];

pub fn write_scaling_csv<W: io::Write>(rows: &[ScalingRow], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SCALING_CSV_HEADER)?;
    for r in rows {
        let mode = match r.mode {
            ScalingMode::Strong => "strong",
            ScalingMode::Weak => "weak",
        };
        out.write_record([
            mode.to_string(),
            r.workers.to_string(),
            r.n_candidates.to_string(),
            format!("{:.6}", r.wall_ms),
            format!("{:.4}", r.efficiency),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingConfig {
    /// Iterate at which rounds are timed.
    pub b_round: usize,
    pub worker_counts: Vec<usize>,
    /// Virtual candidates per worker in the weak-scaling runs.
    pub per_worker: usize,
    pub reps: usize,
    pub seed: u64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            b_round: 8,
            worker_counts: vec![1, 2, 4],
            per_worker: 64,
            reps: 3,
            seed: 0,
        }
    }
}

/// Time one round at iterate `b_round` for each worker count.
///
/// Strong scaling keeps the surviving candidate pool fixed; weak scaling
/// gives every worker `per_worker` virtual candidates, mapped onto real
/// sensors modulo the pool size. Efficiencies are relative to the first
/// (smallest) worker count.
pub fn strong_weak_scaling<T: Real, S: BlockSource + ?Sized>(
    source: &S,
    candidates: &[usize],
    cfg: &ScalingConfig,
) -> Result<Vec<ScalingRow>, BenchError> {
    if cfg.worker_counts.is_empty()
        || cfg.worker_counts.contains(&0)
        || !cfg.worker_counts.windows(2).all(|w| w[0] < w[1])
    {
        return Err(BenchError::InvalidConfig(
            "worker counts must be positive and strictly ascending".into(),
        ));
    }
    if cfg.b_round >= candidates.len() || cfg.reps == 0 {
        return Err(BenchError::InvalidConfig(format!(
            "b_round {} must be below the {} candidates and reps ≥ 1",
            cfg.b_round,
            candidates.len()
        )));
    }
    let order = shuffled_order(candidates, cfg.seed);
    let pcfg = ParallelConfig {
        seed: cfg.seed,
        ..ParallelConfig::default()
    };
    let mut base = ParallelEngine::<T, S>::new(source, cfg.b_round + 1, pcfg)?;
    for _ in 0..cfg.b_round {
        let pool: Vec<usize> = order.iter().copied().filter(|&s| !base.state().contains(s)).collect();
        base.step(&pool)?;
    }
    let pool: Vec<usize> = order.iter().copied().filter(|&s| !base.state().contains(s)).collect();

    let time_round = |workers: usize, list: &[usize]| -> Result<f64, BenchError> {
        let mut total = 0.0;
        for _ in 0..cfg.reps {
            let mut e = base.with_workers(workers)?;
            let t = Instant::now();
            e.step(list)?;
            total += t.elapsed().as_secs_f64() * 1e3;
        }
        Ok(total / cfg.reps as f64)
    };

    let mut rows = Vec::new();
    let w0 = cfg.worker_counts[0];
    let mut t0 = None;
    for &w in &cfg.worker_counts {
        let t = time_round(w, &pool)?;
        let base_t = *t0.get_or_insert(t);
        rows.push(ScalingRow {
            mode: ScalingMode::Strong,
            workers: w,
            n_candidates: pool.len(),
            wall_ms: t,
            efficiency: base_t * w0 as f64 / (t * w as f64),
        });
    }
    let mut t0 = None;
    for &w in &cfg.worker_counts {
        let list: Vec<usize> = (0..cfg.per_worker * w).map(|v| pool[v % pool.len()]).collect();
        let t = time_round(w, &list)?;
        let base_t = *t0.get_or_insert(t);
        rows.push(ScalingRow {
            mode: ScalingMode::Weak,
            workers: w,
            n_candidates: list.len(),
            wall_ms: t,
            efficiency: base_t / t,
        });
    }
    Ok(rows)
}
