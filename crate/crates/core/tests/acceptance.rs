//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::{direct_posterior, logdet_na, principal_na, random_k, random_problem, rng, standard_k, to_na};
use rand::Rng;
use sensorsel::bench::{complexity_sweep, KroneckerSource, SweepConfig};
use sensorsel::lti::{PosteriorEvaluator, WaveSpec, WeightSpec};
use sensorsel::parallel::{pipelined_evaluate, run_parallel_greedy, ParallelConfig, SyntheticDelay};
use sensorsel::selector::{
    evaluate_subset, exact_select, random_baseline, score_candidate, selection_offsets,
    submodularity_probe, CandidateBuffer, ScoreWorkspace, SelectionState,
};
use sensorsel::{assemble_k, greedy_select, naive_select, BlockSource, ObjectiveMode};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn all<S: BlockSource>(s: &S) -> Vec<usize> {
    (0..s.n_sensors()).collect()
}

fn grow_state<S: BlockSource>(k: &S, chosen: &[usize], cap: usize) -> SelectionState<f64> {
    let nt = k.n_steps();
    let mut state = SelectionState::new(k.n_sensors(), cap, nt);
    let mut buf = CandidateBuffer::new(cap, nt);
    let mut ws = ScoreWorkspace::new(cap, nt);
    for &c in chosen {
        let d = score_candidate(&state, k, c, &mut buf, &mut ws).unwrap();
        state.commit(c, &ws, d, 0.0).unwrap();
    }
    state
}

fn schur_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng(101);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let nd = r.random_range(2..=12);
        let nt = r.random_range(1..=4);
        let k = random_k(&mut r, nd, nt);
        let len = r.random_range(0..nd);
        let picks = rand::seq::index::sample(&mut r, nd, len + 1).into_vec();
        let (chosen, s) = (&picks[..len], picks[len]);
        let state = grow_state(&k, chosen, len + 1);
        let mut buf = CandidateBuffer::new(len + 1, nt);
        let mut ws = ScoreWorkspace::new(len + 1, nt);
        let d = score_candidate(&state, &k, s, &mut buf, &mut ws).map_err(|e| e.to_string())?;
        let without = if len == 0 { 0.0 } else { logdet_na(&principal_na(&k, chosen)) };
        let err = (d - (logdet_na(&principal_na(&k, &picks)) - without)).abs();
        worst = worst.max(err);
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst <= 1e-8, || format!("max abs error {worst:.3e}"))?;
    ensure(secs < 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!("max abs error {worst:.2e} over 200 instances in {secs:.2} s"))
}

fn greedy_equals_naive() -> Outcome {
    let mut r = rng(102);
    for i in 0..50 {
        let nd = r.random_range(2..=12);
        let nt = r.random_range(1..=4);
        let k = random_k(&mut r, nd, nt);
        let b = r.random_range(1..=nd);
        for mode in [ObjectiveMode::Raw, ObjectiveMode::Normalized] {
            let (g, _) = greedy_select(&k, &all(&k), b, mode).map_err(|e| e.to_string())?;
            let (n, _) = naive_select(&k, &all(&k), b, mode).map_err(|e| e.to_string())?;
            ensure(g.chosen() == n.chosen(), || format!("instance {i}: {:?} vs {:?}", g.chosen(), n.chosen()))?;
        }
    }
    let (_, k) = standard_k();
    let (g, _) = greedy_select(&k, &all(&k), 12, ObjectiveMode::Normalized).map_err(|e| e.to_string())?;
    let (n, _) = naive_select(&k, &all(&k), 12, ObjectiveMode::Normalized).map_err(|e| e.to_string())?;
    ensure(g.chosen() == n.chosen(), || format!("wave benchmark: {:?} vs {:?}", g.chosen(), n.chosen()))?;
    Ok(format!("50 random instances in both modes and the wave benchmark: {:?}", g.chosen()))
}

fn submodularity_and_guarantee() -> Outcome {
    let mut r = rng(103);
    let mut min_slack = f64::INFINITY;
    for t in 0..5 {
        let k = random_k(&mut r, 10, 1 + t % 3);
        let report = submodularity_probe(&k, 100, t as u64).map_err(|e| e.to_string())?;
        min_slack = min_slack.min(report.min_slack);
    }
    ensure(min_slack >= -1e-8, || format!("min slack {min_slack:.3e}"))?;
    let bound = 1.0 - (-1.0f64).exp();
    let mut worst = f64::INFINITY;
    let mut near = 0;
    for i in 0..200 {
        let nt = r.random_range(1..=3);
        let k = random_k(&mut r, 8, nt);
        let exact = exact_select(&k, &all(&k), 3).map_err(|e| e.to_string())?;
        let (g, _) = greedy_select(&k, &all(&k), 3, ObjectiveMode::Normalized).map_err(|e| e.to_string())?;
        let ratio = g.normalized_objective() / exact.normalized;
        ensure(g.normalized_objective() >= bound * exact.normalized, || format!("instance {i}: ratio {ratio:.4}"))?;
        worst = worst.min(ratio);
        near += usize::from(ratio >= 0.95);
    }
    Ok(format!(
        "500 probes, min slack {min_slack:.2e}; worst ratio {worst:.4} ≥ {bound:.4}; {near}/200 within 5% of optimum"
    ))
}

fn woodbury_consistency() -> Outcome {
    let mut r = rng(104);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let nm = r.random_range(1..=8);
        let nd = r.random_range(1..=4);
        let nt = r.random_range(1..=4);
        let p = random_problem(&mut r, nm, nd, nt);
        let size = r.random_range(1..=nd);
        let sensors = rand::seq::index::sample(&mut r, nd, size).into_vec();
        let ev = PosteriorEvaluator::new(&p).map_err(|e| e.to_string())?;
        let post = to_na(&ev.covariance(&sensors).map_err(|e| e.to_string())?);
        let direct = direct_posterior(&p, &sensors);
        worst = worst.max((&post - &direct).abs().max() / direct.abs().max());
    }
    ensure(worst <= 1e-6, || format!("max relative error {worst:.3e}"))?;
    Ok(format!("max relative error {worst:.2e} over 50 problems"))
}

fn complexity_trend() -> Outcome {
    let start = Instant::now();
    let table = complexity_sweep(&SweepConfig::default()).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let (s, n) = (table.schur_slope(), table.naive_slope());
    table.check().map_err(|e| format!("{e} (schur {s:?}, naive {n:?})"))?;
    ensure(secs < 600.0, || format!("took {secs:.0} s"))?;
    Ok(format!(
        "N_t=32, k≤64: schur slope {:.2}, naive slope {:.2}, schur faster for k ≥ 5; {secs:.0} s",
        s.unwrap_or(f64::NAN),
        n.unwrap_or(f64::NAN)
    ))
}

fn parallel_determinism() -> Outcome {
    let (_, k) = standard_k();
    let (g, _) = greedy_select(&k, &all(&k), 12, ObjectiveMode::Normalized).map_err(|e| e.to_string())?;
    let mut bytes = Vec::new();
    for workers in [1, 2, 4, 8] {
        let run = run_parallel_greedy::<f64, _>(&k, &all(&k), 12, &ParallelConfig::with_workers(workers))
            .map_err(|e| e.to_string())?;
        ensure(run.state.chosen() == g.chosen(), || format!("{workers} workers: {:?}", run.state.chosen()))?;
        let per_round: Vec<usize> = run.rounds.iter().map(|r| r.bytes).collect();
        ensure(per_round.iter().all(|&b| b == per_round[0]), || format!("bytes vary with k: {per_round:?}"))?;
        for nt in [4, 32] {
            let src = KroneckerSource::new(32, nt, 1);
            let other = run_parallel_greedy::<f64, _>(&src, &all(&src), 12, &ParallelConfig::with_workers(workers))
                .map_err(|e| e.to_string())?;
            ensure(other.rounds.iter().all(|r| r.bytes == per_round[0]), || format!("bytes vary with N_t={nt}"))?;
        }
        bytes.push(per_round[0]);
    }
    Ok(format!("identical sequences for 1/2/4/8 workers; bytes per round {bytes:?}"))
}

fn pipeline_overlap() -> Outcome {
    let src = KroneckerSource::new(108, 4, 5);
    let state = grow_state(&src, &[0, 1, 2, 3], 5);
    let offsets = selection_offsets(&src);
    let shard: Vec<usize> = (4..108).collect();
    let delay = Some(SyntheticDelay { io: Duration::from_millis(5), compute: Duration::from_millis(5) });
    let time = |pipeline: bool| -> Result<(f64, usize), String> {
        let mut buffers = [CandidateBuffer::new(5, 4), CandidateBuffer::new(5, 4)];
        let mut ws = ScoreWorkspace::new(5, 4);
        let t = Instant::now();
        let out = pipelined_evaluate(&src, &state, &shard, &offsets, &mut buffers, &mut ws, pipeline, delay)
            .map_err(|e| e.to_string())?;
        Ok((t.elapsed().as_secs_f64() * 1e3, out.best.map_or(usize::MAX, |b| b.s)))
    };
    let (seq, a) = time(false)?;
    let (pipe, b) = time(true)?;
    ensure(a == b, || format!("winners differ: {a} vs {b}"))?;
    let ratio = pipe / seq;
    ensure(ratio <= 0.6, || format!("ratio {ratio:.3} ({pipe:.0} ms vs {seq:.0} ms)"))?;
    Ok(format!("{} candidates: {pipe:.0} ms vs {seq:.0} ms sequential, ratio {ratio:.3}", shard.len()))
}

fn variance_monotone() -> Outcome {
    let (p, k) = standard_k();
    let (g, _) = greedy_select(&k, &all(&k), 12, ObjectiveMode::Normalized).map_err(|e| e.to_string())?;
    let ev = PosteriorEvaluator::new(&p).map_err(|e| e.to_string())?;
    let mut prev = ev.pointwise_variance(&[]).map_err(|e| e.to_string())?;
    let mut worst = f64::NEG_INFINITY;
    for kk in 1..=12 {
        let v = ev.pointwise_variance(&g.chosen()[..kk]).map_err(|e| e.to_string())?;
        for (a, b) in v.as_slice().iter().zip(prev.as_slice()) {
            worst = worst.max(a - b);
        }
        prev = v;
    }
    ensure(worst <= 1e-10, || format!("largest increase {worst:.3e}"))?;
    Ok(format!("{} pointwise variances over 12 steps, largest change {worst:.2e}", prev.as_slice().len()))
}

fn greedy_vs_random() -> Outcome {
    let (_, k) = standard_k();
    let (g, _) = greedy_select(&k, &all(&k), 12, ObjectiveMode::Normalized).map_err(|e| e.to_string())?;
    let greedy = evaluate_subset(&k, g.chosen()).map_err(|e| e.to_string())?.normalized;
    let samples = random_baseline(&k, &all(&k), 12, 100, 0).map_err(|e| e.to_string())?;
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let beaten = samples.iter().filter(|&&v| v >= greedy).count();
    ensure(greedy > mean, || format!("greedy {greedy:.3} ≤ mean {mean:.3}"))?;
    Ok(format!(
        "greedy {greedy:.3}, random mean {mean:.3}, max {max:.3}; {beaten}/100 samples reach greedy"
    ))
}

fn precision_agreement() -> Outcome {
    let (_, k) = standard_k();
    let (g, _) = greedy_select(&k, &all(&k), 12, ObjectiveMode::Normalized).map_err(|e| e.to_string())?;
    let run = run_parallel_greedy::<f32, _>(&k, &all(&k), 12, &ParallelConfig::with_workers(1))
        .map_err(|e| e.to_string())?;
    ensure(run.state.chosen() == g.chosen(), || format!("f32 {:?} vs f64 {:?}", run.state.chosen(), g.chosen()))?;
    let diff = (run.state.normalized_objective() - g.normalized_objective()).abs();
    Ok(format!("identical sequences; objective differs by {diff:.2e}"))
}

fn weighting_and_masking() -> Outcome {
    let p = WaveSpec::standard().build().map_err(|e| e.to_string())?;
    let plain = assemble_k(&p, None).map_err(|e| e.to_string())?;
    let ones = assemble_k(&p, Some(&WeightSpec::uniform(&p))).map_err(|e| e.to_string())?;
    let bitwise = plain.as_slice().iter().zip(ones.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits());
    ensure(bitwise, || "unit weights changed K".into())?;
    let nt = p.n_steps();
    let region: Vec<usize> = (10..30).collect();
    let mut w = WeightSpec::uniform(&p);
    for &j in &region {
        w.mask_weights[j * nt..(j + 1) * nt].fill(0.0);
    }
    let masked = assemble_k(&p, Some(&w)).map_err(|e| e.to_string())?;
    let removed = assemble_k(&p.without_params(&region), None).map_err(|e| e.to_string())?;
    let diff = masked
        .as_slice()
        .iter()
        .zip(removed.as_slice())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    ensure(diff <= 1e-12, || format!("mask vs removal differ by {diff:.3e}"))?;
    Ok(format!("unit weights bitwise equal; mask vs removal max diff {diff:.2e}"))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("schur score vs refactorization", schur_oracle),
        ("greedy equals naive", greedy_equals_naive),
        ("submodularity and (1-1/e) bound", submodularity_and_guarantee),
        ("data-space vs parameter-space posterior", woodbury_consistency),
        ("complexity trend", complexity_trend),
        ("parallel determinism and message bound", parallel_determinism),
        ("pipeline overlap", pipeline_overlap),
        ("variance monotonicity", variance_monotone),
        ("greedy vs random", greedy_vs_random),
        ("f32 vs f64 selection", precision_agreement),
        ("weighting and masking", weighting_and_masking),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name} ({secs:.1} s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({secs:.1} s): {detail}", i + 1);
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
