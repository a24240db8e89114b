use itertools::Itertools;
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::greedy::prepare_candidates;
use super::SelectError;
use crate::linalg::kernels;
use crate::source::BlockSource;

/// Largest number of subsets [`exact_select`] will enumerate.
pub const EXACT_SUBSET_LIMIT: u128 = 1_000_000;

/// Violations smaller than this are attributed to roundoff.
pub const PROBE_SLACK: f64 = 1e-8;

/// Objective values of one sensor subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetValue {
    pub chosen: Vec<usize>,
    pub log_det: f64,
    pub normalized: f64,
}

/// Dense `K_S` (blocks in the order of `sensors`) into `out`.
fn gather_principal<S: BlockSource + ?Sized>(
    source: &S,
    sensors: &[usize],
    block: &mut [f64],
    out: &mut [f64],
) -> Result<(), SelectError> {
    let nt = source.n_steps();
    let dim = sensors.len() * nt;
    for (bi, &i) in sensors.iter().enumerate() {
        for (bj, &j) in sensors.iter().enumerate().take(bi + 1) {
            source.read_block(i, j, block)?;
            for a in 0..nt {
                let r = (bi * nt + a) * dim + bj * nt;
                out[r..r + nt].copy_from_slice(&block[a * nt..(a + 1) * nt]);
            }
        }
    }
    Ok(())
}

/// `log det K_S` by a fresh factorization; zero for the empty set.
pub fn subset_logdet<S: BlockSource + ?Sized>(
    source: &S,
    sensors: &[usize],
) -> Result<f64, SelectError> {
    let nt = source.n_steps();
    let dim = sensors.len() * nt;
    let mut block = vec![0.0; nt * nt];
    let mut k = vec![0.0; dim * dim];
    gather_principal(source, sensors, &mut block, &mut k)?;
    kernels::cholesky_lower(&mut k, dim, dim)?;
    Ok(kernels::logdet_lower(&k, dim, dim)?)
}

/// Raw and normalized objective of `sensors`.
pub fn evaluate_subset<S: BlockSource + ?Sized>(
    source: &S,
    sensors: &[usize],
) -> Result<SubsetValue, SelectError> {
    let log_det = subset_logdet(source, sensors)?;
    Ok(SubsetValue {
        chosen: sensors.to_vec(),
        log_det,
        normalized: log_det - source.noise_logdet(sensors),
    })
}

/// `C(n, k)`, saturating.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// Exhaustive maximizer of the normalized objective over all size-`budget`
/// subsets of `candidates`. Ties go to the lexicographically smallest
/// subset (as sorted index lists).
pub fn exact_select<S: BlockSource + ?Sized>(
    source: &S,
    candidates: &[usize],
    budget: usize,
) -> Result<SubsetValue, SelectError> {
    let budget = prepare_candidates(source, candidates, budget)?;
    let n = candidates.len();
    let subsets = binomial(n, budget);
    if subsets > EXACT_SUBSET_LIMIT {
        return Err(SelectError::TooLarge {
            subsets,
            limit: EXACT_SUBSET_LIMIT,
        });
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    let nt = source.n_steps();
    let nb = nt * nt;

    let mut cache = vec![0.0; n * n * nb];
    for (a, &i) in sorted.iter().enumerate() {
        for (b, &j) in sorted.iter().enumerate() {
            source.read_block(i, j, &mut cache[(a * n + b) * nb..(a * n + b + 1) * nb])?;
        }
    }
    let noise: Vec<f64> = sorted.iter().map(|&i| source.noise_logdet(&[i])).collect();

    let dim = budget * nt;
    let mut k = vec![0.0; dim * dim];
    let mut best: Option<(f64, f64, Vec<usize>)> = None;
    for combo in (0..n).combinations(budget) {
        for (bi, &a) in combo.iter().enumerate() {
            for (bj, &b) in combo.iter().enumerate().take(bi + 1) {
                let blk = &cache[(a * n + b) * nb..(a * n + b + 1) * nb];
                for r in 0..nt {
                    let o = (bi * nt + r) * dim + bj * nt;
                    k[o..o + nt].copy_from_slice(&blk[r * nt..(r + 1) * nt]);
                }
            }
        }
        kernels::cholesky_lower(&mut k, dim, dim)?;
        let log_det = kernels::logdet_lower(&k, dim, dim)?;
        let normalized = log_det - combo.iter().map(|&a| noise[a]).sum::<f64>();
        if best.as_ref().is_none_or(|(bn, _, _)| normalized > *bn) {
            best = Some((normalized, log_det, combo));
        }
    }
    let (normalized, log_det, combo) = best.expect("at least one subset");
    Ok(SubsetValue {
        chosen: combo.into_iter().map(|a| sorted[a]).collect(),
        log_det,
        normalized,
    })
}

/// `n_samples` uniform size-`budget` subsets of `candidates`, each sorted.
pub fn random_subsets(
    candidates: &[usize],
    budget: usize,
    n_samples: usize,
    seed: u64,
) -> Vec<Vec<usize>> {
    let budget = budget.min(candidates.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_samples)
        .map(|_| {
            let mut s: Vec<usize> = index::sample(&mut rng, candidates.len(), budget)
                .into_iter()
                .map(|i| candidates[i])
                .collect();
            s.sort_unstable();
            s
        })
        .collect()
}

/// Normalized objective of `n_samples` random configurations.
pub fn random_baseline<S: BlockSource + ?Sized>(
    source: &S,
    candidates: &[usize],
    budget: usize,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<f64>, SelectError> {
    if n_samples == 0 {
        return Err(SelectError::InvalidInput("n_samples must be at least 1".into()));
    }
    let budget = prepare_candidates(source, candidates, budget)?;
    random_subsets(candidates, budget, n_samples, seed)
        .iter()
        .map(|s| evaluate_subset(source, s).map(|v| v.normalized))
        .collect()
}

/// `[f(X∪{e}) − f(X)] − [f(Y∪{e}) − f(Y)]` for `f = log det K_·`.
pub fn diminishing_returns_slack<S: BlockSource + ?Sized>(
    source: &S,
    x: &[usize],
    y: &[usize],
    e: usize,
) -> Result<f64, SelectError> {
    let with = |set: &[usize]| {
        let mut v = set.to_vec();
        v.push(e);
        v
    };
    let gain_x = subset_logdet(source, &with(x))? - subset_logdet(source, x)?;
    let gain_y = subset_logdet(source, &with(y))? - subset_logdet(source, y)?;
    Ok(gain_x - gain_y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub trials: usize,
    pub min_slack: f64,
    pub mean_slack: f64,
}

/// Random diminishing-returns checks: draws `e`, `Y ⊆ C∖{e}` and `X ⊆ Y`.
pub fn submodularity_probe<S: BlockSource + ?Sized>(
    source: &S,
    trials: usize,
    seed: u64,
) -> Result<ProbeReport, SelectError> {
    let nd = source.n_sensors();
    if nd == 0 || trials == 0 {
        return Err(SelectError::InvalidInput(
            "probe needs at least one sensor and one trial".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_slack = f64::INFINITY;
    let mut sum = 0.0;
    for _ in 0..trials {
        let e = rng.random_range(0..nd);
        let mut others: Vec<usize> = (0..nd).filter(|&i| i != e).collect();
        others.shuffle(&mut rng);
        let ny = rng.random_range(0..=others.len());
        let nx = rng.random_range(0..=ny);
        let y = &others[..ny];
        let x = &others[..nx];
        let slack = diminishing_returns_slack(source, x, y, e)?;
        if slack < -PROBE_SLACK {
            return Err(SelectError::PropertyViolation {
                x: x.to_vec(),
                y: y.to_vec(),
                e,
                slack,
            });
        }
        min_slack = min_slack.min(slack);
        sum += slack;
    }
    Ok(ProbeReport {
        trials,
        min_slack,
        mean_slack: sum / trials as f64,
    })
}
