mod common;

use common::{logdet_na, principal_na, random_k, rng, standard_k};
use rand::Rng;
use sensorsel::lti::{make_wave_problem, WeightSpec};
use sensorsel::selector::{
    diminishing_returns_slack, evaluate_subset, exact_select, random_baseline, random_subsets,
    score_candidate, submodularity_probe, subset_logdet, CandidateBuffer, ScoreWorkspace,
    SelectionState,
};
use sensorsel::{assemble_k, greedy_select, naive_select, DataSpaceHessian, ObjectiveMode};

fn all(k: &DataSpaceHessian) -> Vec<usize> {
    (0..k.n_sensors()).collect()
}

fn state_for(k: &DataSpaceHessian, chosen: &[usize]) -> SelectionState<f64> {
    let nt = k.n_steps();
    let cap = chosen.len() + 1;
    let mut state = SelectionState::new(k.n_sensors(), cap, nt);
    let mut buf = CandidateBuffer::new(cap, nt);
    let mut ws = ScoreWorkspace::new(cap, nt);
    for &c in chosen {
        let d = score_candidate(&state, k, c, &mut buf, &mut ws).unwrap();
        state.commit(c, &ws, d, 0.0).unwrap();
    }
    state
}

#[test]
fn score_matches_scratch_logdet_difference() {
    let mut r = rng(1);
    for _ in 0..30 {
        let nt = r.random_range(1..=3);
        let k = random_k(&mut r, 6, nt);
        let len = r.random_range(0..6);
        let picks = rand::seq::index::sample(&mut r, 6, len + 1).into_vec();
        let (chosen, s) = (&picks[..len], picks[len]);
        let state = state_for(&k, chosen);
        let mut buf = CandidateBuffer::new(len + 1, nt);
        let mut ws = ScoreWorkspace::new(len + 1, nt);
        let d = score_candidate(&state, &k, s, &mut buf, &mut ws).unwrap();
        let with = logdet_na(&principal_na(&k, &picks));
        let without = if len == 0 { 0.0 } else { logdet_na(&principal_na(&k, chosen)) };
        assert!((d - (with - without)).abs() <= 1e-8);
        assert!((state.log_det() - without).abs() <= 1e-9);
        assert!((state.factor().logdet().unwrap() - state.log_det()).abs() <= 1e-9);
        if len > 0 {
            let rec = state.factor().reconstruct();
            assert!(rec.max_rel_diff(&k.principal_submatrix(chosen)) <= 1e-6);
        }
    }
}

#[test]
fn greedy_equals_naive_on_random_instances() {
    let mut r = rng(2);
    for _ in 0..50 {
        let nd = r.random_range(2..=12);
        let nt = r.random_range(1..=4);
        let k = random_k(&mut r, nd, nt);
        let b = r.random_range(1..=nd);
        for mode in [ObjectiveMode::Raw, ObjectiveMode::Normalized] {
            let (g, gt) = greedy_select(&k, &all(&k), b, mode).unwrap();
            let (n, nt_) = naive_select(&k, &all(&k), b, mode).unwrap();
            assert_eq!(g.chosen(), n.chosen());
            assert_eq!(gt.chosen(), nt_.chosen());
            assert!((g.log_det() - n.log_det()).abs() <= 1e-8 * (1.0 + g.log_det().abs()));
        }
    }
}

#[test]
fn greedy_equals_naive_on_wave_problems() {
    let p = make_wave_problem(24, 10, 2, 4.0, 0.05, 3).unwrap();
    let k = assemble_k(&p, None).unwrap();
    let (g, _) = greedy_select(&k, &all(&k), 4, ObjectiveMode::Normalized).unwrap();
    let (n, _) = naive_select(&k, &all(&k), 4, ObjectiveMode::Normalized).unwrap();
    assert_eq!(g.chosen(), n.chosen());

    let (_, k) = standard_k();
    let (g, _) = greedy_select(&k, &all(&k), 12, ObjectiveMode::Normalized).unwrap();
    let (n, _) = naive_select(&k, &all(&k), 12, ObjectiveMode::Normalized).unwrap();
    assert_eq!(g.chosen(), n.chosen());
}

#[test]
fn greedy_equals_naive_with_cost_weights() {
    let (p, _) = standard_k();
    let mut w = WeightSpec::uniform(&p);
    let mut r = rng(3);
    for c in &mut w.cost_weights {
        *c = r.random_range(0.5..4.0);
    }
    let k = assemble_k(&p, Some(&w)).unwrap();
    let (g, _) = greedy_select(&k, &all(&k), 8, ObjectiveMode::Normalized).unwrap();
    let (n, _) = naive_select(&k, &all(&k), 8, ObjectiveMode::Normalized).unwrap();
    assert_eq!(g.chosen(), n.chosen());
}

#[test]
fn budget_one_is_identical_across_modes() {
    let k = random_k(&mut rng(4), 7, 3);
    let (g, gt) = greedy_select(&k, &all(&k), 1, ObjectiveMode::Raw).unwrap();
    let (n, nt) = naive_select(&k, &all(&k), 1, ObjectiveMode::Raw).unwrap();
    assert_eq!(g.chosen(), n.chosen());
    assert_eq!(gt.records[0].objective.to_bits(), nt.records[0].objective.to_bits());
}

#[test]
fn full_budget_is_a_permutation_with_total_logdet() {
    let k = random_k(&mut rng(5), 6, 2);
    let (g, _) = greedy_select(&k, &all(&k), 6, ObjectiveMode::Raw).unwrap();
    let mut sorted = g.chosen().to_vec();
    sorted.sort_unstable();
    assert_eq!(sorted, all(&k));
    let total = logdet_na(&common::to_na(&k.to_dense()));
    assert!((g.log_det() - total).abs() <= 1e-9 * total.abs().max(1.0));
}

#[test]
fn candidate_subset_restricts_selection() {
    let k = random_k(&mut rng(6), 8, 2);
    let c = [7, 2, 5];
    let (g, _) = greedy_select(&k, &c, 3, ObjectiveMode::Raw).unwrap();
    assert!(g.chosen().iter().all(|s| c.contains(s)));
    assert!(greedy_select(&k, &[0, 9], 1, ObjectiveMode::Raw).is_err());
}

#[test]
fn rescaling_leaves_selection_unchanged() {
    let mut r = rng(7);
    for _ in 0..10 {
        let k = random_k(&mut r, 9, 2);
        let (g, gt) = greedy_select(&k, &all(&k), 5, ObjectiveMode::Raw).unwrap();
        for c in [0.01, 3.0, 1e4] {
            let (s, st) = greedy_select(&k.scaled(c), &all(&k), 5, ObjectiveMode::Raw).unwrap();
            assert_eq!(g.chosen(), s.chosen());
            for (a, b) in gt.gains().iter().zip(st.gains()) {
                assert!((b - a - k.n_steps() as f64 * c.ln()).abs() <= 1e-8 * (1.0 + a.abs()));
            }
        }
    }
}

fn check_monotone(k: &DataSpaceHessian, b: usize) {
    let (state, trace) = greedy_select(k, &all(k), b, ObjectiveMode::Normalized).unwrap();
    let obj = trace.objectives();
    let gains = trace.gains();
    assert!(obj[0] >= 0.0);
    for w in obj.windows(2) {
        assert!(w[1] >= w[0]);
    }
    for w in gains.windows(2) {
        assert!(w[1] <= w[0] + 1e-8, "{gains:?}");
    }
    assert!(gains.iter().all(|&g| g >= 0.0));
    assert!((state.normalized_objective() - obj[b - 1]).abs() == 0.0);
}

#[test]
fn normalized_objective_is_monotone_with_shrinking_gains() {
    let mut r = rng(8);
    for _ in 0..20 {
        let nd = r.random_range(4..=10);
        let nt = r.random_range(1..=3);
        let k = random_k(&mut r, nd, nt);
        check_monotone(&k, nd);
    }
    let (_, k) = standard_k();
    check_monotone(&k, 12);
}

#[test]
fn exact_examples() {
    let k = random_k(&mut rng(9), 5, 2);
    let full = exact_select(&k, &all(&k), 5).unwrap();
    assert_eq!(full.chosen, all(&k));
    let empty = exact_select(&k, &all(&k), 0).unwrap();
    assert!(empty.chosen.is_empty());
    assert_eq!(empty.normalized, 0.0);
}

#[test]
fn greedy_meets_approximation_guarantee() {
    let bound = 1.0 - (-1.0f64).exp();
    let mut r = rng(10);
    let mut near_optimal = 0;
    for _ in 0..200 {
        let nt = r.random_range(1..=3);
        let k = random_k(&mut r, 8, nt);
        let exact = exact_select(&k, &all(&k), 3).unwrap();
        let (g, _) = greedy_select(&k, &all(&k), 3, ObjectiveMode::Normalized).unwrap();
        let ratio = g.normalized_objective() / exact.normalized;
        assert!(g.normalized_objective() >= bound * exact.normalized);
        assert!(g.normalized_objective() <= exact.normalized + 1e-9);
        near_optimal += usize::from(ratio >= 0.95);
        let samples = random_baseline(&k, &all(&k), 3, 20, 1).unwrap();
        assert!(samples.iter().all(|&v| v <= exact.normalized + 1e-9));
    }
    eprintln!("{near_optimal}/200 greedy selections within 5% of the optimum");
}

#[test]
fn random_baseline_is_seeded() {
    let k = random_k(&mut rng(11), 10, 2);
    let a = random_baseline(&k, &all(&k), 4, 1, 42).unwrap();
    assert_eq!(a, random_baseline(&k, &all(&k), 4, 1, 42).unwrap());
    let subset = &random_subsets(&all(&k), 4, 1, 42)[0];
    assert_eq!(a[0], evaluate_subset(&k, subset).unwrap().normalized);
    assert!(random_baseline(&k, &all(&k), 4, 0, 1).is_err());
}

#[test]
fn subset_logdet_is_order_independent() {
    let k = random_k(&mut rng(12), 6, 3);
    let a = subset_logdet(&k, &[0, 3, 5]).unwrap();
    let b = subset_logdet(&k, &[5, 0, 3]).unwrap();
    assert!((a - b).abs() <= 1e-10);
    assert!((a - logdet_na(&principal_na(&k, &[0, 3, 5]))).abs() <= 1e-10);
}

#[test]
fn diminishing_returns_probe() {
    let k = random_k(&mut rng(13), 10, 3);
    let report = submodularity_probe(&k, 500, 7).unwrap();
    assert_eq!(report.trials, 500);
    assert!(report.min_slack >= -1e-8);
    assert!(diminishing_returns_slack(&k, &[1, 4], &[1, 4], 7).unwrap().abs() <= 1e-12);
}

#[test]
fn trace_serializes() {
    let k = random_k(&mut rng(14), 5, 2);
    let (_, trace) = greedy_select(&k, &all(&k), 3, ObjectiveMode::Normalized).unwrap();
    let json = serde_json::to_string(&trace).unwrap();
    let back: sensorsel::SelectionTrace = serde_json::from_str(&json).unwrap();
    assert!(back.same_selection(&trace));
    let mut csv = Vec::new();
    trace.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("k,chosen_index,objective,gain,n_evaluated,wall_ms\n"));
    assert_eq!(text.lines().count(), 4);
}
