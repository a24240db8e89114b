//! Greedy D-optimal sensor selection and its reference baselines.

mod baselines;
mod greedy;
mod state;
mod trace;

use serde::{Deserialize, Serialize};

use crate::kstore::StoreError;
use crate::linalg::LinalgError;

pub use baselines::{
    binomial, diminishing_returns_slack, evaluate_subset, exact_select, random_baseline,
    random_subsets, submodularity_probe, subset_logdet, ProbeReport, SubsetValue,
    EXACT_SUBSET_LIMIT, PROBE_SLACK,
};
pub use greedy::{extend_principal, greedy_select, greedy_select_in, naive_select, refactor_score};
pub(crate) use greedy::{prepare_candidates, reported_gain, trace_record};
pub(crate) use state::is_infeasible;
pub use state::{
    beats, fetch_candidate, score_candidate, score_fetched, selection_offsets, CandidateBuffer,
    ScoreWorkspace, SelectionState,
};
pub use trace::{SelectionTrace, TraceRecord, TRACE_CSV_HEADER};

/// Which objective the trace reports.
///
/// `Raw` is `log det K_S`. `Normalized` subtracts the noise log-determinant
/// of every chosen sensor, which makes the objective zero on the empty set,
/// monotone and submodular.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveMode {
    Raw,
    #[default]
    Normalized,
}

#[derive(Debug, thiserror::Error)]
pub enum SelectError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("round {round}: all {n_infeasible} remaining candidates are infeasible")]
    InfeasibleRound { round: usize, n_infeasible: usize },
    #[error("{subsets} subsets exceed the enumeration limit of {limit}")]
    TooLarge { subsets: u128, limit: u128 },
    #[error("invalid candidate set: {0}")]
    InvalidCandidates(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("diminishing returns violated by {slack:e} for X={x:?}, Y={y:?}, e={e}")]
    PropertyViolation {
        x: Vec<usize>,
        y: Vec<usize>,
        e: usize,
        slack: f64,
    },
}
