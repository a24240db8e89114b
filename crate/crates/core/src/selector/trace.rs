use std::io;

use serde::{Deserialize, Serialize};

use super::ObjectiveMode;

/// One greedy iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// Size of `S` after this iteration.
    pub k: usize,
    pub chosen_index: usize,
    pub objective: f64,
    pub gain: f64,
    pub n_evaluated: usize,
    pub n_infeasible: usize,
    pub wall_ms: f64,
    pub mean_candidate_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionTrace {
    pub mode: ObjectiveMode,
    pub records: Vec<TraceRecord>,
}

pub const TRACE_CSV_HEADER: [&str; 6] = ["k", "chosen_index", "objective", "gain", "n_evaluated", "wall_ms"];

impl SelectionTrace {
    pub fn new(mode: ObjectiveMode) -> Self {
        Self {
            mode,
            records: Vec::new(),
        }
    }

    pub fn chosen(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.chosen_index).collect()
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.objective).collect()
    }

    pub fn gains(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.gain).collect()
    }

    /// Same selections, objectives and gains, ignoring timings.
    pub fn same_selection(&self, other: &Self) -> bool {
        self.mode == other.mode
            && self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| {
                a.k == b.k
                    && a.chosen_index == b.chosen_index
                    && a.objective.to_bits() == b.objective.to_bits()
                    && a.gain.to_bits() == b.gain.to_bits()
                    && a.n_evaluated == b.n_evaluated
                    && a.n_infeasible == b.n_infeasible
            })
    }

    pub fn write_csv<W: io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(TRACE_CSV_HEADER)?;
        for r in &self.records {
            out.write_record([
                r.k.to_string(),
                r.chosen_index.to_string(),
                r.objective.to_string(),
                r.gain.to_string(),
                r.n_evaluated.to_string(),
                format!("{:.6}", r.wall_ms),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}
