use serde::{Deserialize, Serialize};

/// How a solver run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Completed,
    EarlyStopped,
    Diverged,
}

/// One row of a solver trace, describing the iterate `x_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    /// `‖r‖₂` with `r_i = x_tᵀA_i x_t − y_i`.
    pub residual_norm: f64,
    pub nnz: usize,
    /// Sign-invariant relative distance to the truth, when it is known.
    pub rel_dist: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryResult {
    pub estimate: Vec<f64>,
    /// Iterate the refinement started from.
    pub initial: Vec<f64>,
    pub trace: Vec<TraceRecord>,
    pub status: Status,
    /// Refinement steps actually taken.
    pub iterations: usize,
}

impl RecoveryResult {
    /// Relative distances of the iterates, in order, when the truth was known.
    pub fn error_trace(&self) -> Vec<f64> {
        self.trace.iter().filter_map(|r| r.rel_dist).collect()
    }
}
