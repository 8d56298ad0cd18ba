//! Exact linear programming for transportation problems.
//!
//! [`solve_network`] runs a primal network simplex on the bipartite
//! supply/demand graph; [`solve_dense`] is a revised simplex on an explicit
//! constraint matrix, used for cross-checking.

mod dense;
mod network;

pub use dense::{solve_dense, DenseOptions};
pub use network::{solve_network, NetworkInput, NetworkOptions, Start};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite input in {0}")]
    NonFinite(&'static str),
    #[error("negative {what} {value} at index {index}")]
    Negative {
        what: &'static str,
        index: usize,
        value: f64,
    },
    #[error("arcs must be sorted by (source, target) without duplicates; violated at arc {0}")]
    UnsortedArcs(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    IterationLimit,
    Unbounded,
}

/// Rows of a transportation problem that cannot be met, reported on
/// infeasibility.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Unmet {
    pub supply_rows: Vec<usize>,
    pub demand_rows: Vec<usize>,
    /// Mass that could not be routed.
    pub shortfall: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PivotRule {
    Dantzig,
    Bland,
}

/// One simplex iteration, recorded when tracing is enabled.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub iteration: usize,
    pub phase: u8,
    pub rule: PivotRule,
    pub entering: usize,
    pub leaving: usize,
    pub step: f64,
    /// Objective of the phase being optimized, after the pivot.
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    /// One multiplier per retained constraint. For transportation problems
    /// these are the supply duals followed by all demand duals but the last.
    pub duals: Vec<f64>,
    pub objective: f64,
    pub status: LpStatus,
    pub iterations: usize,
    pub unmet: Option<Unmet>,
    /// Reservoir flows, present when a reservoir start had to use them.
    pub slack: Option<SlackFlow>,
    pub trace: Vec<TraceEntry>,
}

/// Mass routed through the slack nodes of a reservoir solve. `objective`
/// of the enclosing solution excludes the penalty on these flows.
#[derive(Debug, Clone, PartialEq)]
pub struct SlackFlow {
    /// Per supply row, mass sent to the slack demand node.
    pub absorbed: Vec<f64>,
    /// Per demand row, mass received from the slack supply node.
    pub emitted: Vec<f64>,
    pub supply_dual: f64,
    pub demand_dual: f64,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

pub(crate) fn check_finite(v: &[f64], what: &'static str) -> Result<(), LpError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(LpError::NonFinite(what))
    }
}

pub(crate) fn check_nonnegative(v: &[f64], what: &'static str) -> Result<(), LpError> {
    match v.iter().position(|&x| x < 0.0) {
        Some(index) => Err(LpError::Negative {
            what,
            index,
            value: v[index],
        }),
        None => Ok(()),
    }
}
