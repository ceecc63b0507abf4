//! Stagewise stationary-distribution solvers for block-Hessenberg generators.
//!
//! Each solver produces, per stage s, the stationary vector of an augmented
//! northwest-corner truncation over levels 0..=s, and stops when consecutive
//! stage outputs agree in total variation. They are anytime algorithms: the
//! stage stream can be pulled one stage at a time, so tests, diagnostics, and
//! the CLI can observe every intermediate vector without re-running.
//!
//! The three solvers differ in how much work a stage costs:
//! upper-Hessenberg chains reuse everything from the previous stage (one block
//! inverse per stage); lower-Hessenberg chains recompute each stage from
//! scratch (s+1 inverses at stage s, with an optional doubling schedule as
//! mitigation); GI/M/1-type chains exploit their repeating blocks to get back
//! to two inverses per stage.

mod gim1;
mod lower;
mod qbd;
mod takine;
mod upper;

pub use gim1::{gim1_solve, Gim1Solver};
pub use lower::{lower_solve, LowerSolver, Schedule};
pub use qbd::{qbd_backward_r, qbd_stationary};
pub use takine::{takine_conditional, TakineVariant};
pub use upper::{upper_solve, UpperSolver};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::levels::LevelVector;
use crate::matrix::MatrixError;
use crate::model::StructureClass;
use crate::truncation::TruncationError;

#[derive(Debug)]
pub enum SolverError {
    /// The model's structural class does not admit this algorithm.
    StructureMismatch { expected: &'static str, found: StructureClass },
    /// A stage inverse was singular or otherwise failed numerically.
    NumericalFailure { stage: usize, source: MatrixError },
    InvalidAlpha(String),
    InvalidInput(String),
    /// A row of the conditional block vanished (row-averaged variant only).
    ZeroRow { row: usize },
    /// The conditional mass vanished.
    ZeroMass,
    Model(crate::model::ModelError),
}

impl fmt::Display for SolverError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverError::StructureMismatch { expected, found } => {
                write!(f, "StructureMismatch: algorithm needs a {expected} model, found {found}")
            }
            SolverError::NumericalFailure { stage, source } => {
                write!(f, "NumericalFailure at stage {stage}: {source}")
            }
            SolverError::InvalidAlpha(msg) => write!(f, "InvalidAlpha: {msg}"),
            SolverError::InvalidInput(msg) => write!(f, "InvalidInput: {msg}"),
            SolverError::ZeroRow { row } => {
                write!(f, "ZeroRow: row {row} of the conditional block has no mass")
            }
            SolverError::ZeroMass => write!(f, "ZeroMass: conditional block has no mass"),
            SolverError::Model(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for SolverError {}

impl From<crate::model::ModelError> for SolverError {
    fn from(e: crate::model::ModelError) -> Self {
        SolverError::Model(e)
    }
}

impl From<TruncationError> for SolverError {
    fn from(e: TruncationError) -> Self {
        match e {
            TruncationError::InvalidAlpha(msg) => SolverError::InvalidAlpha(msg),
            other => SolverError::InvalidInput(other.to_string()),
        }
    }
}

/// Why a solver run ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StopReason {
    Converged { epsilon: f64 },
    MaxLevelReached,
    NumericalFailure,
}

/// One row of the convergence trace. `inverse_count` is cumulative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: usize,
    pub tv_delta: f64,
    pub elapsed_s: f64,
    pub inverse_count: usize,
}

/// Full convergence trace of a solver run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub stages: Vec<StageRecord>,
    pub stop_reason: StopReason,
}

impl ConvergenceReport {
    pub fn final_stage(&self) -> Option<usize> {
        self.stages.last().map(|r| r.stage)
    }

    pub fn total_inverses(&self) -> usize {
        self.stages.last().map_or(0, |r| r.inverse_count)
    }
}

/// A solver's result: the level-partitioned distribution at the stopping stage
/// plus the trace that led there.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub pi: LevelVector,
    pub report: ConvergenceReport,
}

/// Shared stage-pulling interface so the convergence loop is written once.
pub(crate) trait StageStream {
    /// Computes the next scheduled stage; returns its index.
    fn advance(&mut self) -> Result<usize, SolverError>;
    /// Stage index that the next `advance` will compute.
    fn next_stage(&self) -> usize;
    fn current_pi(&self) -> Option<&LevelVector>;
    fn inverses_used(&self) -> usize;
}

pub(crate) fn drive<S: StageStream>(
    mut stream: S,
    epsilon: f64,
    max_level: usize,
) -> Result<SolveOutcome, SolverError> {
    if !epsilon.is_finite() || epsilon <= 0.0 || epsilon >= 1.0 {
        return Err(SolverError::InvalidInput(format!(
            "epsilon must lie in (0,1), got {epsilon}"
        )));
    }
    let mut stages = Vec::new();
    let mut prev_flat: Vec<f64> = Vec::new();
    let started = std::time::Instant::now();
    loop {
        if stream.next_stage() > max_level {
            let pi = stream
                .current_pi()
                .cloned()
                .ok_or_else(|| SolverError::InvalidInput("max_level below the first stage".into()))?;
            return Ok(SolveOutcome {
                pi,
                report: ConvergenceReport { stages, stop_reason: StopReason::MaxLevelReached },
            });
        }
        let stage = stream.advance()?;
        let pi = stream.current_pi().expect("advance produced no output");
        let flat = pi.flat();
        let tv = crate::matrix::tv_padded(&flat, &prev_flat);
        stages.push(StageRecord {
            stage,
            tv_delta: tv,
            elapsed_s: started.elapsed().as_secs_f64(),
            inverse_count: stream.inverses_used(),
        });
        if tv < epsilon {
            let pi = pi.clone();
            return Ok(SolveOutcome {
                pi,
                report: ConvergenceReport { stages, stop_reason: StopReason::Converged { epsilon } },
            });
        }
        prev_flat = flat;
    }
}
