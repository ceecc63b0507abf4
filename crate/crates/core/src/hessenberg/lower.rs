//! Stagewise solver for lower block-Hessenberg (level-dependent GI/M/1-type)
//! generators.
//!
//! Permuting levels into descending order turns a lower block-Hessenberg
//! truncation into an upper one, so each stage admits the same bottom-row
//! machinery; undone, that yields the top block row of the fundamental matrix.
//! The catch is that the per-level inverses depend on the truncation order, so
//! every visited stage is computed from scratch (s+1 block inverses at stage
//! s). The doubling schedule visits stages 0, 1, 3, 7, ... to keep the total
//! inverse count linear in the deepest level reached.

use crate::levels::LevelVector;
use crate::matrix::{invert_transient, DenseMatrix, SolverPolicy};
use crate::model::{Band, BlockGenerator, StructureClass};

use super::{drive, SolveOutcome, SolverError, StageStream};

/// Stage visiting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    /// Visit every stage 0, 1, 2, ...
    Linear,
    /// Visit stages 2^i - 1: 0, 1, 3, 7, 15, ...
    Doubling,
}

impl Schedule {
    fn stage_at(&self, visit: usize) -> usize {
        match self {
            Schedule::Linear => visit,
            Schedule::Doubling => (1usize << visit) - 1,
        }
    }
}

/// Pull-based stage stream for the first-column-augmented truncation sequence.
pub struct LowerSolver<'m> {
    model: &'m BlockGenerator,
    policy: SolverPolicy,
    schedule: Schedule,
    visit: usize,
    stage: Option<usize>,
    /// Per-level outer inverses of the current stage, index k = 0..=s.
    diag_inverses: Vec<DenseMatrix>,
    /// Top block row of the current stage's fundamental matrix.
    top_blocks: Vec<DenseMatrix>,
    pi: Option<LevelVector>,
    inverse_count: usize,
}

impl<'m> LowerSolver<'m> {
    pub fn new(
        model: &'m BlockGenerator,
        policy: SolverPolicy,
        schedule: Schedule,
    ) -> Result<Self, SolverError> {
        match model.classify() {
            StructureClass::LowerHessenberg | StructureClass::Tridiagonal | StructureClass::Gim1Type => {}
            found => {
                return Err(SolverError::StructureMismatch { expected: "lower block-Hessenberg", found })
            }
        }
        Ok(LowerSolver {
            model,
            policy,
            schedule,
            visit: 0,
            stage: None,
            diag_inverses: Vec::new(),
            top_blocks: Vec::new(),
            pi: None,
            inverse_count: 0,
        })
    }

    pub fn stage(&self) -> Option<usize> {
        self.stage
    }

    pub fn pi(&self) -> Option<&LevelVector> {
        self.pi.as_ref()
    }

    pub fn inverse_count(&self) -> usize {
        self.inverse_count
    }

    /// Top-row block X_{0,k} of the current stage's fundamental matrix.
    pub fn top_block(&self, k: usize) -> &DenseMatrix {
        &self.top_blocks[k]
    }

    /// Outer inverse for level k at the current stage.
    pub fn diag_inverse(&self, k: usize) -> &DenseMatrix {
        &self.diag_inverses[k]
    }

    fn required_block(&self, k: usize, l: usize) -> Result<DenseMatrix, SolverError> {
        self.model.block(k, l).ok_or_else(|| {
            SolverError::InvalidInput(format!("model is missing required block ({k},{l})"))
        })
    }

    /// Recomputes the per-level inverses and the top block row for stage s.
    fn compute_stage(&mut self, s: usize) -> Result<(), SolverError> {
        let mut inverses: Vec<Option<DenseMatrix>> = vec![None; s + 1];
        let mut up_factors: Vec<Option<DenseMatrix>> = vec![None; s + 1];

        for k in (0..=s).rev() {
            let local = self.required_block(k, k)?;
            let mut t = local;
            if k < s {
                let reach = match self.model.band_low() {
                    Band::Finite(b) => s.min(k + b),
                    Band::Dense => s,
                };
                // walk the chain of up-step factors to accumulate the weighted
                // returns into level k
                let mut cur: Option<DenseMatrix> = None;
                for l in k + 1..=reach {
                    let factor = up_factors[l]
                        .as_ref()
                        .expect("factor for deeper level must exist");
                    cur = Some(match cur {
                        None => factor.clone(),
                        Some(prev) => prev.matmul(factor),
                    });
                    if let Some(down) = self.model.block(l, k) {
                        t = t.add(&cur.as_ref().unwrap().matmul(&down));
                    }
                }
            }
            let inv = invert_transient(&t, self.policy)
                .map_err(|source| SolverError::NumericalFailure { stage: s, source })?;
            self.inverse_count += 1;
            if k >= 1 {
                up_factors[k] = Some(self.required_block(k - 1, k)?.matmul(&inv));
            }
            inverses[k] = Some(inv);
        }

        let diag_inverses: Vec<DenseMatrix> = inverses.into_iter().map(Option::unwrap).collect();
        let mut top_blocks = Vec::with_capacity(s + 1);
        top_blocks.push(diag_inverses[0].clone());
        for k in 1..=s {
            let factor = up_factors[k].as_ref().unwrap();
            let next = top_blocks[k - 1].matmul(factor);
            top_blocks.push(next);
        }

        // stationary vector of the first-column-augmented truncation: the
        // first row of the top block row, normalized
        let mut parts: Vec<Vec<f64>> = Vec::with_capacity(s + 1);
        let mut total = 0.0;
        for block in &top_blocks {
            let row = block.row(0).to_vec();
            total += row.iter().sum::<f64>();
            parts.push(row);
        }
        if !total.is_finite() || total <= 0.0 {
            return Err(SolverError::NumericalFailure {
                stage: s,
                source: crate::matrix::MatrixError::SingularMatrix,
            });
        }
        for part in &mut parts {
            for v in part.iter_mut() {
                *v /= total;
            }
        }
        self.pi = Some(LevelVector::new(parts));
        self.diag_inverses = diag_inverses;
        self.top_blocks = top_blocks;
        self.stage = Some(s);
        Ok(())
    }

    pub fn advance(&mut self) -> Result<usize, SolverError> {
        let s = self.schedule.stage_at(self.visit);
        self.compute_stage(s)?;
        self.visit += 1;
        Ok(s)
    }

    pub fn run(self, epsilon: f64, max_level: usize) -> Result<SolveOutcome, SolverError> {
        drive(self, epsilon, max_level)
    }
}

impl StageStream for LowerSolver<'_> {
    fn advance(&mut self) -> Result<usize, SolverError> {
        LowerSolver::advance(self)
    }

    fn next_stage(&self) -> usize {
        self.schedule.stage_at(self.visit)
    }

    fn current_pi(&self) -> Option<&LevelVector> {
        self.pi()
    }

    fn inverses_used(&self) -> usize {
        self.inverse_count()
    }
}

/// Runs the lower block-Hessenberg solver to total-variation tolerance
/// `epsilon` under the given stage schedule.
pub fn lower_solve(
    model: &BlockGenerator,
    epsilon: f64,
    max_level: usize,
    schedule: Schedule,
    policy: SolverPolicy,
) -> Result<SolveOutcome, SolverError> {
    LowerSolver::new(model, policy, schedule)?.run(epsilon, max_level)
}
