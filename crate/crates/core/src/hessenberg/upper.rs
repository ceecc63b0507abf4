//! Stagewise solver for upper block-Hessenberg (level-dependent M/G/1-type)
//! generators.
//!
//! The stage recursion maintains the bottom block row of the fundamental
//! matrix of the current truncation. Growing the truncation by one level costs
//! exactly one block inverse: the new corner block is the inverse of a
//! transient Q-matrix assembled from the previous bottom row, and the rest of
//! the new bottom row is a product of the corner with the old row.

use crate::levels::LevelVector;
use crate::matrix::{invert_transient, DenseMatrix, SolverPolicy};
use crate::model::{BlockGenerator, StructureClass};
use crate::truncation::AugmentationSpec;

use super::{drive, SolveOutcome, SolverError, StageStream};

/// Stage carry of the bottom-row recursion, independent of the augmentation.
pub(crate) struct UpperRecursion<'m> {
    model: &'m BlockGenerator,
    policy: SolverPolicy,
    stage: Option<usize>,
    /// Corner inverse computed at each past stage k (the (k,k) diagonal block
    /// of the stage-k fundamental matrix). Never recomputed.
    diag_inverses: Vec<DenseMatrix>,
    /// The transient Q-matrix whose negation was inverted at each stage.
    t_blocks: Vec<DenseMatrix>,
    /// Bottom block row of the current stage's fundamental matrix, k = 0..=s.
    bottom_blocks: Vec<DenseMatrix>,
    /// Row sums of the bottom block row (expected total sojourn times).
    bottom_sums: Vec<f64>,
    inverse_count: usize,
}

impl<'m> UpperRecursion<'m> {
    pub(crate) fn new(model: &'m BlockGenerator, policy: SolverPolicy) -> Result<Self, SolverError> {
        match model.classify() {
            StructureClass::UpperHessenberg | StructureClass::Tridiagonal => {}
            found => {
                return Err(SolverError::StructureMismatch { expected: "upper block-Hessenberg", found })
            }
        }
        Ok(UpperRecursion {
            model,
            policy,
            stage: None,
            diag_inverses: Vec::new(),
            t_blocks: Vec::new(),
            bottom_blocks: Vec::new(),
            bottom_sums: Vec::new(),
            inverse_count: 0,
        })
    }

    pub(crate) fn stage(&self) -> Option<usize> {
        self.stage
    }

    pub(crate) fn inverse_count(&self) -> usize {
        self.inverse_count
    }

    pub(crate) fn bottom_block(&self, k: usize) -> &DenseMatrix {
        &self.bottom_blocks[k]
    }

    pub(crate) fn bottom_sums(&self) -> &[f64] {
        &self.bottom_sums
    }

    pub(crate) fn diag_inverse(&self, k: usize) -> &DenseMatrix {
        &self.diag_inverses[k]
    }

    pub(crate) fn t_block(&self, k: usize) -> &DenseMatrix {
        &self.t_blocks[k]
    }

    fn required_block(&self, k: usize, l: usize) -> Result<DenseMatrix, SolverError> {
        self.model.block(k, l).ok_or_else(|| {
            SolverError::InvalidInput(format!("model is missing required block ({k},{l})"))
        })
    }

    pub(crate) fn advance(&mut self) -> Result<usize, SolverError> {
        let s = self.stage.map_or(0, |s| s + 1);
        if s == 0 {
            let t = self.required_block(0, 0)?;
            let inv = invert_transient(&t, self.policy)
                .map_err(|source| SolverError::NumericalFailure { stage: 0, source })?;
            self.inverse_count += 1;
            self.bottom_sums = inv.row_sums();
            self.bottom_blocks = vec![inv.clone()];
            self.diag_inverses.push(inv);
            self.t_blocks.push(t);
            self.stage = Some(0);
            return Ok(0);
        }

        // assemble the new corner: Q_{s,s} + Q_{s,s-1} * sum of old bottom row
        // weighted by the upward blocks into level s
        let down = self.required_block(s, s - 1)?;
        let local = self.required_block(s, s)?;
        let m_prev = self.bottom_blocks[s - 1].rows();
        let m_s = local.rows();
        let mut weighted = DenseMatrix::zeros(m_prev, m_s);
        for (l, bottom) in self.bottom_blocks.iter().enumerate() {
            if let Some(up) = self.model.block(l, s) {
                weighted = weighted.add(&bottom.matmul(&up));
            }
        }
        let t = local.add(&down.matmul(&weighted));
        let corner = invert_transient(&t, self.policy)
            .map_err(|source| SolverError::NumericalFailure { stage: s, source })?;
        self.inverse_count += 1;

        let shift = corner.matmul(&down);
        let mut next_row: Vec<DenseMatrix> = Vec::with_capacity(s + 1);
        for k in 0..s {
            next_row.push(shift.matmul(&self.bottom_blocks[k]));
        }
        next_row.push(corner.clone());

        let mut rhs: Vec<f64> = down.mul_vec(&self.bottom_sums);
        for v in &mut rhs {
            *v += 1.0;
        }
        self.bottom_sums = corner.mul_vec(&rhs);
        self.bottom_blocks = next_row;
        self.diag_inverses.push(corner);
        self.t_blocks.push(t);
        self.stage = Some(s);
        Ok(s)
    }

    /// Product of down-step factors from level k to level l < k; identity when
    /// l = k. This is the transfer matrix carrying the stationary vector of
    /// level k onto level l.
    pub(crate) fn downward_chain(&self, k: usize, l: usize) -> Result<DenseMatrix, SolverError> {
        assert!(l <= k, "chain runs downward");
        assert!(
            self.stage.is_some_and(|s| k <= s),
            "chain requested beyond the computed stage"
        );
        let mut acc = DenseMatrix::identity(self.diag_inverses[k].rows());
        for j in (l..k).rev() {
            let down = self.required_block(j + 1, j)?;
            acc = acc.matmul(&down).matmul(&self.diag_inverses[j]);
        }
        Ok(acc)
    }
}

/// Pull-based stage stream for Algorithm-1-style solving. Each `advance`
/// grows the truncation by one level and refreshes the stationary vector of
/// the augmented truncation.
pub struct UpperSolver<'m> {
    recursion: UpperRecursion<'m>,
    alpha: AugmentationSpec,
    pi: Option<LevelVector>,
}

impl<'m> UpperSolver<'m> {
    /// The augmentation must be supported on the newest level only;
    /// `UnitColumn` therefore indexes a phase within that level.
    pub fn new(
        model: &'m BlockGenerator,
        alpha: AugmentationSpec,
        policy: SolverPolicy,
    ) -> Result<Self, SolverError> {
        let recursion = UpperRecursion::new(model, policy)?;
        Ok(UpperSolver { recursion, alpha, pi: None })
    }

    pub fn advance(&mut self) -> Result<usize, SolverError> {
        let s = self.recursion.advance()?;
        let m_s = self.recursion.model.level_size(s);
        let weights = self.alpha.resolve_within_level(m_s)?;
        let denom: f64 = weights
            .iter()
            .zip(self.recursion.bottom_sums())
            .map(|(w, u)| w * u)
            .sum();
        if !denom.is_finite() || denom <= 0.0 {
            return Err(SolverError::NumericalFailure {
                stage: s,
                source: crate::matrix::MatrixError::SingularMatrix,
            });
        }
        let mut parts = Vec::with_capacity(s + 1);
        for k in 0..=s {
            let row = self.recursion.bottom_block(k).vec_mul(&weights);
            parts.push(row.iter().map(|v| v / denom).collect());
        }
        self.pi = Some(LevelVector::new(parts));
        Ok(s)
    }

    pub fn stage(&self) -> Option<usize> {
        self.recursion.stage()
    }

    pub fn pi(&self) -> Option<&LevelVector> {
        self.pi.as_ref()
    }

    pub fn inverse_count(&self) -> usize {
        self.recursion.inverse_count()
    }

    /// Bottom-row block of the current stage's fundamental matrix.
    pub fn bottom_block(&self, k: usize) -> &DenseMatrix {
        self.recursion.bottom_block(k)
    }

    /// The transient Q-matrix inverted at stage k.
    pub fn t_block(&self, k: usize) -> &DenseMatrix {
        self.recursion.t_block(k)
    }

    /// Corner inverse computed at stage k.
    pub fn diag_inverse(&self, k: usize) -> &DenseMatrix {
        self.recursion.diag_inverse(k)
    }

    /// Down-transfer product from level k to level l (identity at l = k).
    pub fn downward_chain(&self, k: usize, l: usize) -> Result<DenseMatrix, SolverError> {
        self.recursion.downward_chain(k, l)
    }

    /// Row sums of the bottom block row.
    pub fn bottom_sums(&self) -> &[f64] {
        self.recursion.bottom_sums()
    }

    pub fn run(self, epsilon: f64, max_level: usize) -> Result<SolveOutcome, SolverError> {
        drive(self, epsilon, max_level)
    }
}

impl StageStream for UpperSolver<'_> {
    fn advance(&mut self) -> Result<usize, SolverError> {
        UpperSolver::advance(self)
    }

    fn next_stage(&self) -> usize {
        self.stage().map_or(0, |s| s + 1)
    }

    fn current_pi(&self) -> Option<&LevelVector> {
        self.pi()
    }

    fn inverses_used(&self) -> usize {
        self.inverse_count()
    }
}

/// Runs the upper block-Hessenberg solver until consecutive stage outputs
/// differ by less than `epsilon` in total variation, or `max_level` is hit.
pub fn upper_solve(
    model: &BlockGenerator,
    alpha: AugmentationSpec,
    epsilon: f64,
    max_level: usize,
    policy: SolverPolicy,
) -> Result<SolveOutcome, SolverError> {
    UpperSolver::new(model, alpha, policy)?.run(epsilon, max_level)
}
