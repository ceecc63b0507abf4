//! Stagewise solver for GI/M/1-type generators.
//!
//! The repeating interior blocks make the per-level quantities of the
//! descending-order recursion independent of the truncation order, so they are
//! computed once and grown incrementally. Each stage then costs two block
//! inverses: one new interior inverse and one boundary corner. Stage s output
//! is identical to the lower block-Hessenberg solver's at the same stage; it
//! is just assembled from shared interior state instead of from scratch.

use crate::levels::LevelVector;
use crate::matrix::{invert_transient, DenseMatrix, SolverPolicy};
use crate::model::Gim1Blocks;

use super::{drive, SolveOutcome, SolverError, StageStream};

/// Pull-based stage stream over the repeating-block family. The first output
/// arrives at stage 1; stage 0 only seeds the interior recursion.
pub struct Gim1Solver {
    blocks: Gim1Blocks,
    policy: SolverPolicy,
    stage: Option<usize>,
    /// Interior inverses, one per interior index, never recomputed.
    interior_inverses: Vec<DenseMatrix>,
    /// Bottom row of the interior recursion at the deepest computed index.
    interior_bottom: Vec<DenseMatrix>,
    /// Row sums of the interior bottom row.
    interior_sums: Vec<f64>,
    boundary_inverse: Option<DenseMatrix>,
    pi: Option<LevelVector>,
    inverse_count: usize,
}

impl Gim1Solver {
    pub fn new(blocks: Gim1Blocks, policy: SolverPolicy) -> Result<Self, SolverError> {
        let induced = blocks.to_generator();
        let probe = blocks.down_depth() + 3;
        let report = induced.validate(probe);
        if let Some(v) = report.violations.first() {
            return Err(SolverError::InvalidInput(format!(
                "invalid GI/M/1 blocks: level {} {}",
                v.level, v.detail
            )));
        }
        let a_local = blocks.a(0).expect("interior local block").clone();
        let seed = invert_transient(&a_local, policy)
            .map_err(|source| SolverError::NumericalFailure { stage: 0, source })?;
        let sums = seed.row_sums();
        Ok(Gim1Solver {
            blocks,
            policy,
            stage: None,
            interior_inverses: vec![seed.clone()],
            interior_bottom: vec![seed],
            interior_sums: sums,
            boundary_inverse: None,
            pi: None,
            inverse_count: 1,
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

    /// Deepest interior index whose recursion state is available.
    fn interior_through(&self) -> usize {
        self.interior_inverses.len() - 1
    }

    /// Grows the interior recursion by one index.
    fn step_interior(&mut self) -> Result<(), SolverError> {
        let k = self.interior_through() + 1;
        let a_up = self.blocks.a(1).expect("interior up block");
        let a_local = self.blocks.a(0).expect("interior local block");
        let m = a_local.rows();
        let mut weighted = DenseMatrix::zeros(m, m);
        for (l, bottom) in self.interior_bottom.iter().enumerate() {
            let off = l as isize - k as isize;
            if let Some(down) = self.blocks.a(off) {
                weighted = weighted.add(&bottom.matmul(down));
            }
        }
        let t = a_local.add(&a_up.matmul(&weighted));
        let inv = invert_transient(&t, self.policy)
            .map_err(|source| SolverError::NumericalFailure { stage: k, source })?;
        self.inverse_count += 1;

        let shift = inv.matmul(a_up);
        let mut next: Vec<DenseMatrix> = Vec::with_capacity(k + 1);
        for bottom in &self.interior_bottom {
            next.push(shift.matmul(bottom));
        }
        next.push(inv.clone());

        let mut rhs = a_up.mul_vec(&self.interior_sums);
        for v in &mut rhs {
            *v += 1.0;
        }
        self.interior_sums = inv.mul_vec(&rhs);
        self.interior_bottom = next;
        self.interior_inverses.push(inv);
        Ok(())
    }

    pub fn advance(&mut self) -> Result<usize, SolverError> {
        let s = self.stage.map_or(1, |s| s + 1);
        while self.interior_through() < s - 1 {
            self.step_interior()?;
        }

        // boundary corner for truncation order s
        let b_up = self.blocks.b(1).expect("boundary up block");
        let b_local = self.blocks.b(0).expect("boundary local block");
        let m = self.blocks.interior_size();
        let m0 = self.blocks.boundary_size();
        let mut weighted = DenseMatrix::zeros(m, m0);
        for (l, bottom) in self.interior_bottom.iter().enumerate() {
            let off = l as isize - s as isize;
            if let Some(down) = self.blocks.b(off) {
                weighted = weighted.add(&bottom.matmul(down));
            }
        }
        let t = b_local.add(&b_up.matmul(&weighted));
        let corner = invert_transient(&t, self.policy)
            .map_err(|source| SolverError::NumericalFailure { stage: s, source })?;
        self.inverse_count += 1;

        // first row of the corner carries the boundary state's sojourn times
        let lead = corner.row(0).to_vec();
        let mut scale = b_up.mul_vec(&self.interior_sums);
        for v in &mut scale {
            *v += 1.0;
        }
        let denom: f64 = lead.iter().zip(&scale).map(|(a, b)| a * b).sum();
        if !denom.is_finite() || denom <= 0.0 {
            return Err(SolverError::NumericalFailure {
                stage: s,
                source: crate::matrix::MatrixError::SingularMatrix,
            });
        }
        let up_weighted = b_up.vec_mul(&lead);
        let mut parts: Vec<Vec<f64>> = Vec::with_capacity(s + 1);
        parts.push(lead.iter().map(|v| v / denom).collect());
        for k in 1..=s {
            let row = self.interior_bottom[s - k].vec_mul(&up_weighted);
            parts.push(row.iter().map(|v| v / denom).collect());
        }
        self.boundary_inverse = Some(corner);
        self.pi = Some(LevelVector::new(parts));
        self.stage = Some(s);
        Ok(s)
    }

    /// Interior inverse for index k.
    pub fn interior_inverse(&self, k: usize) -> &DenseMatrix {
        &self.interior_inverses[k]
    }

    /// Bottom-row block of the interior recursion at its deepest index.
    pub fn interior_bottom_block(&self, l: usize) -> &DenseMatrix {
        &self.interior_bottom[l]
    }

    /// Boundary corner inverse of the current stage.
    pub fn boundary_inverse(&self) -> Option<&DenseMatrix> {
        self.boundary_inverse.as_ref()
    }

    pub fn run(self, epsilon: f64, max_level: usize) -> Result<SolveOutcome, SolverError> {
        drive(self, epsilon, max_level)
    }
}

impl StageStream for Gim1Solver {
    fn advance(&mut self) -> Result<usize, SolverError> {
        Gim1Solver::advance(self)
    }

    fn next_stage(&self) -> usize {
        self.stage.map_or(1, |s| s + 1)
    }

    fn current_pi(&self) -> Option<&LevelVector> {
        self.pi()
    }

    fn inverses_used(&self) -> usize {
        self.inverse_count()
    }
}

/// Runs the GI/M/1-type solver to total-variation tolerance `epsilon`.
pub fn gim1_solve(
    blocks: &Gim1Blocks,
    epsilon: f64,
    max_level: usize,
    policy: SolverPolicy,
) -> Result<SolveOutcome, SolverError> {
    Gim1Solver::new(blocks.clone(), policy)?.run(epsilon, max_level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hessenberg::{lower_solve, Schedule, StopReason};
    use crate::matrix::tv_padded;
    use crate::model::{builtin, builtin_gim1, Gim1Blocks};

    fn scalar_mm1_blocks() -> Gim1Blocks {
        let mm1 = builtin("mm1", &[("lambda", 1.0), ("mu", 2.0)]).unwrap();
        Gim1Blocks::from_generator(&mm1, 8).unwrap()
    }

    #[test]
    fn scalar_interior_recursion_by_hand() {
        let mut solver = Gim1Solver::new(scalar_mm1_blocks(), SolverPolicy::Lu).unwrap();
        // seed: (-A0)^{-1} = 1/3
        assert!((solver.interior_inverse(0).get(0, 0) - 1.0 / 3.0).abs() < 1e-15);
        solver.advance().unwrap();
        solver.advance().unwrap();
        // next interior inverse: (3 - 1*(1/3)*2)^{-1} = 3/7, and the premultiplied
        // chain block is (3/7)*1*(1/3) = 1/7
        assert!((solver.interior_inverse(1).get(0, 0) - 3.0 / 7.0).abs() < 1e-15);
        assert!((solver.interior_bottom_block(0).get(0, 0) - 1.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn mm1_blocks_converge_to_geometric() {
        let out = gim1_solve(&scalar_mm1_blocks(), 1e-10, 10_000, SolverPolicy::Lu).unwrap();
        assert!(matches!(out.report.stop_reason, StopReason::Converged { .. }));
        let flat = out.pi.flat();
        let geometric: Vec<f64> = (0..flat.len()).map(|i| 0.5_f64.powi(i as i32 + 1)).collect();
        assert!(tv_padded(&flat, &geometric) <= 1e-8);
        // two inverses per stage
        let s = out.report.final_stage().unwrap();
        assert_eq!(out.report.total_inverses(), 2 * s);
    }

    #[test]
    fn stagewise_agreement_with_lower_solver() {
        let blocks = builtin_gim1(&[("lambda", 1.0), ("mu", 2.0), ("r", 0.5)]).unwrap();
        let model = blocks.to_generator();
        let mut gim1 = Gim1Solver::new(blocks, SolverPolicy::Lu).unwrap();
        let mut lower =
            crate::hessenberg::LowerSolver::new(&model, SolverPolicy::Lu, Schedule::Linear).unwrap();
        lower.advance().unwrap(); // stage 0, not produced by the gim1 stream
        for _ in 1..=8 {
            let s = gim1.advance().unwrap();
            let sl = lower.advance().unwrap();
            assert_eq!(s, sl);
            let tv = gim1.pi().unwrap().tv_to(lower.pi().unwrap());
            assert!(tv <= 1e-12, "stage {s}: tv {tv}");
        }
    }

    #[test]
    fn catalog_gim1_runs_via_convenience_fn() {
        let blocks = builtin_gim1(&[("lambda", 1.0), ("mu", 2.0), ("r", 0.5)]).unwrap();
        let out = gim1_solve(&blocks, 1e-8, 10_000, SolverPolicy::Lu).unwrap();
        assert!(matches!(out.report.stop_reason, StopReason::Converged { .. }));
        let lower_out = lower_solve(&blocks.to_generator(), 1e-8, 10_000, Schedule::Linear, SolverPolicy::Lu).unwrap();
        assert!(out.pi.tv_to(&lower_out.pi) <= 1e-10);
    }
}
