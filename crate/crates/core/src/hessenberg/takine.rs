//! Conditional-distribution estimates for upper block-Hessenberg chains.
//!
//! Given a deep stage s and a target depth N < s, the bottom-row state of the
//! upper recursion yields an estimate of the stationary distribution
//! conditioned on levels 0..=N, without solving any boundary system. Two
//! aggregation variants exist: averaging the row-normalized transfer block
//! (which needs every row of that block to carry mass), and normalizing its
//! column-sum vector (which only needs total mass).

use crate::levels::LevelVector;
use crate::matrix::{lu_solve, SolverPolicy};
use crate::model::BlockGenerator;

use super::upper::UpperRecursion;
use super::SolverError;

/// Relative floor below which a row or total mass counts as vanished.
const MASS_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TakineVariant {
    /// Average the rows of the row-normalized transfer block. Costs one extra
    /// solve to strip the corner inverse off the stored bottom-row block.
    RowAverage,
    /// Normalize the column sums of the stored bottom-row block directly.
    MuForm,
}

/// Estimates the stationary distribution conditioned on levels 0..=n_levels
/// from the stage-`stage` state of the upper recursion.
pub fn takine_conditional(
    model: &BlockGenerator,
    n_levels: usize,
    stage: usize,
    variant: TakineVariant,
    policy: SolverPolicy,
) -> Result<LevelVector, SolverError> {
    if stage <= n_levels {
        return Err(SolverError::InvalidInput(format!(
            "stage must exceed the conditioning depth (stage={stage}, depth={n_levels})"
        )));
    }
    let mut recursion = UpperRecursion::new(model, policy)?;
    for _ in 0..=stage {
        recursion.advance()?;
    }

    let anchor = recursion.bottom_block(n_levels);
    let mut top: Vec<f64> = match variant {
        TakineVariant::MuForm => {
            let sums = anchor.col_sums();
            let mass: f64 = sums.iter().sum();
            if !mass.is_finite() || mass <= MASS_FLOOR {
                return Err(SolverError::ZeroMass);
            }
            sums.iter().map(|v| v / mass).collect()
        }
        TakineVariant::RowAverage => {
            // strip the corner inverse: the raw transfer block from level
            // `stage` down to level `n_levels`
            let transfer = lu_solve(recursion.diag_inverse(stage), anchor)
                .map_err(|source| SolverError::NumericalFailure { stage, source })?;
            let row_mass = transfer.row_sums();
            let floor = row_mass.iter().fold(0.0_f64, |a, b| a.max(*b)) * MASS_FLOOR;
            let m_s = transfer.rows() as f64;
            let mut acc = vec![0.0; transfer.cols()];
            for (i, mass) in row_mass.iter().enumerate() {
                if !mass.is_finite() || *mass <= floor {
                    return Err(SolverError::ZeroRow { row: i });
                }
                for (j, a) in acc.iter_mut().enumerate() {
                    *a += transfer.get(i, j) / (mass * m_s);
                }
            }
            acc
        }
    };

    // carry the top estimate down through the stored per-level inverses
    let mut parts: Vec<Vec<f64>> = vec![Vec::new(); n_levels + 1];
    parts[n_levels] = top.clone();
    for k in (0..n_levels).rev() {
        let down = model.block(k + 1, k).ok_or_else(|| {
            SolverError::InvalidInput(format!("model is missing required block ({},{k})", k + 1))
        })?;
        top = recursion.diag_inverse(k).vec_mul(&down.vec_mul(&top));
        parts[k] = top.clone();
    }
    let total: f64 = parts.iter().flatten().sum();
    if !total.is_finite() || total <= 0.0 {
        return Err(SolverError::ZeroMass);
    }
    for part in &mut parts {
        for v in part.iter_mut() {
            *v /= total;
        }
    }
    Ok(LevelVector::new(parts))
}
