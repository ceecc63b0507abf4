//! Backward rate-matrix recursion for block-tridiagonal generators, kept as
//! the classical baseline the stagewise solvers are cross-checked against.
//!
//! Seeding the recursion with a zero matrix above level N+L and stepping down
//! approximates the level rate matrices; the approximation improves as L
//! grows. Unlike the stagewise solvers, N and L must be chosen up front.

use crate::levels::LevelVector;
use crate::matrix::{negate_invert, DenseMatrix};
use crate::model::{BlockGenerator, StructureClass};
use crate::truncation::left_null_normalized;

use super::SolverError;

/// Approximate rate matrices for levels 1..=n_levels, from the backward
/// recursion seeded with a zero matrix at level n_levels + extra + 1.
///
/// With `extra = 0` the deepest matrix is the one-step value built from the
/// local block alone.
pub fn qbd_backward_r(
    model: &BlockGenerator,
    n_levels: usize,
    extra: usize,
) -> Result<Vec<DenseMatrix>, SolverError> {
    if n_levels == 0 {
        return Err(SolverError::InvalidInput("n_levels must be at least 1".into()));
    }
    match model.classify() {
        StructureClass::Tridiagonal => {}
        found => {
            return Err(SolverError::StructureMismatch { expected: "block-tridiagonal", found })
        }
    }
    let top = n_levels + extra;
    let required = |k: usize, l: usize| {
        model.block(k, l).ok_or_else(|| {
            SolverError::InvalidInput(format!("model is missing required block ({k},{l})"))
        })
    };
    let mut above = DenseMatrix::zeros(model.level_size(top), model.level_size(top + 1));
    let mut kept: Vec<DenseMatrix> = Vec::with_capacity(n_levels);
    for k in (1..=top).rev() {
        let local = required(k, k)?;
        let down_from_above = required(k + 1, k)?;
        let t = local.add(&above.matmul(&down_from_above));
        let inv = negate_invert(&t)
            .map_err(|source| SolverError::NumericalFailure { stage: k, source })?;
        let r = required(k - 1, k)?.matmul(&inv);
        if k <= n_levels {
            kept.push(r.clone());
        }
        above = r;
    }
    kept.reverse();
    Ok(kept)
}

/// Stationary distribution over levels 0..=n_levels assembled from the
/// backward-recursion rate matrices: the boundary vector solves the censored
/// balance equations and deeper levels follow by repeated rate-matrix steps.
pub fn qbd_stationary(
    model: &BlockGenerator,
    n_levels: usize,
    extra: usize,
) -> Result<LevelVector, SolverError> {
    let rates = qbd_backward_r(model, n_levels, extra)?;
    let local0 = model
        .block(0, 0)
        .ok_or_else(|| SolverError::InvalidInput("model is missing block (0,0)".into()))?;
    let down1 = model
        .block(1, 0)
        .ok_or_else(|| SolverError::InvalidInput("model is missing block (1,0)".into()))?;
    let boundary = local0.add(&rates[0].matmul(&down1));
    let head = left_null_normalized(&boundary)
        .map_err(|e| SolverError::InvalidInput(format!("boundary solve failed: {e}")))?;

    let mut parts = vec![head];
    for r in &rates {
        let prev = parts.last().unwrap();
        parts.push(r.vec_mul(prev));
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
