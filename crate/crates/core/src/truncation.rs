//! Northwest-corner truncations and their augmented stationary vectors.
//!
//! A truncation of an ergodic generator is a transient Q-matrix. Returning the
//! escape rate of each row according to a probability vector yields a
//! conservative generator whose stationary vector is a normalized row
//! combination of the fundamental matrix; that identity is the basis of every
//! solver in this crate, and the dense balance-equation oracle here is the
//! independent cross-check for all of them.
//!
//! Convergence of the truncation approximations to the infinite chain's
//! stationary vector holds under drift conditions that this crate does not
//! verify symbolically; it is monitored empirically through the solvers'
//! convergence reports.

use std::fmt;

use crate::levels::LevelLayout;
use crate::matrix::{DenseMatrix, LuFactors, MatrixError};

/// Mass below this is treated as an exact structural zero when normalizing
/// conditional measures.
pub const ZERO_MASS_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub enum TruncationError {
    InvalidAlpha(String),
    IndexOutOfRange { index: usize, dim: usize },
    ZeroMass,
    Matrix(MatrixError),
}

impl fmt::Display for TruncationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TruncationError::InvalidAlpha(msg) => write!(f, "InvalidAlpha: {msg}"),
            TruncationError::IndexOutOfRange { index, dim } => {
                write!(f, "IndexOutOfRange: state {index} outside truncation of dimension {dim}")
            }
            TruncationError::ZeroMass => write!(f, "ZeroMass: conditional measure has no mass on the target set"),
            TruncationError::Matrix(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for TruncationError {}

impl From<MatrixError> for TruncationError {
    fn from(e: MatrixError) -> Self {
        TruncationError::Matrix(e)
    }
}

/// How the escape rate of a truncated row is returned to the retained states.
#[derive(Debug, Clone, PartialEq)]
pub enum AugmentationSpec {
    /// All escape mass returns to one state (the ν-th-column augmentation).
    UnitColumn(usize),
    /// Escape mass spread uniformly over the last level.
    UniformLastLevel,
    /// Explicit weights over the flat truncated state space.
    Custom(Vec<f64>),
}

impl AugmentationSpec {
    /// Resolves to a probability vector over the full truncated state space.
    ///
    /// `Custom` weights longer than the truncation are cut and renormalized;
    /// shorter ones are zero-padded.
    pub fn resolve_full(&self, layout: &LevelLayout) -> Result<Vec<f64>, TruncationError> {
        let dim = layout.dim();
        match self {
            AugmentationSpec::UnitColumn(nu) => {
                if *nu >= dim {
                    return Err(TruncationError::InvalidAlpha(format!(
                        "unit column {nu} outside dimension {dim}"
                    )));
                }
                let mut alpha = vec![0.0; dim];
                alpha[*nu] = 1.0;
                Ok(alpha)
            }
            AugmentationSpec::UniformLastLevel => {
                let range = layout.last_level_range();
                let m = range.len() as f64;
                let mut alpha = vec![0.0; dim];
                for i in range {
                    alpha[i] = 1.0 / m;
                }
                Ok(alpha)
            }
            AugmentationSpec::Custom(weights) => {
                let mut alpha = vec![0.0; dim];
                for (i, w) in weights.iter().take(dim).enumerate() {
                    if *w < 0.0 || !w.is_finite() {
                        return Err(TruncationError::InvalidAlpha(format!(
                            "negative or non-finite weight at index {i}"
                        )));
                    }
                    alpha[i] = *w;
                }
                let total: f64 = alpha.iter().sum();
                if total <= 0.0 {
                    return Err(TruncationError::InvalidAlpha(
                        "custom weights carry no mass inside the truncation".into(),
                    ));
                }
                if (total - 1.0).abs() > 1e-12 {
                    for a in &mut alpha {
                        *a /= total;
                    }
                }
                Ok(alpha)
            }
        }
    }

    /// Resolves to a probability vector over one level of size `m`, for the
    /// stagewise solvers whose augmentation is supported on the newest level
    /// only. `UnitColumn` indexes a phase within that level.
    pub fn resolve_within_level(&self, m: usize) -> Result<Vec<f64>, TruncationError> {
        match self {
            AugmentationSpec::UnitColumn(nu) => {
                if *nu >= m {
                    return Err(TruncationError::InvalidAlpha(format!(
                        "phase index {nu} outside level of size {m}"
                    )));
                }
                let mut alpha = vec![0.0; m];
                alpha[*nu] = 1.0;
                Ok(alpha)
            }
            AugmentationSpec::UniformLastLevel => Ok(vec![1.0 / m as f64; m]),
            AugmentationSpec::Custom(weights) => {
                if weights.len() != m {
                    return Err(TruncationError::InvalidAlpha(format!(
                        "custom level weights have length {}, level has size {m}",
                        weights.len()
                    )));
                }
                let total: f64 = weights.iter().sum();
                if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) || total <= 0.0 {
                    return Err(TruncationError::InvalidAlpha("invalid level weights".into()));
                }
                Ok(weights.iter().map(|w| w / total).collect())
            }
        }
    }
}

fn check_alpha(alpha: &[f64], dim: usize) -> Result<(), TruncationError> {
    if alpha.len() != dim {
        return Err(TruncationError::InvalidAlpha(format!(
            "augmentation vector has length {}, truncation has dimension {dim}",
            alpha.len()
        )));
    }
    let mut total = 0.0;
    for (i, a) in alpha.iter().enumerate() {
        if *a < 0.0 || !a.is_finite() {
            return Err(TruncationError::InvalidAlpha(format!(
                "negative or non-finite mass at index {i}"
            )));
        }
        total += *a;
    }
    if (total - 1.0).abs() > 1e-12 {
        return Err(TruncationError::InvalidAlpha(format!(
            "augmentation mass sums to {total}, expected 1"
        )));
    }
    Ok(())
}

/// Everything computed from one truncation order: the fundamental matrix, its
/// row-stochastic normalization, the augmented stationary vector, and the
/// weight vector tying the two together.
#[derive(Debug, Clone)]
pub struct TruncationSolution {
    /// Truncation order n (dimension is n+1).
    pub order: usize,
    /// (−Q)⁻¹, entrywise nonnegative.
    pub fundamental: DenseMatrix,
    /// Row-wise rescaling of the fundamental matrix to row sums one.
    pub normalized_fundamental: DenseMatrix,
    /// Stationary vector of the augmented truncation.
    pub pi_bar: Vec<f64>,
    /// Probability weights with pi_bar = beta · normalized_fundamental.
    pub beta: Vec<f64>,
}

/// Conservative generator obtained by returning each row's escape rate
/// according to `alpha`.
pub fn augmented_generator(qn: &DenseMatrix, alpha: &[f64]) -> Result<DenseMatrix, TruncationError> {
    assert!(qn.is_square(), "truncation must be square");
    check_alpha(alpha, qn.rows())?;
    let escape = qn.row_sums();
    let mut out = qn.clone();
    for i in 0..qn.rows() {
        for j in 0..qn.cols() {
            let v = out.get(i, j) - escape[i] * alpha[j];
            out.set(i, j, v);
        }
    }
    Ok(out)
}

/// Augmented stationary vector by a single linear solve, without materializing
/// the fundamental matrix. This is the cheap path used by the solvers.
pub fn stationary_pi_bar(qn: &DenseMatrix, alpha: &[f64]) -> Result<Vec<f64>, TruncationError> {
    assert!(qn.is_square(), "truncation must be square");
    check_alpha(alpha, qn.rows())?;
    let factors = LuFactors::factor(&qn.neg())?;
    let mu = factors.solve_transpose_vec(alpha);
    normalize_measure(&mu)
}

/// Full solve of one truncation order under the given augmentation.
pub fn solve_truncation(qn: &DenseMatrix, alpha: &[f64]) -> Result<TruncationSolution, TruncationError> {
    assert!(qn.is_square(), "truncation must be square");
    let n_dim = qn.rows();
    check_alpha(alpha, n_dim)?;
    let factors = LuFactors::factor(&qn.neg())?;
    let fundamental = factors.inverse();
    if !fundamental.is_finite() {
        return Err(TruncationError::Matrix(MatrixError::SingularMatrix));
    }
    let sojourn = fundamental.row_sums();
    let mut normalized = fundamental.clone();
    for i in 0..n_dim {
        let s = sojourn[i];
        for j in 0..n_dim {
            normalized.set(i, j, fundamental.get(i, j) / s);
        }
    }
    // alpha·(−Q)⁻¹ normalized; for a unit alpha this selects a row of the
    // fundamental matrix exactly, so pi_bar coincides bitwise with the
    // corresponding row of the normalized fundamental matrix.
    let mu = fundamental.vec_mul(alpha);
    let pi_bar = normalize_measure(&mu)?;
    let weighted: f64 = alpha.iter().zip(&sojourn).map(|(a, s)| a * s).sum();
    let beta: Vec<f64> = alpha
        .iter()
        .zip(&sojourn)
        .map(|(a, s)| a * s / weighted)
        .collect();
    Ok(TruncationSolution {
        order: n_dim - 1,
        fundamental,
        normalized_fundamental: normalized,
        pi_bar,
        beta,
    })
}

/// Stationary vector of the ν-th-column-augmented truncation: row ν of the
/// normalized fundamental matrix.
pub fn column_augmented_stationary(qn: &DenseMatrix, nu: usize) -> Result<Vec<f64>, TruncationError> {
    let dim = qn.rows();
    if nu >= dim {
        return Err(TruncationError::IndexOutOfRange { index: nu, dim });
    }
    let mut alpha = vec![0.0; dim];
    alpha[nu] = 1.0;
    Ok(solve_truncation(qn, &alpha)?.pi_bar)
}

/// Normalized restriction of alpha·(−Q)⁻¹ to the index set `b`.
pub fn conditional_measure(
    qn: &DenseMatrix,
    alpha: &[f64],
    b: &[usize],
) -> Result<Vec<f64>, TruncationError> {
    assert!(qn.is_square(), "truncation must be square");
    let dim = qn.rows();
    check_alpha(alpha, dim)?;
    for &i in b {
        if i >= dim {
            return Err(TruncationError::IndexOutOfRange { index: i, dim });
        }
    }
    let factors = LuFactors::factor(&qn.neg())?;
    let mu = factors.solve_transpose_vec(alpha);
    let restricted: Vec<f64> = b.iter().map(|&i| mu[i]).collect();
    let mass: f64 = restricted.iter().sum();
    if mass < ZERO_MASS_TOL {
        return Err(TruncationError::ZeroMass);
    }
    Ok(restricted.iter().map(|v| v / mass).collect())
}

/// Stationary vector of a conservative generator by direct balance equations:
/// the last column is replaced by the normalization constraint and the
/// resulting system is LU-solved. Independent of the fundamental-matrix path.
pub fn oracle_stationary(qbar: &DenseMatrix) -> Result<Vec<f64>, TruncationError> {
    left_null_normalized(qbar)
}

/// Solves x·M = 0 with x·e = 1 by column replacement.
pub(crate) fn left_null_normalized(m: &DenseMatrix) -> Result<Vec<f64>, TruncationError> {
    assert!(m.is_square());
    let n = m.rows();
    let mut system = m.clone();
    for i in 0..n {
        system.set(i, n - 1, 1.0);
    }
    let factors = LuFactors::factor(&system.transpose())?;
    let mut rhs = vec![0.0; n];
    rhs[n - 1] = 1.0;
    let mut x = factors.solve_vec(&rhs);
    // more than one null direction makes the replaced system inconsistent;
    // the computed vector then fails the balance equations outright
    let mass: f64 = x.iter().map(|v| v.abs()).sum();
    let residual = m.vec_mul(&x);
    let tol = 1e-7 * m.inf_norm().max(1.0) * mass.max(1.0);
    if residual.iter().any(|r| r.abs() > tol) {
        return Err(TruncationError::Matrix(MatrixError::SingularMatrix));
    }
    for (i, v) in x.iter_mut().enumerate() {
        if !v.is_finite() {
            return Err(TruncationError::Matrix(MatrixError::SingularMatrix));
        }
        if *v < 0.0 {
            if *v < -1e-12 {
                return Err(TruncationError::Matrix(MatrixError::InvalidInput(format!(
                    "stationary entry {i} = {v:e} negative beyond roundoff"
                ))));
            }
            *v = 0.0;
        }
    }
    let total: f64 = x.iter().sum();
    if total <= 0.0 {
        return Err(TruncationError::Matrix(MatrixError::SingularMatrix));
    }
    Ok(x.iter().map(|v| v / total).collect())
}

fn normalize_measure(mu: &[f64]) -> Result<Vec<f64>, TruncationError> {
    let total: f64 = mu.iter().sum();
    if !total.is_finite() || total <= 0.0 {
        return Err(TruncationError::Matrix(MatrixError::SingularMatrix));
    }
    Ok(mu.iter().map(|v| v / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::tv_padded;
    use crate::model::builtin;

    fn two_state() -> DenseMatrix {
        DenseMatrix::from_rows(&[&[-1.0, 1.0], &[2.0, -3.0]])
    }

    fn assert_vec_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn augmented_generator_examples() {
        let single = augmented_generator(&DenseMatrix::scalar(-1.0), &[1.0]).unwrap();
        assert_eq!(single, DenseMatrix::scalar(0.0));
        let a = augmented_generator(&two_state(), &[1.0, 0.0]).unwrap();
        assert_eq!(a, DenseMatrix::from_rows(&[&[-1.0, 1.0], &[3.0, -3.0]]));
        let b = augmented_generator(&two_state(), &[0.0, 1.0]).unwrap();
        assert_eq!(b, DenseMatrix::from_rows(&[&[-1.0, 1.0], &[2.0, -2.0]]));
    }

    #[test]
    fn augmented_generator_rejects_bad_alpha() {
        assert!(matches!(
            augmented_generator(&two_state(), &[1.0]),
            Err(TruncationError::InvalidAlpha(_))
        ));
        assert!(matches!(
            augmented_generator(&two_state(), &[0.7, 0.7]),
            Err(TruncationError::InvalidAlpha(_))
        ));
    }

    #[test]
    fn solve_truncation_single_state() {
        let sol = solve_truncation(&DenseMatrix::scalar(-1.0), &[1.0]).unwrap();
        assert_eq!(sol.fundamental, DenseMatrix::scalar(1.0));
        assert_eq!(sol.normalized_fundamental, DenseMatrix::scalar(1.0));
        assert_eq!(sol.pi_bar, vec![1.0]);
        assert_eq!(sol.beta, vec![1.0]);
    }

    #[test]
    fn solve_truncation_two_state() {
        let sol = solve_truncation(&two_state(), &[1.0, 0.0]).unwrap();
        assert!(sol.fundamental.max_abs_diff(&DenseMatrix::from_rows(&[&[3.0, 1.0], &[2.0, 1.0]])) <= 1e-12);
        let f = &sol.normalized_fundamental;
        assert_vec_close(f.row(0), &[0.75, 0.25], 1e-14);
        assert_vec_close(f.row(1), &[2.0 / 3.0, 1.0 / 3.0], 1e-14);
        assert_vec_close(&sol.pi_bar, &[0.75, 0.25], 1e-14);

        let other = solve_truncation(&two_state(), &[0.0, 1.0]).unwrap();
        assert_vec_close(&other.pi_bar, &[2.0 / 3.0, 1.0 / 3.0], 1e-14);
    }

    #[test]
    fn pi_bar_is_stationary_for_augmented_generator() {
        let alpha = [0.3, 0.7];
        let sol = solve_truncation(&two_state(), &alpha).unwrap();
        let qbar = augmented_generator(&two_state(), &alpha).unwrap();
        let residual = qbar.vec_mul(&sol.pi_bar);
        assert!(residual.iter().all(|v| v.abs() <= 1e-9));
    }

    #[test]
    fn unit_alpha_pi_bar_equals_f_row_bitwise() {
        let q = builtin("mm1", &[("lambda", 1.0), ("mu", 2.0)])
            .unwrap()
            .nw_corner(7)
            .unwrap();
        for nu in 0..=7 {
            let mut alpha = vec![0.0; 8];
            alpha[nu] = 1.0;
            let sol = solve_truncation(&q, &alpha).unwrap();
            assert_eq!(sol.pi_bar, sol.normalized_fundamental.row(nu).to_vec());
            assert_eq!(sol.pi_bar, column_augmented_stationary(&q, nu).unwrap());
            assert_eq!(sol.beta, alpha);
        }
    }

    #[test]
    fn beta_reconstructs_pi_bar() {
        let alpha = [0.25, 0.25, 0.5];
        let q = builtin("mm1", &[("lambda", 1.0), ("mu", 2.0)])
            .unwrap()
            .nw_corner(2)
            .unwrap();
        let sol = solve_truncation(&q, &alpha).unwrap();
        assert!((sol.beta.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let recombined = sol.normalized_fundamental.vec_mul(&sol.beta);
        assert!(tv_padded(&recombined, &sol.pi_bar) <= 1e-10);
        // the normalized fundamental matrix is row stochastic
        for i in 0..sol.normalized_fundamental.rows() {
            let row = sol.normalized_fundamental.row(i);
            assert!(row.iter().all(|v| *v >= 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn column_augmented_examples() {
        assert_eq!(column_augmented_stationary(&DenseMatrix::scalar(-1.0), 0).unwrap(), vec![1.0]);
        assert_vec_close(&column_augmented_stationary(&two_state(), 0).unwrap(), &[0.75, 0.25], 1e-14);
        assert_vec_close(
            &column_augmented_stationary(&two_state(), 1).unwrap(),
            &[2.0 / 3.0, 1.0 / 3.0],
            1e-14,
        );
        assert!(matches!(
            column_augmented_stationary(&two_state(), 2),
            Err(TruncationError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn conditional_measure_examples() {
        assert_eq!(
            conditional_measure(&DenseMatrix::scalar(-1.0), &[1.0], &[0]).unwrap(),
            vec![1.0]
        );
        let v = conditional_measure(&two_state(), &[0.0, 1.0], &[0, 1]).unwrap();
        assert_vec_close(&v, &[2.0 / 3.0, 1.0 / 3.0], 1e-14);
    }

    #[test]
    fn conditional_measure_of_mm1_truncation() {
        // measure over {0,1} under the last-unit augmentation approaches the
        // geometric conditional (2/3, 1/3); confirmed rate is about (1/2)^n
        let model = builtin("mm1", &[("lambda", 1.0), ("mu", 2.0)]).unwrap();
        let n = 12;
        let q = model.nw_corner(n).unwrap();
        let mut alpha = vec![0.0; n + 1];
        alpha[n] = 1.0;
        let v = conditional_measure(&q, &alpha, &[0, 1]).unwrap();
        assert!(tv_padded(&v, &[2.0 / 3.0, 1.0 / 3.0]) <= 1e-3);
        let n = 40;
        let q = model.nw_corner(n).unwrap();
        let mut alpha = vec![0.0; n + 1];
        alpha[n] = 1.0;
        let v = conditional_measure(&q, &alpha, &[0, 1]).unwrap();
        assert!(tv_padded(&v, &[2.0 / 3.0, 1.0 / 3.0]) <= 1e-6);
    }

    #[test]
    fn oracle_examples() {
        assert_eq!(oracle_stationary(&DenseMatrix::scalar(0.0)).unwrap(), vec![1.0]);
        assert_vec_close(
            &oracle_stationary(&DenseMatrix::from_rows(&[&[-1.0, 1.0], &[3.0, -3.0]])).unwrap(),
            &[0.75, 0.25],
            1e-14,
        );
        assert_vec_close(
            &oracle_stationary(&DenseMatrix::from_rows(&[&[-1.0, 1.0], &[2.0, -2.0]])).unwrap(),
            &[2.0 / 3.0, 1.0 / 3.0],
            1e-14,
        );
    }

    #[test]
    fn resolve_uniform_last_level() {
        let layout = crate::levels::LevelLayout::from_sizes(vec![1, 2, 2]);
        let alpha = AugmentationSpec::UniformLastLevel.resolve_full(&layout).unwrap();
        assert_eq!(alpha, vec![0.0, 0.0, 0.0, 0.5, 0.5]);
        let within = AugmentationSpec::UniformLastLevel.resolve_within_level(2).unwrap();
        assert_eq!(within, vec![0.5, 0.5]);
    }

    #[test]
    fn resolve_custom_renormalizes_inside_truncation() {
        let layout = crate::levels::LevelLayout::flat(2);
        let alpha = AugmentationSpec::Custom(vec![1.0, 1.0, 2.0]).resolve_full(&layout).unwrap();
        assert_eq!(alpha, vec![0.5, 0.5]);
        assert!(AugmentationSpec::Custom(vec![0.0, 0.0])
            .resolve_full(&layout)
            .is_err());
    }
}
