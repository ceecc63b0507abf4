//! Dense real matrix kernel.
//!
//! Row-major storage, LU factorization with scaled partial pivoting, fundamental
//! matrices of transient generators, and the geometric-doubling inverse used for
//! the stagewise block inverses. Everything here is plain `f64`; blocks in this
//! problem domain are small and dense.

use std::fmt;

/// Pivots smaller than this times the row scale are treated as exact zeros.
pub const PIVOT_RELATIVE_FLOOR: f64 = 1e-14;
/// Absolute tolerance for Q-matrix structure checks (sign, row sum).
pub const QMATRIX_TOL: f64 = 1e-12;
/// Negative fundamental-matrix entries at or below this magnitude are clamped to 0;
/// anything more negative is an error.
pub const NEGATIVE_CLAMP: f64 = 1e-12;
/// Doubling budget for the geometric-series inverse.
pub const MAX_DOUBLINGS: u32 = 64;

/// Errors produced by the kernel.
#[derive(Debug, Clone, PartialEq)]
pub enum MatrixError {
    /// A pivot fell below `PIVOT_RELATIVE_FLOOR` times its row scale.
    SingularMatrix,
    /// The doubling iteration did not meet its tolerance within `MAX_DOUBLINGS` steps.
    NonConvergence { doublings: u32 },
    /// The input violates a structural precondition (shape, sign pattern, row sums).
    InvalidInput(String),
}

impl fmt::Display for MatrixError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatrixError::SingularMatrix => write!(f, "SingularMatrix: matrix is numerically singular"),
            MatrixError::NonConvergence { doublings } => {
                write!(f, "NonConvergence: no convergence after {doublings} doublings")
            }
            MatrixError::InvalidInput(msg) => write!(f, "InvalidInput: {msg}"),
        }
    }
}

impl std::error::Error for MatrixError {}

/// Dense matrix in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length must equal rows*cols");
        DenseMatrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged row");
            data.extend_from_slice(row);
        }
        DenseMatrix { rows: r, cols: c, data }
    }

    /// 1x1 matrix, occasionally handy for scalar levels.
    pub fn scalar(v: f64) -> Self {
        DenseMatrix::from_vec(1, 1, vec![v])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows, "inner dimensions must agree");
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    /// A·x for a column vector x.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "vector length must equal cols");
        let mut out = vec![0.0; self.rows];
        for i in 0..self.rows {
            let mut acc = 0.0;
            for j in 0..self.cols {
                acc += self.get(i, j) * x[j];
            }
            out[i] = acc;
        }
        out
    }

    /// x·A for a row vector x.
    pub fn vec_mul(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, x.len(), "vector length must equal rows");
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            for j in 0..self.cols {
                out[j] += xi * self.get(i, j);
            }
        }
        out
    }

    pub fn add(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        DenseMatrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn sub(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        DenseMatrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn scale(&self, s: f64) -> DenseMatrix {
        let data = self.data.iter().map(|a| a * s).collect();
        DenseMatrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn neg(&self) -> DenseMatrix {
        self.scale(-1.0)
    }

    /// Row sums, accumulated left to right.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    /// Column sums (eᵀ·A).
    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[j] += self.get(i, j);
            }
        }
        out
    }

    /// Max absolute row sum (operator infinity norm).
    pub fn inf_norm(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Checks the Q-matrix sign pattern: off-diagonals >= -tol and row sums <= tol.
    pub fn is_q_matrix(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        for i in 0..self.rows {
            let mut sum = 0.0;
            for j in 0..self.cols {
                let v = self.get(i, j);
                if i != j && v < -tol {
                    return false;
                }
                sum += v;
            }
            if sum > tol {
                return false;
            }
        }
        true
    }
}

/// LU factorization with scaled partial pivoting: P·A = L·U.
#[derive(Debug, Clone)]
pub struct LuFactors {
    lu: DenseMatrix,
    perm: Vec<usize>,
}

impl LuFactors {
    pub fn factor(a: &DenseMatrix) -> Result<LuFactors, MatrixError> {
        assert!(a.is_square(), "LU factorization requires a square matrix");
        let n = a.rows();
        if !a.is_finite() {
            return Err(MatrixError::InvalidInput("non-finite entry in matrix".into()));
        }
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale: Vec<f64> = (0..n)
            .map(|i| a.row(i).iter().map(|v| v.abs()).fold(0.0, f64::max))
            .collect();
        if scale.contains(&0.0) {
            return Err(MatrixError::SingularMatrix);
        }
        for col in 0..n {
            // scaled partial pivoting with diagonal preference: swap only when
            // the natural pivot is an order of magnitude worse than the best
            // candidate. Natural order must be kept on M-matrix-structured
            // input (negated transient generators), where elimination is
            // cancellation-free and componentwise accurate at any conditioning.
            let natural_mag = lu.get(perm[col], col).abs() / scale[perm[col]];
            let mut best = col;
            let mut best_mag = natural_mag;
            for r in col + 1..n {
                let mag = lu.get(perm[r], col).abs() / scale[perm[r]];
                if mag > best_mag {
                    best = r;
                    best_mag = mag;
                }
            }
            if natural_mag >= 0.1 * best_mag {
                best = col;
            }
            perm.swap(col, best);
            let prow = perm[col];
            let pivot = lu.get(prow, col);
            // singularity is judged against the pivot row's remaining active
            // entries: a pivot tiny relative to its own row cannot eliminate
            // stably, while a uniformly small Schur row (deep truncations of
            // slowly escaping chains) is fine
            let active_scale = (col..n)
                .map(|c| lu.get(prow, c).abs())
                .fold(0.0, f64::max);
            if active_scale == 0.0 || pivot.abs() < PIVOT_RELATIVE_FLOOR * active_scale {
                return Err(MatrixError::SingularMatrix);
            }
            for r in col + 1..n {
                let rrow = perm[r];
                let factor = lu.get(rrow, col) / pivot;
                lu.set(rrow, col, factor);
                if factor != 0.0 {
                    for c in col + 1..n {
                        let v = lu.get(rrow, c) - factor * lu.get(prow, c);
                        lu.set(rrow, c, v);
                    }
                }
            }
        }
        Ok(LuFactors { lu, perm })
    }

    fn n(&self) -> usize {
        self.lu.rows()
    }

    /// Solves A·x = b.
    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n();
        assert_eq!(b.len(), n);
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut acc = b[self.perm[i]];
            for j in 0..i {
                acc -= self.lu.get(self.perm[i], j) * y[j];
            }
            y[i] = acc;
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut acc = y[i];
            for j in i + 1..n {
                acc -= self.lu.get(self.perm[i], j) * x[j];
            }
            x[i] = acc / self.lu.get(self.perm[i], i);
        }
        x
    }

    /// Solves A·X = B column by column.
    pub fn solve_mat(&self, b: &DenseMatrix) -> DenseMatrix {
        let n = self.n();
        assert_eq!(b.rows(), n, "rhs row count must equal matrix order");
        let mut x = DenseMatrix::zeros(n, b.cols());
        let mut col = vec![0.0; n];
        for j in 0..b.cols() {
            for i in 0..n {
                col[i] = b.get(i, j);
            }
            let sol = self.solve_vec(&col);
            for i in 0..n {
                x.set(i, j, sol[i]);
            }
        }
        x
    }

    /// Solves Aᵀ·x = b, i.e. the row-vector system xᵀ·A = bᵀ.
    pub fn solve_transpose_vec(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n();
        assert_eq!(b.len(), n);
        // PA = LU, so Aᵀ = Uᵀ Lᵀ P: forward-solve with Uᵀ, back-solve with Lᵀ, unpermute.
        let mut w = vec![0.0; n];
        for i in 0..n {
            let mut acc = b[i];
            for j in 0..i {
                acc -= self.lu.get(self.perm[j], i) * w[j];
            }
            w[i] = acc / self.lu.get(self.perm[i], i);
        }
        let mut z = vec![0.0; n];
        for i in (0..n).rev() {
            let mut acc = w[i];
            for j in i + 1..n {
                acc -= self.lu.get(self.perm[j], i) * z[j];
            }
            z[i] = acc;
        }
        let mut x = vec![0.0; n];
        for i in 0..n {
            x[self.perm[i]] = z[i];
        }
        x
    }

    pub fn inverse(&self) -> DenseMatrix {
        self.solve_mat(&DenseMatrix::identity(self.n()))
    }
}

/// Solves A·X = B by LU with scaled partial pivoting.
pub fn lu_solve(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix, MatrixError> {
    let factors = LuFactors::factor(a)?;
    let x = factors.solve_mat(b);
    if !x.is_finite() {
        return Err(MatrixError::SingularMatrix);
    }
    Ok(x)
}

/// Fundamental matrix (−Q)⁻¹ of a transient Q-matrix.
///
/// Tiny negative entries (roundoff) are clamped to zero; a negative entry larger
/// than `NEGATIVE_CLAMP` in magnitude signals an input that is not a transient
/// generator and is reported as an error.
pub fn negate_invert(q: &DenseMatrix) -> Result<DenseMatrix, MatrixError> {
    let factors = LuFactors::factor(&q.neg())?;
    let mut inv = factors.inverse();
    if !inv.is_finite() {
        return Err(MatrixError::SingularMatrix);
    }
    clamp_nonnegative(&mut inv)?;
    Ok(inv)
}

fn clamp_nonnegative(m: &mut DenseMatrix) -> Result<(), MatrixError> {
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            let v = m.get(i, j);
            if v < 0.0 {
                if v < -NEGATIVE_CLAMP {
                    return Err(MatrixError::InvalidInput(format!(
                        "fundamental matrix entry ({i},{j}) = {v:e} is negative beyond roundoff"
                    )));
                }
                m.set(i, j, 0.0);
            }
        }
    }
    Ok(())
}

/// Carry of the geometric-doubling iteration: after `n` steps,
/// `w` holds the partial sum of the first 2ⁿ powers of the uniformized
/// transition matrix and `v` holds that matrix raised to the 2ⁿ-th power.
#[derive(Debug, Clone)]
pub struct LeBoudecState {
    v: DenseMatrix,
    w: DenseMatrix,
    n: u32,
    theta: f64,
}

impl LeBoudecState {
    /// Validates that `t` is a Q-matrix, uniformizes it by the largest diagonal
    /// magnitude, and initializes the doubling recursion.
    pub fn new(t: &DenseMatrix) -> Result<Self, MatrixError> {
        if !t.is_square() {
            return Err(MatrixError::InvalidInput("uniformization needs a square matrix".into()));
        }
        let n = t.rows();
        for i in 0..n {
            let mut row_sum = 0.0;
            for j in 0..n {
                let v = t.get(i, j);
                if i != j && v < -QMATRIX_TOL {
                    return Err(MatrixError::InvalidInput(format!(
                        "negative off-diagonal entry ({i},{j}) = {v:e}"
                    )));
                }
                row_sum += v;
            }
            if row_sum > QMATRIX_TOL {
                return Err(MatrixError::InvalidInput(format!(
                    "positive row sum {row_sum:e} at row {i}"
                )));
            }
        }
        let theta = (0..n).map(|i| t.get(i, i).abs()).fold(0.0, f64::max);
        if theta <= 0.0 {
            return Err(MatrixError::SingularMatrix);
        }
        let mut p = DenseMatrix::identity(n);
        for i in 0..n {
            for j in 0..n {
                let v = p.get(i, j) + t.get(i, j) / theta;
                p.set(i, j, v.max(0.0));
            }
        }
        Ok(LeBoudecState { v: p, w: DenseMatrix::identity(n), n: 0, theta })
    }

    pub fn v(&self) -> &DenseMatrix {
        &self.v
    }

    pub fn w(&self) -> &DenseMatrix {
        &self.w
    }

    pub fn doublings(&self) -> u32 {
        self.n
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// One doubling: W ← (I + V)·W, V ← V². Returns the max-norm increment of W.
    pub fn step(&mut self) -> f64 {
        let next_w = self.w.add(&self.v.matmul(&self.w));
        let delta = next_w.max_abs_diff(&self.w);
        self.v = self.v.matmul(&self.v);
        self.w = next_w;
        self.n += 1;
        delta
    }
}

/// Fundamental matrix (−T)⁻¹ of a transient Q-matrix by geometric doubling of
/// the uniformized transition matrix, stopping when the partial-sum increment
/// drops below `tol` times the uniformization constant.
pub fn leboudec_inverse(t: &DenseMatrix, tol: f64) -> Result<DenseMatrix, MatrixError> {
    if !tol.is_finite() || tol <= 0.0 {
        return Err(MatrixError::InvalidInput("tolerance must be positive".into()));
    }
    let mut state = LeBoudecState::new(t)?;
    for _ in 0..MAX_DOUBLINGS {
        let delta = state.step();
        if delta < tol * state.theta() {
            let mut inv = state.w().scale(1.0 / state.theta());
            if !inv.is_finite() {
                return Err(MatrixError::NonConvergence { doublings: state.doublings() });
            }
            clamp_nonnegative(&mut inv)?;
            return Ok(inv);
        }
        if !state.w().is_finite() {
            return Err(MatrixError::NonConvergence { doublings: state.doublings() });
        }
    }
    Err(MatrixError::NonConvergence { doublings: MAX_DOUBLINGS })
}

/// Inverse-path selector for the stagewise solvers: plain LU, or the
/// geometric-doubling route. Cross-checking the two is a test asset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverPolicy {
    Lu,
    LeBoudec,
}

/// Tolerance handed to `leboudec_inverse` when selected as the solver policy.
pub const LEBOUDEC_POLICY_TOL: f64 = 1e-13;

/// Computes (−T)⁻¹ for a transient Q-matrix T along the selected path.
pub fn invert_transient(t: &DenseMatrix, policy: SolverPolicy) -> Result<DenseMatrix, MatrixError> {
    match policy {
        SolverPolicy::Lu => negate_invert(t),
        SolverPolicy::LeBoudec => leboudec_inverse(t, LEBOUDEC_POLICY_TOL),
    }
}

/// ℓ₁ norm of a row vector.
pub fn tv_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

/// ℓ₁ distance between two vectors, the shorter one extended with zeros.
pub fn tv_padded(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().max(b.len());
    let mut acc = 0.0;
    for i in 0..n {
        let va = a.get(i).copied().unwrap_or(0.0);
        let vb = b.get(i).copied().unwrap_or(0.0);
        acc += (va - vb).abs();
    }
    acc
}
