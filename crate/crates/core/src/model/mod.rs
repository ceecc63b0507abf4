//! Level-partitioned generators: block access, structural validation,
//! Hessenberg classification, and northwest-corner assembly.
//!
//! A model is a block-partitioned infinitesimal generator. Level sizes follow a
//! finite prefix plus a constant tail; blocks come from a provider that may be
//! table-backed (file models) or analytic (catalog models). Ergodicity of the
//! infinite chain cannot be checked here and remains the caller's
//! responsibility; validation covers the Q-matrix structure only.

mod catalog;
mod io;

pub use catalog::{builtin, builtin_gim1, builtin_gim1_map, builtin_map, Gim1Blocks};
pub use io::{model_from_json, ParsedModel};

use std::fmt;
use std::sync::Arc;

use crate::levels::LevelLayout;
use crate::matrix::DenseMatrix;

/// Number of nonzero block bands on one side of the diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Band {
    Finite(usize),
    /// No constant bound; per-row support is still finite.
    Dense,
}

/// Structural shape of a block generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StructureClass {
    UpperHessenberg,
    LowerHessenberg,
    Tridiagonal,
    Gim1Type,
    General,
}

impl fmt::Display for StructureClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            StructureClass::UpperHessenberg => "upper-Hessenberg",
            StructureClass::LowerHessenberg => "lower-Hessenberg",
            StructureClass::Tridiagonal => "tridiagonal",
            StructureClass::Gim1Type => "GI/M/1-type",
            StructureClass::General => "general",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelError {
    UnknownModel(String),
    MissingParam(String),
    UnstableParams(String),
    LevelOutOfRange { requested: usize, max: usize },
    InvalidFile(String),
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::UnknownModel(name) => write!(f, "UnknownModel: no builtin model named '{name}'"),
            ModelError::MissingParam(p) => write!(f, "MissingParam: required parameter '{p}'"),
            ModelError::UnstableParams(msg) => write!(f, "UnstableParams: {msg}"),
            ModelError::LevelOutOfRange { requested, max } => {
                write!(f, "LevelOutOfRange: level {requested} beyond materialized maximum {max}")
            }
            ModelError::InvalidFile(msg) => write!(f, "InvalidFile: {msg}"),
        }
    }
}

impl std::error::Error for ModelError {}

/// Level sizes: an explicit prefix followed by a constant tail size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelSizes {
    prefix: Vec<usize>,
    tail: usize,
}

impl LevelSizes {
    pub fn new(prefix: Vec<usize>, tail: usize) -> Self {
        assert!(tail > 0 && prefix.iter().all(|&m| m > 0), "level sizes must be positive");
        LevelSizes { prefix, tail }
    }

    pub fn constant(m: usize) -> Self {
        LevelSizes::new(Vec::new(), m)
    }

    pub fn size(&self, k: usize) -> usize {
        self.prefix.get(k).copied().unwrap_or(self.tail)
    }

    /// Total states in levels 0..=s, i.e. nₛ + 1.
    pub fn dim_through(&self, s: usize) -> usize {
        (0..=s).map(|k| self.size(k)).sum()
    }

    pub fn layout_through(&self, s: usize) -> LevelLayout {
        LevelLayout::from_sizes((0..=s).map(|k| self.size(k)).collect())
    }
}

type BlockFn = dyn Fn(usize, usize) -> Option<DenseMatrix> + Send + Sync;
type SupportFn = dyn Fn(usize) -> Vec<usize> + Send + Sync;

/// A level-partitioned generator. Immutable after construction; block access is
/// a pure function, so concurrent reads are safe.
#[derive(Clone)]
pub struct BlockGenerator {
    name: String,
    sizes: LevelSizes,
    block_fn: Arc<BlockFn>,
    support_fn: Arc<SupportFn>,
    band_low: Band,
    band_high: Band,
    max_level: Option<usize>,
}

impl fmt::Debug for BlockGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BlockGenerator")
            .field("name", &self.name)
            .field("sizes", &self.sizes)
            .field("band_low", &self.band_low)
            .field("band_high", &self.band_high)
            .field("max_level", &self.max_level)
            .finish()
    }
}

impl BlockGenerator {
    /// Builds a model from analytic block and support closures.
    ///
    /// `block` must return `None` exactly for structurally zero blocks, and
    /// `support` must list the structurally nonzero column levels of each block
    /// row in increasing order.
    pub fn from_fn<B, S>(
        name: impl Into<String>,
        sizes: LevelSizes,
        band_low: Band,
        band_high: Band,
        block: B,
        support: S,
    ) -> Self
    where
        B: Fn(usize, usize) -> Option<DenseMatrix> + Send + Sync + 'static,
        S: Fn(usize) -> Vec<usize> + Send + Sync + 'static,
    {
        BlockGenerator {
            name: name.into(),
            sizes,
            block_fn: Arc::new(block),
            support_fn: Arc::new(support),
            band_low,
            band_high,
            max_level: None,
        }
    }

    /// Caps the largest level the provider will materialize.
    pub fn with_max_level(mut self, max_level: usize) -> Self {
        self.max_level = Some(max_level);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn level_size(&self, k: usize) -> usize {
        self.sizes.size(k)
    }

    pub fn sizes(&self) -> &LevelSizes {
        &self.sizes
    }

    pub fn band_low(&self) -> Band {
        self.band_low
    }

    pub fn band_high(&self) -> Band {
        self.band_high
    }

    pub fn max_materialized_level(&self) -> Option<usize> {
        self.max_level
    }

    /// Block Q_{k,ℓ}, or `None` when structurally zero.
    pub fn block(&self, k: usize, l: usize) -> Option<DenseMatrix> {
        (self.block_fn)(k, l)
    }

    /// Structurally nonzero column levels of block row k, increasing.
    pub fn row_support(&self, k: usize) -> Vec<usize> {
        (self.support_fn)(k)
    }

    /// Flat dimension of the order-s truncation, i.e. nₛ + 1.
    pub fn dim_through(&self, s: usize) -> usize {
        self.sizes.dim_through(s)
    }

    pub fn layout_through(&self, s: usize) -> LevelLayout {
        self.sizes.layout_through(s)
    }

    fn check_level(&self, s: usize) -> Result<(), ModelError> {
        match self.max_level {
            Some(max) if s > max => Err(ModelError::LevelOutOfRange { requested: s, max }),
            _ => Ok(()),
        }
    }

    /// Assembles the dense northwest-corner truncation over levels 0..=s.
    pub fn nw_corner(&self, s: usize) -> Result<DenseMatrix, ModelError> {
        self.check_level(s)?;
        let layout = self.layout_through(s);
        let mut q = DenseMatrix::zeros(layout.dim(), layout.dim());
        for k in 0..=s {
            let rk = layout.range(k);
            for l in self.row_support(k) {
                if l > s {
                    continue;
                }
                let Some(b) = self.block(k, l) else { continue };
                let rl = layout.range(l);
                assert_eq!(
                    (b.rows(), b.cols()),
                    (rk.len(), rl.len()),
                    "block ({k},{l}) shape does not match level sizes"
                );
                for (bi, i) in rk.clone().enumerate() {
                    for (bj, j) in rl.clone().enumerate() {
                        q.set(i, j, b.get(bi, bj));
                    }
                }
            }
        }
        Ok(q)
    }

    /// Structural validation of levels 0..=max_level. Violations are data,
    /// not errors; an empty report means the model is valid through that depth.
    pub fn validate(&self, max_level: usize) -> ValidationReport {
        let mut violations = Vec::new();
        for k in 0..=max_level {
            if self.check_level(k).is_err() {
                break;
            }
            let mk = self.level_size(k);
            let support = self.row_support(k);
            if !support.contains(&k) {
                violations.push(Violation::new(
                    k,
                    ViolationKind::Shape,
                    "diagonal block missing from row support".into(),
                ));
                continue;
            }
            let mut row_sums = vec![0.0; mk];
            let mut shape_ok = true;
            for l in &support {
                let Some(b) = self.block(k, *l) else {
                    violations.push(Violation::new(
                        k,
                        ViolationKind::Shape,
                        format!("support lists level {l} but block is absent"),
                    ));
                    shape_ok = false;
                    continue;
                };
                let ml = self.level_size(*l);
                if (b.rows(), b.cols()) != (mk, ml) {
                    violations.push(Violation::new(
                        k,
                        ViolationKind::Shape,
                        format!(
                            "block ({k},{l}) is {}x{}, expected {mk}x{ml}",
                            b.rows(),
                            b.cols()
                        ),
                    ));
                    shape_ok = false;
                    continue;
                }
                for i in 0..mk {
                    for j in 0..ml {
                        let v = b.get(i, j);
                        if !v.is_finite() {
                            violations.push(Violation::new(
                                k,
                                ViolationKind::Shape,
                                format!("non-finite entry in block ({k},{l})"),
                            ));
                        } else if *l == k && i == j {
                            if v >= 0.0 {
                                violations.push(Violation::new(
                                    k,
                                    ViolationKind::Diagonal,
                                    format!("diagonal entry {i} of Q[{k},{k}] is {v}, must be < 0"),
                                ));
                            }
                        } else if v < 0.0 {
                            violations.push(Violation::new(
                                k,
                                ViolationKind::Sign,
                                format!("negative off-diagonal entry ({i},{j}) in block ({k},{l})"),
                            ));
                        }
                        row_sums[i] += v;
                    }
                }
            }
            if shape_ok {
                for (i, sum) in row_sums.iter().enumerate() {
                    if sum.abs() > 1e-10 {
                        violations.push(Violation::new(
                            k,
                            ViolationKind::RowSum,
                            format!("row {i} of level {k} sums to {sum:e}, expected 0"),
                        ));
                    }
                }
            }
        }
        ValidationReport { violations }
    }

    /// Most specific structural class the zero pattern satisfies through
    /// max(20, declared finite bands) levels. Deterministic and bounded.
    pub fn classify(&self) -> StructureClass {
        let mut probe = 20usize;
        if let Band::Finite(b) = self.band_low {
            probe = probe.max(b);
        }
        if let Band::Finite(b) = self.band_high {
            probe = probe.max(b);
        }
        if let Some(max) = self.max_level {
            probe = probe.min(max);
        }

        let mut upper = true;
        let mut lower = true;
        for k in 0..=probe {
            for l in self.row_support(k) {
                if l + 1 < k {
                    upper = false;
                }
                if l > k + 1 {
                    lower = false;
                }
            }
        }
        if upper && lower {
            return StructureClass::Tridiagonal;
        }
        if lower && self.interior_is_toeplitz(probe) {
            return StructureClass::Gim1Type;
        }
        if lower {
            return StructureClass::LowerHessenberg;
        }
        if upper {
            return StructureClass::UpperHessenberg;
        }
        StructureClass::General
    }

    /// Level-shift invariance of the interior blocks (k, ℓ >= 1): the pattern a
    /// GI/M/1-type repeating structure must satisfy through the probe depth.
    fn interior_is_toeplitz(&self, probe: usize) -> bool {
        if probe < 2 {
            return false;
        }
        for k in 1..probe {
            if self.level_size(k) != self.level_size(k + 1) {
                return false;
            }
            for l in 1..=probe {
                let a = self.block(k, l);
                let b = self.block(k + 1, l + 1);
                match (a, b) {
                    (None, None) => {}
                    (Some(x), Some(y)) => {
                        if x.rows() != y.rows() || x.cols() != y.cols() || x.max_abs_diff(&y) > 1e-12 {
                            return false;
                        }
                    }
                    _ => return false,
                }
            }
        }
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    Sign,
    RowSum,
    Shape,
    Diagonal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub level: usize,
    pub kind: ViolationKind,
    pub detail: String,
}

impl Violation {
    fn new(level: usize, kind: ViolationKind, detail: String) -> Self {
        Violation { level, kind, detail }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::DenseMatrix;

    #[test]
    fn mm1_validates_and_classifies() {
        let m = builtin("mm1", &[("lambda", 1.0), ("mu", 2.0)]).unwrap();
        assert!(m.validate(10).is_valid());
        assert_eq!(m.classify(), StructureClass::Tridiagonal);
    }

    #[test]
    fn broken_diagonal_is_a_row_sum_violation() {
        // mm1 with the (0,0) block forced to -2: row 0 sums to -1
        let base = builtin("mm1", &[("lambda", 1.0), ("mu", 2.0)]).unwrap();
        let m = BlockGenerator::from_fn(
            "mm1-broken",
            LevelSizes::constant(1),
            Band::Finite(1),
            Band::Finite(1),
            move |k, l| {
                if (k, l) == (0, 0) {
                    Some(DenseMatrix::scalar(-2.0))
                } else {
                    base.block(k, l)
                }
            },
            |k| if k == 0 { vec![0, 1] } else { vec![k - 1, k, k + 1] },
        );
        let report = m.validate(5);
        assert!(report
            .violations
            .iter()
            .any(|v| v.level == 0 && v.kind == ViolationKind::RowSum));
    }

    #[test]
    fn negative_off_diagonal_is_flagged() {
        let m = BlockGenerator::from_fn(
            "bad-sign",
            LevelSizes::constant(1),
            Band::Finite(1),
            Band::Finite(1),
            |k, l| match (k, l) {
                (0, 0) => Some(DenseMatrix::scalar(-1.0)),
                (0, 1) => Some(DenseMatrix::scalar(1.0)),
                (k, l) if l + 1 == k => Some(DenseMatrix::scalar(-2.0)),
                (k, l) if k == l => Some(DenseMatrix::scalar(1.0)),
                (k, l) if l == k + 1 => Some(DenseMatrix::scalar(1.0)),
                _ => None,
            },
            |k| if k == 0 { vec![0, 1] } else { vec![k - 1, k, k + 1] },
        );
        let report = m.validate(3);
        assert!(report.violations.iter().any(|v| v.kind == ViolationKind::Sign));
        assert!(report.violations.iter().any(|v| v.kind == ViolationKind::Diagonal));
    }

    #[test]
    fn nw_corner_mm1() {
        let m = builtin("mm1", &[("lambda", 1.0), ("mu", 2.0)]).unwrap();
        assert_eq!(m.nw_corner(0).unwrap(), DenseMatrix::from_rows(&[&[-1.0]]));
        assert_eq!(
            m.nw_corner(1).unwrap(),
            DenseMatrix::from_rows(&[&[-1.0, 1.0], &[2.0, -3.0]])
        );
    }

    #[test]
    fn nw_corner_mixed_level_sizes() {
        // two-level toy QBD with m0 = 1, m1 = 2, assembled by hand
        let q01 = DenseMatrix::from_rows(&[&[0.5, 0.5]]);
        let q10 = DenseMatrix::from_rows(&[&[1.0], &[2.0]]);
        let q11 = DenseMatrix::from_rows(&[&[-2.5, 0.5], &[0.25, -3.25]]);
        let m = BlockGenerator::from_fn(
            "toy",
            LevelSizes::new(vec![1], 2),
            Band::Finite(1),
            Band::Finite(1),
            move |k, l| match (k, l) {
                (0, 0) => Some(DenseMatrix::scalar(-1.0)),
                (0, 1) => Some(q01.clone()),
                (1, 0) => Some(q10.clone()),
                (1, 1) => Some(q11.clone()),
                (1, 2) => Some(DenseMatrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]])),
                _ => None,
            },
            |k| if k == 0 { vec![0, 1] } else { vec![k - 1, k, k + 1] },
        );
        let q = m.nw_corner(1).unwrap();
        let expect = DenseMatrix::from_rows(&[
            &[-1.0, 0.5, 0.5],
            &[1.0, -2.5, 0.5],
            &[2.0, 0.25, -3.25],
        ]);
        assert_eq!(q, expect);
    }

    #[test]
    fn classify_dense_above_upper() {
        // one sub-band, upward jumps whose reach grows with the level
        let m = BlockGenerator::from_fn(
            "spread-up",
            LevelSizes::constant(1),
            Band::Finite(1),
            Band::Dense,
            |k, l| {
                let width = k + 2;
                if l == k {
                    Some(DenseMatrix::scalar(-2.0))
                } else if k > 0 && l + 1 == k {
                    Some(DenseMatrix::scalar(1.0))
                } else if l > k && l <= k + width {
                    Some(DenseMatrix::scalar(1.0 / width as f64))
                } else {
                    None
                }
            },
            |k| {
                let mut s: Vec<usize> = if k == 0 { vec![] } else { vec![k - 1] };
                s.extend(k..=k + k + 2);
                s
            },
        );
        assert_eq!(m.classify(), StructureClass::UpperHessenberg);
    }

    #[test]
    fn classify_is_idempotent() {
        let m = builtin("catastrophe_qbd", &[("lambda", 4.0), ("mu", 0.7), ("gamma", 0.25)]).unwrap();
        let first = m.classify();
        assert_eq!(first, m.classify());
        assert_eq!(first, StructureClass::LowerHessenberg);
    }

    #[test]
    fn level_out_of_range() {
        let m = builtin("mm1", &[("lambda", 1.0), ("mu", 2.0)])
            .unwrap()
            .with_max_level(3);
        assert!(matches!(
            m.nw_corner(4),
            Err(ModelError::LevelOutOfRange { requested: 4, max: 3 })
        ));
    }
}
