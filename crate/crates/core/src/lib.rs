//! Stationary distributions of ergodic continuous-time Markov chains whose
//! generators are in upper or lower block-Hessenberg form.
//!
//! The library is organized around northwest-corner truncations of the
//! generator. Augmenting a truncation into a conservative generator gives a
//! computable stationary vector, and for block-Hessenberg structure that
//! vector admits stagewise recursions that grow the truncation one level at a
//! time with a handful of small block inverses per stage:
//!
//! - [`hessenberg::upper_solve`] for upper block-Hessenberg chains
//!   (level-dependent M/G/1-type, including level-dependent QBDs),
//! - [`hessenberg::lower_solve`] for lower block-Hessenberg chains,
//! - [`hessenberg::gim1_solve`] for GI/M/1-type chains with repeating blocks,
//! - [`hessenberg::takine_conditional`] for conditional distributions over a
//!   fixed set of head levels,
//! - [`hessenberg::qbd_backward_r`] as the classical backward-recursion
//!   baseline for block-tridiagonal chains.
//!
//! Every approximation has an independent dense cross-check in
//! [`truncation`]: the balance-equation oracle [`truncation::oracle_stationary`]
//! and the fundamental-matrix route [`truncation::solve_truncation`].
//! [`diagnostics`] selects truncation depths from drift certificates.
//!
//! Ergodicity of the infinite chain is a modelling precondition throughout;
//! it cannot be verified from finitely many blocks and is instead monitored
//! empirically through the solvers' convergence reports.

#![allow(clippy::needless_range_loop)] // index arithmetic is the norm in the kernels

pub mod diagnostics;
pub mod hessenberg;
pub mod levels;
pub mod matrix;
pub mod model;
pub mod truncation;

pub use levels::{LevelLayout, LevelVector};
pub use matrix::{DenseMatrix, SolverPolicy};
pub use model::{BlockGenerator, Gim1Blocks, StructureClass};
pub use truncation::AugmentationSpec;
