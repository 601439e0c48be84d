//! Synthesis and verification of affine reverse Stackelberg strategies for
//! multilevel hierarchical games over finite-dimensional decision spaces.
//!
//! The crate is `no_std` (it needs `alloc`). Enable the `parallel` feature
//! to evaluate best-response grids on a rayon pool.
//!
//! Pipeline: [`equilibrium`] finds the leader's desired point,
//! [`geometry`] checks the existence conditions, [`synthesis`] builds the
//! announced strategies (single rank-one solutions, the full parametric
//! family and the level-by-level cascade), [`verify`] confirms them with a
//! brute-force best-response oracle and [`constrained`] filters them
//! against linear constraints.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > tol)` is deliberate: NaN must fail the test.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod calculus;
pub mod constrained;
pub mod equilibrium;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod model;
mod num;
pub mod sampling;
pub mod simplex;
pub mod synthesis;
pub mod tolerances;
pub mod verify;

pub use error::{EquilibriumError, FeasibilityError, GeometryError, ModelError, SynthesisError};
pub use linalg::Matrix;
pub use model::{
    DecisionPoint, Dims, Expr, ExprObjective, GameProblem, LinearConstraints, Objective,
    QuadraticObjective,
};
pub use synthesis::{AffineStrategy, StrategyFamily};
