use alloc::boxed::Box;
use alloc::string::String;

use thiserror::Error;

use crate::geometry::ExistenceVerdict;
use crate::model::DecisionPoint;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("a hierarchical game needs at least 2 levels, got {levels}")]
    TooFewLevels { levels: usize },
    #[error("level {level} has an empty decision space")]
    EmptyLevel { level: usize },
    #[error("expected {expected} level blocks, found {found}")]
    BlockCount { expected: usize, found: usize },
    #[error("dimension mismatch at level {level}: expected {expected}, found {found}")]
    DimensionMismatch {
        level: usize,
        expected: usize,
        found: usize,
    },
    #[error("unknown variable u{level}_{index}")]
    UnknownVariable { level: usize, index: usize },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid problem: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EquilibriumError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("the leader objective must be quadratic for this method")]
    NotQuadratic,
    #[error("problem has linear constraints; use the constrained solver")]
    Constrained,
    #[error("problem has no linear constraints")]
    Unconstrained,
    #[error("no unique team optimum: the stationarity system is singular")]
    Singular,
    #[error("stationary point is not a minimum: the leader Hessian is not positive definite")]
    NotAMinimum,
    #[error("constraint set is infeasible")]
    Infeasible,
    #[error("{rows} constraints exceed the active-set bound of {bound}; fall back to descent")]
    TooManyConstraints { rows: usize, bound: usize },
    #[error("descent did not converge within {iterations} iterations (gradient norm {gradient_norm:e})")]
    NoConvergence {
        best: Box<DecisionPoint>,
        gradient_norm: f64,
        iterations: usize,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("no supporting hyperplane from gradient: gradient norm {norm:e} is below {tol:e}")]
    ZeroGradient { norm: f64, tol: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthesisError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("existence condition failed at level {level}: {verdict}")]
    Existence {
        level: usize,
        verdict: Box<ExistenceVerdict>,
    },
    #[error("middle-level strategy not constructible by this method: reduced gradient norm {norm:e}")]
    MiddleDegenerate { norm: f64 },
    #[error("constructed strategy leaves the supporting hyperplane (residual {residual:e})")]
    OffHyperplane { residual: f64 },
    #[error("strategy for level {found} given where level {expected} is required")]
    WrongLevel { expected: usize, found: usize },
    #[error("parameter shape mismatch: {0}")]
    ParameterShape(String),
    #[error("empty parameter grid")]
    EmptyGrid,
    #[error("game has fewer than three levels")]
    NotTrilevel,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeasibilityError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("follower region is unbounded along constraint row {row}; supply explicit bounds")]
    Unbounded { row: usize },
    #[error("empty follower region: the constraints admit no point")]
    EmptyRegion,
    #[error("strategy level {level} is outside the game")]
    BadLevel { level: usize },
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
}
