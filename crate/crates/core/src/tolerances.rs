//! Default tolerances shared across modules.

/// Relative factor for "gradient is nonzero" checks: a block passes when
/// its norm exceeds `GRADIENT_REL * (1 + ‖full gradient‖)`.
pub const GRADIENT_REL: f64 = 1e-8;

/// Algebraic residuals (realization, hyperplane membership, null basis).
pub const ALGEBRAIC: f64 = 1e-9;

/// Distance between an oracle argmin and the desired point.
pub const ARGMIN: f64 = 1e-4;

/// Constraint satisfaction of a computed equilibrium.
pub const CONSTRAINT: f64 = 1e-9;

/// Default half-width of the best-response grid around the desired point.
pub const GRID_RADIUS: f64 = 10.0;

/// Default grid resolution per coordinate.
pub const GRID_POINTS: usize = 41;

/// Default bound on the number of constraints for active-set enumeration.
pub const ACTIVE_SET_BOUND: usize = 20;

/// Scale-aware threshold for gradient-block checks.
pub fn gradient_tol(full_gradient_norm: f64) -> f64 {
    GRADIENT_REL * (1.0 + full_gradient_norm)
}
