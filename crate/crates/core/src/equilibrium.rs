//! The leader's desired (team-optimal) equilibrium: the joint minimizer of
//! `J₁` over every level's decision.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::calculus::flat_gradient;
use crate::error::EquilibriumError;
use crate::linalg::{dot, min_eigenvalue_exceeds, norm, solve, Matrix};
use crate::model::{DecisionPoint, FullQuadratic, GameProblem, Objective};
use crate::sampling::{rng, uniform_ball_offset};
use crate::tolerances::{ACTIVE_SET_BOUND, CONSTRAINT};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    LinearSolve,
    Descent,
    ActiveSet,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::LinearSolve => "linear-solve",
            Method::Descent => "descent",
            Method::ActiveSet => "active-set",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    pub point: DecisionPoint,
    pub objective_value: f64,
    pub method: Method,
    /// Stationarity residual (plus any constraint violation); never negative.
    pub kkt_residual: f64,
    /// Constraint rows treated as equalities at the answer (active-set only).
    pub active_set: Vec<usize>,
}

fn leader_quadratic(problem: &GameProblem) -> Result<FullQuadratic, EquilibriumError> {
    match problem.objective(1) {
        Objective::Quadratic(q) => Ok(q.to_full()?),
        Objective::Expr(_) => Err(EquilibriumError::NotQuadratic),
    }
}

/// Solves the block stationarity system `H u = −l` of a quadratic `J₁`.
///
/// Refuses singular systems and stationary points that are not strict
/// minima, since everything downstream depends on the optimum being unique.
pub fn team_optimum_quadratic(problem: &GameProblem) -> Result<EquilibriumResult, EquilibriumError> {
    if problem.is_constrained() {
        return Err(EquilibriumError::Constrained);
    }
    let q = leader_quadratic(problem)?;
    let rhs: Vec<f64> = q.linear.iter().map(|v| -v).collect();
    let x = solve(&q.hessian, &rhs).ok_or(EquilibriumError::Singular)?;
    if !min_eigenvalue_exceeds(&q.hessian, 0.0) {
        return Err(EquilibriumError::NotAMinimum);
    }
    let residual = norm(&q.gradient(&x));
    Ok(EquilibriumResult {
        point: DecisionPoint::from_flat(&problem.dims, &x),
        objective_value: q.value(&x),
        method: Method::LinearSolve,
        kkt_residual: residual,
        active_set: Vec::new(),
    })
}

/// Multi-start steepest descent with Armijo backtracking, for leader
/// objectives of either form. Returns the lowest converged local minimizer;
/// ties go to the earlier start.
pub fn team_optimum_descent(
    problem: &GameProblem,
    starts: &[DecisionPoint],
    tol: f64,
    max_iters: usize,
) -> Result<EquilibriumResult, EquilibriumError> {
    if !(tol > 0.0) {
        return Err(EquilibriumError::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    if starts.is_empty() {
        return Err(EquilibriumError::InvalidArgument("at least one start is required".into()));
    }
    if problem.is_constrained() {
        return Err(EquilibriumError::Constrained);
    }
    let dims = &problem.dims;
    let obj = problem.objective(1);
    let f = obj.flatten(dims)?;

    let mut best_converged: Option<(f64, Vec<f64>, f64)> = None;
    let mut best_any: Option<(f64, Vec<f64>, f64)> = None;
    for start in starts {
        start.check(dims)?;
        let mut x = start.to_flat();
        let mut fx = f.value(&x);
        let mut g = flat_gradient(obj, dims, &x)?;
        let mut gn = norm(&g);
        let mut step = 1.0;
        let mut iters = 0;
        while gn > tol && iters < max_iters {
            iters += 1;
            let g2 = gn * gn;
            let mut t = step * 2.0;
            let mut accepted = false;
            let mut fresh_gradient = false;
            while t > 1e-30 {
                let trial: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - t * gi).collect();
                let ft = f.value(&trial);
                let want = 1e-4 * t * g2;
                if ft <= fx - want {
                    x = trial;
                    fx = ft;
                    accepted = true;
                    break;
                }
                // Near the minimum the required decrease drops below the
                // resolution of f; accept steps that shrink the gradient.
                if want <= f64::EPSILON * (1.0 + fx.abs()) && ft <= fx + f64::EPSILON * (1.0 + fx.abs()) {
                    let gt = flat_gradient(obj, dims, &trial)?;
                    let gtn = norm(&gt);
                    if gtn < gn {
                        x = trial;
                        fx = ft;
                        g = gt;
                        gn = gtn;
                        accepted = true;
                        fresh_gradient = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
            step = t;
            if !fresh_gradient {
                g = flat_gradient(obj, dims, &x)?;
                gn = norm(&g);
            }
        }
        let candidate = (fx, x, gn);
        if gn <= tol && best_converged.as_ref().is_none_or(|b| candidate.0 < b.0) {
            best_converged = Some(candidate.clone());
        }
        if best_any.as_ref().is_none_or(|b| candidate.0 < b.0) {
            best_any = Some(candidate);
        }
    }
    match best_converged {
        Some((fx, x, gn)) => Ok(EquilibriumResult {
            point: DecisionPoint::from_flat(dims, &x),
            objective_value: fx,
            method: Method::Descent,
            kkt_residual: gn,
            active_set: Vec::new(),
        }),
        None => {
            let (_, x, gn) = best_any.expect("at least one start");
            Err(EquilibriumError::NoConvergence {
                best: Box::new(DecisionPoint::from_flat(dims, &x)),
                gradient_norm: gn,
                iterations: max_iters,
            })
        }
    }
}

/// Active-set enumeration with the default bound on the number of rows.
pub fn team_optimum_constrained(problem: &GameProblem) -> Result<EquilibriumResult, EquilibriumError> {
    team_optimum_constrained_with_bound(problem, ACTIVE_SET_BOUND)
}

/// Exact minimizer of a strictly convex quadratic `J₁` under `Σ A^ℓ u^ℓ ≤ b`.
///
/// Every subset of rows (of size at most the number of variables) is tried
/// as an equality set; KKT points with feasible primal and nonnegative
/// multipliers are collected, and the lowest objective wins with ties
/// going to the lexicographically smallest active set.
pub fn team_optimum_constrained_with_bound(
    problem: &GameProblem,
    bound: usize,
) -> Result<EquilibriumResult, EquilibriumError> {
    let constraints = problem
        .constraints
        .as_ref()
        .filter(|c| c.rows() > 0)
        .ok_or(EquilibriumError::Unconstrained)?;
    constraints.check_shapes(&problem.dims)?;
    let k = constraints.rows();
    if k > bound || k >= 64 {
        return Err(EquilibriumError::TooManyConstraints { rows: k, bound });
    }
    let q = leader_quadratic(problem)?;
    if !min_eigenvalue_exceeds(&q.hessian, 0.0) {
        return Err(EquilibriumError::NotAMinimum);
    }
    let a = constraints.joint_matrix(&problem.dims);
    let b = &constraints.b;
    let nvar = problem.dims.total();

    let mut candidates: Vec<(f64, Vec<usize>, Vec<f64>, f64)> = Vec::new();
    for mask in 0u64..(1u64 << k) {
        if mask.count_ones() as usize > nvar {
            continue;
        }
        let active: Vec<usize> = (0..k).filter(|r| mask & (1 << r) != 0).collect();
        if let Some((x, residual)) = solve_kkt(&q, &a, b, &active) {
            let feasible = (0..k).all(|r| {
                dot(a.row_slice(r), &x) - b[r] <= CONSTRAINT * (1.0 + b[r].abs())
            });
            if feasible {
                candidates.push((q.value(&x), active, x, residual));
            }
        }
    }
    let best = candidates
        .into_iter()
        .reduce(|best, cur| {
            let tie = (cur.0 - best.0).abs() <= 1e-12 * (1.0 + best.0.abs());
            if (!tie && cur.0 < best.0) || (tie && cur.1 < best.1) {
                cur
            } else {
                best
            }
        })
        .ok_or(EquilibriumError::Infeasible)?;
    let (value, active, x, residual) = best;
    Ok(EquilibriumResult {
        point: DecisionPoint::from_flat(&problem.dims, &x),
        objective_value: value,
        method: Method::ActiveSet,
        kkt_residual: residual,
        active_set: active,
    })
}

/// Solves the equality-constrained KKT system for one active set. Returns
/// the primal point and the KKT residual when the multipliers are
/// nonnegative.
fn solve_kkt(q: &FullQuadratic, a: &Matrix, b: &[f64], active: &[usize]) -> Option<(Vec<f64>, f64)> {
    let n = q.hessian.rows();
    let s = active.len();
    let mut kkt = Matrix::zeros(n + s, n + s);
    kkt.set_submatrix(0, 0, &q.hessian);
    let mut rhs = vec![0.0; n + s];
    for i in 0..n {
        rhs[i] = -q.linear[i];
    }
    for (idx, &r) in active.iter().enumerate() {
        for j in 0..n {
            kkt[(n + idx, j)] = a[(r, j)];
            kkt[(j, n + idx)] = a[(r, j)];
        }
        rhs[n + idx] = b[r];
    }
    let sol = solve(&kkt, &rhs)?;
    let (x, lambda) = sol.split_at(n);
    if lambda.iter().any(|&l| l < -1e-9) {
        return None;
    }
    let mut stat = q.gradient(x);
    for (idx, &r) in active.iter().enumerate() {
        for j in 0..n {
            stat[j] += lambda[idx] * a[(r, j)];
        }
    }
    Some((x.to_vec(), norm(&stat)))
}

/// Picks the method that fits the problem: linear solve or active-set for
/// quadratic leaders, multi-start descent for expression leaders.
pub fn desired_equilibrium(problem: &GameProblem, seed: u64) -> Result<EquilibriumResult, EquilibriumError> {
    match (problem.objective(1), problem.is_constrained()) {
        (Objective::Quadratic(_), false) => team_optimum_quadratic(problem),
        (Objective::Quadratic(_), true) => team_optimum_constrained(problem),
        (Objective::Expr(_), true) => Err(EquilibriumError::NotQuadratic),
        (Objective::Expr(_), false) => {
            let dims = &problem.dims;
            let mut starts = vec![DecisionPoint::zeros(dims)];
            let mut g = rng(seed);
            for _ in 0..7 {
                let off = uniform_ball_offset(&mut g, dims.total(), 10.0);
                starts.push(DecisionPoint::from_flat(dims, &off));
            }
            team_optimum_descent(problem, &starts, 1e-10, 200_000)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Dims, Expr, LinearConstraints, QuadraticObjective};

    fn scalar_point(v: &[f64]) -> DecisionPoint {
        DecisionPoint::new(v.iter().map(|&x| vec![x]).collect())
    }

    fn example1_j1_quadratic() -> QuadraticObjective {
        // (u1−2)² + (u2−1)² + (u3−3)²
        let dims = Dims::new(vec![1, 1, 1]).unwrap();
        let mut q = QuadraticObjective::zeros(&dims);
        for j in 1..=3 {
            q.set_block(j, j, Matrix::identity(1));
        }
        q.set_linear(1, vec![-4.0]).set_linear(2, vec![-2.0]).set_linear(3, vec![-6.0]);
        q.with_constant(14.0)
    }

    fn filler(dims: &Dims) -> Objective {
        Objective::Quadratic(QuadraticObjective::zeros(dims))
    }

    fn problem_with(j1: Objective, constraints: Option<LinearConstraints>) -> GameProblem {
        let dims = Dims::new(vec![1, 1, 1]).unwrap();
        GameProblem::new(dims.clone(), vec![j1, filler(&dims), filler(&dims)], constraints).unwrap()
    }

    #[test]
    fn example_one_linear_solve() {
        let p = problem_with(example1_j1_quadratic().into(), None);
        let r = team_optimum_quadratic(&p).unwrap();
        assert_eq!(r.point, scalar_point(&[2.0, 1.0, 3.0]));
        assert!(r.kkt_residual <= 1e-12);
        assert_eq!(r.objective_value, 0.0);
    }

    #[test]
    fn indefinite_leader_is_refused() {
        let mut q = example1_j1_quadratic();
        q.set_block(2, 2, Matrix::identity(1).scale(-1.0));
        let p = problem_with(q.into(), None);
        assert_eq!(team_optimum_quadratic(&p).unwrap_err(), EquilibriumError::NotAMinimum);
    }

    #[test]
    fn singular_leader_is_refused() {
        let mut q = example1_j1_quadratic();
        q.set_block(3, 3, Matrix::zeros(1, 1));
        let p = problem_with(q.into(), None);
        assert_eq!(team_optimum_quadratic(&p).unwrap_err(), EquilibriumError::Singular);
    }

    #[test]
    fn descent_on_expression_leader() {
        let j1 = (Expr::var(1, 1) - Expr::Constant(2.0)).pow(2)
            + (Expr::var(2, 1) - Expr::Constant(1.0)).pow(2)
            + (Expr::var(3, 1) - Expr::Constant(3.0)).pow(2);
        let p = problem_with(j1.into(), None);
        let r = team_optimum_descent(&p, &[scalar_point(&[0.0, 0.0, 0.0])], 1e-10, 10_000).unwrap();
        for (x, y) in r.point.to_flat().iter().zip([2.0, 1.0, 3.0]) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn descent_on_two_basin_quartic() {
        let dims = Dims::new(vec![1, 1]).unwrap();
        let j1 = (Expr::var(1, 1).pow(2) - Expr::Constant(1.0)).pow(2) + Expr::var(2, 1).pow(2);
        let p = GameProblem::new(dims.clone(), vec![j1.into(), filler(&dims)], None).unwrap();
        let starts = [scalar_point(&[2.0, 0.5]), scalar_point(&[-2.0, 0.5])];
        let r = team_optimum_descent(&p, &starts, 1e-9, 100_000).unwrap();
        assert!((r.point.blocks[0][0].abs() - 1.0).abs() < 1e-8);
        assert!(r.kkt_residual < 1e-9);
    }

    #[test]
    fn descent_reports_non_convergence() {
        let p = problem_with(example1_j1_quadratic().into(), None);
        let err = team_optimum_descent(&p, &[scalar_point(&[50.0, 0.0, 0.0])], 1e-12, 0).unwrap_err();
        assert!(matches!(err, EquilibriumError::NoConvergence { .. }));
    }

    #[test]
    fn active_set_interior_and_active() {
        let dims = Dims::new(vec![1, 1, 1]).unwrap();
        let boxed = LinearConstraints::boxes(&dims, &[(1, -10.0, 10.0), (2, -10.0, 10.0), (3, -10.0, 10.0)]);
        let p = problem_with(example1_j1_quadratic().into(), Some(boxed));
        let r = team_optimum_constrained(&p).unwrap();
        assert_eq!(r.point, scalar_point(&[2.0, 1.0, 3.0]));
        assert!(r.active_set.is_empty());

        let mut cap = LinearConstraints::empty(&dims);
        cap.push_row(&dims, &[0.0, 0.0, 1.0], 2.0);
        let p = problem_with(example1_j1_quadratic().into(), Some(cap));
        let r = team_optimum_constrained(&p).unwrap();
        for (x, y) in r.point.to_flat().iter().zip([2.0, 1.0, 2.0]) {
            assert!((x - y).abs() < 1e-12);
        }
        assert_eq!(r.active_set, vec![0]);
    }

    #[test]
    fn active_set_detects_infeasibility() {
        let dims = Dims::new(vec![1, 1, 1]).unwrap();
        let mut c = LinearConstraints::empty(&dims);
        c.push_row(&dims, &[1.0, 0.0, 0.0], 0.0);
        c.push_row(&dims, &[-1.0, 0.0, 0.0], -1.0);
        let p = problem_with(example1_j1_quadratic().into(), Some(c));
        assert_eq!(team_optimum_constrained(&p).unwrap_err(), EquilibriumError::Infeasible);
    }

    #[test]
    fn active_set_bound_is_enforced() {
        let dims = Dims::new(vec![1, 1, 1]).unwrap();
        let boxed = LinearConstraints::boxes(&dims, &[(1, -10.0, 10.0), (2, -10.0, 10.0), (3, -10.0, 10.0)]);
        let p = problem_with(example1_j1_quadratic().into(), Some(boxed));
        assert!(matches!(
            team_optimum_constrained_with_bound(&p, 4),
            Err(EquilibriumError::TooManyConstraints { rows: 6, bound: 4 })
        ));
    }
}
