//! Feasibility of affine strategies under joint linear constraints
//! `Σ_ℓ A^ℓ u^ℓ ≤ b`, and filtering of strategy families.
//!
//! The follower region of a level-`ℓ` strategy is the projection of the
//! joint polytope onto the variables of the other levels: a strategy is
//! feasible when, for every point of the polytope, replacing `u^ℓ` by
//! `γ^ℓ(u^{ℓ+1}, …, u^n)` keeps every row that involves `u^ℓ` satisfied.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::FeasibilityError;
use crate::linalg::{dot, Matrix};
use crate::model::{DecisionPoint, Dims, LinearConstraints};
use crate::sampling::rng;
use crate::simplex::{maximize, minimize, LpOutcome};
use crate::synthesis::{AffineStrategy, StrategyFamily};

/// Margin reported when no row has to be checked.
pub const VACUOUS_MARGIN: f64 = f64::MIN;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckMethod {
    LpExact,
    Sampled,
}

impl CheckMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            CheckMethod::LpExact => "lp-exact",
            CheckMethod::Sampled => "sampled",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityVerdict {
    pub feasible: bool,
    /// Row with the largest margin; `None` when no row involves the level.
    pub worst_row: Option<usize>,
    /// `max_r (max row value − b_r)`; negative means slack everywhere.
    pub worst_margin: f64,
    /// Per checked row: `(row, margin)`.
    pub row_margins: Vec<(usize, f64)>,
    /// Joint point (with the strategy applied) attaining the worst margin.
    pub witness: Option<DecisionPoint>,
    pub method: CheckMethod,
}

impl FeasibilityVerdict {
    fn vacuous(method: CheckMethod) -> Self {
        FeasibilityVerdict {
            feasible: true,
            worst_row: None,
            worst_margin: VACUOUS_MARGIN,
            row_margins: Vec::new(),
            witness: None,
            method,
        }
    }
}

/// Row `r` as a linear function of the joint vector after substituting the
/// strategy: returns `(coefficients, constant)`.
fn substituted_row(
    strategy: &AffineStrategy,
    constraints: &LinearConstraints,
    dims: &Dims,
    r: usize,
) -> (Vec<f64>, f64) {
    let l = strategy.level;
    let offsets = dims.offsets();
    let mut coeffs = vec![0.0; dims.total()];
    for (j, a) in constraints.a.iter().enumerate() {
        if j + 1 != l {
            coeffs[offsets[j]..offsets[j] + a.cols()].copy_from_slice(a.row_slice(r));
        }
    }
    let al = constraints.a[l - 1].row_slice(r);
    let constant = dot(al, &strategy.offset());
    for (i, c) in strategy.affine_coeffs().iter().enumerate() {
        let j = l + 1 + i;
        // (A^ℓ_r C_j) adds to the u^j coefficients.
        for k in 0..c.cols() {
            let add: f64 = (0..c.rows()).map(|p| al[p] * c[(p, k)]).sum();
            coeffs[offsets[j - 1] + k] += add;
        }
    }
    (coeffs, constant)
}

fn checked_rows(strategy: &AffineStrategy, constraints: &LinearConstraints) -> Vec<usize> {
    let al = &constraints.a[strategy.level - 1];
    (0..constraints.rows()).filter(|&r| al.row_slice(r).iter().any(|&v| v != 0.0)).collect()
}

fn check_inputs(
    strategy: &AffineStrategy,
    constraints: &LinearConstraints,
    dims: &Dims,
) -> Result<(), FeasibilityError> {
    if strategy.level == 0 || strategy.level >= dims.levels() {
        return Err(FeasibilityError::BadLevel { level: strategy.level });
    }
    strategy.check_shapes()?;
    strategy.anchor.check(dims)?;
    constraints.check_shapes(dims)?;
    Ok(())
}

fn apply_strategy(strategy: &AffineStrategy, dims: &Dims, x: &[f64]) -> DecisionPoint {
    let mut p = DecisionPoint::from_flat(dims, x);
    let own = strategy.evaluate(&p.blocks[strategy.level..]);
    p.blocks[strategy.level - 1] = own;
    p
}

/// Exact check: each row involving `u^ℓ` is maximized over the joint
/// polytope by the simplex method.
pub fn feasibility_check(
    strategy: &AffineStrategy,
    constraints: &LinearConstraints,
    dims: &Dims,
    tol: f64,
) -> Result<FeasibilityVerdict, FeasibilityError> {
    check_inputs(strategy, constraints, dims)?;
    let rows = checked_rows(strategy, constraints);
    if rows.is_empty() {
        return Ok(FeasibilityVerdict::vacuous(CheckMethod::LpExact));
    }
    let a = constraints.joint_matrix(dims);
    let mut row_margins = Vec::with_capacity(rows.len());
    let mut worst: Option<(usize, f64, Vec<f64>)> = None;
    for &r in &rows {
        let (c, constant) = substituted_row(strategy, constraints, dims, r);
        match maximize(&c, &a, &constraints.b) {
            LpOutcome::Optimal { x, value } => {
                let margin = value + constant - constraints.b[r];
                row_margins.push((r, margin));
                if worst.as_ref().is_none_or(|w| margin > w.1) {
                    worst = Some((r, margin, x));
                }
            }
            LpOutcome::Unbounded => return Err(FeasibilityError::Unbounded { row: r }),
            LpOutcome::Infeasible => return Err(FeasibilityError::EmptyRegion),
        }
    }
    let (row, margin, x) = worst.expect("at least one checked row");
    Ok(FeasibilityVerdict {
        feasible: margin <= tol,
        worst_row: Some(row),
        worst_margin: margin,
        row_margins,
        witness: Some(apply_strategy(strategy, dims, &x)),
        method: CheckMethod::LpExact,
    })
}

/// Sampling check: joint points are drawn uniformly from the bounding box
/// of the polytope and kept when they satisfy the constraints; each kept
/// point is mapped through the strategy and the rows involving `u^ℓ` are
/// evaluated. Evidence only, but independent of the simplex maximization.
pub fn sampled_feasibility(
    strategy: &AffineStrategy,
    constraints: &LinearConstraints,
    dims: &Dims,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<FeasibilityVerdict, FeasibilityError> {
    check_inputs(strategy, constraints, dims)?;
    let rows = checked_rows(strategy, constraints);
    if rows.is_empty() {
        return Ok(FeasibilityVerdict::vacuous(CheckMethod::Sampled));
    }
    let bbox = bounding_box(constraints, dims)?;
    let a = constraints.joint_matrix(dims);
    let mut g = rng(seed);
    let mut margins: Vec<(usize, f64)> = rows.iter().map(|&r| (r, f64::NEG_INFINITY)).collect();
    let mut worst: Option<(usize, f64, DecisionPoint)> = None;
    let mut kept = 0;
    let mut attempts = 0;
    while kept < samples && attempts < samples.saturating_mul(100) {
        attempts += 1;
        let x: Vec<f64> = bbox
            .iter()
            .map(|&(lo, hi)| if hi > lo { g.gen_range(lo..=hi) } else { lo })
            .collect();
        let inside = (0..constraints.rows())
            .all(|r| dot(a.row_slice(r), &x) <= constraints.b[r] + 1e-12 * (1.0 + constraints.b[r].abs()));
        if !inside {
            continue;
        }
        kept += 1;
        let p = apply_strategy(strategy, dims, &x);
        let values = constraints.row_values(&p);
        for (slot, &r) in margins.iter_mut().zip(&rows) {
            let m = values[r] - constraints.b[r];
            if m > slot.1 {
                slot.1 = m;
            }
            if worst.as_ref().is_none_or(|w| m > w.1) {
                worst = Some((r, m, p.clone()));
            }
        }
    }
    match worst {
        None => Err(FeasibilityError::EmptyRegion),
        Some((row, margin, p)) => Ok(FeasibilityVerdict {
            feasible: margin <= tol,
            worst_row: Some(row),
            worst_margin: margin,
            row_margins: margins,
            witness: Some(p),
            method: CheckMethod::Sampled,
        }),
    }
}

/// Per-variable `(min, max)` over the joint polytope.
pub fn bounding_box(constraints: &LinearConstraints, dims: &Dims) -> Result<Vec<(f64, f64)>, FeasibilityError> {
    let a = constraints.joint_matrix(dims);
    let n = dims.total();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        let hi = match maximize(&e, &a, &constraints.b) {
            LpOutcome::Optimal { value, .. } => value,
            LpOutcome::Unbounded => return Err(FeasibilityError::Unbounded { row: i }),
            LpOutcome::Infeasible => return Err(FeasibilityError::EmptyRegion),
        };
        let lo = match minimize(&e, &a, &constraints.b) {
            LpOutcome::Optimal { value, .. } => value,
            LpOutcome::Unbounded => return Err(FeasibilityError::Unbounded { row: i }),
            LpOutcome::Infeasible => return Err(FeasibilityError::EmptyRegion),
        };
        out.push((lo, hi));
    }
    Ok(out)
}

/// One entry of a family sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterEntry {
    pub params: Vec<Matrix>,
    pub verdict: Result<FeasibilityVerdict, FeasibilityError>,
}

/// Instantiates every parameter set and checks it; failures are recorded
/// per entry and never stop the sweep. Output order is grid order.
pub fn filter_family(
    family: &StrategyFamily,
    constraints: &LinearConstraints,
    dims: &Dims,
    param_grid: &[Vec<Matrix>],
    tol: f64,
) -> Vec<FilterEntry> {
    let check = |params: &Vec<Matrix>| FilterEntry {
        params: params.clone(),
        verdict: family
            .instantiate(params)
            .map_err(FeasibilityError::from)
            .and_then(|s| feasibility_check(&s, constraints, dims, tol)),
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        param_grid.par_iter().map(check).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        param_grid.iter().map(check).collect()
    }
}

/// Rows that hold with equality (within `tol·(1 + |b_r|)`) at `p`. A
/// nonempty result means the desired point is not interior, where the
/// hyperplane construction is only a necessary condition.
pub fn active_rows(constraints: &LinearConstraints, p: &DecisionPoint, tol: f64) -> Vec<usize> {
    let values = constraints.row_values(p);
    values
        .iter()
        .zip(&constraints.b)
        .enumerate()
        .filter(|(_, (v, b))| (*v - *b).abs() <= tol * (1.0 + b.abs()))
        .map(|(r, _)| r)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp(v: &[f64]) -> DecisionPoint {
        DecisionPoint::new(v.iter().map(|&x| vec![x]).collect())
    }

    fn gamma1() -> (Dims, AffineStrategy) {
        let dims = Dims::new(vec![1, 1, 1]).unwrap();
        let s = AffineStrategy::from_affine(
            1,
            &sp(&[2.0, 1.0, 3.0]),
            &[12.0],
            &[Matrix::column(&[-1.0]), Matrix::column(&[-3.0])],
        )
        .unwrap();
        (dims, s)
    }

    #[test]
    fn generous_box_is_feasible() {
        let (dims, s) = gamma1();
        let c = LinearConstraints::boxes(&dims, &[(1, -30.0, 40.0), (2, -5.0, 5.0), (3, -5.0, 5.0)]);
        let v = feasibility_check(&s, &c, &dims, 1e-9).unwrap();
        assert!(v.feasible);
        // image is [−8, 32]: upper margin 32 − 40, lower margin 8 − 30
        assert_eq!(v.worst_row, Some(0));
        assert!((v.worst_margin + 8.0).abs() < 1e-9);
    }

    #[test]
    fn tight_box_is_infeasible_on_leader_upper_row() {
        let (dims, s) = gamma1();
        let c = LinearConstraints::boxes(&dims, &[(1, -20.0, 20.0), (2, -20.0, 20.0), (3, -20.0, 20.0)]);
        let v = feasibility_check(&s, &c, &dims, 1e-9).unwrap();
        assert!(!v.feasible);
        assert_eq!(v.worst_row, Some(0));
        assert!((v.worst_margin - 72.0).abs() < 1e-9);
        let w = v.witness.unwrap();
        assert!((w.blocks[0][0] - 92.0).abs() < 1e-9);
    }

    #[test]
    fn vacuous_and_unbounded_and_empty() {
        let (dims, s) = gamma1();
        let v = feasibility_check(&s, &LinearConstraints::empty(&dims), &dims, 1e-9).unwrap();
        assert!(v.feasible);
        assert_eq!(v.worst_margin, VACUOUS_MARGIN);

        let c = LinearConstraints::boxes(&dims, &[(1, -20.0, 20.0)]);
        assert!(matches!(feasibility_check(&s, &c, &dims, 1e-9), Err(FeasibilityError::Unbounded { .. })));

        let c = LinearConstraints::boxes(&dims, &[(1, -1.0, 1.0), (2, 3.0, 2.0), (3, 0.0, 1.0)]);
        assert_eq!(feasibility_check(&s, &c, &dims, 1e-9), Err(FeasibilityError::EmptyRegion));
    }

    #[test]
    fn constant_strategy_margin_is_anchor_slack() {
        let dims = Dims::new(vec![1, 1, 1]).unwrap();
        let s = AffineStrategy::constant(1, sp(&[2.0, 1.0, 3.0]));
        let c = LinearConstraints::boxes(&dims, &[(1, -1.0, 5.0), (2, -1.0, 1.0), (3, -1.0, 1.0)]);
        let v = feasibility_check(&s, &c, &dims, 1e-9).unwrap();
        assert!(v.feasible);
        assert_eq!(v.worst_margin, -3.0);
    }

    #[test]
    fn sampling_agrees_with_lp() {
        let (dims, s) = gamma1();
        for (lead, foll, want) in [((-30.0, 40.0), 5.0, true), ((-20.0, 20.0), 20.0, false)] {
            let c = LinearConstraints::boxes(&dims, &[(1, lead.0, lead.1), (2, -foll, foll), (3, -foll, foll)]);
            let exact = feasibility_check(&s, &c, &dims, 1e-9).unwrap();
            let sampled = sampled_feasibility(&s, &c, &dims, 2000, 3, 1e-9).unwrap();
            assert_eq!(exact.feasible, want);
            assert_eq!(sampled.feasible, want);
            assert!(sampled.worst_margin <= exact.worst_margin + 1e-9);
        }
    }

    #[test]
    fn active_rows_at_boundary() {
        let dims = Dims::new(vec![1, 1]).unwrap();
        let c = LinearConstraints::boxes(&dims, &[(1, 0.0, 1.0), (2, 0.0, 1.0)]);
        assert_eq!(active_rows(&c, &sp(&[1.0, 0.5]), 1e-9), vec![0]);
        assert!(active_rows(&c, &sp(&[0.5, 0.5]), 1e-9).is_empty());
    }
}
