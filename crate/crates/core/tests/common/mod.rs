//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use rand::Rng;
use revstack_core::linalg::Matrix;
use revstack_core::model::{DecisionPoint, Dims, Expr, GameProblem, Objective, QuadraticObjective};
use revstack_core::sampling::rng;

pub fn sp(v: &[f64]) -> DecisionPoint {
    DecisionPoint::new(v.iter().map(|&x| vec![x]).collect())
}

fn u(l: usize) -> Expr {
    Expr::var(l, 1)
}

fn c(v: f64) -> Expr {
    Expr::Constant(v)
}

pub fn example1() -> GameProblem {
    let dims = Dims::new(vec![1, 1, 1]).unwrap();
    let j1 = (u(1) - c(2.0)).pow(2) + (u(2) - c(1.0)).pow(2) + (u(3) - c(3.0)).pow(2);
    let j2 = (u(1) - c(1.0)).pow(2) + u(2).pow(2) + u(3).pow(2);
    let j3 = u(1).pow(2) + (u(2) - c(2.0)).pow(2) + u(3).pow(2);
    GameProblem::new(dims, vec![j1.into(), j2.into(), j3.into()], None).unwrap()
}

/// Example 1 written in block-quadratic form.
pub fn example1_quadratic() -> GameProblem {
    let dims = Dims::new(vec![1, 1, 1]).unwrap();
    let sq = |centers: [f64; 3]| {
        let mut q = QuadraticObjective::zeros(&dims);
        let mut k = 0.0;
        for (i, &m) in centers.iter().enumerate() {
            q.set_block(i + 1, i + 1, Matrix::identity(1));
            q.set_linear(i + 1, vec![-2.0 * m]);
            k += m * m;
        }
        Objective::Quadratic(q.with_constant(k))
    };
    GameProblem::new(
        dims.clone(),
        vec![sq([2.0, 1.0, 3.0]), sq([1.0, 0.0, 0.0]), sq([0.0, 2.0, 0.0])],
        None,
    )
    .unwrap()
}

pub fn example1_d() -> DecisionPoint {
    sp(&[2.0, 1.0, 3.0])
}

pub fn example3() -> GameProblem {
    let dims = Dims::new(vec![2, 1, 1]).unwrap();
    let base = || Expr::var(1, 1).pow(2) + Expr::var(1, 2).pow(2) + u(2).pow(2) + u(3).pow(2);
    let j1 = base() + c(5.0) * Expr::var(1, 1) + c(3.0) * Expr::var(1, 2) + u(2) + u(3);
    let j2 = base() + c(3.0) * u(2);
    let j3 = base();
    GameProblem::new(dims, vec![j1.into(), j2.into(), j3.into()], None).unwrap()
}

pub fn example3_d() -> DecisionPoint {
    DecisionPoint::new(vec![vec![-2.5, -1.5], vec![-0.5], vec![-0.5]])
}

/// Closed-form family for Example 3 in deviation form:
/// `Q₁(t₁) = −((2 − 3t₁)/5, t₁)ᵀ`, `Q₂(t₂) = ((1 + 3t₂)/5, −t₂)ᵀ`.
pub fn example3_reference_q(t1: f64, t2: f64) -> (Matrix, Matrix) {
    (
        Matrix::column(&[-(2.0 - 3.0 * t1) / 5.0, -t1]),
        Matrix::column(&[(1.0 + 3.0 * t2) / 5.0, -t2]),
    )
}

/// Least-squares fit of a 2×1 coefficient onto `a + b t`: returns `(t, residual)`.
pub fn fit_line(q: &Matrix, a: [f64; 2], b: [f64; 2]) -> (f64, f64) {
    let d = [q[(0, 0)] - a[0], q[(1, 0)] - a[1]];
    let t = (b[0] * d[0] + b[1] * d[1]) / (b[0] * b[0] + b[1] * b[1]);
    let r = ((d[0] - b[0] * t).powi(2) + (d[1] - b[1] * t).powi(2)).sqrt();
    (t, r)
}

/// Gaussian elimination with partial pivoting; independent of the library
/// solvers.
pub fn gauss_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(r, &bi)| {
        let mut row = r.clone();
        row.push(bi);
        row
    }).collect();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| m[i][k].abs().partial_cmp(&m[j][k].abs()).unwrap()).unwrap();
        m.swap(k, p);
        for i in k + 1..n {
            let f = m[i][k] / m[k][k];
            for j in k..=n {
                m[i][j] -= f * m[k][j];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| m[i][j] * x[j]).sum();
        x[i] = (m[i][n] - s) / m[i][i];
    }
    x
}

/// Random quadratic objective with a positive-definite full Hessian:
/// diagonal blocks `MMᵀ + shift·I`, cross blocks with entries in
/// `[−coupling, coupling]`, linear terms in `[−2, 2]`.
pub fn random_pd_quadratic<R: Rng>(g: &mut R, dims: &Dims, coupling: f64) -> QuadraticObjective {
    loop {
        let mut q = QuadraticObjective::zeros(dims);
        let n = dims.levels();
        for j in 1..=n {
            let m = dims.size(j);
            let r = Matrix::from_fn(m, m, |_, _| g.gen_range(-1.0..1.0));
            let diag = r.matmul(&r.transpose()).add(&Matrix::identity(m).scale(0.5));
            q.set_block(j, j, diag);
            for k in j + 1..=n {
                let mk = dims.size(k);
                q.set_block(j, k, Matrix::from_fn(m, mk, |_, _| g.gen_range(-coupling..coupling)));
            }
            q.set_linear(j, (0..m).map(|_| g.gen_range(-2.0..2.0)).collect());
        }
        let h = q.to_full().unwrap().hessian;
        if revstack_core::linalg::cholesky(&h).is_some() {
            return q;
        }
    }
}

/// Seeded random strongly convex quadratic game with the given dims.
pub fn random_quadratic_game(seed: u64, dims: &Dims) -> GameProblem {
    let mut g = rng(seed);
    let objectives = (0..dims.levels())
        .map(|_| Objective::Quadratic(random_pd_quadratic(&mut g, dims, 0.5)))
        .collect();
    GameProblem::new(dims.clone(), objectives, None).unwrap()
}

/// Random polynomial objective over a 3-level game with sizes `(2, 1, 1)`:
/// a quadratic bowl plus cubic and quartic cross terms.
pub fn random_expression<R: Rng>(g: &mut R) -> Objective {
    let mut terms = Vec::new();
    let vars = [Expr::var(1, 1), Expr::var(1, 2), u(2), u(3)];
    for v in &vars {
        terms.push(c(g.gen_range(0.5..2.0)) * v.clone().pow(2));
        terms.push(c(g.gen_range(-2.0..2.0)) * v.clone());
    }
    terms.push(c(g.gen_range(-1.0..1.0)) * vars[0].clone() * vars[2].clone() * vars[3].clone());
    terms.push(c(g.gen_range(0.0..0.3)) * vars[1].clone().pow(4));
    terms.push(-(c(g.gen_range(0.0..0.5)) * (vars[2].clone() - vars[3].clone()).pow(3)));
    Objective::from(Expr::Sum(terms))
}
