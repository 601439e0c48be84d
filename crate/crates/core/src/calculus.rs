//! Block gradients and Hessians of objectives.
//!
//! Quadratics are differentiated in closed form. Expression trees are
//! differentiated recursively by propagating first- (and second-) order
//! jets through the tree. A central finite-difference gradient is kept
//! alongside as an independent check.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::ModelError;
use crate::linalg::{min_eigenvalue_exceeds, Matrix};
use crate::model::{DecisionPoint, Dims, Expr, Objective};
use crate::num::powi;

/// Per-level gradient blocks `∇_{u^ℓ} J` at a point.
pub type BlockGradient = DecisionPoint;

fn point_dims(p: &DecisionPoint) -> Result<Dims, ModelError> {
    Dims::new(p.blocks.iter().map(Vec::len).collect())
}

fn check_point(obj: &Objective, p: &DecisionPoint) -> Result<Dims, ModelError> {
    match obj {
        Objective::Quadratic(q) => {
            p.check(&q.dims)?;
            Ok(q.dims.clone())
        }
        Objective::Expr(e) => {
            let dims = point_dims(p)?;
            if let Some((level, index)) = e.root.find_unknown_variable(&dims) {
                if level >= 1 && level <= dims.levels() && index >= 1 {
                    return Err(ModelError::DimensionMismatch {
                        level,
                        expected: index,
                        found: dims.size(level),
                    });
                }
                return Err(ModelError::UnknownVariable { level, index });
            }
            Ok(dims)
        }
    }
}

/// Analytic gradient.
pub fn gradient(obj: &Objective, p: &DecisionPoint) -> Result<BlockGradient, ModelError> {
    let dims = check_point(obj, p)?;
    let x = p.to_flat();
    let flat = flat_gradient(obj, &dims, &x)?;
    Ok(DecisionPoint::from_flat(&dims, &flat))
}

/// Analytic gradient over a flat joint vector.
pub fn flat_gradient(obj: &Objective, dims: &Dims, x: &[f64]) -> Result<Vec<f64>, ModelError> {
    match obj {
        Objective::Quadratic(q) => Ok(q.to_full()?.gradient(x)),
        Objective::Expr(e) => {
            let offsets = dims.offsets();
            Ok(jet1(&e.root, x, &offsets).1)
        }
    }
}

/// Central differences with per-coordinate step `h·(1+|x_i|)`.
pub fn fd_gradient(obj: &Objective, p: &DecisionPoint, h: f64) -> Result<BlockGradient, ModelError> {
    let dims = check_point(obj, p)?;
    let f = obj.flatten(&dims)?;
    let mut x = p.to_flat();
    let mut g = vec![0.0; x.len()];
    for i in 0..x.len() {
        let xi = x[i];
        let step = h * (1.0 + xi.abs());
        x[i] = xi + step;
        let up = f.value(&x);
        x[i] = xi - step;
        let down = f.value(&x);
        x[i] = xi;
        g[i] = (up - down) / (2.0 * step);
    }
    Ok(DecisionPoint::from_flat(&dims, &g))
}

/// Full Hessian over the joint vector (`Σm_ℓ × Σm_ℓ`), exactly symmetric.
pub fn hessian(obj: &Objective, p: &DecisionPoint) -> Result<Matrix, ModelError> {
    let dims = check_point(obj, p)?;
    match obj {
        Objective::Quadratic(q) => Ok(q.to_full()?.hessian.symmetrized()),
        Objective::Expr(e) => {
            let x = p.to_flat();
            let jet = jet2(&e.root, &x, &dims.offsets());
            Ok(jet.hess.symmetrized())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvexityVerdict {
    /// Hessian positive definite with minimum eigenvalue above the tolerance.
    Certified,
    /// The sufficient test did not succeed; says nothing about the converse.
    NotCertified,
}

impl ConvexityVerdict {
    pub fn is_certified(self) -> bool {
        self == ConvexityVerdict::Certified
    }
}

/// Sufficient check for local strict convexity at `p`: `λ_min(∇²J(p)) > tol`.
pub fn strict_convexity_probe(
    obj: &Objective,
    p: &DecisionPoint,
    tol: f64,
) -> Result<ConvexityVerdict, ModelError> {
    let h = hessian(obj, p)?;
    Ok(if min_eigenvalue_exceeds(&h, tol) {
        ConvexityVerdict::Certified
    } else {
        ConvexityVerdict::NotCertified
    })
}

fn jet1(e: &Expr, x: &[f64], offsets: &[usize]) -> (f64, Vec<f64>) {
    let n = x.len();
    match e {
        Expr::Constant(c) => (*c, vec![0.0; n]),
        Expr::Var { level, index } => {
            let i = offsets[level - 1] + index - 1;
            let mut g = vec![0.0; n];
            g[i] = 1.0;
            (x[i], g)
        }
        Expr::Sum(cs) => {
            let mut v = 0.0;
            let mut g = vec![0.0; n];
            for c in cs {
                let (cv, cg) = jet1(c, x, offsets);
                v += cv;
                for (gi, ci) in g.iter_mut().zip(cg) {
                    *gi += ci;
                }
            }
            (v, g)
        }
        Expr::Product(cs) => {
            let mut v = 1.0;
            let mut g = vec![0.0; n];
            for c in cs {
                let (cv, cg) = jet1(c, x, offsets);
                for (gi, ci) in g.iter_mut().zip(cg) {
                    *gi = *gi * cv + v * ci;
                }
                v *= cv;
            }
            (v, g)
        }
        Expr::Power(b, k) => {
            let (bv, bg) = jet1(b, x, offsets);
            let d = f64::from(*k) * powi(bv, k - 1);
            (powi(bv, *k), bg.into_iter().map(|gi| d * gi).collect())
        }
        Expr::Negate(b) => {
            let (bv, bg) = jet1(b, x, offsets);
            (-bv, bg.into_iter().map(|gi| -gi).collect())
        }
    }
}

struct Jet2 {
    val: f64,
    grad: Vec<f64>,
    hess: Matrix,
}

fn jet2(e: &Expr, x: &[f64], offsets: &[usize]) -> Jet2 {
    let n = x.len();
    match e {
        Expr::Constant(c) => Jet2 {
            val: *c,
            grad: vec![0.0; n],
            hess: Matrix::zeros(n, n),
        },
        Expr::Var { level, index } => {
            let i = offsets[level - 1] + index - 1;
            let mut grad = vec![0.0; n];
            grad[i] = 1.0;
            Jet2 {
                val: x[i],
                grad,
                hess: Matrix::zeros(n, n),
            }
        }
        Expr::Sum(cs) => {
            let mut acc = Jet2 {
                val: 0.0,
                grad: vec![0.0; n],
                hess: Matrix::zeros(n, n),
            };
            for c in cs {
                let j = jet2(c, x, offsets);
                acc.val += j.val;
                for (a, b) in acc.grad.iter_mut().zip(&j.grad) {
                    *a += b;
                }
                acc.hess = acc.hess.add(&j.hess);
            }
            acc
        }
        Expr::Product(cs) => {
            let mut acc = Jet2 {
                val: 1.0,
                grad: vec![0.0; n],
                hess: Matrix::zeros(n, n),
            };
            for c in cs {
                let j = jet2(c, x, offsets);
                // (uv)'' = u''v + uv'' + u'v'ᵀ + v'u'ᵀ
                let cross = Matrix::outer(&acc.grad, &j.grad);
                let hess = acc
                    .hess
                    .scale(j.val)
                    .add(&j.hess.scale(acc.val))
                    .add(&cross)
                    .add(&cross.transpose());
                let grad = acc
                    .grad
                    .iter()
                    .zip(&j.grad)
                    .map(|(a, b)| a * j.val + acc.val * b)
                    .collect();
                acc = Jet2 {
                    val: acc.val * j.val,
                    grad,
                    hess,
                };
            }
            acc
        }
        Expr::Power(b, k) => {
            let j = jet2(b, x, offsets);
            let kf = f64::from(*k);
            let d1 = kf * powi(j.val, k - 1);
            let d2 = if *k >= 2 {
                kf * (kf - 1.0) * powi(j.val, k - 2)
            } else {
                0.0
            };
            let hess = j
                .hess
                .scale(d1)
                .add(&Matrix::outer(&j.grad, &j.grad).scale(d2));
            Jet2 {
                val: powi(j.val, *k),
                grad: j.grad.iter().map(|g| d1 * g).collect(),
                hess,
            }
        }
        Expr::Negate(b) => {
            let j = jet2(b, x, offsets);
            Jet2 {
                val: -j.val,
                grad: j.grad.iter().map(|g| -g).collect(),
                hess: j.hess.scale(-1.0),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ExprObjective, QuadraticObjective};

    fn scalar_point(v: &[f64]) -> DecisionPoint {
        DecisionPoint::new(v.iter().map(|&x| vec![x]).collect())
    }

    fn example1_j2() -> Objective {
        Objective::Expr(ExprObjective::new(
            (Expr::var(1, 1) - Expr::Constant(1.0)).pow(2)
                + Expr::var(2, 1).pow(2)
                + Expr::var(3, 1).pow(2),
        ))
    }

    fn example1_j3() -> Objective {
        Objective::Expr(ExprObjective::new(
            Expr::var(1, 1).pow(2)
                + (Expr::var(2, 1) - Expr::Constant(2.0)).pow(2)
                + Expr::var(3, 1).pow(2),
        ))
    }

    #[test]
    fn example_one_gradients() {
        let d = scalar_point(&[2.0, 1.0, 3.0]);
        assert_eq!(gradient(&example1_j2(), &d).unwrap().to_flat(), vec![2.0, 2.0, 6.0]);
        assert_eq!(gradient(&example1_j3(), &d).unwrap().to_flat(), vec![4.0, -2.0, 6.0]);
    }

    #[test]
    fn constant_objective_has_zero_gradient() {
        let obj = Objective::from(Expr::Constant(7.5));
        let g = gradient(&obj, &scalar_point(&[1.0, -2.0])).unwrap();
        assert!(g.to_flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn quartic_finite_difference() {
        let obj = Objective::from(Expr::var(1, 1).pow(4) + Expr::var(2, 1));
        let g = fd_gradient(&obj, &scalar_point(&[1.0, 0.0]), 1e-4).unwrap();
        assert!((g.blocks[0][0] - 4.0).abs() < 1e-6);
    }

    #[test]
    fn linear_objective_fd_is_exact() {
        let obj = Objective::from(
            Expr::Product(vec![Expr::Constant(3.0), Expr::var(1, 1)])
                - Expr::Product(vec![Expr::Constant(0.5), Expr::var(2, 2)]),
        );
        let p = DecisionPoint::new(vec![vec![0.7], vec![-1.0, 4.0]]);
        let a = gradient(&obj, &p).unwrap().to_flat();
        let f = fd_gradient(&obj, &p, 1e-5).unwrap().to_flat();
        for (x, y) in a.iter().zip(&f) {
            assert!((x - y).abs() < 1e-9);
        }
        let h = hessian(&obj, &p).unwrap();
        assert!(h.is_zero());
        assert_eq!(
            strict_convexity_probe(&obj, &p, 1e-8).unwrap(),
            ConvexityVerdict::NotCertified
        );
    }

    #[test]
    fn example_one_hessian_and_probe() {
        let d = scalar_point(&[2.0, 1.0, 3.0]);
        let h = hessian(&example1_j2(), &d).unwrap();
        assert_eq!(h, Matrix::identity(3).scale(2.0));
        assert!(strict_convexity_probe(&example1_j2(), &d, 1e-8).unwrap().is_certified());
    }

    #[test]
    fn saddle_is_not_certified() {
        let obj = Objective::from(Expr::var(1, 1).pow(2) - Expr::var(2, 1).pow(2));
        let v = strict_convexity_probe(&obj, &scalar_point(&[0.3, 0.1]), 1e-8).unwrap();
        assert_eq!(v, ConvexityVerdict::NotCertified);
    }

    #[test]
    fn quadratic_gradient_matches_block_formula() {
        // ∇_{u¹}J = 2A₁₁u¹ + A₁₂u² + A₁₃u³ + l₁ for scalar blocks
        let dims = Dims::new(vec![1, 1, 1]).unwrap();
        let mut q = QuadraticObjective::zeros(&dims);
        q.set_block(1, 1, Matrix::row(&[1.5]));
        q.set_block(1, 2, Matrix::row(&[0.5]));
        q.set_block(1, 3, Matrix::row(&[-2.0]));
        q.set_block(2, 2, Matrix::row(&[1.0]));
        q.set_block(3, 3, Matrix::row(&[3.0]));
        q.set_linear(1, vec![0.25]);
        let p = scalar_point(&[1.0, 2.0, -1.0]);
        let g = gradient(&Objective::Quadratic(q), &p).unwrap();
        assert_eq!(g.blocks[0][0], 2.0 * 1.5 * 1.0 + 0.5 * 2.0 - -2.0 + 0.25);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let dims = Dims::new(vec![1, 2]).unwrap();
        let q = Objective::Quadratic(QuadraticObjective::zeros(&dims));
        assert!(matches!(
            gradient(&q, &scalar_point(&[1.0, 2.0])),
            Err(ModelError::DimensionMismatch { level: 2, .. })
        ));
    }
}
