//! Affine reverse Stackelberg strategies: the rank-one construction, the
//! parametric family, the induced middle-level strategy, problem reduction
//! by substitution and the level-by-level cascade.
//!
//! A strategy for level `ℓ` is stored in deviation form
//! `u^ℓ = u^{ℓd} − Σ_{j>ℓ} Q_j (u^j − u^{jd})`. Its graph must lie on the
//! supporting hyperplane of the next level's sublevel set at the desired
//! point, which for the gradient `g = ∇J_{ℓ+1}(d)` means `Q_jᵀ g_ℓ = g_j`.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::calculus::gradient;
use crate::error::{ModelError, SynthesisError};
use crate::geometry::{block_gradient_check, leader_existence_check, Condition};
use crate::linalg::{dot, norm, null_space, Matrix};
use crate::model::{
    DecisionPoint, Expr, ExprObjective, FullQuadratic, GameProblem, LinearConstraints,
    Objective, QuadraticObjective,
};
use crate::sampling::{rng, uniform_ball_offset};
use crate::tolerances::{gradient_tol, ALGEBRAIC};

/// Number of sampled follower points in the post-hoc hyperplane check.
const POST_CHECK_SAMPLES: usize = 100;
const POST_CHECK_RADIUS: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct AffineStrategy {
    /// Deciding level, 1-based.
    pub level: usize,
    /// The desired equilibrium over all levels of the game.
    pub anchor: DecisionPoint,
    /// `Q_j` for `j = level+1, …, n`, each `m_ℓ × m_j`.
    pub coeffs: Vec<Matrix>,
}

impl AffineStrategy {
    pub fn new(level: usize, anchor: DecisionPoint, coeffs: Vec<Matrix>) -> Result<Self, ModelError> {
        let s = AffineStrategy { level, anchor, coeffs };
        s.check_shapes()?;
        Ok(s)
    }

    /// Constant strategy `u^ℓ ≡ u^{ℓd}`.
    pub fn constant(level: usize, anchor: DecisionPoint) -> Self {
        let m = anchor.level(level).len();
        let coeffs = anchor.blocks[level..].iter().map(|b| Matrix::zeros(m, b.len())).collect();
        AffineStrategy { level, anchor, coeffs }
    }

    /// Builds a strategy from the plain affine form
    /// `u^ℓ = offset + Σ_{j>ℓ} C_j u^j`.
    ///
    /// `desired` supplies the lower blocks of the anchor; the anchor's own
    /// block is whatever the affine map returns there, so realization is
    /// checked against `desired` separately.
    pub fn from_affine(
        level: usize,
        desired: &DecisionPoint,
        offset: &[f64],
        coeffs: &[Matrix],
    ) -> Result<Self, ModelError> {
        if level == 0 || level >= desired.levels() {
            return Err(ModelError::Shape(format!(
                "strategy level {level} needs 1 ≤ level < {}",
                desired.levels()
            )));
        }
        let mut own = offset.to_vec();
        if own.len() != desired.level(level).len() {
            return Err(ModelError::DimensionMismatch {
                level,
                expected: desired.level(level).len(),
                found: own.len(),
            });
        }
        if coeffs.len() != desired.levels() - level {
            return Err(ModelError::BlockCount {
                expected: desired.levels() - level,
                found: coeffs.len(),
            });
        }
        for (i, c) in coeffs.iter().enumerate() {
            let j = level + 1 + i;
            if c.shape() != (own.len(), desired.level(j).len()) {
                return Err(ModelError::Shape(format!(
                    "coefficient for u{j} is {}x{}, expected {}x{}",
                    c.rows(),
                    c.cols(),
                    own.len(),
                    desired.level(j).len()
                )));
            }
            for (o, v) in own.iter_mut().zip(c.mul_vec(desired.level(j))) {
                *o += v;
            }
        }
        let mut anchor = desired.clone();
        anchor.blocks[level - 1] = own;
        Ok(AffineStrategy {
            level,
            anchor,
            coeffs: coeffs.iter().map(|c| c.scale(-1.0)).collect(),
        })
    }

    pub fn check_shapes(&self) -> Result<(), ModelError> {
        let n = self.anchor.levels();
        if self.level == 0 || self.level >= n {
            return Err(ModelError::Shape(format!(
                "strategy level {} needs 1 ≤ level < {n}",
                self.level
            )));
        }
        if self.coeffs.len() != n - self.level {
            return Err(ModelError::BlockCount {
                expected: n - self.level,
                found: self.coeffs.len(),
            });
        }
        let m = self.anchor.level(self.level).len();
        for (i, q) in self.coeffs.iter().enumerate() {
            let j = self.level + 1 + i;
            let want = (m, self.anchor.level(j).len());
            if q.shape() != want {
                return Err(ModelError::Shape(format!(
                    "Q for u{j} is {}x{}, expected {}x{}",
                    q.rows(),
                    q.cols(),
                    want.0,
                    want.1
                )));
            }
        }
        Ok(())
    }

    /// `Q_j` for a lower level `j`.
    pub fn coeff(&self, j: usize) -> &Matrix {
        &self.coeffs[j - self.level - 1]
    }

    /// Evaluates the strategy on the blocks of levels `ℓ+1, …, n`.
    pub fn evaluate(&self, lower: &[Vec<f64>]) -> Vec<f64> {
        let mut own = self.anchor.level(self.level).to_vec();
        for (i, (q, u)) in self.coeffs.iter().zip(lower).enumerate() {
            let a = self.anchor.level(self.level + 1 + i);
            let dev: Vec<f64> = u.iter().zip(a).map(|(x, y)| x - y).collect();
            for (o, v) in own.iter_mut().zip(q.mul_vec(&dev)) {
                *o -= v;
            }
        }
        own
    }

    /// Allocation-free evaluation: `lower` is the flat concatenation of the
    /// blocks of levels `ℓ+1, …, n`, and the result is written to `out`.
    pub fn evaluate_flat_into(&self, lower: &[f64], out: &mut [f64]) {
        out.copy_from_slice(self.anchor.level(self.level));
        let mut at = 0;
        for (i, q) in self.coeffs.iter().enumerate() {
            let a = self.anchor.level(self.level + 1 + i);
            for (r, o) in out.iter_mut().enumerate() {
                let row = q.row_slice(r);
                let mut acc = 0.0;
                for (k, &qk) in row.iter().enumerate() {
                    acc += qk * (lower[at + k] - a[k]);
                }
                *o -= acc;
            }
            at += a.len();
        }
    }

    /// Evaluates on the lower blocks of a full point.
    pub fn evaluate_at(&self, p: &DecisionPoint) -> Vec<f64> {
        self.evaluate(&p.blocks[self.level..])
    }

    /// Constant term of the plain affine form: `u^{ℓd} + Σ Q_j u^{jd}`.
    pub fn offset(&self) -> Vec<f64> {
        let mut off = self.anchor.level(self.level).to_vec();
        for (i, q) in self.coeffs.iter().enumerate() {
            for (o, v) in off.iter_mut().zip(q.mul_vec(self.anchor.level(self.level + 1 + i))) {
                *o += v;
            }
        }
        off
    }

    /// Coefficients `C_j = −Q_j` of the plain affine form.
    pub fn affine_coeffs(&self) -> Vec<Matrix> {
        self.coeffs.iter().map(|q| q.scale(-1.0)).collect()
    }

    /// Largest deviation of `γ(u^{jd})` from `u^{ℓd}` for a desired point.
    pub fn realization_residual(&self, desired: &DecisionPoint) -> f64 {
        self.evaluate_at(desired)
            .iter()
            .zip(desired.level(self.level))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// The graph point `(γ(lower), lower…)` over levels `ℓ, …, n`.
    pub fn graph_point(&self, lower: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut blocks = Vec::with_capacity(lower.len() + 1);
        blocks.push(self.evaluate(lower));
        blocks.extend(lower.iter().cloned());
        blocks
    }

    /// Re-anchors a strategy built on a reduced game at the full desired
    /// point, moving it down by the number of levels that were removed.
    pub fn lift(&self, full: &DecisionPoint) -> AffineStrategy {
        let drop = full.levels() - self.anchor.levels();
        let mut anchor = full.clone();
        for (i, b) in self.anchor.blocks.iter().enumerate() {
            anchor.blocks[drop + i] = b.clone();
        }
        AffineStrategy {
            level: self.level + drop,
            anchor,
            coeffs: self.coeffs.clone(),
        }
    }

    /// Inverse of [`lift`](Self::lift): the strategy viewed on the game with
    /// the top `drop` levels removed.
    pub fn restricted(&self, drop: usize) -> AffineStrategy {
        assert!(drop < self.level, "cannot drop the deciding level");
        AffineStrategy {
            level: self.level - drop,
            anchor: self.anchor.drop_top(drop),
            coeffs: self.coeffs.clone(),
        }
    }
}

/// Largest scaled residual of the strategy graph on the hyperplane with the
/// given normal through the anchor, over sampled follower points.
///
/// `normal` has blocks for levels `ℓ, …, n`. The residual of each sample is
/// divided by `1 + ‖normal‖·‖x − d‖`.
pub fn graph_hyperplane_residual(
    strategy: &AffineStrategy,
    normal: &[Vec<f64>],
    samples: usize,
    radius: f64,
    seed: u64,
) -> f64 {
    let lower_anchor: Vec<f64> = strategy.anchor.blocks[strategy.level..].iter().flatten().copied().collect();
    let sizes: Vec<usize> = strategy.anchor.blocks[strategy.level..].iter().map(|b| b.len()).collect();
    let d_own = strategy.anchor.level(strategy.level);
    let nflat: Vec<f64> = normal.iter().flatten().copied().collect();
    let nnorm = norm(&nflat);
    let mut g = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let off = uniform_ball_offset(&mut g, lower_anchor.len(), radius);
        let mut lower = Vec::with_capacity(sizes.len());
        let mut at = 0;
        for &m in &sizes {
            lower.push((0..m).map(|i| lower_anchor[at + i] + off[at + i]).collect::<Vec<f64>>());
            at += m;
        }
        let own = strategy.evaluate(&lower);
        let mut delta: Vec<f64> = own.iter().zip(d_own).map(|(a, b)| a - b).collect();
        delta.extend_from_slice(&off);
        let r = dot(&nflat, &delta).abs() / (1.0 + nnorm * norm(&delta));
        worst = worst.max(r);
    }
    worst
}

/// Rank-one strategy for the top level of `follower`'s game: with
/// `g = ∇J(d)`, `Q_j = g₁ g_jᵀ / ⟨g₁, g₁⟩`. Checked post hoc against the
/// hyperplane.
fn rank_one_top(
    follower: &Objective,
    d: &DecisionPoint,
) -> Result<AffineStrategy, SynthesisError> {
    let g = gradient(follower, d)?;
    let g1 = &g.blocks[0];
    let s = dot(g1, g1);
    let coeffs = g.blocks[1..].iter().map(|gj| Matrix::outer(g1, gj).scale(1.0 / s)).collect();
    let strategy = AffineStrategy::new(1, d.clone(), coeffs)?;
    let residual = graph_hyperplane_residual(&strategy, &g.blocks, POST_CHECK_SAMPLES, POST_CHECK_RADIUS, 0);
    if residual > ALGEBRAIC {
        return Err(SynthesisError::OffHyperplane { residual });
    }
    Ok(strategy)
}

/// The rank-one leader strategy `u¹ = u^{1d} − Σ Q_j (u^j − u^{jd})`.
pub fn synthesize_single_leader(
    problem: &GameProblem,
    d: &DecisionPoint,
) -> Result<AffineStrategy, SynthesisError> {
    let verdict = leader_existence_check(problem, d, None)?;
    if !verdict.passed {
        return Err(SynthesisError::Existence {
            level: 1,
            verdict: Box::new(verdict),
        });
    }
    rank_one_top(problem.objective(2), d)
}

/// Gradients of the level-3 objective after substituting the leader
/// strategy: `ū_j = ∇_{u^j}J₃(d) − Q_jᵀ ∇_{u¹}J₃(d)` for `j ≥ 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedGradients {
    /// `ū_2, ū_3, …`, one block per level below the leader.
    pub blocks: Vec<Vec<f64>>,
}

impl ReducedGradients {
    pub fn compute(
        problem: &GameProblem,
        leader: &AffineStrategy,
        d: &DecisionPoint,
    ) -> Result<Self, SynthesisError> {
        if leader.level != 1 {
            return Err(SynthesisError::WrongLevel {
                expected: 1,
                found: leader.level,
            });
        }
        if problem.levels() < 3 {
            return Err(SynthesisError::NotTrilevel);
        }
        let g = gradient(problem.objective(3), d)?;
        let blocks = g.blocks[1..]
            .iter()
            .enumerate()
            .map(|(i, gj)| {
                let qt = leader.coeffs[i].tr_mul_vec(&g.blocks[0]);
                gj.iter().zip(qt).map(|(a, b)| a - b).collect()
            })
            .collect();
        Ok(ReducedGradients { blocks })
    }

    /// `ū₃₂₁`: the block for the middle level.
    pub fn ubar_2(&self) -> &[f64] {
        &self.blocks[0]
    }

    /// `ū₃₃₁`: the block for level 3.
    pub fn ubar_3(&self) -> &[f64] {
        &self.blocks[1]
    }

    pub fn norm(&self) -> f64 {
        norm(&self.blocks.iter().flatten().copied().collect::<Vec<f64>>())
    }
}

/// The middle level's strategy induced by a fixed leader strategy:
/// `Q_j = ū₂ ū_jᵀ / ⟨ū₂, ū₂⟩`.
pub fn synthesize_single_middle(
    problem: &GameProblem,
    leader: &AffineStrategy,
    d: &DecisionPoint,
) -> Result<AffineStrategy, SynthesisError> {
    d.check(&problem.dims)?;
    let ubar = ReducedGradients::compute(problem, leader, d)?;
    let u2 = ubar.ubar_2();
    let n2 = norm(u2);
    if !(n2 > gradient_tol(ubar.norm())) {
        return Err(SynthesisError::MiddleDegenerate { norm: n2 });
    }
    let s = n2 * n2;
    let coeffs = ubar.blocks[1..].iter().map(|uj| Matrix::outer(u2, uj).scale(1.0 / s)).collect();
    Ok(AffineStrategy::new(2, d.clone(), coeffs)?)
}

/// All optimal affine leader strategies: `Q_j = R_j⁰ + B_N T_j`, with the
/// rank-one particular solutions `R_j⁰` and an orthonormal basis `B_N` of
/// the null space of `∇_{u¹}J₂(d)ᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyFamily {
    pub anchor: DecisionPoint,
    /// `R_j⁰` for `j = 2, …, n`.
    pub particular: Vec<Matrix>,
    /// `m₁ × (m₁ − 1)`; no columns when `m₁ = 1`.
    pub null_basis: Matrix,
    /// `∇_{u¹}J₂(d)`.
    pub leader_gradient: Vec<f64>,
}

/// Result of projecting a strategy onto a family.
#[derive(Debug, Clone, PartialEq)]
pub struct Membership {
    pub params: Vec<Matrix>,
    /// Largest of the coefficient residual (Frobenius) and the realization
    /// residual; zero for members.
    pub residual: f64,
}

impl StrategyFamily {
    /// Shapes of `T_j`: `(m₁ − 1) × m_j`.
    pub fn param_shapes(&self) -> Vec<(usize, usize)> {
        let k = self.null_basis.cols();
        self.particular.iter().map(|r| (k, r.cols())).collect()
    }

    pub fn zero_params(&self) -> Vec<Matrix> {
        self.param_shapes().into_iter().map(|(r, c)| Matrix::zeros(r, c)).collect()
    }

    /// True when the family has a single member (`m₁ = 1`).
    pub fn is_single_point(&self) -> bool {
        self.null_basis.cols() == 0
    }

    /// Total number of free scalar parameters.
    pub fn dimension(&self) -> usize {
        self.param_shapes().iter().map(|(r, c)| r * c).sum()
    }

    pub fn instantiate(&self, params: &[Matrix]) -> Result<AffineStrategy, SynthesisError> {
        let shapes = self.param_shapes();
        if params.len() != shapes.len() {
            return Err(SynthesisError::ParameterShape(format!(
                "expected {} parameter matrices, got {}",
                shapes.len(),
                params.len()
            )));
        }
        let mut coeffs = Vec::with_capacity(params.len());
        for (i, (t, r)) in params.iter().zip(&self.particular).enumerate() {
            if t.shape() != shapes[i] {
                return Err(SynthesisError::ParameterShape(format!(
                    "T{} is {}x{}, expected {}x{}",
                    i + 1,
                    t.rows(),
                    t.cols(),
                    shapes[i].0,
                    shapes[i].1
                )));
            }
            coeffs.push(if t.cols() == 0 || t.rows() == 0 {
                r.clone()
            } else {
                r.add(&self.null_basis.matmul(t))
            });
        }
        Ok(AffineStrategy::new(1, self.anchor.clone(), coeffs)?)
    }

    /// Parameters of the family member closest to `strategy` (least squares;
    /// exact because `B_N` is orthonormal) and the distance to it.
    pub fn membership(&self, strategy: &AffineStrategy) -> Result<Membership, SynthesisError> {
        if strategy.level != 1 {
            return Err(SynthesisError::WrongLevel {
                expected: 1,
                found: strategy.level,
            });
        }
        if strategy.coeffs.len() != self.particular.len() {
            return Err(SynthesisError::ParameterShape(format!(
                "strategy has {} coefficient blocks, family has {}",
                strategy.coeffs.len(),
                self.particular.len()
            )));
        }
        let bt = self.null_basis.transpose();
        let mut params = Vec::with_capacity(self.particular.len());
        let mut residual = strategy.realization_residual(&self.anchor);
        for (q, r) in strategy.coeffs.iter().zip(&self.particular) {
            if q.shape() != r.shape() {
                return Err(SynthesisError::ParameterShape(format!(
                    "coefficient block is {}x{}, expected {}x{}",
                    q.rows(),
                    q.cols(),
                    r.rows(),
                    r.cols()
                )));
            }
            let diff = q.sub(r);
            let t = bt.matmul(&diff);
            let rest = if t.rows() == 0 { diff } else { diff.sub(&self.null_basis.matmul(&t)) };
            residual = residual.max(rest.frobenius_norm());
            params.push(t);
        }
        Ok(Membership { params, residual })
    }
}

/// The family of optimal affine leader strategies at `d`.
pub fn synthesize_family_leader(
    problem: &GameProblem,
    d: &DecisionPoint,
) -> Result<StrategyFamily, SynthesisError> {
    let single = synthesize_single_leader(problem, d)?;
    let g = gradient(problem.objective(2), d)?;
    let g1 = g.blocks[0].clone();
    let null_basis = null_space(&Matrix::row(&g1), 1e-12);
    Ok(StrategyFamily {
        anchor: d.clone(),
        particular: single.coeffs,
        null_basis,
        leader_gradient: g1,
    })
}

/// How to pick one member of a family.
pub enum SelectionCriterion<'a> {
    /// `T = 0`: the member with minimum coefficient norm.
    MinFrobenius,
    /// Lowest score over a caller-supplied grid of parameter sets; ties go to
    /// the earliest grid entry. NaN scores never win.
    Custom {
        grid: &'a [Vec<Matrix>],
        score: &'a dyn Fn(&AffineStrategy) -> f64,
    },
}

pub fn select_parameters(
    family: &StrategyFamily,
    criterion: SelectionCriterion<'_>,
) -> Result<Vec<Matrix>, SynthesisError> {
    match criterion {
        SelectionCriterion::MinFrobenius => Ok(family.zero_params()),
        SelectionCriterion::Custom { grid, score } => {
            let mut best: Option<(f64, usize)> = None;
            for (i, params) in grid.iter().enumerate() {
                let s = score(&family.instantiate(params)?);
                let s = if s.is_nan() { f64::INFINITY } else { s };
                if best.is_none_or(|(b, _)| s < b) {
                    best = Some((s, i));
                }
            }
            best.map(|(_, i)| grid[i].clone()).ok_or(SynthesisError::EmptyGrid)
        }
    }
}

/// Substitutes a top-level strategy into every lower objective, giving the
/// game played by levels `2, …, n`. The new top objective is `J₂∘γ¹`.
///
/// Linear constraints are carried over with `u¹` substituted.
pub fn reduce_problem(
    problem: &GameProblem,
    leader: &AffineStrategy,
) -> Result<GameProblem, SynthesisError> {
    if leader.level != 1 {
        return Err(SynthesisError::WrongLevel {
            expected: 1,
            found: leader.level,
        });
    }
    if problem.levels() < 3 {
        return Err(SynthesisError::NotTrilevel);
    }
    leader.check_shapes()?;
    leader.anchor.check(&problem.dims)?;
    let dims = &problem.dims;
    let reduced_dims = dims.drop_top(1)?;
    let offset = leader.offset();
    let c = leader.affine_coeffs();

    // x = P v + a over the joint vector, v over levels 2..n.
    let m1 = dims.size(1);
    let rest = reduced_dims.total();
    let mut p = Matrix::zeros(dims.total(), rest);
    let mut col = 0;
    for cj in &c {
        p.set_submatrix(0, col, cj);
        col += cj.cols();
    }
    p.set_submatrix(m1, 0, &Matrix::identity(rest));
    let mut a = vec![0.0; dims.total()];
    a[..m1].copy_from_slice(&offset);

    let objectives = problem.objectives[1..]
        .iter()
        .map(|obj| -> Result<Objective, ModelError> {
            Ok(match obj {
                Objective::Quadratic(q) => {
                    let full = q.to_full()?;
                    let reduced = substitute_quadratic(&full, &p, &a);
                    Objective::Quadratic(QuadraticObjective::from_full(&reduced_dims, &reduced))
                }
                Objective::Expr(e) => {
                    Objective::Expr(ExprObjective::new(substitute_expr(&e.root, &offset, &c)))
                }
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let constraints = problem.constraints.as_ref().map(|cons| {
        let a1 = &cons.a[0];
        let shift = a1.mul_vec(&offset);
        let blocks = cons.a[1..]
            .iter()
            .zip(&c)
            .map(|(aj, cj)| aj.add(&a1.matmul(cj)))
            .collect();
        let b = cons.b.iter().zip(shift).map(|(b, s)| b - s).collect();
        LinearConstraints::new(blocks, b)
    });

    Ok(GameProblem::new(reduced_dims, objectives, constraints)?)
}

/// `J(Pv + a)` in flat form.
fn substitute_quadratic(q: &FullQuadratic, p: &Matrix, a: &[f64]) -> FullQuadratic {
    let hp = q.hessian.matmul(p);
    let hessian = p.transpose().matmul(&hp).symmetrized();
    let ha = q.hessian.mul_vec(a);
    let shifted: Vec<f64> = ha.iter().zip(&q.linear).map(|(x, y)| x + y).collect();
    FullQuadratic {
        hessian,
        linear: p.tr_mul_vec(&shifted),
        constant: 0.5 * dot(a, &ha) + dot(&q.linear, a) + q.constant,
    }
}

/// Replaces `u¹_i` by `offset_i + Σ_j (C_j u^j)_i` and renumbers the
/// remaining levels one up.
fn substitute_expr(e: &Expr, offset: &[f64], c: &[Matrix]) -> Expr {
    match e {
        Expr::Constant(v) => Expr::Constant(*v),
        Expr::Var { level: 1, index } => {
            let i = index - 1;
            let mut terms = Vec::new();
            if offset[i] != 0.0 {
                terms.push(Expr::Constant(offset[i]));
            }
            for (j, cj) in c.iter().enumerate() {
                for k in 0..cj.cols() {
                    let coef = cj[(i, k)];
                    if coef != 0.0 {
                        terms.push(Expr::Product(vec![Expr::Constant(coef), Expr::var(j + 1, k + 1)]));
                    }
                }
            }
            match terms.len() {
                0 => Expr::Constant(0.0),
                1 => terms.pop().expect("one term"),
                _ => Expr::Sum(terms),
            }
        }
        Expr::Var { level, index } => Expr::var(level - 1, *index),
        Expr::Sum(cs) => Expr::Sum(cs.iter().map(|x| substitute_expr(x, offset, c)).collect()),
        Expr::Product(cs) => Expr::Product(cs.iter().map(|x| substitute_expr(x, offset, c)).collect()),
        Expr::Power(b, k) => Expr::Power(Box::new(substitute_expr(b, offset, c)), *k),
        Expr::Negate(b) => Expr::Negate(Box::new(substitute_expr(b, offset, c))),
    }
}

/// Strategies for levels `1, …, n−1`: at each stage the rank-one strategy
/// for the current top level is built from the next level's (reduced)
/// objective, substituted, and the process repeats on the smaller game.
pub fn synthesize_cascade(
    problem: &GameProblem,
    d: &DecisionPoint,
) -> Result<Vec<AffineStrategy>, SynthesisError> {
    synthesize_cascade_with(problem, d, &[])
}

/// Like [`synthesize_cascade`], but the top `fixed.len()` levels use the
/// given strategies (for example a selected family member) instead of the
/// rank-one construction.
pub fn synthesize_cascade_with(
    problem: &GameProblem,
    d: &DecisionPoint,
    fixed: &[AffineStrategy],
) -> Result<Vec<AffineStrategy>, SynthesisError> {
    d.check(&problem.dims)?;
    let n = problem.levels();
    let mut stage = problem.clone();
    let mut stage_d = d.clone();
    let mut out: Vec<AffineStrategy> = Vec::with_capacity(n - 1);
    for level in 1..n {
        let top = match fixed.get(level - 1) {
            Some(s) => {
                if s.level != level {
                    return Err(SynthesisError::WrongLevel {
                        expected: level,
                        found: s.level,
                    });
                }
                s.restricted(level - 1)
            }
            None => {
                let condition = if level == 1 {
                    Condition::LeaderGradient
                } else {
                    Condition::StageGradient { level }
                };
                let verdict = block_gradient_check(stage.objective(2), &stage_d, condition, None)?;
                if !verdict.passed {
                    return Err(SynthesisError::Existence {
                        level,
                        verdict: Box::new(verdict),
                    });
                }
                rank_one_top(stage.objective(2), &stage_d)?
            }
        };
        out.push(top.lift(d));
        if level + 1 < n {
            stage = reduce_problem(&stage, &top)?;
            stage_d = stage_d.drop_top(1);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Dims, Expr};

    fn sp(v: &[f64]) -> DecisionPoint {
        DecisionPoint::new(v.iter().map(|&x| vec![x]).collect())
    }

    fn sq(e: Expr) -> Expr {
        e.pow(2)
    }

    fn c(v: f64) -> Expr {
        Expr::Constant(v)
    }

    fn u(l: usize) -> Expr {
        Expr::var(l, 1)
    }

    pub(crate) fn example1() -> GameProblem {
        let dims = Dims::new(vec![1, 1, 1]).unwrap();
        let j1 = sq(u(1) - c(2.0)) + sq(u(2) - c(1.0)) + sq(u(3) - c(3.0));
        let j2 = sq(u(1) - c(1.0)) + sq(u(2)) + sq(u(3));
        let j3 = sq(u(1)) + sq(u(2) - c(2.0)) + sq(u(3));
        GameProblem::new(dims, vec![j1.into(), j2.into(), j3.into()], None).unwrap()
    }

    #[test]
    fn example_one_leader_and_middle() {
        let p = example1();
        let d = sp(&[2.0, 1.0, 3.0]);
        let g1 = synthesize_single_leader(&p, &d).unwrap();
        assert_eq!(g1.coeff(2)[(0, 0)], 1.0);
        assert_eq!(g1.coeff(3)[(0, 0)], 3.0);
        assert_eq!(g1.offset(), vec![12.0]);
        let ubar = ReducedGradients::compute(&p, &g1, &d).unwrap();
        assert_eq!(ubar.ubar_2(), &[-6.0]);
        assert_eq!(ubar.ubar_3(), &[-6.0]);
        let g2 = synthesize_single_middle(&p, &g1, &d).unwrap();
        assert_eq!(g2.coeff(3)[(0, 0)], 1.0);
        assert_eq!(g2.offset(), vec![4.0]);
    }

    #[test]
    fn cascade_matches_single_constructions() {
        let p = example1();
        let d = sp(&[2.0, 1.0, 3.0]);
        let cascade = synthesize_cascade(&p, &d).unwrap();
        let g1 = synthesize_single_leader(&p, &d).unwrap();
        let g2 = synthesize_single_middle(&p, &g1, &d).unwrap();
        assert_eq!(cascade.len(), 2);
        assert_eq!(cascade[0], g1);
        assert!(cascade[1].coeff(3).sub(g2.coeff(3)).max_abs() < 1e-12);
        assert_eq!(cascade[1].level, 2);
    }

    #[test]
    fn affine_round_trip() {
        let d = sp(&[2.0, 1.0, 3.0]);
        let s = AffineStrategy::from_affine(1, &d, &[12.0], &[Matrix::column(&[-1.0]), Matrix::column(&[-3.0])])
            .unwrap();
        assert_eq!(s.realization_residual(&d), 0.0);
        assert_eq!(s.coeff(2)[(0, 0)], 1.0);
        assert_eq!(s.offset(), vec![12.0]);
        assert_eq!(s.evaluate(&[vec![0.0], vec![0.0]]), vec![12.0]);

        let off = AffineStrategy::from_affine(1, &d, &[11.0], &[Matrix::column(&[-1.0]), Matrix::column(&[-2.0])])
            .unwrap();
        assert_eq!(off.realization_residual(&d), 2.0);
    }

    #[test]
    fn middle_refuses_degenerate_reduced_gradient() {
        let dims = Dims::new(vec![1, 1, 1]).unwrap();
        let j1 = sq(u(1)) + sq(u(2)) + sq(u(3));
        let j2 = sq(u(1) - c(1.0)) + sq(u(2));
        let j3 = sq(u(2)) + sq(u(3));
        let p = GameProblem::new(dims, vec![j1.into(), j2.into(), j3.into()], None).unwrap();
        let d = sp(&[0.0, 0.0, 0.0]);
        let g1 = synthesize_single_leader(&p, &d).unwrap();
        assert!(matches!(
            synthesize_single_middle(&p, &g1, &d),
            Err(SynthesisError::MiddleDegenerate { .. })
        ));
    }

    #[test]
    fn constant_strategy_when_follower_gradient_is_leader_only() {
        let dims = Dims::new(vec![1, 1]).unwrap();
        let j1 = sq(u(1)) + sq(u(2));
        let j2 = sq(u(1) - c(1.0)) + sq(u(2));
        let p = GameProblem::new(dims, vec![j1.into(), j2.into()], None).unwrap();
        let d = sp(&[0.0, 0.0]);
        let s = synthesize_single_leader(&p, &d).unwrap();
        assert!(s.coeff(2).is_zero());
        assert_eq!(s.evaluate(&[vec![5.0]]), vec![0.0]);
    }

    #[test]
    fn reduce_constant_strategy_freezes_top() {
        let p = example1();
        let d = sp(&[2.0, 1.0, 3.0]);
        let r = reduce_problem(&p, &AffineStrategy::constant(1, d.clone())).unwrap();
        let pt = sp(&[0.5, -1.0]);
        let full = sp(&[2.0, 0.5, -1.0]);
        for k in 0..2 {
            let a = r.objectives[k].evaluate(&pt).unwrap();
            let b = p.objectives[k + 1].evaluate(&full).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_and_expression_reductions_agree() {
        let p = example1();
        let d = sp(&[2.0, 1.0, 3.0]);
        let g1 = synthesize_single_leader(&p, &d).unwrap();
        let via_expr = reduce_problem(&p, &g1).unwrap();
        let q = |obj: &Objective| -> Objective {
            let dims = &p.dims;
            let full = crate::calculus::hessian(obj, &d).unwrap();
            let g = crate::calculus::flat_gradient(obj, dims, &[0.0; 3]).unwrap();
            let c0 = obj.evaluate(&DecisionPoint::zeros(dims)).unwrap();
            QuadraticObjective::from_full(dims, &FullQuadratic { hessian: full, linear: g, constant: c0 }).into()
        };
        let pq = GameProblem::new(p.dims.clone(), p.objectives.iter().map(q).collect(), None).unwrap();
        let via_quad = reduce_problem(&pq, &g1).unwrap();
        for pt in [sp(&[0.0, 0.0]), sp(&[1.0, 3.0]), sp(&[-2.5, 7.0])] {
            for k in 0..2 {
                let a = via_expr.objectives[k].evaluate(&pt).unwrap();
                let b = via_quad.objectives[k].evaluate(&pt).unwrap();
                assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "{a} vs {b}");
            }
        }
        // (−u²−3u³+12)² + (u²−2)² + (u³)² at (1, 3)
        let v = via_expr.objectives[1].evaluate(&sp(&[1.0, 3.0])).unwrap();
        assert_eq!(v, 4.0 + 1.0 + 9.0);
    }

    #[test]
    fn family_on_scalar_leader_is_a_point() {
        let p = example1();
        let f = synthesize_family_leader(&p, &sp(&[2.0, 1.0, 3.0])).unwrap();
        assert!(f.is_single_point());
        assert_eq!(f.param_shapes(), vec![(0, 1), (0, 1)]);
        let s = f.instantiate(&f.zero_params()).unwrap();
        assert_eq!(s.coeff(3)[(0, 0)], 3.0);
    }

    #[test]
    fn custom_selection_ties_go_first() {
        let dims = Dims::new(vec![2, 1, 1]).unwrap();
        let j1 = sq(Expr::var(1, 1)) + sq(Expr::var(1, 2)) + sq(u(2)) + sq(u(3));
        let j2 = sq(Expr::var(1, 1) - c(1.0)) + sq(Expr::var(1, 2)) + sq(u(2) - c(1.0)) + sq(u(3) + c(1.0));
        let p = GameProblem::new(dims, vec![j1.clone().into(), j2.into(), j1.into()], None).unwrap();
        let d = DecisionPoint::new(vec![vec![0.0, 0.0], vec![0.0], vec![0.0]]);
        let f = synthesize_family_leader(&p, &d).unwrap();
        let grid: Vec<Vec<Matrix>> = (0..3)
            .map(|i| vec![Matrix::from_fn(1, 1, |_, _| i as f64), Matrix::zeros(1, 1)])
            .collect();
        let constant = |_: &AffineStrategy| 1.0;
        let pick = select_parameters(&f, SelectionCriterion::Custom { grid: &grid, score: &constant }).unwrap();
        assert_eq!(pick, grid[0]);
        let empty: Vec<Vec<Matrix>> = Vec::new();
        assert_eq!(
            select_parameters(&f, SelectionCriterion::Custom { grid: &empty, score: &constant }),
            Err(SynthesisError::EmptyGrid)
        );
        assert!(f.instantiate(&[Matrix::zeros(2, 1), Matrix::zeros(1, 1)]).is_err());
    }
}
