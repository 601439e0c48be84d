//! Multilevel game descriptions: decision dimensions, points in the joint
//! decision space, objectives (structured quadratics or expression trees)
//! and optional joint linear constraints.
//!
//! Levels are numbered from 1 (the top leader) to `n` (the bottom
//! follower) wherever an API speaks of a "level". Vector indices are
//! ordinary 0-based indices.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::ModelError;
use crate::linalg::{dot, min_eigenvalue_exceeds, Matrix};
use crate::num::powi;

/// Decision-space dimensions of an `n`-level game.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dims {
    sizes: Vec<usize>,
}

impl Dims {
    pub fn new(sizes: Vec<usize>) -> Result<Self, ModelError> {
        if sizes.len() < 2 {
            return Err(ModelError::TooFewLevels {
                levels: sizes.len(),
            });
        }
        if let Some(pos) = sizes.iter().position(|&m| m == 0) {
            return Err(ModelError::EmptyLevel { level: pos + 1 });
        }
        Ok(Dims { sizes })
    }

    pub fn levels(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Dimension `m_ℓ` of level `level` (1-based).
    pub fn size(&self, level: usize) -> usize {
        self.sizes[level - 1]
    }

    /// Total number of scalar decision variables.
    pub fn total(&self) -> usize {
        self.sizes.iter().sum()
    }

    /// Offset of level `level`'s first variable in the flattened joint vector.
    pub fn offset(&self, level: usize) -> usize {
        self.sizes[..level - 1].iter().sum()
    }

    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.sizes
            .iter()
            .map(|m| {
                let o = acc;
                acc += m;
                o
            })
            .collect()
    }

    /// Dimensions of the game left after removing the top `drop` levels.
    pub fn drop_top(&self, drop: usize) -> Result<Dims, ModelError> {
        Dims::new(self.sizes[drop..].to_vec())
    }
}

/// A point of the joint decision space: one block per level.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionPoint {
    pub blocks: Vec<Vec<f64>>,
}

impl DecisionPoint {
    pub fn new(blocks: Vec<Vec<f64>>) -> Self {
        DecisionPoint { blocks }
    }

    pub fn zeros(dims: &Dims) -> Self {
        DecisionPoint {
            blocks: dims.sizes().iter().map(|&m| vec![0.0; m]).collect(),
        }
    }

    /// Splits a flat joint vector into level blocks.
    pub fn from_flat(dims: &Dims, flat: &[f64]) -> Self {
        assert_eq!(flat.len(), dims.total(), "flat vector has wrong length");
        let mut blocks = Vec::with_capacity(dims.levels());
        let mut at = 0;
        for &m in dims.sizes() {
            blocks.push(flat[at..at + m].to_vec());
            at += m;
        }
        DecisionPoint { blocks }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.blocks.iter().flat_map(|b| b.iter().copied()).collect()
    }

    /// Block of level `level` (1-based).
    pub fn level(&self, level: usize) -> &[f64] {
        &self.blocks[level - 1]
    }

    pub fn levels(&self) -> usize {
        self.blocks.len()
    }

    /// Checks block lengths against `dims`, naming the first offending level.
    pub fn check(&self, dims: &Dims) -> Result<(), ModelError> {
        if self.blocks.len() != dims.levels() {
            return Err(ModelError::BlockCount {
                expected: dims.levels(),
                found: self.blocks.len(),
            });
        }
        for (i, (b, &m)) in self.blocks.iter().zip(dims.sizes()).enumerate() {
            if b.len() != m {
                return Err(ModelError::DimensionMismatch {
                    level: i + 1,
                    expected: m,
                    found: b.len(),
                });
            }
        }
        Ok(())
    }

    /// The point without its top `drop` levels.
    pub fn drop_top(&self, drop: usize) -> DecisionPoint {
        DecisionPoint {
            blocks: self.blocks[drop..].to_vec(),
        }
    }

    pub fn norm(&self) -> f64 {
        let flat = self.to_flat();
        crate::linalg::norm(&flat)
    }
}

/// Index of block `(j, k)`, `1 ≤ j ≤ k ≤ n`, in packed upper-triangular order.
pub fn upper_index(levels: usize, j: usize, k: usize) -> usize {
    debug_assert!(1 <= j && j <= k && k <= levels);
    // row j holds levels - j + 1 blocks
    let j0 = j - 1;
    j0 * levels - j0 * j0.saturating_sub(1) / 2 + (k - j)
}

/// `J(u) = Σ_{j≤k} ⟨u^j, A_jk u^k⟩ + Σ_k ⟨u^k, l_k⟩ + c`.
///
/// Cross terms appear once (`k > j`); the diagonal blocks `A_jj` are meant
/// to be symmetric. Blocks are stored in packed upper-triangular order, see
/// [`upper_index`].
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticObjective {
    pub dims: Dims,
    pub a: Vec<Matrix>,
    pub l: Vec<Vec<f64>>,
    pub constant: f64,
}

/// Flat form `J(x) = ½ xᵀ H x + gᵀ x + c` over the joint vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FullQuadratic {
    pub hessian: Matrix,
    pub linear: Vec<f64>,
    pub constant: f64,
}

impl FullQuadratic {
    pub fn value(&self, x: &[f64]) -> f64 {
        0.5 * self.hessian.bilinear(x, x) + dot(&self.linear, x) + self.constant
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.hessian.mul_vec(x);
        for (gi, li) in g.iter_mut().zip(&self.linear) {
            *gi += li;
        }
        g
    }
}

impl QuadraticObjective {
    pub fn zeros(dims: &Dims) -> Self {
        let n = dims.levels();
        let mut a = Vec::with_capacity(n * (n + 1) / 2);
        for j in 1..=n {
            for k in j..=n {
                a.push(Matrix::zeros(dims.size(j), dims.size(k)));
            }
        }
        QuadraticObjective {
            dims: dims.clone(),
            a,
            l: dims.sizes().iter().map(|&m| vec![0.0; m]).collect(),
            constant: 0.0,
        }
    }

    /// Block `A_jk` for `j ≤ k` (1-based levels).
    pub fn block(&self, j: usize, k: usize) -> &Matrix {
        &self.a[upper_index(self.dims.levels(), j, k)]
    }

    pub fn block_mut(&mut self, j: usize, k: usize) -> &mut Matrix {
        let idx = upper_index(self.dims.levels(), j, k);
        &mut self.a[idx]
    }

    pub fn set_block(&mut self, j: usize, k: usize, m: Matrix) -> &mut Self {
        *self.block_mut(j, k) = m;
        self
    }

    pub fn set_linear(&mut self, k: usize, l: Vec<f64>) -> &mut Self {
        self.l[k - 1] = l;
        self
    }

    pub fn with_constant(mut self, c: f64) -> Self {
        self.constant = c;
        self
    }

    /// Shape check against the stored dims.
    pub fn check_shapes(&self) -> Result<(), ModelError> {
        let n = self.dims.levels();
        if self.a.len() != n * (n + 1) / 2 {
            return Err(ModelError::Shape(format!(
                "expected {} packed blocks, found {}",
                n * (n + 1) / 2,
                self.a.len()
            )));
        }
        for j in 1..=n {
            for k in j..=n {
                let want = (self.dims.size(j), self.dims.size(k));
                let got = self.block(j, k).shape();
                if want != got {
                    return Err(ModelError::Shape(format!(
                        "block A_{j}{k} is {}x{}, expected {}x{}",
                        got.0, got.1, want.0, want.1
                    )));
                }
            }
        }
        if self.l.len() != n {
            return Err(ModelError::Shape(format!(
                "expected {n} linear terms, found {}",
                self.l.len()
            )));
        }
        for (k, lk) in self.l.iter().enumerate() {
            if lk.len() != self.dims.size(k + 1) {
                return Err(ModelError::DimensionMismatch {
                    level: k + 1,
                    expected: self.dims.size(k + 1),
                    found: lk.len(),
                });
            }
        }
        Ok(())
    }

    /// Evaluates the stored block form directly.
    pub fn evaluate(&self, p: &DecisionPoint) -> Result<f64, ModelError> {
        self.check_shapes()?;
        p.check(&self.dims)?;
        let n = self.dims.levels();
        let mut acc = 0.0;
        for j in 1..=n {
            for k in j..=n {
                acc += self.block(j, k).bilinear(p.level(j), p.level(k));
            }
        }
        for k in 1..=n {
            acc += dot(&self.l[k - 1], p.level(k));
        }
        Ok(acc + self.constant)
    }

    /// Converts to the flat form. `H_jj = A_jj + A_jjᵀ`, `H_jk = A_jk`,
    /// `H_kj = A_jkᵀ`.
    pub fn to_full(&self) -> Result<FullQuadratic, ModelError> {
        self.check_shapes()?;
        let n = self.dims.levels();
        let total = self.dims.total();
        let offsets = self.dims.offsets();
        let mut h = Matrix::zeros(total, total);
        for j in 1..=n {
            for k in j..=n {
                let b = self.block(j, k);
                let (oj, ok) = (offsets[j - 1], offsets[k - 1]);
                for p in 0..b.rows() {
                    for q in 0..b.cols() {
                        h[(oj + p, ok + q)] += b[(p, q)];
                        h[(ok + q, oj + p)] += b[(p, q)];
                    }
                }
            }
        }
        Ok(FullQuadratic {
            hessian: h,
            linear: self.l.iter().flat_map(|v| v.iter().copied()).collect(),
            constant: self.constant,
        })
    }

    /// Inverse of [`to_full`](Self::to_full); the Hessian is symmetrized first.
    pub fn from_full(dims: &Dims, full: &FullQuadratic) -> Self {
        let h = full.hessian.symmetrized();
        let n = dims.levels();
        let offsets = dims.offsets();
        let mut q = QuadraticObjective::zeros(dims);
        for j in 1..=n {
            for k in j..=n {
                let mut b = h.submatrix(offsets[j - 1], offsets[k - 1], dims.size(j), dims.size(k));
                if j == k {
                    b = b.scale(0.5);
                }
                q.set_block(j, k, b);
            }
            q.l[j - 1] = full.linear[offsets[j - 1]..offsets[j - 1] + dims.size(j)].to_vec();
        }
        q.constant = full.constant;
        q
    }
}

/// Expression tree over the joint decision variables.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Constant(f64),
    /// Variable `u^level_index`, both 1-based.
    Var {
        level: usize,
        index: usize,
    },
    Sum(Vec<Expr>),
    Product(Vec<Expr>),
    /// Positive integer power.
    Power(Box<Expr>, u32),
    Negate(Box<Expr>),
}

impl Expr {
    pub fn var(level: usize, index: usize) -> Expr {
        Expr::Var { level, index }
    }

    pub fn pow(self, k: u32) -> Expr {
        Expr::Power(Box::new(self), k)
    }

    pub fn negate(self) -> Expr {
        Expr::Negate(Box::new(self))
    }

    /// Visits every node in prefix order.
    pub fn visit(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Sum(cs) | Expr::Product(cs) => cs.iter().for_each(|c| c.visit(f)),
            Expr::Power(b, _) | Expr::Negate(b) => b.visit(f),
            Expr::Constant(_) | Expr::Var { .. } => {}
        }
    }

    /// Evaluates against a flat joint vector; `offsets[ℓ-1]` is the start of level ℓ.
    pub fn eval_flat(&self, x: &[f64], offsets: &[usize]) -> f64 {
        match self {
            Expr::Constant(c) => *c,
            Expr::Var { level, index } => x[offsets[level - 1] + index - 1],
            Expr::Sum(cs) => cs.iter().map(|c| c.eval_flat(x, offsets)).sum(),
            Expr::Product(cs) => cs.iter().map(|c| c.eval_flat(x, offsets)).product(),
            Expr::Power(b, k) => powi(b.eval_flat(x, offsets), *k),
            Expr::Negate(b) => -b.eval_flat(x, offsets),
        }
    }

    /// First variable reference falling outside `dims`, if any.
    pub fn find_unknown_variable(&self, dims: &Dims) -> Option<(usize, usize)> {
        let mut bad = None;
        self.visit(&mut |e| {
            if bad.is_none() {
                if let Expr::Var { level, index } = e {
                    let ok = *level >= 1
                        && *level <= dims.levels()
                        && *index >= 1
                        && *index <= dims.size(*level);
                    if !ok {
                        bad = Some((*level, *index));
                    }
                }
            }
        });
        bad
    }

    fn check_against(&self, p: &DecisionPoint) -> Result<(), ModelError> {
        let mut err = None;
        self.visit(&mut |e| {
            if err.is_some() {
                return;
            }
            match e {
                Expr::Var { level, index } => {
                    if *level == 0 || *level > p.levels() || *index == 0 {
                        err = Some(ModelError::UnknownVariable {
                            level: *level,
                            index: *index,
                        });
                    } else if *index > p.level(*level).len() {
                        err = Some(ModelError::DimensionMismatch {
                            level: *level,
                            expected: *index,
                            found: p.level(*level).len(),
                        });
                    }
                }
                Expr::Constant(c) if !c.is_finite() => {
                    err = Some(ModelError::NonFinite(String::from("expression constant")));
                }
                Expr::Power(_, 0) => {
                    err = Some(ModelError::Shape(String::from("zero exponent")));
                }
                _ => {}
            }
        });
        err.map_or(Ok(()), Err)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Constant(c) => write!(f, "{c}"),
            Expr::Var { level, index } => write!(f, "u{level}_{index}"),
            Expr::Sum(cs) => {
                write!(f, "(")?;
                for (i, c) in cs.iter().enumerate() {
                    if i > 0 {
                        write!(f, " + ")?;
                    }
                    write!(f, "{c}")?;
                }
                write!(f, ")")
            }
            Expr::Product(cs) => {
                write!(f, "(")?;
                for (i, c) in cs.iter().enumerate() {
                    if i > 0 {
                        write!(f, " * ")?;
                    }
                    write!(f, "{c}")?;
                }
                write!(f, ")")
            }
            Expr::Power(b, k) => write!(f, "({b})^{k}"),
            Expr::Negate(b) => write!(f, "-({b})"),
        }
    }
}

impl core::ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::Sum(vec![self, rhs])
    }
}

impl core::ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::Sum(vec![self, rhs.negate()])
    }
}

impl core::ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::Product(vec![self, rhs])
    }
}

impl core::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        self.negate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExprObjective {
    pub root: Expr,
}

impl ExprObjective {
    pub fn new(root: Expr) -> Self {
        ExprObjective { root }
    }

    pub fn evaluate(&self, p: &DecisionPoint) -> Result<f64, ModelError> {
        self.root.check_against(p)?;
        let flat = p.to_flat();
        let mut offsets = Vec::with_capacity(p.levels());
        let mut acc = 0;
        for b in &p.blocks {
            offsets.push(acc);
            acc += b.len();
        }
        Ok(self.root.eval_flat(&flat, &offsets))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    Quadratic(QuadraticObjective),
    Expr(ExprObjective),
}

impl From<QuadraticObjective> for Objective {
    fn from(q: QuadraticObjective) -> Self {
        Objective::Quadratic(q)
    }
}

impl From<Expr> for Objective {
    fn from(e: Expr) -> Self {
        Objective::Expr(ExprObjective::new(e))
    }
}

impl Objective {
    pub fn evaluate(&self, p: &DecisionPoint) -> Result<f64, ModelError> {
        match self {
            Objective::Quadratic(q) => q.evaluate(p),
            Objective::Expr(e) => e.evaluate(p),
        }
    }

    pub fn as_quadratic(&self) -> Option<&QuadraticObjective> {
        match self {
            Objective::Quadratic(q) => Some(q),
            Objective::Expr(_) => None,
        }
    }

    /// Prepares the objective for repeated evaluation on flat joint vectors.
    pub fn flatten(&self, dims: &Dims) -> Result<FlatObjective, ModelError> {
        match self {
            Objective::Quadratic(q) => {
                if &q.dims != dims {
                    return Err(ModelError::Shape(String::from(
                        "quadratic objective dims differ from the game dims",
                    )));
                }
                Ok(FlatObjective::Quadratic(q.to_full()?))
            }
            Objective::Expr(e) => {
                if let Some((level, index)) = e.root.find_unknown_variable(dims) {
                    return Err(ModelError::UnknownVariable { level, index });
                }
                Ok(FlatObjective::Expr {
                    root: e.root.clone(),
                    offsets: dims.offsets(),
                })
            }
        }
    }
}

/// An objective ready for evaluation on flat joint vectors.
#[derive(Debug, Clone)]
pub enum FlatObjective {
    Quadratic(FullQuadratic),
    Expr { root: Expr, offsets: Vec<usize> },
}

impl FlatObjective {
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            FlatObjective::Quadratic(q) => q.value(x),
            FlatObjective::Expr { root, offsets } => root.eval_flat(x, offsets),
        }
    }
}

/// Joint linear constraints `Σ_ℓ A^ℓ u^ℓ ≤ b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraints {
    /// One `k × m_ℓ` matrix per level.
    pub a: Vec<Matrix>,
    pub b: Vec<f64>,
}

impl LinearConstraints {
    pub fn new(a: Vec<Matrix>, b: Vec<f64>) -> Self {
        LinearConstraints { a, b }
    }

    /// No rows at all.
    pub fn empty(dims: &Dims) -> Self {
        LinearConstraints {
            a: dims.sizes().iter().map(|&m| Matrix::zeros(0, m)).collect(),
            b: Vec::new(),
        }
    }

    /// Box `lo ≤ u^ℓ_i ≤ hi` on every variable of the listed levels.
    pub fn boxes(dims: &Dims, bounds: &[(usize, f64, f64)]) -> Self {
        let mut c = LinearConstraints::empty(dims);
        for &(level, lo, hi) in bounds {
            for i in 0..dims.size(level) {
                let mut upper = vec![0.0; dims.total()];
                upper[dims.offset(level) + i] = 1.0;
                c.push_row(dims, &upper, hi);
                let mut lower = vec![0.0; dims.total()];
                lower[dims.offset(level) + i] = -1.0;
                c.push_row(dims, &lower, -lo);
            }
        }
        c
    }

    /// Appends the row `coeffs · x ≤ rhs` given over the flat joint vector.
    pub fn push_row(&mut self, dims: &Dims, coeffs: &[f64], rhs: f64) {
        assert_eq!(coeffs.len(), dims.total());
        let offsets = dims.offsets();
        for (l, a) in self.a.iter_mut().enumerate() {
            let m = dims.sizes()[l];
            let mut rows = a.to_rows();
            rows.push(coeffs[offsets[l]..offsets[l] + m].to_vec());
            *a = Matrix::from_rows(&rows).expect("rows share the level width");
        }
        self.b.push(rhs);
    }

    pub fn rows(&self) -> usize {
        self.b.len()
    }

    pub fn check_shapes(&self, dims: &Dims) -> Result<(), ModelError> {
        if self.a.len() != dims.levels() {
            return Err(ModelError::Shape(format!(
                "constraints carry {} level blocks, expected {}",
                self.a.len(),
                dims.levels()
            )));
        }
        for (l, a) in self.a.iter().enumerate() {
            if a.rows() != self.b.len() || a.cols() != dims.size(l + 1) {
                return Err(ModelError::Shape(format!(
                    "constraint block for level {} is {}x{}, expected {}x{}",
                    l + 1,
                    a.rows(),
                    a.cols(),
                    self.b.len(),
                    dims.size(l + 1)
                )));
            }
        }
        Ok(())
    }

    /// The `k × N` matrix acting on the flat joint vector.
    pub fn joint_matrix(&self, dims: &Dims) -> Matrix {
        let mut m = Matrix::zeros(self.rows(), dims.total());
        let offsets = dims.offsets();
        for (l, a) in self.a.iter().enumerate() {
            m.set_submatrix(0, offsets[l], a);
        }
        m
    }

    /// Row values `Σ_ℓ A^ℓ u^ℓ` at a point.
    pub fn row_values(&self, p: &DecisionPoint) -> Vec<f64> {
        let mut out = vec![0.0; self.rows()];
        for (a, block) in self.a.iter().zip(&p.blocks) {
            let v = a.mul_vec(block);
            for (o, vi) in out.iter_mut().zip(v) {
                *o += vi;
            }
        }
        out
    }

    /// Largest violation `max_r (row_r(p) − b_r)`; negative means strictly feasible.
    pub fn max_violation(&self, p: &DecisionPoint) -> f64 {
        self.row_values(p)
            .iter()
            .zip(&self.b)
            .map(|(v, b)| v - b)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// An `n`-level game: objectives `J_1` (top leader) … `J_n` (bottom follower).
#[derive(Debug, Clone, PartialEq)]
pub struct GameProblem {
    pub dims: Dims,
    pub objectives: Vec<Objective>,
    pub constraints: Option<LinearConstraints>,
}

impl GameProblem {
    /// Builds a problem, rejecting it if [`validate`] reports an error.
    pub fn new(
        dims: Dims,
        objectives: Vec<Objective>,
        constraints: Option<LinearConstraints>,
    ) -> Result<Self, ModelError> {
        let problem = GameProblem {
            dims,
            objectives,
            constraints,
        };
        let diags = validate(&problem);
        if let Some(d) = diags.first_error() {
            return Err(ModelError::Invalid(d.message.clone()));
        }
        Ok(problem)
    }

    pub fn levels(&self) -> usize {
        self.dims.levels()
    }

    /// Objective of level `level` (1-based).
    pub fn objective(&self, level: usize) -> &Objective {
        &self.objectives[level - 1]
    }

    pub fn is_constrained(&self) -> bool {
        self.constraints.as_ref().is_some_and(|c| c.rows() > 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Info,
    Warning,
    Error,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Info => "info",
            Severity::Warning => "warning",
            Severity::Error => "error",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub severity: Severity,
    /// Level of the objective concerned, if any.
    pub objective: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub items: Vec<Diagnostic>,
}

impl Diagnostics {
    fn push(&mut self, severity: Severity, objective: Option<usize>, message: String) {
        self.items.push(Diagnostic {
            severity,
            objective,
            message,
        });
    }

    pub fn has_errors(&self) -> bool {
        self.items.iter().any(|d| d.severity == Severity::Error)
    }

    pub fn first_error(&self) -> Option<&Diagnostic> {
        self.items.iter().find(|d| d.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Diagnostic> {
        self.items.iter().filter(|d| d.severity == Severity::Warning)
    }
}

const SYMMETRY_TOL: f64 = 1e-12;

/// Shape, symmetry and definiteness report for a problem. Never mutates.
///
/// Only shape inconsistencies, unknown variables and non-finite data are
/// errors; everything `evaluate` can still compute is at most a warning.
pub fn validate(problem: &GameProblem) -> Diagnostics {
    let mut diags = Diagnostics::default();
    let dims = &problem.dims;
    let n = dims.levels();
    if problem.objectives.len() != n {
        diags.push(
            Severity::Error,
            None,
            format!(
                "expected {n} objectives (one per level), found {}",
                problem.objectives.len()
            ),
        );
    }
    for (i, obj) in problem.objectives.iter().enumerate() {
        let level = i + 1;
        match obj {
            Objective::Quadratic(q) => validate_quadratic(q, dims, level, &mut diags),
            Objective::Expr(e) => {
                if let Some((l, k)) = e.root.find_unknown_variable(dims) {
                    diags.push(
                        Severity::Error,
                        Some(level),
                        format!("unknown variable u{l}_{k} in objective {level}"),
                    );
                }
                let mut finite = true;
                e.root.visit(&mut |node| {
                    if let Expr::Constant(c) = node {
                        finite &= c.is_finite();
                    }
                    if let Expr::Power(_, 0) = node {
                        finite = false;
                    }
                });
                if !finite {
                    diags.push(
                        Severity::Error,
                        Some(level),
                        format!("objective {level} has a non-finite constant or zero exponent"),
                    );
                }
            }
        }
    }
    if let Some(c) = &problem.constraints {
        if let Err(e) = c.check_shapes(dims) {
            diags.push(Severity::Error, None, format!("{e}"));
        } else if !c.b.iter().all(|b| b.is_finite()) || !c.a.iter().all(Matrix::is_finite) {
            diags.push(Severity::Error, None, String::from("constraints contain non-finite data"));
        }
    }
    diags
}

fn validate_quadratic(q: &QuadraticObjective, dims: &Dims, level: usize, diags: &mut Diagnostics) {
    if &q.dims != dims {
        diags.push(
            Severity::Error,
            Some(level),
            format!("objective {level} is declared over different dims"),
        );
        return;
    }
    if let Err(e) = q.check_shapes() {
        diags.push(Severity::Error, Some(level), format!("objective {level}: {e}"));
        return;
    }
    if !q.a.iter().all(Matrix::is_finite)
        || !q.l.iter().flatten().all(|v| v.is_finite())
        || !q.constant.is_finite()
    {
        diags.push(
            Severity::Error,
            Some(level),
            format!("objective {level} contains non-finite data"),
        );
        return;
    }
    let n = dims.levels();
    for j in 1..=n {
        let b = q.block(j, j);
        let scale = 1.0 + b.max_abs();
        if b.asymmetry() > SYMMETRY_TOL * scale {
            diags.push(
                Severity::Warning,
                Some(level),
                format!("objective {level}: diagonal block A_{j}{j} is not symmetric"),
            );
        }
        if !min_eigenvalue_exceeds(b, 0.0) {
            diags.push(
                Severity::Warning,
                Some(level),
                format!("objective {level}: diagonal block A_{j}{j} is not positive definite"),
            );
        }
    }
    // Optional structural note: coupling blocks A_{k,level} with k < level.
    for k in 1..level {
        if !q.block(k, level).is_zero() {
            diags.push(
                Severity::Info,
                Some(level),
                format!("objective {level}: coupling block A_{k}{level} is nonzero"),
            );
        }
    }
}

/// Expression tree that evaluates identically to the quadratic.
pub fn quadratic_to_expr(q: &QuadraticObjective) -> ExprObjective {
    let n = q.dims.levels();
    let mut terms = Vec::new();
    let coeff_term = |c: f64, factors: Vec<Expr>| -> Expr {
        let mut fs = Vec::with_capacity(factors.len() + 1);
        if c != 1.0 {
            fs.push(Expr::Constant(c));
        }
        fs.extend(factors);
        if fs.len() == 1 {
            fs.pop().unwrap()
        } else {
            Expr::Product(fs)
        }
    };
    for j in 1..=n {
        for k in j..=n {
            let b = q.block(j, k);
            for p in 0..b.rows() {
                for r in 0..b.cols() {
                    let c = b[(p, r)];
                    if c == 0.0 {
                        continue;
                    }
                    let term = if j == k && p == r {
                        coeff_term(c, vec![Expr::var(j, p + 1).pow(2)])
                    } else {
                        coeff_term(c, vec![Expr::var(j, p + 1), Expr::var(k, r + 1)])
                    };
                    terms.push(term);
                }
            }
        }
    }
    for (k, lk) in q.l.iter().enumerate() {
        for (i, &c) in lk.iter().enumerate() {
            if c != 0.0 {
                terms.push(coeff_term(c, vec![Expr::var(k + 1, i + 1)]));
            }
        }
    }
    if q.constant != 0.0 {
        terms.push(Expr::Constant(q.constant));
    }
    let root = match terms.len() {
        0 => Expr::Constant(0.0),
        1 => terms.pop().unwrap(),
        _ => Expr::Sum(terms),
    };
    ExprObjective::new(root)
}
