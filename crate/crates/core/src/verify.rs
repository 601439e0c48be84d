//! Independent checks of announced strategies: a brute-force best-response
//! oracle (grid plus coordinate refinement), realization and hyperplane
//! residuals, and sampled sublevel inequalities.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::calculus::gradient;
use crate::error::ModelError;
use crate::geometry::{block_gradient_check, Condition, ExistenceVerdict, SublevelProbe};
use crate::linalg::norm;
use crate::model::{DecisionPoint, FlatObjective, GameProblem};
use crate::sampling::{multiscale_offset, rng, BallSampler};
use crate::synthesis::{graph_hyperplane_residual, reduce_problem, AffineStrategy};
use crate::tolerances::{gradient_tol, ALGEBRAIC, ARGMIN, GRID_POINTS, GRID_RADIUS};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Refinement {
    None,
    /// Coordinate moves of one step per axis, repeated until no move helps,
    /// then the steps are halved; `halvings` rounds in total.
    CoordinateDescent { halvings: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    /// Half-width around the centre when `bounds` is not given.
    pub radius: f64,
    /// Points per axis before capping; odd counts put the centre on the grid.
    pub points: usize,
    /// Explicit `(lower, upper)` per free variable.
    pub bounds: Option<Vec<(f64, f64)>>,
    pub refinement: Refinement,
    /// Cap on the total number of grid points; the per-axis count shrinks
    /// to respect it.
    pub max_grid_points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            radius: GRID_RADIUS,
            points: GRID_POINTS,
            bounds: None,
            refinement: Refinement::CoordinateDescent { halvings: 60 },
            max_grid_points: 250_000,
        }
    }
}

impl GridSpec {
    pub fn with_radius(mut self, radius: f64) -> Self {
        self.radius = radius;
        self
    }

    pub fn with_points(mut self, points: usize) -> Self {
        self.points = points;
        self
    }

    pub fn with_bounds(mut self, bounds: Vec<(f64, f64)>) -> Self {
        self.bounds = Some(bounds);
        self
    }

    pub fn check(&self) -> Result<(), ModelError> {
        if self.points < 2 {
            return Err(ModelError::Invalid(format!("grid needs at least 2 points per axis, got {}", self.points)));
        }
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(ModelError::Invalid(format!("grid radius must be positive and finite, got {}", self.radius)));
        }
        if let Some(b) = &self.bounds {
            for &(lo, hi) in b {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(ModelError::Invalid(format!("bad grid bounds [{lo}, {hi}]")));
                }
            }
        }
        Ok(())
    }

    /// Points per axis for `dim` free variables after applying the cap.
    pub fn effective_points(&self, dim: usize) -> usize {
        let mut p = self.points;
        while p > 2 && (p as u128).checked_pow(dim as u32).is_none_or(|t| t > self.max_grid_points as u128) {
            p -= 1;
        }
        if p > 2 && p.is_multiple_of(2) && self.points % 2 == 1 {
            p -= 1;
        }
        p
    }
}

/// Outcome of one best-response search.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// Best point over the free levels `ℓ, …, n`.
    pub argmin: DecisionPoint,
    pub value: f64,
    pub grid_best: DecisionPoint,
    /// Distance the refinement moved away from the best grid point.
    pub refinement_shift: f64,
    /// Set when the refinement moved more than two grid cells, which means
    /// the grid did not resolve the minimizer.
    pub low_confidence: bool,
}

/// Joint minimizer of `J_ℓ` over levels `ℓ, …, n` after substituting the
/// announced strategies of levels `1, …, ℓ−1`.
///
/// The grid is centred on the anchor of the first announced strategy (the
/// origin when none is announced). Ties go to the lexicographically
/// smallest grid index; the result is deterministic.
pub fn oracle_best_response(
    problem: &GameProblem,
    announced: &[AffineStrategy],
    level: usize,
    grid: &GridSpec,
) -> Result<OracleResult, ModelError> {
    let dims = &problem.dims;
    let n = dims.levels();
    if level == 0 || level > n {
        return Err(ModelError::Invalid(format!("level {level} is outside the game")));
    }
    if announced.len() < level - 1 {
        return Err(ModelError::Invalid(format!(
            "level {level} needs strategies for the {} levels above it",
            level - 1
        )));
    }
    for (k, s) in announced[..level - 1].iter().enumerate() {
        if s.level != k + 1 {
            return Err(ModelError::Invalid(format!(
                "strategy {} is for level {}, expected level {}",
                k + 1,
                s.level,
                k + 1
            )));
        }
        s.check_shapes()?;
        s.anchor.check(dims)?;
    }
    grid.check()?;

    let free_sizes: Vec<usize> = dims.sizes()[level - 1..].to_vec();
    let dim: usize = free_sizes.iter().sum();
    let center: Vec<f64> = match announced.first() {
        Some(s) => s.anchor.blocks[level - 1..].iter().flatten().copied().collect(),
        None => vec![0.0; dim],
    };
    let bounds: Vec<(f64, f64)> = match &grid.bounds {
        Some(b) => {
            if b.len() != dim {
                return Err(ModelError::Invalid(format!(
                    "grid bounds cover {} variables, the search has {dim}",
                    b.len()
                )));
            }
            b.clone()
        }
        None => center.iter().map(|c| (c - grid.radius, c + grid.radius)).collect(),
    };

    let f = problem.objective(level).flatten(dims)?;
    let lifted = Lifted::new(&f, &announced[..level - 1], dims.sizes(), level);

    let points = grid.effective_points(dim);
    let axis = |i: usize, t: usize| -> f64 {
        let (lo, hi) = bounds[i];
        if t == points - 1 {
            hi
        } else {
            lo + (hi - lo) * (t as f64) / ((points - 1) as f64)
        }
    };
    let decode = |mut idx: usize| -> Vec<f64> {
        let mut x = vec![0.0; dim];
        for i in (0..dim).rev() {
            x[i] = axis(i, idx % points);
            idx /= points;
        }
        x
    };
    let total = points.pow(dim as u32);
    let (best_idx, best_val) = grid_argmin(total, |i| lifted.value(&decode(i)));
    let grid_x = decode(best_idx);

    let (x, value) = match grid.refinement {
        Refinement::None => (grid_x.clone(), best_val),
        Refinement::CoordinateDescent { halvings } => {
            let steps: Vec<f64> = bounds.iter().map(|(lo, hi)| (hi - lo) / ((points - 1) as f64)).collect();
            coordinate_descent(&lifted, grid_x.clone(), best_val, steps, halvings)
        }
    };

    let shift = norm(&x.iter().zip(&grid_x).map(|(a, b)| a - b).collect::<Vec<f64>>());
    let cell = bounds.iter().map(|(lo, hi)| (hi - lo) / ((points - 1) as f64)).fold(0.0, f64::max);
    let free_dims_point = |flat: &[f64]| {
        let mut blocks = Vec::with_capacity(free_sizes.len());
        let mut at = 0;
        for &m in &free_sizes {
            blocks.push(flat[at..at + m].to_vec());
            at += m;
        }
        DecisionPoint::new(blocks)
    };
    Ok(OracleResult {
        argmin: free_dims_point(&x),
        value,
        grid_best: free_dims_point(&grid_x),
        refinement_shift: shift,
        low_confidence: shift > 2.0 * cell,
    })
}

/// `J_ℓ` as a function of the free levels, with upper levels filled in by
/// their strategies from the bottom up.
struct Lifted<'a> {
    f: &'a FlatObjective,
    strategies: &'a [AffineStrategy],
    offsets: Vec<usize>,
    total: usize,
    level: usize,
}

impl<'a> Lifted<'a> {
    fn new(f: &'a FlatObjective, strategies: &'a [AffineStrategy], sizes: &[usize], level: usize) -> Self {
        let mut offsets = Vec::with_capacity(sizes.len() + 1);
        let mut acc = 0;
        for &m in sizes {
            offsets.push(acc);
            acc += m;
        }
        offsets.push(acc);
        Lifted {
            f,
            strategies,
            offsets,
            total: acc,
            level,
        }
    }

    fn value(&self, free: &[f64]) -> f64 {
        let mut x = vec![0.0; self.total];
        let start = self.offsets[self.level - 1];
        x[start..].copy_from_slice(free);
        for k in (1..self.level).rev() {
            let (head, lower) = x.split_at_mut(self.offsets[k]);
            self.strategies[k - 1].evaluate_flat_into(lower, &mut head[self.offsets[k - 1]..]);
        }
        let v = self.f.value(&x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

fn better(a: (usize, f64), b: (usize, f64)) -> (usize, f64) {
    if b.1 < a.1 || (b.1 == a.1 && b.0 < a.0) {
        b
    } else {
        a
    }
}

#[cfg(feature = "parallel")]
fn grid_argmin(total: usize, eval: impl Fn(usize) -> f64 + Sync) -> (usize, f64) {
    use rayon::prelude::*;
    (0..total)
        .into_par_iter()
        .map(|i| (i, eval(i)))
        .reduce(|| (usize::MAX, f64::INFINITY), better)
}

#[cfg(not(feature = "parallel"))]
fn grid_argmin(total: usize, eval: impl Fn(usize) -> f64) -> (usize, f64) {
    (0..total).map(|i| (i, eval(i))).fold((usize::MAX, f64::INFINITY), better)
}

fn coordinate_descent(
    f: &Lifted<'_>,
    mut x: Vec<f64>,
    mut fx: f64,
    mut steps: Vec<f64>,
    halvings: usize,
) -> (Vec<f64>, f64) {
    for _ in 0..=halvings {
        let mut improved = true;
        let mut sweeps = 0;
        while improved && sweeps < 10_000 {
            improved = false;
            sweeps += 1;
            for i in 0..x.len() {
                for dir in [1.0, -1.0] {
                    let old = x[i];
                    x[i] = old + dir * steps[i];
                    let v = f.value(&x);
                    if v < fx {
                        fx = v;
                        improved = true;
                        break;
                    }
                    x[i] = old;
                }
            }
        }
        steps.iter_mut().for_each(|s| *s *= 0.5);
    }
    (x, fx)
}

/// Statistics of a sublevel-inequality sampling run.
#[derive(Debug, Clone, PartialEq)]
pub struct InequalityStats {
    pub samples: usize,
    /// Samples with `J < threshold − tol`.
    pub violations: usize,
    pub threshold: f64,
    pub min_value: f64,
    /// Graph point (over the probe's levels) attaining `min_value`.
    pub min_point: DecisionPoint,
}

/// Samples follower points around the probe anchor, lifts them through the
/// strategy and counts points where the probe objective drops below its
/// value at the anchor.
///
/// `strategy` must be expressed on the probe's levels: its deciding level
/// is the first block of the probe anchor.
pub fn sublevel_inequality_check(
    probe: &SublevelProbe,
    strategy: &AffineStrategy,
    sampler: BallSampler,
    tol: f64,
) -> Result<InequalityStats, ModelError> {
    if sampler.count == 0 {
        return Err(ModelError::Invalid(String::from("sample count must be at least 1")));
    }
    if strategy.level != 1 || strategy.anchor.levels() != probe.anchor.levels() {
        return Err(ModelError::Invalid(String::from(
            "strategy must decide the top level of the probe",
        )));
    }
    let dims = probe.dims()?;
    let f = probe.objective.flatten(&dims)?;
    let sizes: Vec<usize> = dims.sizes()[1..].to_vec();
    let lower_anchor: Vec<f64> = probe.anchor.blocks[1..].iter().flatten().copied().collect();
    let mut g = rng(sampler.seed);
    let mut violations = 0;
    let mut min_value = f64::INFINITY;
    let mut min_point = probe.anchor.clone();
    for _ in 0..sampler.count {
        let off = multiscale_offset(&mut g, lower_anchor.len(), sampler.radius);
        let mut lower = Vec::with_capacity(sizes.len());
        let mut at = 0;
        for &m in &sizes {
            lower.push((0..m).map(|i| lower_anchor[at + i] + off[at + i]).collect::<Vec<f64>>());
            at += m;
        }
        let point = DecisionPoint::new(strategy.graph_point(&lower));
        let v = f.value(&point.to_flat());
        if v < probe.threshold - tol {
            violations += 1;
        }
        if v < min_value {
            min_value = v;
            min_point = point;
        }
    }
    Ok(InequalityStats {
        samples: sampler.count,
        violations,
        threshold: probe.threshold,
        min_value,
        min_point,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    /// Tolerance on oracle distances to the desired point.
    pub tol: f64,
    pub grid: GridSpec,
    /// Samples per level for the sublevel inequality.
    pub inequality_samples: usize,
    /// Samples per level for the hyperplane residual.
    pub hyperplane_samples: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            tol: ARGMIN,
            grid: GridSpec::default(),
            inequality_samples: 1000,
            hyperplane_samples: 100,
            seed: 0,
        }
    }
}

/// Checks for the strategy of one level and the response it induces.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelReport {
    pub level: usize,
    /// Informational; a failed condition does not fail the verdict by itself.
    pub existence: ExistenceVerdict,
    pub realization_residual: f64,
    /// `None` when the next level's reduced objective has zero gradient at
    /// the desired point, so that no hyperplane exists.
    pub hyperplane_residual: Option<f64>,
    /// Oracle response of levels `ℓ+1, …, n`.
    pub oracle: OracleResult,
    pub oracle_distance: f64,
    /// `‖γ^ℓ(oracle argmin) − u^{ℓd}‖`.
    pub induced_residual: f64,
    pub inequality: InequalityStats,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Verified,
    Failed(Vec<String>),
}

impl Verdict {
    pub fn is_verified(&self) -> bool {
        matches!(self, Verdict::Verified)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub levels: Vec<LevelReport>,
    pub verdict: Verdict,
}

/// Runs every check on strategies for levels `1, …, n−1` against the
/// desired point `d`.
pub fn verify_full(
    problem: &GameProblem,
    d: &DecisionPoint,
    strategies: &[AffineStrategy],
    options: &VerifyOptions,
) -> Result<VerificationReport, ModelError> {
    let dims = &problem.dims;
    d.check(dims)?;
    let n = dims.levels();
    if strategies.len() != n - 1 {
        return Err(ModelError::Invalid(format!(
            "expected strategies for {} levels, got {}",
            n - 1,
            strategies.len()
        )));
    }
    for (k, s) in strategies.iter().enumerate() {
        if s.level != k + 1 {
            return Err(ModelError::Invalid(format!(
                "strategy {} is for level {}, expected level {}",
                k + 1,
                s.level,
                k + 1
            )));
        }
        s.check_shapes()?;
        s.anchor.check(dims)?;
    }

    let mut reasons = Vec::new();
    let mut levels = Vec::with_capacity(n - 1);
    let mut stage = problem.clone();
    for (k, strategy) in strategies.iter().enumerate() {
        let level = k + 1;
        let stage_d = d.drop_top(k);
        let local = strategy.restricted(k);
        let follower = stage.objective(2);

        let condition = if level == 1 {
            Condition::LeaderGradient
        } else {
            Condition::StageGradient { level }
        };
        let existence = block_gradient_check(follower, &stage_d, condition, None)?;

        let realization = strategy.realization_residual(d);
        if !(realization <= ALGEBRAIC * (1.0 + norm(d.level(level)))) {
            reasons.push(format!("level {level}: realization residual {realization:e}"));
        }

        let normal = gradient(follower, &stage_d)?;
        let hyperplane = if normal.norm() > gradient_tol(0.0) {
            let local_at_d = AffineStrategy {
                level: 1,
                anchor: stage_d.clone(),
                coeffs: local.coeffs.clone(),
            };
            let r = graph_hyperplane_residual(
                &local_at_d,
                &normal.blocks,
                options.hyperplane_samples,
                options.grid.radius,
                options.seed,
            );
            if !(r <= ALGEBRAIC) {
                reasons.push(format!("level {level}: strategy graph leaves the hyperplane (residual {r:e})"));
            }
            Some(r)
        } else {
            None
        };

        let oracle = oracle_best_response(problem, strategies, level + 1, &options.grid)?;
        let want: Vec<f64> = d.blocks[level..].iter().flatten().copied().collect();
        let got = oracle.argmin.to_flat();
        let distance = norm(&got.iter().zip(&want).map(|(a, b)| a - b).collect::<Vec<f64>>());
        if !(distance <= options.tol) {
            reasons.push(format!(
                "level {}: oracle response is {distance:e} away from the desired point",
                level + 1
            ));
        }
        let induced = strategy.evaluate(&oracle.argmin.blocks);
        let induced_residual =
            norm(&induced.iter().zip(d.level(level)).map(|(a, b)| a - b).collect::<Vec<f64>>());
        if !(induced_residual <= options.tol) {
            reasons.push(format!(
                "level {level}: strategy at the oracle response misses the desired decision by {induced_residual:e}"
            ));
        }

        let probe = SublevelProbe::new(follower.clone(), stage_d.clone())?;
        let inequality = sublevel_inequality_check(
            &probe,
            &AffineStrategy {
                level: 1,
                anchor: stage_d.clone(),
                coeffs: local.coeffs.clone(),
            },
            BallSampler::new(options.inequality_samples.max(1), options.grid.radius, options.seed),
            ALGEBRAIC * (1.0 + probe.threshold.abs()),
        )?;
        if inequality.violations > 0 {
            reasons.push(format!(
                "level {}: {} sampled graph points fall below the desired cost",
                level + 1,
                inequality.violations
            ));
        }

        levels.push(LevelReport {
            level,
            existence,
            realization_residual: realization,
            hyperplane_residual: hyperplane,
            oracle,
            oracle_distance: distance,
            induced_residual,
            inequality,
        });

        if level + 1 < n {
            stage = reduce_problem(&stage, &local).map_err(|e| ModelError::Invalid(format!("{e}")))?;
        }
    }

    let verdict = if reasons.is_empty() {
        Verdict::Verified
    } else {
        Verdict::Failed(reasons)
    };
    Ok(VerificationReport { levels, verdict })
}
