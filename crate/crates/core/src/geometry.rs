//! Supporting hyperplanes of follower sublevel sets at the desired point,
//! the gradient-based existence checks, and sampled probes for the case of
//! nonconvex sublevel sets.
//!
//! Orientation convention: a sublevel set `{x : J(x) ≤ J(p)}` lies on the
//! side `⟨normal, x − p⟩ ≤ 0` of its supporting hyperplane, with
//! `normal = ∇J(p)`.

use alloc::format;
use alloc::string::String;
use core::fmt;

use crate::calculus::{gradient, strict_convexity_probe, BlockGradient, ConvexityVerdict};
use crate::error::{GeometryError, ModelError};
use crate::linalg::{dot, norm, sub_vec};
use crate::model::{DecisionPoint, Dims, GameProblem, Objective};
use crate::sampling::{multiscale_offset, rng, BallSampler};
use crate::tolerances::gradient_tol;

/// Hyperplane `⟨normal, x − point⟩ = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportingHyperplane {
    pub point: DecisionPoint,
    pub normal: BlockGradient,
}

impl SupportingHyperplane {
    /// Signed value `⟨normal, x − point⟩` for a flat joint vector.
    pub fn residual_flat(&self, x: &[f64]) -> f64 {
        let n = self.normal.to_flat();
        let p = self.point.to_flat();
        dot(&n, &sub_vec(x, &p))
    }

    pub fn residual(&self, x: &DecisionPoint) -> f64 {
        self.residual_flat(&x.to_flat())
    }

    /// Natural magnitude of the residual at `x`: `‖normal‖·‖x − point‖`.
    pub fn scale_flat(&self, x: &[f64]) -> f64 {
        norm(&self.normal.to_flat()) * norm(&sub_vec(x, &self.point.to_flat()))
    }
}

/// Hyperplane through `p` with normal `∇J(p)`.
///
/// `tol` defaults to the scale-aware gradient threshold.
pub fn supporting_hyperplane_at(
    obj: &Objective,
    p: &DecisionPoint,
    tol: Option<f64>,
) -> Result<SupportingHyperplane, GeometryError> {
    let g = gradient(obj, p)?;
    let gn = g.norm();
    let tol = tol.unwrap_or_else(|| gradient_tol(gn));
    if !(gn > tol) {
        return Err(GeometryError::ZeroGradient { norm: gn, tol });
    }
    Ok(SupportingHyperplane {
        point: p.clone(),
        normal: g,
    })
}

/// Which gradient condition a verdict is about.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    /// `∇_{u¹}J₂(d) ≠ 0`: the top leader can steer the level below.
    LeaderGradient,
    /// `∇_{u²}J̄₃(d) ≠ 0` for the level-3 objective after substituting the
    /// top strategy.
    MiddleReducedGradient,
    /// Cascade stage at the given level: the reduced objective of the
    /// next level must depend on this level's decision at `d`.
    StageGradient { level: usize },
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::LeaderGradient => {
                f.write_str("leader existence condition: gradient of J2 with respect to u1 at the desired point must be nonzero")
            }
            Condition::MiddleReducedGradient => f.write_str(
                "middle existence condition: gradient of the reduced J3 with respect to u2 at the desired point must be nonzero",
            ),
            Condition::StageGradient { level } => write!(
                f,
                "level {level} existence condition: gradient of the reduced J{} with respect to u{level} at the desired point must be nonzero",
                level + 1
            ),
        }
    }
}

/// Outcome of a gradient-nonzero existence check.
#[derive(Debug, Clone, PartialEq)]
pub struct ExistenceVerdict {
    pub passed: bool,
    pub condition: Condition,
    /// Norm of the gradient block that must be nonzero.
    pub block_norm: f64,
    pub tol: f64,
    /// Advisory only: sufficient test for local strict convexity.
    pub convexity: Option<ConvexityVerdict>,
    pub reason: String,
}

impl fmt::Display for ExistenceVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} ({}; block norm {:e}, tol {:e})",
            if self.passed { "pass" } else { "fail" },
            self.condition,
            self.block_norm,
            self.tol
        )?;
        if !self.passed {
            write!(f, ": {}", self.reason)?;
        }
        Ok(())
    }
}

/// Checks that `∇_{u^1} J(point) ≠ 0` for `follower` viewed as an objective
/// over `point`'s blocks (block 1 is the deciding level).
pub fn block_gradient_check(
    follower: &Objective,
    point: &DecisionPoint,
    condition: Condition,
    tol: Option<f64>,
) -> Result<ExistenceVerdict, ModelError> {
    let g = gradient(follower, point)?;
    let block_norm = norm(&g.blocks[0]);
    let tol = tol.unwrap_or_else(|| gradient_tol(g.norm()));
    let convexity = strict_convexity_probe(follower, point, crate::tolerances::GRADIENT_REL).ok();
    let passed = block_norm > tol;
    let reason = if passed {
        String::from("gradient block is nonzero")
    } else {
        format!(
            "the follower objective is not sensitive to the deciding level's variable at the desired point (norm {block_norm:e})"
        )
    };
    Ok(ExistenceVerdict {
        passed,
        condition,
        block_norm,
        tol,
        convexity,
        reason,
    })
}

/// Existence of an optimal affine leader strategy: `∇_{u¹}J₂(d) ≠ 0`.
pub fn leader_existence_check(
    problem: &GameProblem,
    d: &DecisionPoint,
    tol: Option<f64>,
) -> Result<ExistenceVerdict, ModelError> {
    d.check(&problem.dims)?;
    block_gradient_check(problem.objective(2), d, Condition::LeaderGradient, tol)
}

/// Existence of the middle level's strategy once the top strategy is fixed:
/// `∇_{u²}J̄₃(d₂₃) ≠ 0` where `reduced_j3` is over `(u², …, uⁿ)`.
pub fn middle_existence_check(
    reduced_j3: &Objective,
    d23: &DecisionPoint,
    tol: Option<f64>,
) -> Result<ExistenceVerdict, ModelError> {
    block_gradient_check(reduced_j3, d23, Condition::MiddleReducedGradient, tol)
}

/// Sublevel set `{x : J(x) ≤ J(anchor)}` as a predicate.
#[derive(Debug, Clone, PartialEq)]
pub struct SublevelProbe {
    pub objective: Objective,
    pub anchor: DecisionPoint,
    pub threshold: f64,
}

impl SublevelProbe {
    pub fn new(objective: Objective, anchor: DecisionPoint) -> Result<Self, ModelError> {
        let threshold = objective.evaluate(&anchor)?;
        Ok(SublevelProbe {
            objective,
            anchor,
            threshold,
        })
    }

    pub fn dims(&self) -> Result<Dims, ModelError> {
        Dims::new(self.anchor.blocks.iter().map(|b| b.len()).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProbeVerdict {
    /// No sampled sublevel point reached the hyperplane; evidence, not proof.
    Consistent { samples_in_set: usize },
    /// A sublevel point on the wrong side (or on) the hyperplane.
    Refuted {
        witness: DecisionPoint,
        inner_product: f64,
    },
}

impl ProbeVerdict {
    pub fn is_consistent(&self) -> bool {
        matches!(self, ProbeVerdict::Consistent { .. })
    }
}

/// Monte-Carlo test that the anchor is an exposed point of the sublevel
/// set with respect to `plane`: every sampled `x ≠ anchor` with
/// `J(x) ≤ threshold` must satisfy `⟨normal, x − anchor⟩ < 0`.
pub fn exposed_point_probe(
    probe: &SublevelProbe,
    plane: &SupportingHyperplane,
    sampler: BallSampler,
) -> Result<ProbeVerdict, ModelError> {
    let dims = probe.dims()?;
    let f = probe.objective.flatten(&dims)?;
    let anchor = probe.anchor.to_flat();
    let normal = plane.normal.to_flat();
    let mut g = rng(sampler.seed);
    let mut in_set = 0;
    for _ in 0..sampler.count {
        let offset = multiscale_offset(&mut g, anchor.len(), sampler.radius);
        if offset.iter().all(|&o| o == 0.0) {
            continue;
        }
        let x: alloc::vec::Vec<f64> = anchor.iter().zip(&offset).map(|(a, o)| a + o).collect();
        if f.value(&x) <= probe.threshold {
            in_set += 1;
            let ip = dot(&normal, &offset);
            if !(ip < 0.0) {
                return Ok(ProbeVerdict::Refuted {
                    witness: DecisionPoint::from_flat(&dims, &x),
                    inner_product: ip,
                });
            }
        }
    }
    Ok(ProbeVerdict::Consistent {
        samples_in_set: in_set,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Expr, ExprObjective};

    fn scalar_point(v: &[f64]) -> DecisionPoint {
        DecisionPoint::new(v.iter().map(|&x| alloc::vec![x]).collect())
    }

    fn example1_j2() -> Objective {
        Objective::Expr(ExprObjective::new(
            (Expr::var(1, 1) - Expr::Constant(1.0)).pow(2)
                + Expr::var(2, 1).pow(2)
                + Expr::var(3, 1).pow(2),
        ))
    }

    #[test]
    fn hyperplane_for_example_one() {
        let d = scalar_point(&[2.0, 1.0, 3.0]);
        let h = supporting_hyperplane_at(&example1_j2(), &d, None).unwrap();
        assert_eq!(h.normal.to_flat(), alloc::vec![2.0, 2.0, 6.0]);
        assert_eq!(h.residual(&d), 0.0);
        // 2(u1−2)+2(u2−1)+6(u3−3) at (3, 1, 3) is 2
        assert_eq!(h.residual(&scalar_point(&[3.0, 1.0, 3.0])), 2.0);
    }

    #[test]
    fn zero_gradient_has_no_hyperplane() {
        let obj = Objective::from(Expr::var(1, 1).pow(2) + Expr::var(2, 1).pow(2));
        let err = supporting_hyperplane_at(&obj, &scalar_point(&[0.0, 0.0]), None).unwrap_err();
        assert!(matches!(err, GeometryError::ZeroGradient { .. }));
    }

    #[test]
    fn leader_check_fails_when_follower_ignores_leader() {
        let dims = Dims::new(alloc::vec![1, 1]).unwrap();
        let j1 = Objective::from(Expr::var(1, 1).pow(2) + Expr::var(2, 1).pow(2));
        let j2 = Objective::from((Expr::var(2, 1) - Expr::Constant(1.0)).pow(2));
        let problem = GameProblem::new(dims, alloc::vec![j1, j2], None).unwrap();
        let v = leader_existence_check(&problem, &scalar_point(&[0.0, 0.0]), None).unwrap();
        assert!(!v.passed);
        assert!(v.reason.contains("not sensitive"));
    }

    #[test]
    fn negative_norm_probe_is_refuted() {
        let obj = Objective::from(
            -(Expr::var(1, 1).pow(2) + Expr::var(2, 1).pow(2) + Expr::var(3, 1).pow(2)),
        );
        let anchor = scalar_point(&[1.0, 1.0, 1.0]);
        let plane = supporting_hyperplane_at(&obj, &anchor, None).unwrap();
        let probe = SublevelProbe::new(obj, anchor).unwrap();
        let v = exposed_point_probe(&probe, &plane, BallSampler::new(10_000, 5.0, 1)).unwrap();
        assert!(!v.is_consistent());
    }
}
