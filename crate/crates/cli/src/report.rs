//! Report structures shared by the JSON and text outputs.
//!
//! Every report kind has a fixed key set: optional values are written as
//! `null`, never omitted.

use std::fmt::Write as _;

use revstack_core::calculus::ConvexityVerdict;
use revstack_core::constrained::FeasibilityVerdict;
use revstack_core::equilibrium::EquilibriumResult;
use revstack_core::geometry::ExistenceVerdict;
use revstack_core::linalg::Matrix;
use revstack_core::synthesis::{AffineStrategy, StrategyFamily};
use revstack_core::verify::{LevelReport, Verdict, VerificationReport};
use serde::Serialize;

/// Plain affine form `u^ℓ = offset + Σ coeffs_j u^j`; the same shape the
/// strategy reader accepts.
#[derive(Debug, Clone, Serialize)]
pub struct StrategyOut {
    pub level: usize,
    pub offset: Vec<f64>,
    pub coeffs: Vec<Vec<Vec<f64>>>,
}

impl From<&AffineStrategy> for StrategyOut {
    fn from(s: &AffineStrategy) -> Self {
        StrategyOut {
            level: s.level,
            offset: s.offset(),
            coeffs: s.affine_coeffs().iter().map(Matrix::to_rows).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumOut {
    pub point: Vec<Vec<f64>>,
    pub objective_value: f64,
    pub method: &'static str,
    pub kkt_residual: f64,
    pub active_set: Vec<usize>,
}

impl From<&EquilibriumResult> for EquilibriumOut {
    fn from(e: &EquilibriumResult) -> Self {
        EquilibriumOut {
            point: e.point.blocks.clone(),
            objective_value: e.objective_value,
            method: e.method.as_str(),
            kkt_residual: e.kkt_residual,
            active_set: e.active_set.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExistenceOut {
    pub passed: bool,
    pub condition: String,
    pub block_norm: f64,
    pub tol: f64,
    pub convexity: Option<&'static str>,
}

impl From<&ExistenceVerdict> for ExistenceOut {
    fn from(v: &ExistenceVerdict) -> Self {
        ExistenceOut {
            passed: v.passed,
            condition: v.condition.to_string(),
            block_norm: v.block_norm,
            tol: v.tol,
            convexity: v.convexity.map(|c| match c {
                ConvexityVerdict::Certified => "certified",
                ConvexityVerdict::NotCertified => "not-certified",
            }),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InequalityOut {
    pub samples: usize,
    pub violations: usize,
    pub threshold: f64,
    pub min_value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelOut {
    pub level: usize,
    pub existence: ExistenceOut,
    pub realization_residual: f64,
    pub hyperplane_residual: Option<f64>,
    pub oracle_argmin: Vec<Vec<f64>>,
    pub oracle_value: f64,
    pub oracle_distance: f64,
    pub oracle_low_confidence: bool,
    pub induced_residual: f64,
    pub inequality: InequalityOut,
}

impl From<&LevelReport> for LevelOut {
    fn from(r: &LevelReport) -> Self {
        LevelOut {
            level: r.level,
            existence: (&r.existence).into(),
            realization_residual: r.realization_residual,
            hyperplane_residual: r.hyperplane_residual,
            oracle_argmin: r.oracle.argmin.blocks.clone(),
            oracle_value: r.oracle.value,
            oracle_distance: r.oracle_distance,
            oracle_low_confidence: r.oracle.low_confidence,
            induced_residual: r.induced_residual,
            inequality: InequalityOut {
                samples: r.inequality.samples,
                violations: r.inequality.violations,
                threshold: r.inequality.threshold,
                min_value: r.inequality.min_value,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationOut {
    pub verified: bool,
    pub failures: Vec<String>,
    pub levels: Vec<LevelOut>,
}

impl From<&VerificationReport> for VerificationOut {
    fn from(r: &VerificationReport) -> Self {
        VerificationOut {
            verified: r.verdict.is_verified(),
            failures: match &r.verdict {
                Verdict::Verified => Vec::new(),
                Verdict::Failed(f) => f.clone(),
            },
            levels: r.levels.iter().map(LevelOut::from).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FeasibilityOut {
    pub level: usize,
    pub params: Option<Vec<Vec<Vec<f64>>>>,
    pub feasible: bool,
    pub worst_row: Option<usize>,
    pub worst_margin: Option<f64>,
    pub row_margins: Vec<(usize, f64)>,
    pub witness: Option<Vec<Vec<f64>>>,
    pub method: &'static str,
}

impl FeasibilityOut {
    pub fn new(level: usize, params: Option<&[Matrix]>, v: &FeasibilityVerdict) -> Self {
        FeasibilityOut {
            level,
            params: params.map(|p| p.iter().map(Matrix::to_rows).collect()),
            feasible: v.feasible,
            worst_row: v.worst_row,
            worst_margin: v.worst_row.map(|_| v.worst_margin),
            row_margins: v.row_margins.clone(),
            witness: v.witness.as_ref().map(|w| w.blocks.clone()),
            method: v.method.as_str(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub command: &'static str,
    pub equilibrium: EquilibriumOut,
    pub active_constraints: Vec<usize>,
    pub strategies: Vec<StrategyOut>,
    pub verification: VerificationOut,
    /// `null` for unconstrained problems.
    pub feasibility: Option<Vec<FeasibilityOut>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MemberOut {
    pub params: Vec<Vec<Vec<f64>>>,
    pub strategies: Vec<StrategyOut>,
    pub verification: VerificationOut,
}

#[derive(Debug, Clone, Serialize)]
pub struct FamilyReport {
    pub command: &'static str,
    pub anchor: Vec<Vec<f64>>,
    pub leader_gradient: Vec<f64>,
    pub particular: Vec<Vec<Vec<f64>>>,
    pub null_basis: Vec<Vec<f64>>,
    pub param_shapes: Vec<(usize, usize)>,
    pub dimension: usize,
    pub single_point: bool,
    pub members: Vec<MemberOut>,
}

impl FamilyReport {
    pub fn new(f: &StrategyFamily, members: Vec<MemberOut>) -> Self {
        FamilyReport {
            command: "family",
            anchor: f.anchor.blocks.clone(),
            leader_gradient: f.leader_gradient.clone(),
            particular: f.particular.iter().map(Matrix::to_rows).collect(),
            null_basis: f.null_basis.to_rows(),
            param_shapes: f.param_shapes(),
            dimension: f.dimension(),
            single_point: f.is_single_point(),
            members,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub command: &'static str,
    pub strategies: Vec<StrategyOut>,
    pub verification: VerificationOut,
}

#[derive(Debug, Clone, Serialize)]
pub struct FeasibleReport {
    pub command: &'static str,
    pub all_feasible: bool,
    pub checks: Vec<FeasibilityOut>,
}

pub fn to_json<T: Serialize>(report: &T) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("reports serialize");
    s.push('\n');
    s
}

/// Short decimal form: integers without a fraction, otherwise at most nine
/// decimals with trailing zeros dropped.
pub fn num(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    let mut s = format!("{v:.9}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = String::from("0");
    }
    s
}

/// Scientific form for residuals and tolerances.
pub fn sci(v: f64) -> String {
    format!("{v:.3e}")
}

fn var_name(level: usize, index: usize, size: usize) -> String {
    if size == 1 {
        format!("u{level}")
    } else {
        format!("u{level}_{}", index + 1)
    }
}

fn vector(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|&x| num(x)).collect();
    format!("[{}]", parts.join(", "))
}

fn matrix(rows: &[Vec<f64>]) -> String {
    let parts: Vec<String> = rows.iter().map(|r| vector(r)).collect();
    format!("[{}]", parts.join(", "))
}

fn point(blocks: &[Vec<f64>], first_level: usize) -> String {
    let parts: Vec<String> = blocks
        .iter()
        .enumerate()
        .map(|(i, b)| format!("u{} = {}", first_level + i, vector(b)))
        .collect();
    parts.join(", ")
}

/// Human lines such as `u1 = 12 - 1·u2 - 3·u3`, one per component.
pub fn strategy_lines(s: &StrategyOut) -> Vec<String> {
    let m = s.offset.len();
    (0..m)
        .map(|i| {
            let mut line = format!("{} = {}", var_name(s.level, i, m), num(s.offset[i]));
            for (k, c) in s.coeffs.iter().enumerate() {
                let level = s.level + 1 + k;
                let width = c[i].len();
                for (j, &v) in c[i].iter().enumerate() {
                    if num(v) == "0" {
                        continue;
                    }
                    let sign = if v < 0.0 { '-' } else { '+' };
                    let _ = write!(line, " {sign} {}·{}", num(v.abs()), var_name(level, j, width));
                }
            }
            line
        })
        .collect()
}

fn write_strategies(out: &mut String, strategies: &[StrategyOut]) {
    out.push_str("strategies:\n");
    for s in strategies {
        for line in strategy_lines(s) {
            let _ = writeln!(out, "  {line}");
        }
        let _ = writeln!(out, "    offset {}", vector(&s.offset));
        for (k, c) in s.coeffs.iter().enumerate() {
            let _ = writeln!(out, "    C{} {}", s.level + 1 + k, matrix(c));
        }
    }
}

fn write_verification(out: &mut String, v: &VerificationOut) {
    let _ = writeln!(out, "verification: {}", if v.verified { "verified" } else { "FAILED" });
    for l in &v.levels {
        let e = &l.existence;
        let _ = writeln!(out, "  level {}:", l.level);
        let _ = writeln!(
            out,
            "    existence {} (block norm {}, tol {}, convexity {})",
            if e.passed { "pass" } else { "fail" },
            sci(e.block_norm),
            sci(e.tol),
            e.convexity.unwrap_or("n/a")
        );
        let _ = writeln!(out, "    realization residual {}", sci(l.realization_residual));
        let _ = writeln!(
            out,
            "    hyperplane residual {}",
            l.hyperplane_residual.map_or_else(|| String::from("n/a (zero reduced gradient)"), sci)
        );
        let _ = writeln!(
            out,
            "    oracle argmin {} (distance {}{})",
            point(&l.oracle_argmin, l.level + 1),
            sci(l.oracle_distance),
            if l.oracle_low_confidence { ", low confidence" } else { "" }
        );
        let _ = writeln!(out, "    induced residual {}", sci(l.induced_residual));
        let _ = writeln!(
            out,
            "    sublevel inequality {}/{} violations",
            l.inequality.violations, l.inequality.samples
        );
    }
    for f in &v.failures {
        let _ = writeln!(out, "  failure: {f}");
    }
}

fn write_feasibility(out: &mut String, f: &FeasibilityOut) {
    let what = match &f.params {
        Some(p) if p.iter().all(|m| m.is_empty()) => format!("level {} family member", f.level),
        Some(p) => format!("level {} member T = {}", f.level, p.iter().map(|m| matrix(m)).collect::<Vec<_>>().join("; ")),
        None => format!("level {}", f.level),
    };
    match f.worst_row {
        None => {
            let _ = writeln!(out, "  {what}: feasible (no constraint row involves u{})", f.level);
        }
        Some(row) => {
            let _ = writeln!(
                out,
                "  {what}: {} (worst row {row}, margin {}, {})",
                if f.feasible { "feasible" } else { "INFEASIBLE" },
                num(f.worst_margin.unwrap_or(0.0)),
                f.method
            );
            if !f.feasible {
                if let Some(w) = &f.witness {
                    let _ = writeln!(out, "    row {row} violated at {}", point(w, 1));
                }
            }
        }
    }
}

pub fn solve_text(r: &SolveReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "desired equilibrium ({}): {}",
        r.equilibrium.method,
        point(&r.equilibrium.point, 1)
    );
    let _ = writeln!(out, "  leader objective {}", num(r.equilibrium.objective_value));
    if !r.active_constraints.is_empty() {
        let _ = writeln!(out, "  active constraint rows {:?}", r.active_constraints);
    }
    write_strategies(&mut out, &r.strategies);
    write_verification(&mut out, &r.verification);
    if let Some(f) = &r.feasibility {
        out.push_str("feasibility:\n");
        for x in f {
            write_feasibility(&mut out, x);
        }
    }
    out
}

pub fn family_text(r: &FamilyReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "anchor: {}", point(&r.anchor, 1));
    let _ = writeln!(out, "leader gradient of J2: {}", vector(&r.leader_gradient));
    out.push_str("particular solution:\n");
    for (k, q) in r.particular.iter().enumerate() {
        let _ = writeln!(out, "  Q{} {}", k + 2, matrix(q));
    }
    if r.single_point {
        out.push_str("family is a single point (u1 is scalar)\n");
    } else {
        let _ = writeln!(out, "null basis: {}", matrix(&r.null_basis));
        let shapes: Vec<String> = r
            .param_shapes
            .iter()
            .enumerate()
            .map(|(k, (a, b))| format!("T{} {a}x{b}", k + 2))
            .collect();
        let _ = writeln!(out, "parameters: {} (dimension {})", shapes.join(", "), r.dimension);
    }
    for (i, m) in r.members.iter().enumerate() {
        let t: Vec<String> = m.params.iter().map(|p| matrix(p)).collect();
        let _ = writeln!(out, "member {} with T = {}:", i + 1, t.join("; "));
        write_strategies(&mut out, &m.strategies);
        write_verification(&mut out, &m.verification);
    }
    out
}

pub fn verify_text(r: &VerifyReport) -> String {
    let mut out = String::new();
    write_strategies(&mut out, &r.strategies);
    write_verification(&mut out, &r.verification);
    out
}

pub fn feasible_text(r: &FeasibleReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "feasibility: {}", if r.all_feasible { "all feasible" } else { "INFEASIBLE" });
    for f in &r.checks {
        write_feasibility(&mut out, f);
    }
    out
}
