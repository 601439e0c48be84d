//! Command-line driver for `revstack-core`: problem documents, the
//! `solve`, `family`, `verify` and `feasible` commands, and their reports.
//!
//! Exit codes: 0 success, 2 precondition or existence failure, 3
//! verification or feasibility failure, 4 parse error (including unknown
//! flags and unreadable files).

pub mod document;
pub mod grammar;
pub mod report;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use revstack_core::constrained::{active_rows, feasibility_check, filter_family};
use revstack_core::equilibrium::desired_equilibrium;
use revstack_core::linalg::Matrix;
use revstack_core::model::{validate, DecisionPoint, GameProblem, LinearConstraints};
use revstack_core::sampling::rng;
use revstack_core::synthesis::{synthesize_cascade, synthesize_cascade_with, synthesize_family_leader, AffineStrategy};
use revstack_core::tolerances::CONSTRAINT;
use revstack_core::verify::{verify_full, GridSpec, VerifyOptions};
use revstack_core::{FeasibilityError, SynthesisError};

use crate::document::{parse_problem, parse_strategies};
use crate::report::*;

pub const EXIT_OK: i32 = 0;
pub const EXIT_PRECONDITION: i32 = 2;
pub const EXIT_FAILED: i32 = 3;
pub const EXIT_PARSE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "revstack", version, about = "Affine reverse Stackelberg strategies for multilevel games")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Output {
    Text,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Tolerance on oracle distances to the desired point.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    /// Half-width of the oracle grid around the anchor.
    #[arg(long, default_value_t = 10.0)]
    pub grid_radius: f64,
    /// Oracle grid points per axis.
    #[arg(long, default_value_t = 41)]
    pub grid_points: usize,
    /// Seed for every randomized step.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Output::Text)]
    pub output: Output,
    /// Worker threads for oracle grids and family sweeps.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the desired equilibrium, synthesize strategies for every
    /// level above the bottom, and verify them.
    Solve {
        file: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Describe the family of optimal leader strategies; optionally verify
    /// given or sampled members.
    Family {
        file: PathBuf,
        /// Verify this many seeded members with parameters uniform in [-1, 1].
        #[arg(long, default_value_t = 0)]
        samples: usize,
        /// Parameters as JSON matrices separated by ';', e.g. "[[0.5]];[[-1]]".
        #[arg(long, allow_hyphen_values = true)]
        params: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Verify strategies read from a file; no synthesis.
    Verify {
        file: PathBuf,
        strategy_file: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Check that strategies keep the constrained levels feasible.
    Feasible {
        file: PathBuf,
        #[arg(required_unless_present = "family", conflicts_with = "family")]
        strategy_file: Option<PathBuf>,
        /// Check the zero-parameter family member and `--samples` seeded ones.
        #[arg(long)]
        family: bool,
        #[arg(long, default_value_t = 0, requires = "family")]
        samples: usize,
        /// Add the box LO ≤ u ≤ HI on every level below the strategy's.
        #[arg(long, value_name = "LO,HI", value_parser = parse_bounds, allow_hyphen_values = true)]
        follower_bounds: Option<(f64, f64)>,
        #[command(flatten)]
        common: Common,
    },
}

fn parse_bounds(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected LO,HI")?;
    let lo: f64 = a.trim().parse().map_err(|e| format!("bad lower bound: {e}"))?;
    let hi: f64 = b.trim().parse().map_err(|e| format!("bad upper bound: {e}"))?;
    if !lo.is_finite() || !hi.is_finite() || lo > hi {
        return Err(format!("need finite bounds with LO <= HI, got {lo},{hi}"));
    }
    Ok((lo, hi))
}

/// Result of a run: exit code and the text for each stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Outcome {
    fn fail(code: i32, message: impl Into<String>) -> Self {
        let mut stderr = message.into();
        if !stderr.ends_with('\n') {
            stderr.push('\n');
        }
        Outcome {
            code,
            stdout: String::new(),
            stderr,
        }
    }
}

/// Runs the CLI on `args` (program name first) without touching the process
/// streams.
pub fn run<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                Outcome::fail(EXIT_PARSE, text)
            } else {
                Outcome {
                    code: EXIT_OK,
                    stdout: text,
                    stderr: String::new(),
                }
            };
        }
    };
    let threads = match &cli.command {
        Command::Solve { common, .. }
        | Command::Family { common, .. }
        | Command::Verify { common, .. }
        | Command::Feasible { common, .. } => common.threads.max(1),
    };
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(|| dispatch(cli.command)),
        Err(e) => Outcome::fail(EXIT_PRECONDITION, format!("error: cannot start {threads} threads: {e}")),
    }
}

fn dispatch(command: Command) -> Outcome {
    match command {
        Command::Solve { file, common } => cmd_solve(&file, &common),
        Command::Family {
            file,
            samples,
            params,
            common,
        } => cmd_family(&file, samples, params.as_deref(), &common),
        Command::Verify {
            file,
            strategy_file,
            common,
        } => cmd_verify(&file, &strategy_file, &common),
        Command::Feasible {
            file,
            strategy_file,
            family,
            samples,
            follower_bounds,
            common,
        } => cmd_feasible(&file, strategy_file.as_deref(), family, samples, follower_bounds, &common),
    }
}

fn read(path: &Path) -> Result<String, Outcome> {
    std::fs::read_to_string(path).map_err(|e| Outcome::fail(EXIT_PARSE, format!("error: cannot read {}: {e}", path.display())))
}

/// Reads and parses a problem; validation warnings go to `warnings`.
fn load_problem(path: &Path, warnings: &mut String) -> Result<GameProblem, Outcome> {
    let text = read(path)?;
    let p = parse_problem(&text).map_err(|e| Outcome::fail(EXIT_PARSE, format!("error: {}: {e}", path.display())))?;
    for d in validate(&p).warnings() {
        match d.objective {
            Some(l) => {
                let _ = writeln!(warnings, "warning: objective {l}: {}", d.message);
            }
            None => {
                let _ = writeln!(warnings, "warning: {}", d.message);
            }
        }
    }
    Ok(p)
}

fn desired(p: &GameProblem, seed: u64) -> Result<revstack_core::equilibrium::EquilibriumResult, Outcome> {
    desired_equilibrium(p, seed).map_err(|e| Outcome::fail(EXIT_PRECONDITION, format!("error: desired equilibrium: {e}")))
}

fn synthesis_failure(e: SynthesisError) -> Outcome {
    match e {
        SynthesisError::Existence { level, verdict } => Outcome::fail(
            EXIT_PRECONDITION,
            format!("error: no affine strategy for level {level}: {}\n  {}", verdict.condition, verdict.reason),
        ),
        other => Outcome::fail(EXIT_PRECONDITION, format!("error: synthesis: {other}")),
    }
}

fn verify_options(c: &Common) -> VerifyOptions {
    VerifyOptions {
        tol: c.tol,
        grid: GridSpec::default().with_radius(c.grid_radius).with_points(c.grid_points),
        seed: c.seed,
        ..VerifyOptions::default()
    }
}

fn emit<T: serde::Serialize>(c: &Common, report: &T, text: impl Fn(&T) -> String, code: i32, stderr: String) -> Outcome {
    Outcome {
        code,
        stdout: match c.output {
            Output::Json => to_json(report),
            Output::Text => text(report),
        },
        stderr,
    }
}

fn verify(p: &GameProblem, d: &DecisionPoint, s: &[AffineStrategy], c: &Common) -> Result<VerificationOut, Outcome> {
    verify_options(c)
        .grid
        .check()
        .map_err(|e| Outcome::fail(EXIT_PARSE, format!("error: oracle grid: {e}")))?;
    verify_full(p, d, s, &verify_options(c))
        .map(|r| VerificationOut::from(&r))
        .map_err(|e| Outcome::fail(EXIT_PRECONDITION, format!("error: verification: {e}")))
}

fn with_bounds(constraints: &LinearConstraints, p: &GameProblem, level: usize, bounds: Option<(f64, f64)>) -> LinearConstraints {
    let Some((lo, hi)) = bounds else {
        return constraints.clone();
    };
    let dims = &p.dims;
    let mut out = constraints.clone();
    let extra = LinearConstraints::boxes(dims, &(level + 1..=dims.levels()).map(|l| (l, lo, hi)).collect::<Vec<_>>());
    let joint = extra.joint_matrix(dims);
    for r in 0..extra.rows() {
        out.push_row(dims, joint.row_slice(r), extra.b[r]);
    }
    out
}

fn feasibility_failure(e: FeasibilityError) -> Outcome {
    match e {
        FeasibilityError::Unbounded { row } => Outcome::fail(
            EXIT_PRECONDITION,
            format!("error: the follower region is unbounded along constraint row {row}; add bounds to the problem or pass --follower-bounds LO,HI"),
        ),
        other => Outcome::fail(EXIT_PRECONDITION, format!("error: feasibility: {other}")),
    }
}

fn cmd_solve(path: &Path, c: &Common) -> Outcome {
    let mut stderr = String::new();
    let result = (|| {
        let p = load_problem(path, &mut stderr)?;
        let eq = desired(&p, c.seed)?;
        let d = &eq.point;
        let active = p.constraints.as_ref().map_or_else(Vec::new, |k| active_rows(k, d, CONSTRAINT));
        if !active.is_empty() {
            let _ = writeln!(
                stderr,
                "warning: constraint rows {active:?} are active at the desired point; the construction assumes an interior point"
            );
        }
        let strategies = synthesize_cascade(&p, d).map_err(synthesis_failure)?;
        let verification = verify(&p, d, &strategies, c)?;
        let feasibility = match &p.constraints {
            Some(k) if p.is_constrained() => {
                let mut out = Vec::new();
                for s in &strategies {
                    match feasibility_check(s, k, &p.dims, CONSTRAINT) {
                        Ok(v) => out.push(FeasibilityOut::new(s.level, None, &v)),
                        Err(e) => {
                            let _ = writeln!(stderr, "warning: feasibility of level {}: {e}", s.level);
                        }
                    }
                }
                Some(out)
            }
            _ => None,
        };
        let code = if verification.verified { EXIT_OK } else { EXIT_FAILED };
        let report = SolveReport {
            command: "solve",
            equilibrium: (&eq).into(),
            active_constraints: active,
            strategies: strategies.iter().map(StrategyOut::from).collect(),
            verification,
            feasibility,
        };
        Ok(emit(c, &report, solve_text, code, String::new()))
    })();
    finish(result, stderr)
}

/// Prepends collected warnings to the outcome's error stream.
fn finish(result: Result<Outcome, Outcome>, warnings: String) -> Outcome {
    let mut o = result.unwrap_or_else(|e| e);
    o.stderr = warnings + &o.stderr;
    o
}

/// Parses `"T1;T2;…"`, each a JSON matrix or a bare number for a 1×1.
pub fn parse_params(s: &str, shapes: &[(usize, usize)]) -> Result<Vec<Matrix>, String> {
    let parts: Vec<&str> = s.split(';').collect();
    if parts.len() != shapes.len() {
        return Err(format!("expected {} parameter matrices, found {}", shapes.len(), parts.len()));
    }
    parts
        .iter()
        .zip(shapes)
        .enumerate()
        .map(|(k, (text, &(r, cols)))| {
            let value: serde_json::Value = serde_json::from_str(text.trim()).map_err(|e| format!("T{}: {e}", k + 2))?;
            let rows: Vec<Vec<f64>> = match value {
                serde_json::Value::Number(n) => vec![vec![n.as_f64().unwrap_or(f64::NAN)]],
                v => serde_json::from_value(v).map_err(|e| format!("T{}: {e}", k + 2))?,
            };
            if rows.len() != r || rows.iter().any(|x| x.len() != cols) {
                return Err(format!("T{} must be {r}x{cols}", k + 2));
            }
            Ok(Matrix::from_row_major(r, cols, rows.into_iter().flatten().collect()))
        })
        .collect()
}

fn cmd_family(path: &Path, samples: usize, params: Option<&str>, c: &Common) -> Outcome {
    let mut stderr = String::new();
    let result = (|| {
        let p = load_problem(path, &mut stderr)?;
        let eq = desired(&p, c.seed)?;
        let d = &eq.point;
        let family = synthesize_family_leader(&p, d).map_err(synthesis_failure)?;
        let shapes = family.param_shapes();
        let mut grid: Vec<Vec<Matrix>> = Vec::new();
        if let Some(text) = params {
            grid.push(parse_params(text, &shapes).map_err(|e| Outcome::fail(EXIT_PARSE, format!("error: --params: {e}")))?);
        }
        if samples > 0 && family.is_single_point() {
            let _ = writeln!(stderr, "note: family is a single point; --samples has nothing to vary");
        } else {
            let mut g = rng(c.seed);
            for _ in 0..samples {
                grid.push(
                    shapes
                        .iter()
                        .map(|&(r, k)| Matrix::from_fn(r, k, |_, _| g.gen_range(-1.0..=1.0)))
                        .collect(),
                );
            }
        }
        let mut members = Vec::with_capacity(grid.len());
        let mut all_verified = true;
        for t in grid {
            let leader = family.instantiate(&t).map_err(synthesis_failure)?;
            let strategies = synthesize_cascade_with(&p, d, &[leader]).map_err(synthesis_failure)?;
            let verification = verify(&p, d, &strategies, c)?;
            all_verified &= verification.verified;
            members.push(MemberOut {
                params: t.iter().map(Matrix::to_rows).collect(),
                strategies: strategies.iter().map(StrategyOut::from).collect(),
                verification,
            });
        }
        let report = FamilyReport::new(&family, members);
        let code = if all_verified { EXIT_OK } else { EXIT_FAILED };
        Ok(emit(c, &report, family_text, code, String::new()))
    })();
    finish(result, stderr)
}

fn load_strategies(path: &Path, d: &DecisionPoint) -> Result<Vec<AffineStrategy>, Outcome> {
    let text = read(path)?;
    parse_strategies(&text, d).map_err(|e| Outcome::fail(EXIT_PARSE, format!("error: {}: {e}", path.display())))
}

fn cmd_verify(path: &Path, strategy_path: &Path, c: &Common) -> Outcome {
    let mut stderr = String::new();
    let result = (|| {
        let p = load_problem(path, &mut stderr)?;
        let eq = desired(&p, c.seed)?;
        let d = &eq.point;
        let strategies = load_strategies(strategy_path, d)?;
        let n = p.levels();
        if strategies.len() != n - 1 || strategies.iter().enumerate().any(|(i, s)| s.level != i + 1) {
            let levels: Vec<usize> = strategies.iter().map(|s| s.level).collect();
            return Err(Outcome::fail(
                EXIT_PARSE,
                format!("error: {}: need one strategy for each level 1..{}, found levels {levels:?}", strategy_path.display(), n - 1),
            ));
        }
        let verification = verify(&p, d, &strategies, c)?;
        let code = if verification.verified { EXIT_OK } else { EXIT_FAILED };
        let report = VerifyReport {
            command: "verify",
            strategies: strategies.iter().map(StrategyOut::from).collect(),
            verification,
        };
        Ok(emit(c, &report, verify_text, code, String::new()))
    })();
    finish(result, stderr)
}

fn cmd_feasible(
    path: &Path,
    strategy_path: Option<&Path>,
    family: bool,
    samples: usize,
    bounds: Option<(f64, f64)>,
    c: &Common,
) -> Outcome {
    let mut stderr = String::new();
    let result = (|| {
        let p = load_problem(path, &mut stderr)?;
        let constraints = match &p.constraints {
            Some(k) if p.is_constrained() => k.clone(),
            _ => return Err(Outcome::fail(EXIT_PRECONDITION, "nothing to check: the problem has no constraints")),
        };
        let eq = desired(&p, c.seed)?;
        let d = &eq.point;
        let mut checks = Vec::new();
        if family {
            let fam = synthesize_family_leader(&p, d).map_err(synthesis_failure)?;
            let shapes = fam.param_shapes();
            let mut grid = vec![fam.zero_params()];
            if !fam.is_single_point() {
                let mut g = rng(c.seed);
                for _ in 0..samples {
                    grid.push(shapes.iter().map(|&(r, k)| Matrix::from_fn(r, k, |_, _| g.gen_range(-1.0..=1.0))).collect());
                }
            }
            let k = with_bounds(&constraints, &p, 1, bounds);
            for entry in filter_family(&fam, &k, &p.dims, &grid, CONSTRAINT) {
                let v = entry.verdict.map_err(feasibility_failure)?;
                checks.push(FeasibilityOut::new(1, Some(&entry.params), &v));
            }
        } else {
            let sp = strategy_path.expect("clap requires a strategy file without --family");
            for s in load_strategies(sp, d)? {
                let k = with_bounds(&constraints, &p, s.level, bounds);
                let v = feasibility_check(&s, &k, &p.dims, CONSTRAINT).map_err(feasibility_failure)?;
                checks.push(FeasibilityOut::new(s.level, None, &v));
            }
        }
        let all_feasible = checks.iter().all(|x| x.feasible);
        for x in checks.iter().filter(|x| !x.feasible) {
            if let Some(row) = x.worst_row {
                let _ = writeln!(stderr, "infeasible: level {} strategy violates constraint row {row}", x.level);
            }
        }
        let report = FeasibleReport {
            command: "feasible",
            all_feasible,
            checks,
        };
        let code = if all_feasible { EXIT_OK } else { EXIT_FAILED };
        Ok(emit(c, &report, feasible_text, code, String::new()))
    })();
    finish(result, stderr)
}
