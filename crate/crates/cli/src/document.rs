//! Problem and strategy documents.
//!
//! A problem document is a JSON object:
//!
//! ```json
//! {
//!   "levels": 3,
//!   "dims": [1, 1, 1],
//!   "objectives": [
//!     {"type": "expr", "formula": "(u1 - 2)^2 + (u2 - 1)^2 + (u3 - 3)^2"},
//!     {"type": "quadratic", "A": {"1,1": [[1]], "2,2": [[1]]}, "l": [[-2], [0], [0]], "c": 1}
//!   ],
//!   "constraints": {"A": [[[1]], [[0]], [[0]]], "b": [10]}
//! }
//! ```
//!
//! Quadratic blocks are keyed `"j,k"` with `j ≤ k`; missing blocks and
//! linear terms are zero and `"c"` is an optional constant. Matrices are
//! row-major nested arrays. A strategy document holds
//! `"strategies": [{"level": 1, "offset": [12], "coeffs": [[[-1]], [[-3]]]}]`
//! in the plain affine form `u^ℓ = offset + Σ_{j>ℓ} coeffs_j u^j`.

use std::collections::BTreeMap;
use std::fmt;

use revstack_core::linalg::Matrix;
use revstack_core::model::{
    upper_index, DecisionPoint, Dims, ExprObjective, GameProblem, LinearConstraints, Objective, QuadraticObjective,
};
use revstack_core::synthesis::AffineStrategy;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::grammar::{parse_formula, print_formula, FormulaErrorKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax,
    UnknownVariable,
    DimensionMismatch,
    Invalid,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParseErrorKind::Syntax => "syntax error",
            ParseErrorKind::UnknownVariable => "unknown variable",
            ParseErrorKind::DimensionMismatch => "dimension mismatch",
            ParseErrorKind::Invalid => "invalid document",
        })
    }
}

/// Error with a 1-based line and column (in characters) into the document.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{kind} at line {line}, column {column}: {message}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

struct Source<'a> {
    text: &'a str,
}

impl<'a> Source<'a> {
    fn position(&self, offset: usize) -> (usize, usize) {
        let offset = offset.min(self.text.len());
        let before = &self.text[..offset];
        let line = before.matches('\n').count() + 1;
        let line_start = before.rfind('\n').map_or(0, |i| i + 1);
        (line, before[line_start..].chars().count() + 1)
    }

    fn offset_of(&self, raw: &RawValue) -> usize {
        (raw.get().as_ptr() as usize).saturating_sub(self.text.as_ptr() as usize)
    }

    fn error(&self, kind: ParseErrorKind, offset: usize, message: impl Into<String>) -> ParseError {
        let (line, column) = self.position(offset);
        ParseError {
            kind,
            line,
            column,
            message: message.into(),
        }
    }

    fn at(&self, raw: &RawValue, kind: ParseErrorKind, message: impl Into<String>) -> ParseError {
        self.error(kind, self.offset_of(raw), message)
    }

    /// Maps a serde error from parsing `self.text[base..]` back to the
    /// whole document.
    fn json_error(&self, base: usize, e: serde_json::Error) -> ParseError {
        let kind = match e.classify() {
            serde_json::error::Category::Syntax | serde_json::error::Category::Eof => ParseErrorKind::Syntax,
            _ => ParseErrorKind::Invalid,
        };
        let sub = &self.text[base..];
        let line_start: usize = sub.split_inclusive('\n').take(e.line().saturating_sub(1)).map(str::len).sum();
        let offset = base + line_start + e.column().saturating_sub(1);
        let message = e.to_string();
        // serde appends its own relative position; drop it.
        let message = match message.rfind(" at line ") {
            Some(i) => message[..i].to_string(),
            None => message,
        };
        self.error(kind, offset, message)
    }

    fn parse<T: Deserialize<'a>>(&self, raw: &'a RawValue) -> Result<T, ParseError> {
        serde_json::from_str(raw.get()).map_err(|e| self.json_error(self.offset_of(raw), e))
    }

    fn matrix(&self, raw: &'a RawValue, rows: usize, cols: usize, what: &str) -> Result<Matrix, ParseError> {
        let data: Vec<Vec<f64>> = self.parse(raw)?;
        if data.len() != rows || data.iter().any(|r| r.len() != cols) {
            let found = match data.first() {
                Some(r) if data.iter().all(|x| x.len() == r.len()) => format!("{}x{}", data.len(), r.len()),
                Some(_) => String::from("ragged rows"),
                None => String::from("no rows"),
            };
            return Err(self.at(raw, ParseErrorKind::DimensionMismatch, format!("{what} must be {rows}x{cols}, found {found}")));
        }
        Ok(Matrix::from_row_major(rows, cols, data.into_iter().flatten().collect()))
    }

    fn vector(&self, raw: &'a RawValue, len: usize, what: &str) -> Result<Vec<f64>, ParseError> {
        let v: Vec<f64> = self.parse(raw)?;
        if v.len() != len {
            return Err(self.at(raw, ParseErrorKind::DimensionMismatch, format!("{what} must have length {len}, found {}", v.len())));
        }
        Ok(v)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem<'a> {
    #[serde(borrow)]
    levels: &'a RawValue,
    #[serde(borrow)]
    dims: &'a RawValue,
    #[serde(borrow)]
    objectives: Vec<&'a RawValue>,
    #[serde(borrow, default)]
    constraints: Option<&'a RawValue>,
    /// Allowed so that one file can carry both a problem and strategies.
    #[serde(borrow, default)]
    #[allow(dead_code)]
    strategies: Option<&'a RawValue>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObjective<'a> {
    #[serde(rename = "type")]
    kind: String,
    #[serde(borrow, default)]
    formula: Option<&'a RawValue>,
    #[serde(borrow, rename = "A", default)]
    a: Option<BTreeMap<String, &'a RawValue>>,
    #[serde(borrow, default)]
    l: Option<Vec<&'a RawValue>>,
    #[serde(default)]
    c: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstraints<'a> {
    #[serde(borrow, rename = "A")]
    a: Vec<&'a RawValue>,
    #[serde(borrow)]
    b: &'a RawValue,
}

fn parse_objective<'a>(src: &Source<'a>, raw: &'a RawValue, dims: &Dims, level: usize) -> Result<Objective, ParseError> {
    let o: RawObjective<'a> = src.parse(raw)?;
    match o.kind.as_str() {
        "expr" => {
            if o.a.is_some() || o.l.is_some() || o.c.is_some() {
                return Err(src.at(raw, ParseErrorKind::Invalid, format!("objective {level}: expr objectives take only \"formula\"")));
            }
            let f = o
                .formula
                .ok_or_else(|| src.at(raw, ParseErrorKind::Invalid, format!("objective {level}: missing \"formula\"")))?;
            let text: String = src.parse(f)?;
            parse_formula(&text, Some(dims)).map(|e| Objective::Expr(ExprObjective::new(e))).map_err(|e| {
                let kind = match e.kind {
                    FormulaErrorKind::Syntax => ParseErrorKind::Syntax,
                    FormulaErrorKind::UnknownVariable => ParseErrorKind::UnknownVariable,
                };
                // Offsets inside the string assume no escape sequences before the error.
                src.error(kind, src.offset_of(f) + 1 + e.offset, format!("objective {level}: {}", e.message))
            })
        }
        "quadratic" => {
            if o.formula.is_some() {
                return Err(src.at(raw, ParseErrorKind::Invalid, format!("objective {level}: quadratic objectives take no \"formula\"")));
            }
            let n = dims.levels();
            let mut q = QuadraticObjective::zeros(dims);
            for (key, block) in o.a.unwrap_or_default() {
                let (j, k) = parse_block_key(&key)
                    .ok_or_else(|| src.at(block, ParseErrorKind::Invalid, format!("objective {level}: block key \"{key}\" must look like \"j,k\"")))?;
                if j == 0 || k == 0 || j > n || k > n {
                    return Err(src.at(block, ParseErrorKind::DimensionMismatch, format!("objective {level}: block \"{key}\" is outside a {n}-level game")));
                }
                if j > k {
                    return Err(src.at(block, ParseErrorKind::Invalid, format!("objective {level}: block \"{key}\" is below the diagonal; give A_{k}{j} (transposed) instead")));
                }
                let m = src.matrix(block, dims.size(j), dims.size(k), &format!("objective {level}: block \"{key}\""))?;
                q.a[upper_index(n, j, k)] = m;
            }
            if let Some(ls) = o.l {
                if ls.len() != n {
                    return Err(src.at(raw, ParseErrorKind::DimensionMismatch, format!("objective {level}: \"l\" needs {n} vectors, found {}", ls.len())));
                }
                for (k, lr) in ls.into_iter().enumerate() {
                    q.l[k] = src.vector(lr, dims.size(k + 1), &format!("objective {level}: l_{}", k + 1))?;
                }
            }
            q.constant = o.c.unwrap_or(0.0);
            Ok(Objective::Quadratic(q))
        }
        other => Err(src.at(raw, ParseErrorKind::Invalid, format!("objective {level}: unknown type \"{other}\" (expected \"quadratic\" or \"expr\")"))),
    }
}

fn parse_block_key(key: &str) -> Option<(usize, usize)> {
    let (a, b) = key.split_once(',')?;
    Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
}

fn parse_constraints<'a>(src: &Source<'a>, raw: &'a RawValue, dims: &Dims) -> Result<LinearConstraints, ParseError> {
    let c: RawConstraints<'a> = src.parse(raw)?;
    let n = dims.levels();
    if c.a.len() != n {
        return Err(src.at(raw, ParseErrorKind::DimensionMismatch, format!("constraints: \"A\" needs {n} blocks, found {}", c.a.len())));
    }
    let b: Vec<f64> = src.parse(c.b)?;
    let rows = b.len();
    let mut blocks = Vec::with_capacity(n);
    for (l, ar) in c.a.into_iter().enumerate() {
        blocks.push(src.matrix(ar, rows, dims.size(l + 1), &format!("constraints: A^{}", l + 1))?);
    }
    Ok(LinearConstraints::new(blocks, b))
}

/// Parses and validates a problem document.
pub fn parse_problem(text: &str) -> Result<GameProblem, ParseError> {
    let src = Source { text };
    let raw: RawProblem<'_> = serde_json::from_str(text).map_err(|e| src.json_error(0, e))?;
    let levels: usize = src.parse(raw.levels)?;
    if levels < 2 {
        return Err(src.at(raw.levels, ParseErrorKind::Invalid, format!("a hierarchical game needs at least 2 levels, got {levels}")));
    }
    let sizes: Vec<usize> = src.parse(raw.dims)?;
    if sizes.len() != levels {
        return Err(src.at(raw.dims, ParseErrorKind::DimensionMismatch, format!("\"dims\" lists {} levels but \"levels\" is {levels}", sizes.len())));
    }
    let dims = Dims::new(sizes).map_err(|e| src.at(raw.dims, ParseErrorKind::Invalid, e.to_string()))?;
    if raw.objectives.len() != levels {
        return Err(src.error(
            ParseErrorKind::DimensionMismatch,
            raw.objectives.first().map_or(0, |r| src.offset_of(r)),
            format!("expected {levels} objectives, found {}", raw.objectives.len()),
        ));
    }
    let objectives = raw
        .objectives
        .iter()
        .enumerate()
        .map(|(i, r)| parse_objective(&src, r, &dims, i + 1))
        .collect::<Result<Vec<_>, _>>()?;
    let constraints = raw.constraints.map(|r| parse_constraints(&src, r, &dims)).transpose()?;
    GameProblem::new(dims, objectives, constraints).map_err(|e| src.error(ParseErrorKind::Invalid, 0, e.to_string()))
}

#[derive(Deserialize)]
struct RawStrategyFile<'a> {
    #[serde(borrow)]
    strategies: Vec<&'a RawValue>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStrategy<'a> {
    level: usize,
    #[serde(borrow)]
    offset: &'a RawValue,
    #[serde(borrow)]
    coeffs: Vec<&'a RawValue>,
}

/// Parses strategies in plain affine form; `desired` supplies the anchor.
/// The result is sorted by level; each level may appear once.
pub fn parse_strategies(text: &str, desired: &DecisionPoint) -> Result<Vec<AffineStrategy>, ParseError> {
    let src = Source { text };
    let file: RawStrategyFile<'_> = serde_json::from_str(text).map_err(|e| src.json_error(0, e))?;
    let n = desired.levels();
    let mut out: Vec<AffineStrategy> = Vec::new();
    for raw in file.strategies {
        let s: RawStrategy<'_> = src.parse(raw)?;
        let l = s.level;
        if l == 0 || l >= n {
            return Err(src.at(raw, ParseErrorKind::Invalid, format!("strategy level {l} must be between 1 and {}", n - 1)));
        }
        if out.iter().any(|o| o.level == l) {
            return Err(src.at(raw, ParseErrorKind::Invalid, format!("strategy for level {l} given twice")));
        }
        let m = desired.level(l).len();
        let offset = src.vector(s.offset, m, &format!("level {l} offset"))?;
        if s.coeffs.len() != n - l {
            return Err(src.at(raw, ParseErrorKind::DimensionMismatch, format!("level {l} needs {} coefficient blocks (for u{} … u{n}), found {}", n - l, l + 1, s.coeffs.len())));
        }
        let coeffs = s
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| src.matrix(c, m, desired.level(l + 1 + i).len(), &format!("level {l} coefficient of u{}", l + 1 + i)))
            .collect::<Result<Vec<_>, _>>()?;
        let strategy = AffineStrategy::from_affine(l, desired, &offset, &coeffs)
            .map_err(|e| src.at(raw, ParseErrorKind::Invalid, e.to_string()))?;
        out.push(strategy);
    }
    out.sort_by_key(|s| s.level);
    Ok(out)
}

#[derive(Serialize)]
struct ProblemOut {
    levels: usize,
    dims: Vec<usize>,
    objectives: Vec<ObjectiveOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    constraints: Option<ConstraintsOut>,
}

#[derive(Serialize)]
#[serde(untagged)]
enum ObjectiveOut {
    Quadratic {
        #[serde(rename = "type")]
        kind: &'static str,
        #[serde(rename = "A")]
        a: BTreeMap<String, Vec<Vec<f64>>>,
        l: Vec<Vec<f64>>,
        #[serde(skip_serializing_if = "Option::is_none")]
        c: Option<f64>,
    },
    Expr {
        #[serde(rename = "type")]
        kind: &'static str,
        formula: String,
    },
}

#[derive(Serialize)]
struct ConstraintsOut {
    #[serde(rename = "A")]
    a: Vec<Vec<Vec<f64>>>,
    b: Vec<f64>,
}

/// Prints a problem as a document that [`parse_problem`] reads back to the
/// same problem.
pub fn print_problem(p: &GameProblem) -> String {
    let n = p.levels();
    let objectives = p
        .objectives
        .iter()
        .map(|o| match o {
            Objective::Quadratic(q) => {
                let mut a = BTreeMap::new();
                for j in 1..=n {
                    for k in j..=n {
                        let b = q.block(j, k);
                        if !b.is_zero() {
                            a.insert(format!("{j},{k}"), b.to_rows());
                        }
                    }
                }
                ObjectiveOut::Quadratic {
                    kind: "quadratic",
                    a,
                    l: q.l.clone(),
                    c: (q.constant != 0.0).then_some(q.constant),
                }
            }
            Objective::Expr(e) => ObjectiveOut::Expr {
                kind: "expr",
                formula: print_formula(&e.root),
            },
        })
        .collect();
    let out = ProblemOut {
        levels: n,
        dims: p.dims.sizes().to_vec(),
        objectives,
        constraints: p.constraints.as_ref().map(|c| ConstraintsOut {
            a: c.a.iter().map(Matrix::to_rows).collect(),
            b: c.b.clone(),
        }),
    };
    let mut s = serde_json::to_string_pretty(&out).expect("documents serialize");
    s.push('\n');
    s
}
