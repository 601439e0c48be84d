//! Dense two-phase simplex for small linear programs over free variables.
//!
//! Bland's rule is used for both entering and leaving choices, so the
//! method terminates on degenerate problems.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{dot, Matrix};

const PIVOT_EPS: f64 = 1e-11;
const MAX_PIVOTS: usize = 50_000;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Unbounded,
    Infeasible,
}

struct Tableau {
    /// `m` rows of `cols + 1` entries; the last entry is the right-hand side.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.t[r][c];
        for v in self.t[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pr) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pr;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Minimizes `cost · z` over the allowed columns. Returns false when
    /// the objective is unbounded below.
    fn minimize(&mut self, cost: &[f64], allowed: &[bool]) -> bool {
        for _ in 0..MAX_PIVOTS {
            let mut entering = None;
            for j in 0..self.cols {
                if !allowed[j] || self.basis.contains(&j) {
                    continue;
                }
                let reduced = cost[j]
                    - self
                        .basis
                        .iter()
                        .zip(&self.t)
                        .map(|(&b, row)| cost[b] * row[j])
                        .sum::<f64>();
                if reduced < -PIVOT_EPS {
                    entering = Some(j);
                    break;
                }
            }
            let Some(c) = entering else {
                return true;
            };
            let rhs = self.cols;
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.t.iter().enumerate() {
                if row[c] > PIVOT_EPS {
                    let ratio = row[rhs] / row[c];
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-14 || (ratio <= lr + 1e-14 && self.basis[i] < self.basis[li]) {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            match leave {
                None => return false,
                Some((r, _)) => self.pivot(r, c),
            }
        }
        true
    }

    fn value_of(&self, j: usize) -> f64 {
        self.basis
            .iter()
            .position(|&b| b == j)
            .map_or(0.0, |i| self.t[i][self.cols])
    }
}

/// Maximizes `c·x` subject to `A x ≤ b` with `x` unrestricted in sign.
pub fn maximize(c: &[f64], a: &Matrix, b: &[f64]) -> LpOutcome {
    let (m, n) = a.shape();
    assert_eq!(c.len(), n);
    assert_eq!(b.len(), m);
    // Columns: x⁺ (n), x⁻ (n), slacks (m), artificials (one per negative rhs).
    let needs_art: Vec<usize> = (0..m).filter(|&i| b[i] < 0.0).collect();
    let art_base = 2 * n + m;
    let cols = art_base + needs_art.len();
    let mut t = vec![vec![0.0; cols + 1]; m];
    let mut basis = vec![0; m];
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i][j] = sign * a[(i, j)];
            t[i][n + j] = -sign * a[(i, j)];
        }
        t[i][2 * n + i] = sign;
        t[i][cols] = sign * b[i];
        basis[i] = 2 * n + i;
    }
    for (k, &i) in needs_art.iter().enumerate() {
        t[i][art_base + k] = 1.0;
        basis[i] = art_base + k;
    }
    let mut tab = Tableau { t, basis, cols };

    if !needs_art.is_empty() {
        let mut cost = vec![0.0; cols];
        for c in cost.iter_mut().skip(art_base) {
            *c = 1.0;
        }
        let allowed = vec![true; cols];
        tab.minimize(&cost, &allowed);
        let infeasibility: f64 = (art_base..cols).map(|j| tab.value_of(j)).sum();
        let scale = 1.0 + b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if infeasibility > 1e-9 * scale {
            return LpOutcome::Infeasible;
        }
        for r in 0..m {
            if tab.basis[r] >= art_base {
                if let Some(j) = (0..art_base).find(|&j| tab.t[r][j].abs() > PIVOT_EPS) {
                    tab.pivot(r, j);
                }
            }
        }
    }

    let mut cost = vec![0.0; cols];
    for j in 0..n {
        cost[j] = -c[j];
        cost[n + j] = c[j];
    }
    let allowed: Vec<bool> = (0..cols).map(|j| j < art_base).collect();
    if !tab.minimize(&cost, &allowed) {
        return LpOutcome::Unbounded;
    }
    let x: Vec<f64> = (0..n).map(|j| tab.value_of(j) - tab.value_of(n + j)).collect();
    let value = dot(c, &x);
    LpOutcome::Optimal { x, value }
}

/// Minimizes `c·x` subject to `A x ≤ b`.
pub fn minimize(c: &[f64], a: &Matrix, b: &[f64]) -> LpOutcome {
    let neg: Vec<f64> = c.iter().map(|v| -v).collect();
    match maximize(&neg, a, b) {
        LpOutcome::Optimal { x, value } => LpOutcome::Optimal { x, value: -value },
        other => other,
    }
}
