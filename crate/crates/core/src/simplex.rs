//! Dense two-phase tableau simplex in double-double arithmetic.
//!
//! Sized for the small, badly scaled LPs of uniform approximation
//! (hundreds of columns, under a hundred rows). Pivoting is Dantzig's rule
//! with a Bland's-rule fallback on degenerate runs; the tableau is
//! periodically rebuilt from the original data to stop rounding drift.

use crate::dd::Dd;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("linear program is infeasible (phase-one optimum {0:e})")]
    Infeasible(f64),
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("iteration limit {0} reached")]
    IterationLimit(usize),
    #[error("row {row} has {got} entries, expected {expected}")]
    Shape { row: usize, got: usize, expected: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Le,
    Eq,
    Ge,
}

/// `maximize cᵀx` subject to `rows[i]·x (kind) rhs[i]`, `x >= 0`.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub rows: Vec<Vec<f64>>,
    pub kinds: Vec<RowKind>,
    pub rhs: Vec<f64>,
    pub objective: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    /// Row multipliers: `objective = rhsᵀ duals` at the optimum.
    pub duals: Vec<f64>,
    /// Duals kept in double-double, for callers that rescale them.
    pub duals_dd: Vec<Dd>,
    pub objective: f64,
    pub iterations: usize,
}

const PIVOT_TOL: f64 = 1e-20;
const REFACTOR_EVERY: usize = 200;
const DEGENERATE_RUN: usize = 50;

struct Tableau {
    m: usize,
    /// Structural + slack/surplus + artificial columns.
    ncols: usize,
    /// `(m + 1) x (ncols + 1)`, last row is the reduced-cost row, last
    /// column the right-hand side.
    t: Vec<Dd>,
    /// Original constraint columns and rhs (sign-normalized), for rebuilds.
    a: Vec<Dd>,
    b: Vec<Dd>,
    cost: Vec<Dd>,
    basis: Vec<usize>,
    blocked: Vec<bool>,
}

impl Tableau {
    fn w(&self) -> usize {
        self.ncols + 1
    }

    fn at(&self, r: usize, c: usize) -> Dd {
        self.t[r * self.w() + c]
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.w();
        let inv = self.at(pr, pc).recip();
        for c in 0..w {
            self.t[pr * w + c] *= inv;
        }
        let (before, rest) = self.t.split_at_mut(pr * w);
        let (prow, after) = rest.split_at_mut(w);
        let eliminate = |row: &mut [Dd]| {
            let f = row[pc];
            if f.hi() != 0.0 {
                for (x, &p) in row.iter_mut().zip(prow.iter()) {
                    if p.hi() != 0.0 {
                        *x -= f * p;
                    }
                }
                row[pc] = Dd::from(0.0);
            }
        };
        before.chunks_mut(w).for_each(eliminate);
        after.chunks_mut(w).for_each(eliminate);
        self.basis[pr] = pc;
    }

    /// Recomputes the tableau as `B⁻¹ [A | b]` by Gauss–Jordan elimination
    /// on the current basis columns.
    fn rebuild(&mut self) {
        let (m, n) = (self.m, self.ncols);
        let w = self.w();
        let zero = Dd::from(0.0);
        let mut t = vec![zero; (m + 1) * w];
        for r in 0..m {
            for c in 0..n {
                t[r * w + c] = self.a[r * n + c];
            }
            t[r * w + n] = self.b[r];
        }
        for c in 0..n {
            t[m * w + c] = -self.cost[c];
        }
        let old_basis = std::mem::take(&mut self.basis);
        self.t = t;
        self.basis = vec![usize::MAX; m];
        let mut used = vec![false; m];
        for &col in &old_basis {
            // Partial pivoting over rows not yet assigned.
            let pr = (0..m)
                .filter(|&r| !used[r])
                .max_by(|&x, &y| self.at(x, col).abs().partial_cmp(&self.at(y, col).abs()).unwrap())
                .unwrap();
            used[pr] = true;
            self.pivot(pr, col);
        }
    }

    /// Dantzig pricing (most negative reduced cost) while the objective
    /// moves; after `DEGENERATE_RUN` pivots without progress, Bland's rule
    /// (lowest eligible index) until it moves again, which rules out
    /// cycling. Ratio-test ties go to the lowest basic index.
    fn run(&mut self, iterations: &mut usize, max_iter: usize) -> Result<(), LpError> {
        let (m, n) = (self.m, self.ncols);
        let tol = Dd::from(PIVOT_TOL);
        let mut since_rebuild = 0;
        let mut stalled = 0;
        loop {
            let eligible = (0..n).filter(|&c| !self.blocked[c] && self.at(m, c) < -tol);
            let entering = if stalled >= DEGENERATE_RUN {
                eligible.min()
            } else {
                eligible.min_by(|&x, &y| self.at(m, x).partial_cmp(&self.at(m, y)).unwrap())
            };
            let Some(pc) = entering else {
                return Ok(());
            };
            let mut best: Option<(usize, Dd)> = None;
            for r in 0..m {
                let v = self.at(r, pc);
                if v > tol {
                    let ratio = self.at(r, n) / v;
                    best = match best {
                        None => Some((r, ratio)),
                        Some((br, bv)) => {
                            if ratio < bv || (ratio == bv && self.basis[r] < self.basis[br]) {
                                Some((r, ratio))
                            } else {
                                Some((br, bv))
                            }
                        }
                    };
                }
            }
            let Some((pr, step)) = best else {
                return Err(LpError::Unbounded);
            };
            if step > tol {
                stalled = 0;
            } else {
                stalled += 1;
            }
            self.pivot(pr, pc);
            *iterations += 1;
            since_rebuild += 1;
            if since_rebuild >= REFACTOR_EVERY {
                self.rebuild();
                since_rebuild = 0;
            }
            if *iterations >= max_iter {
                return Err(LpError::IterationLimit(max_iter));
            }
        }
    }
}

impl LinearProgram {
    pub fn solve(&self, max_iter: usize) -> Result<LpSolution, LpError> {
        let m = self.rows.len();
        let nx = self.objective.len();
        for (i, r) in self.rows.iter().enumerate() {
            if r.len() != nx {
                return Err(LpError::Shape {
                    row: i,
                    got: r.len(),
                    expected: nx,
                });
            }
        }
        // Normalize to rhs >= 0, then give each row an identity column:
        // a slack for `<=`, an artificial otherwise (plus a surplus for `>=`).
        let mut flip = vec![false; m];
        let mut kinds = self.kinds.clone();
        for i in 0..m {
            if self.rhs[i] < 0.0 {
                flip[i] = true;
                kinds[i] = match kinds[i] {
                    RowKind::Le => RowKind::Ge,
                    RowKind::Ge => RowKind::Le,
                    RowKind::Eq => RowKind::Eq,
                };
            }
        }
        let n_surplus = kinds.iter().filter(|&&k| k == RowKind::Ge).count();
        let ncols = nx + n_surplus + m;
        let zero = Dd::from(0.0);
        let one = Dd::from(1.0);
        let mut a = vec![zero; m * ncols];
        let mut b = vec![zero; m];
        let mut artificial = vec![false; ncols];
        let mut identity_col = vec![0; m];
        let mut next_surplus = nx;
        for i in 0..m {
            let s = if flip[i] { -1.0 } else { 1.0 };
            for j in 0..nx {
                a[i * ncols + j] = Dd::from(s * self.rows[i][j]);
            }
            b[i] = Dd::from(s * self.rhs[i]);
            if kinds[i] == RowKind::Ge {
                a[i * ncols + next_surplus] = -one;
                next_surplus += 1;
            }
            let id = nx + n_surplus + i;
            a[i * ncols + id] = one;
            identity_col[i] = id;
            artificial[id] = kinds[i] != RowKind::Le;
        }
        let mut tab = Tableau {
            m,
            ncols,
            t: Vec::new(),
            a,
            b,
            cost: vec![zero; ncols],
            basis: identity_col.clone(),
            blocked: vec![false; ncols],
        };
        let mut iterations = 0;
        if artificial.iter().any(|&x| x) {
            for c in 0..ncols {
                if artificial[c] {
                    tab.cost[c] = -one;
                }
            }
            tab.rebuild();
            tab.run(&mut iterations, max_iter)?;
            let phase_one = tab.at(m, ncols).hi();
            let scale = tab.b.iter().map(|v| v.hi().abs()).fold(1.0, f64::max);
            if phase_one < -1e-12 * scale {
                return Err(LpError::Infeasible(-phase_one));
            }
            // Drive zero-level artificials out of the basis where possible.
            for r in 0..m {
                if artificial[tab.basis[r]] {
                    if let Some(c) = (0..nx + n_surplus).find(|&c| tab.at(r, c).abs() > Dd::from(1e-12)) {
                        tab.pivot(r, c);
                    }
                }
            }
            tab.blocked = artificial;
        }
        for c in 0..ncols {
            tab.cost[c] = if c < nx { Dd::from(self.objective[c]) } else { zero };
        }
        tab.rebuild();
        tab.run(&mut iterations, max_iter)?;
        tab.rebuild();

        let mut x = vec![0.0; nx];
        for r in 0..m {
            if tab.basis[r] < nx {
                x[tab.basis[r]] = tab.at(r, ncols).hi();
            }
        }
        let duals_dd: Vec<Dd> = (0..m)
            .map(|i| {
                let y = tab.at(m, identity_col[i]);
                if flip[i] {
                    -y
                } else {
                    y
                }
            })
            .collect();
        Ok(LpSolution {
            x,
            duals: duals_dd.iter().map(|d| d.hi()).collect(),
            duals_dd,
            objective: tab.at(m, ncols).hi(),
            iterations,
        })
    }
}
