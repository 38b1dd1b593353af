//! Dense two-phase simplex for small problems: `min cᵀx, Ax = b, x ≥ 0`.
//! Bland's rule throughout, so it cannot cycle on degenerate vertices.

/// Pivot and feasibility tolerance.
pub const FEAS_TOL: f64 = 1e-9;
/// Phase-one residuals between `FEAS_TOL` and this are reported as marginal.
pub const MARGINAL_TOL: f64 = 1e-6;

const MAX_PIVOTS: usize = 50_000;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal {
        x: Vec<f64>,
        objective: f64,
    },
    Infeasible {
        residual: f64,
    },
    /// Phase-one residual inside the marginal band.
    Marginal {
        residual: f64,
        x: Vec<f64>,
    },
    Unbounded,
    /// Pivot budget exhausted; should not happen with Bland's rule.
    Stalled,
}

struct Tableau {
    /// `rows × (cols + 1)`, last column is the right-hand side.
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
            if i != r {
                let f = row[c];
                if f != 0.0 {
                    for (v, pv) in row.iter_mut().zip(&pivot_row) {
                        *v -= f * pv;
                    }
                }
            }
        }
        self.basis[r] = c;
    }

    /// Minimizes `cost` over the columns in `allowed`. Returns false if unbounded.
    fn optimize(&mut self, cost: &[f64], allowed: &dyn Fn(usize) -> bool) -> Option<bool> {
        for _ in 0..MAX_PIVOTS {
            // reduced cost d_j = c_j − c_Bᵀ B⁻¹ A_j
            let entering = (0..self.cols).filter(|&j| allowed(j)).find(|&j| {
                let d = cost[j] - self.basis.iter().zip(&self.t).map(|(&b, row)| cost[b] * row[j]).sum::<f64>();
                d < -FEAS_TOL
            });
            let Some(c) = entering else {
                return Some(true);
            };
            let rhs = self.cols;
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.t.iter().enumerate() {
                if row[c] > FEAS_TOL {
                    let ratio = row[rhs] / row[c];
                    leave = match leave {
                        Some((li, lr))
                            if ratio > lr + FEAS_TOL
                                || ((ratio - lr).abs() <= FEAS_TOL && self.basis[i] > self.basis[li]) =>
                        {
                            Some((li, lr))
                        }
                        _ => Some((i, ratio)),
                    };
                }
            }
            let Some((r, _)) = leave else {
                return Some(false);
            };
            self.pivot(r, c);
        }
        None
    }
}

/// Solves `min cᵀx` subject to `a·x = b`, `x ≥ 0`. `a` is row-major with
/// `b.len()` rows; `c` may be empty for a pure feasibility problem.
pub fn solve(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> LpOutcome {
    let m = b.len();
    let n = a.first().map_or(0, Vec::len);
    let cols = n + m;
    let mut t = Vec::with_capacity(m);
    for (i, row) in a.iter().enumerate() {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        let mut r: Vec<f64> = row.iter().map(|v| sign * v).collect();
        r.extend((0..m).map(|k| if k == i { 1.0 } else { 0.0 }));
        r.push(sign * b[i]);
        t.push(r);
    }
    let mut tab = Tableau { t, basis: (n..cols).collect(), cols };

    let phase1: Vec<f64> = (0..cols).map(|j| if j >= n { 1.0 } else { 0.0 }).collect();
    match tab.optimize(&phase1, &|_| true) {
        Some(_) => {}
        None => return LpOutcome::Stalled,
    }
    let residual: f64 = tab.basis.iter().zip(&tab.t).filter(|(&bv, _)| bv >= n).map(|(_, row)| row[cols]).sum();
    let x_of = |tab: &Tableau| {
        let mut x = vec![0.0; n];
        for (&bv, row) in tab.basis.iter().zip(&tab.t) {
            if bv < n {
                x[bv] = row[cols].max(0.0);
            }
        }
        x
    };
    if residual > MARGINAL_TOL {
        return LpOutcome::Infeasible { residual };
    }
    if residual > FEAS_TOL {
        return LpOutcome::Marginal { residual, x: x_of(&tab) };
    }
    // drive zero-level artificials out of the basis where possible
    for r in 0..m {
        if tab.basis[r] >= n {
            if let Some(c) = (0..n).find(|&j| tab.t[r][j].abs() > FEAS_TOL) {
                tab.pivot(r, c);
            }
        }
    }
    if c.is_empty() {
        return LpOutcome::Optimal { x: x_of(&tab), objective: 0.0 };
    }
    let mut cost = c.to_vec();
    cost.resize(cols, 0.0);
    match tab.optimize(&cost, &|j| j < n) {
        Some(true) => {
            let x = x_of(&tab);
            let objective = x.iter().zip(c).map(|(xi, ci)| xi * ci).sum();
            LpOutcome::Optimal { x, objective }
        }
        Some(false) => LpOutcome::Unbounded,
        None => LpOutcome::Stalled,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn textbook_optimum() {
        // max 3x + 5y, x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → (2, 6), 36
        let a = vec![vec![1.0, 0.0, 1.0, 0.0, 0.0], vec![0.0, 2.0, 0.0, 1.0, 0.0], vec![3.0, 2.0, 0.0, 0.0, 1.0]];
        let LpOutcome::Optimal { x, objective } = solve(&a, &[4.0, 12.0, 18.0], &[-3.0, -5.0, 0.0, 0.0, 0.0]) else {
            panic!()
        };
        assert_abs_diff_eq!(objective, -36.0, epsilon = 1e-9);
        assert_abs_diff_eq!(x[0], 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(x[1], 6.0, epsilon = 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded() {
        // x + y = -1 with x, y ≥ 0
        assert!(matches!(solve(&[vec![1.0, 1.0]], &[-1.0], &[]), LpOutcome::Infeasible { .. }));
        // min −x with x − y = 0
        assert_eq!(solve(&[vec![1.0, -1.0]], &[0.0], &[-1.0, 0.0]), LpOutcome::Unbounded);
    }

    #[test]
    fn degenerate_problem_terminates() {
        // Beale's cycling example in equality form
        let a = vec![
            vec![0.25, -60.0, -0.04, 9.0, 1.0, 0.0, 0.0],
            vec![0.5, -90.0, -0.02, 3.0, 0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        ];
        let c = [-0.75, 150.0, -0.02, 6.0, 0.0, 0.0, 0.0];
        let LpOutcome::Optimal { objective, .. } = solve(&a, &[0.0, 0.0, 1.0], &c) else { panic!() };
        assert_abs_diff_eq!(objective, -0.05, epsilon = 1e-9);
    }

    #[test]
    fn redundant_rows_are_feasible() {
        let a = vec![vec![1.0, 1.0], vec![2.0, 2.0]];
        assert!(matches!(solve(&a, &[1.0, 2.0], &[]), LpOutcome::Optimal { .. }));
    }
}
