//! Dense two-phase primal simplex with Bland's anti-cycling rule.
//!
//! Problems are stated as `min c·x  s.t.  A x = b`, with every variable
//! either nonnegative or free. Free variables are split internally. After the
//! final basis is found, the basic solution and the row duals are recomputed
//! from the original data with an LU solve, so reported values do not carry
//! the round-off accumulated in the tableau.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Pivot tolerance: tableau entries with smaller magnitude are treated as zero.
pub const PIVOT_TOL: f64 = 1e-10;
const MAX_ITERATIONS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarBound {
    NonNegative,
    Free,
}

#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub eq_matrix: Vec<Vec<f64>>,
    pub eq_rhs: Vec<f64>,
    pub bounds: Vec<VarBound>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub value: f64,
    pub x: Vec<f64>,
    /// One multiplier per equality row; `c - Aᵀy` are the reduced costs.
    pub duals: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub enum SolveStatus {
    Optimal(LpSolution),
    Unbounded,
    Infeasible,
}

impl SolveStatus {
    pub fn optimal(&self) -> Option<&LpSolution> {
        match self {
            SolveStatus::Optimal(s) => Some(s),
            _ => None,
        }
    }
}

/// Incremental construction of an LP with `>=` / `<=` rows turned into
/// equalities through slack columns appended after the declared variables.
#[derive(Debug, Clone, Default)]
pub struct LpBuilder {
    objective: Vec<f64>,
    bounds: Vec<VarBound>,
    rows: Vec<(Vec<f64>, RowKind, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RowKind {
    Eq,
    Ge,
    Le,
}

impl LpBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn var(&mut self, cost: f64, bound: VarBound) -> usize {
        self.objective.push(cost);
        self.bounds.push(bound);
        self.objective.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn eq(&mut self, coeffs: Vec<f64>, rhs: f64) {
        self.rows.push((coeffs, RowKind::Eq, rhs));
    }

    pub fn ge(&mut self, coeffs: Vec<f64>, rhs: f64) {
        self.rows.push((coeffs, RowKind::Ge, rhs));
    }

    pub fn le(&mut self, coeffs: Vec<f64>, rhs: f64) {
        self.rows.push((coeffs, RowKind::Le, rhs));
    }

    pub fn build(self) -> LinearProgram {
        let n = self.objective.len();
        let slacks = self.rows.iter().filter(|r| r.1 != RowKind::Eq).count();
        let total = n + slacks;
        let mut objective = self.objective;
        objective.resize(total, 0.0);
        let mut bounds = self.bounds;
        bounds.resize(total, VarBound::NonNegative);
        let mut eq_matrix = Vec::with_capacity(self.rows.len());
        let mut eq_rhs = Vec::with_capacity(self.rows.len());
        let mut next_slack = n;
        for (mut coeffs, kind, rhs) in self.rows {
            assert!(coeffs.len() <= n, "row longer than declared variable count");
            coeffs.resize(total, 0.0);
            match kind {
                RowKind::Eq => {}
                RowKind::Ge => {
                    coeffs[next_slack] = -1.0;
                    next_slack += 1;
                }
                RowKind::Le => {
                    coeffs[next_slack] = 1.0;
                    next_slack += 1;
                }
            }
            eq_matrix.push(coeffs);
            eq_rhs.push(rhs);
        }
        LinearProgram {
            objective,
            eq_matrix,
            eq_rhs,
            bounds,
        }
    }
}

impl LinearProgram {
    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.objective.len();
        if self.bounds.len() != n || self.eq_matrix.len() != self.eq_rhs.len() {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: self.bounds.len(),
            });
        }
        for row in &self.eq_matrix {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
        }
        let finite = self.objective.iter().all(|v| v.is_finite())
            && self.eq_rhs.iter().all(|v| v.is_finite())
            && self.eq_matrix.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(Error::NumericalBreakdown("non-finite LP coefficient"));
        }
        Ok(())
    }

    /// Largest violation of `A x = b` and of the sign constraints.
    pub fn primal_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (row, &rhs) in self.eq_matrix.iter().zip(&self.eq_rhs) {
            let lhs: f64 = row.iter().zip(x).map(|(a, v)| a * v).sum();
            worst = worst.max((lhs - rhs).abs());
        }
        for (v, b) in x.iter().zip(&self.bounds) {
            if *b == VarBound::NonNegative {
                worst = worst.max(-v);
            }
        }
        worst
    }

    /// Reduced costs `c - Aᵀy`.
    pub fn reduced_costs(&self, y: &[f64]) -> Vec<f64> {
        (0..self.num_vars())
            .map(|j| {
                self.objective[j]
                    - self
                        .eq_matrix
                        .iter()
                        .zip(y)
                        .map(|(row, yi)| row[j] * yi)
                        .sum::<f64>()
            })
            .collect()
    }
}

/// Standard-form image of a [`LinearProgram`]: all columns nonnegative, `b >= 0`.
struct StandardForm {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: Vec<f64>,
    /// For each standard column: (original variable, sign).
    origin: Vec<(usize, f64)>,
    /// Row sign flips applied to make `b >= 0`.
    row_sign: Vec<f64>,
}

impl StandardForm {
    fn from_lp(lp: &LinearProgram) -> Self {
        let mut origin = Vec::new();
        for (j, b) in lp.bounds.iter().enumerate() {
            origin.push((j, 1.0));
            if *b == VarBound::Free {
                origin.push((j, -1.0));
            }
        }
        let row_sign: Vec<f64> = lp
            .eq_rhs
            .iter()
            .map(|&r| if r < 0.0 { -1.0 } else { 1.0 })
            .collect();
        let a = lp
            .eq_matrix
            .iter()
            .zip(&row_sign)
            .map(|(row, s)| origin.iter().map(|&(j, sg)| s * sg * row[j]).collect())
            .collect();
        let b = lp.eq_rhs.iter().zip(&row_sign).map(|(r, s)| r * s).collect();
        let c = origin.iter().map(|&(j, sg)| sg * lp.objective[j]).collect();
        StandardForm {
            a,
            b,
            c,
            origin,
            row_sign,
        }
    }
}

struct Tableau {
    /// m rows of (n + m) coefficients followed by the rhs.
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    active_row: Vec<bool>,
    width: usize,
    iterations: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, col: usize) {
        let pv = self.rows[r][col];
        for v in self.rows[r].iter_mut() {
            *v /= pv;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let factor = row[col];
            if factor != 0.0 {
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v -= factor * p;
                }
                row[col] = 0.0;
            }
        }
        self.basis[r] = col;
        self.iterations += 1;
    }

    /// Runs Bland-rule simplex iterations on `cost` over the allowed columns.
    /// Returns `false` when the objective is unbounded below.
    fn optimize(&mut self, cost: &[f64], allowed: &dyn Fn(usize) -> bool) -> Result<bool> {
        let rhs = self.width;
        loop {
            if self.iterations >= MAX_ITERATIONS {
                return Err(Error::NumericalBreakdown("simplex iteration limit reached"));
            }
            // Reduced costs d_j = c_j - c_B B^{-1} A_j, read off the tableau.
            let mut entering = None;
            for j in 0..self.width {
                if !allowed(j) || self.basis.contains(&j) {
                    continue;
                }
                let mut d = cost[j];
                for (i, row) in self.rows.iter().enumerate() {
                    if self.active_row[i] {
                        d -= cost[self.basis[i]] * row[j];
                    }
                }
                if d < -PIVOT_TOL {
                    entering = Some(j);
                    break;
                }
            }
            let Some(col) = entering else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if !self.active_row[i] || row[col] <= PIVOT_TOL {
                    continue;
                }
                let ratio = row[rhs].max(0.0) / row[col];
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr - 1e-14
                            || (ratio <= lr + 1e-14 && self.basis[i] < self.basis[li])
                        {
                            Some((i, ratio))
                        } else {
                            Some((li, lr))
                        }
                    }
                };
            }
            match leave {
                None => return Ok(false),
                Some((r, _)) => self.pivot(r, col),
            }
        }
    }
}

/// Solves `lp` to optimality, or reports infeasibility / unboundedness.
pub fn solve_lp(lp: &LinearProgram) -> Result<SolveStatus> {
    lp.validate()?;
    let sf = StandardForm::from_lp(lp);
    let m = sf.a.len();
    let n = sf.c.len();
    let width = n + m;

    let mut rows = Vec::with_capacity(m);
    for i in 0..m {
        let mut row = vec![0.0; width + 1];
        row[..n].copy_from_slice(&sf.a[i]);
        row[n + i] = 1.0;
        row[width] = sf.b[i];
        rows.push(row);
    }
    let mut tab = Tableau {
        rows,
        basis: (n..n + m).collect(),
        active_row: vec![true; m],
        width,
        iterations: 0,
    };

    // Phase 1: minimize the sum of artificials.
    let mut phase1_cost = vec![0.0; width];
    for c in phase1_cost.iter_mut().skip(n) {
        *c = 1.0;
    }
    tab.optimize(&phase1_cost, &|_| true)?;
    let infeasibility: f64 = (0..m)
        .filter(|&i| tab.basis[i] >= n)
        .map(|i| tab.rows[i][width].abs())
        .sum();
    let scale = 1.0 + sf.b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if infeasibility > 1e-9 * scale {
        return Ok(SolveStatus::Infeasible);
    }

    // Drive artificials out of the basis; rows where that is impossible are redundant.
    for i in 0..m {
        if tab.basis[i] < n {
            continue;
        }
        let col = (0..n).find(|&j| tab.rows[i][j].abs() > PIVOT_TOL);
        match col {
            Some(j) => tab.pivot(i, j),
            None => tab.active_row[i] = false,
        }
    }

    // Phase 2 on the structural columns only.
    let mut cost = sf.c.clone();
    cost.resize(width, 0.0);
    if !tab.optimize(&cost, &|j| j < n)? {
        return Ok(SolveStatus::Unbounded);
    }

    let active: Vec<usize> = (0..m).filter(|&i| tab.active_row[i]).collect();
    let basic_cols: Vec<usize> = active.iter().map(|&i| tab.basis[i]).collect();
    let k = active.len();

    // Recompute x_B and y from the original data.
    let mut xs = vec![0.0; n];
    let mut y_std = vec![0.0; m];
    if k > 0 {
        let bmat = DMatrix::from_fn(k, k, |r, c| sf.a[active[r]][basic_cols[c]]);
        let rhs = DVector::from_fn(k, |r, _| sf.b[active[r]]);
        let cb = DVector::from_fn(k, |r, _| sf.c[basic_cols[r]]);
        let lu = bmat.clone().lu();
        let xb = lu.solve(&rhs);
        let y = bmat.transpose().lu().solve(&cb);
        match (xb, y) {
            (Some(xb), Some(y)) => {
                for (c, &col) in basic_cols.iter().enumerate() {
                    xs[col] = xb[c];
                }
                for (r, &row) in active.iter().enumerate() {
                    y_std[row] = y[r];
                }
            }
            _ => {
                // Singular refit; fall back to the tableau values.
                for &i in &active {
                    xs[tab.basis[i]] = tab.rows[i][width];
                }
                y_std = tableau_duals(&sf, &basic_cols, &active, m)?;
            }
        }
    }

    let mut x = vec![0.0; lp.num_vars()];
    for (col, &(j, sg)) in sf.origin.iter().enumerate() {
        x[j] += sg * xs[col];
    }
    let duals: Vec<f64> = y_std.iter().zip(&sf.row_sign).map(|(y, s)| y * s).collect();
    let value = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(SolveStatus::Optimal(LpSolution {
        value,
        x,
        duals,
        iterations: tab.iterations,
    }))
}

fn tableau_duals(
    sf: &StandardForm,
    basic_cols: &[usize],
    active: &[usize],
    m: usize,
) -> Result<Vec<f64>> {
    let k = active.len();
    let bmat = DMatrix::from_fn(k, k, |r, c| sf.a[active[r]][basic_cols[c]]);
    let cb = DVector::from_fn(k, |r, _| sf.c[basic_cols[r]]);
    let pinv = bmat
        .transpose()
        .pseudo_inverse(1e-12)
        .map_err(|_| Error::NumericalBreakdown("singular basis"))?;
    let y = pinv * cb;
    let mut out = vec![0.0; m];
    for (r, &row) in active.iter().enumerate() {
        out[row] = y[r];
    }
    Ok(out)
}
