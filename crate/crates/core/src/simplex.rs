//! Dense two-phase simplex for small linear programs.
//!
//! Solves `min cᵀx subject to Ax = b, x ≥ 0` with Bland's pivoting rule,
//! which is anti-cycling and fully deterministic. The problems this crate
//! produces are tiny (at most a few hundred columns), so a dense tableau
//! with a recomputed reduced-cost row per pivot is plenty fast and easy to
//! audit.
//!
//! At an optimum the solver also reports the dual vector `y = c_B B⁻ᵀ`,
//! which is dual feasible (`yᵀA ≤ cᵀ`) and lets callers run weak-duality
//! sanity checks.

use thiserror::Error;

/// Numerical tolerance for pivot eligibility and zero tests.
const TOL: f64 = 1e-9;

/// A linear program in standard equality form: min cᵀx, Ax = b, x ≥ 0.
#[derive(Debug, Clone)]
pub struct StandardForm {
    pub num_rows: usize,
    pub num_cols: usize,
    /// Row-major constraint matrix, `num_rows * num_cols` entries.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl StandardForm {
    pub fn new(num_rows: usize, num_cols: usize) -> Self {
        StandardForm {
            num_rows,
            num_cols,
            a: vec![0.0; num_rows * num_cols],
            b: vec![0.0; num_rows],
            c: vec![0.0; num_cols],
        }
    }

    #[inline]
    pub fn coeff(&self, row: usize, col: usize) -> f64 {
        self.a[row * self.num_cols + col]
    }

    #[inline]
    pub fn set_coeff(&mut self, row: usize, col: usize, value: f64) {
        self.a[row * self.num_cols + col] = value;
    }

    /// Max-norm residual ‖Ax − b‖∞ of a candidate solution.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.num_rows {
            let acc: f64 = x
                .iter()
                .enumerate()
                .map(|(j, xj)| self.coeff(r, j) * xj)
                .sum();
            worst = worst.max((acc - self.b[r]).abs());
        }
        worst
    }
}

/// Primal/dual solution at an optimum.
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub value: f64,
    /// Dual vector, one entry per input row (zero on redundant rows).
    pub dual: Vec<f64>,
}

#[derive(Debug, Clone)]
pub enum LpOutcome {
    Optimal(LpSolution),
    Infeasible,
    Unbounded,
}

#[derive(Debug, Error)]
#[error("simplex did not converge in {phase}: {iterations} iterations, objective {objective}")]
pub struct SimplexError {
    pub phase: &'static str,
    pub iterations: usize,
    pub objective: f64,
}

struct Tableau {
    rows: usize,
    cols: usize,
    /// Transformed constraint matrix, row-major, basis columns are identity.
    t: Vec<f64>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, j: usize) -> f64 {
        self.t[r * self.cols + j]
    }

    fn pivot(&mut self, pivot_row: usize, entering: usize) {
        let cols = self.cols;
        let inv = 1.0 / self.t[pivot_row * cols + entering];
        for j in 0..cols {
            self.t[pivot_row * cols + j] *= inv;
        }
        self.rhs[pivot_row] *= inv;
        for r in 0..self.rows {
            if r == pivot_row {
                continue;
            }
            let factor = self.t[r * cols + entering];
            if factor == 0.0 {
                continue;
            }
            for j in 0..cols {
                let delta = factor * self.t[pivot_row * cols + j];
                self.t[r * cols + j] -= delta;
            }
            self.rhs[r] -= factor * self.rhs[pivot_row];
            // Kill residual round-off in the entering column so that basis
            // columns stay exactly unit vectors.
            self.t[r * cols + entering] = 0.0;
        }
        self.basis[pivot_row] = entering;
    }

    /// Bland's rule: entering = lowest-index improving column, leaving =
    /// lowest basic-variable index among the minimum-ratio rows.
    /// Returns Ok(true) on optimality, Ok(false) if the column is unbounded.
    fn bland_step(&mut self, costs: &[f64], allowed: usize) -> Result<bool, ()> {
        // Reduced costs d_j = c_j - c_B (B^-1 a_j); recomputed from scratch
        // each step, which is O(rows * cols) just like the pivot itself.
        let mut entering = None;
        for j in 0..allowed {
            if self.basis.contains(&j) {
                continue;
            }
            let mut reduced = costs[j];
            for r in 0..self.rows {
                let cb = costs[self.basis[r]];
                if cb != 0.0 {
                    reduced -= cb * self.at(r, j);
                }
            }
            if reduced < -TOL {
                entering = Some(j);
                break;
            }
        }
        let entering = match entering {
            Some(j) => j,
            None => return Ok(true),
        };

        let mut leaving: Option<usize> = None;
        let mut best_ratio = f64::INFINITY;
        for r in 0..self.rows {
            let coef = self.at(r, entering);
            if coef > TOL {
                let ratio = self.rhs[r] / coef;
                let better = ratio < best_ratio - TOL
                    || ((ratio - best_ratio).abs() <= TOL
                        && leaving.is_some_and(|l| self.basis[r] < self.basis[l]));
                if better || leaving.is_none() {
                    best_ratio = ratio.min(best_ratio);
                    leaving = Some(r);
                }
            }
        }
        match leaving {
            Some(r) => {
                self.pivot(r, entering);
                Ok(false)
            }
            None => Err(()), // unbounded direction
        }
    }
}

/// Solve a standard-form LP. Deterministic for identical inputs.
pub fn solve(lp: &StandardForm) -> Result<LpOutcome, SimplexError> {
    let m = lp.num_rows;
    let n = lp.num_cols;
    let total = n + m; // structural columns + one artificial per row

    // Normalize rhs signs so the artificial basis is primal feasible.
    let mut flip = vec![1.0; m];
    let mut t = vec![0.0; m * total];
    let mut rhs = vec![0.0; m];
    for r in 0..m {
        if lp.b[r] < 0.0 {
            flip[r] = -1.0;
        }
        rhs[r] = lp.b[r] * flip[r];
        for j in 0..n {
            t[r * total + j] = lp.coeff(r, j) * flip[r];
        }
        t[r * total + n + r] = 1.0;
    }

    let mut tab = Tableau {
        rows: m,
        cols: total,
        t,
        rhs,
        basis: (n..n + m).collect(),
    };

    let max_iters = 400 * (total + 1);

    // Phase 1: minimize the sum of artificials.
    let mut phase1_costs = vec![0.0; total];
    phase1_costs[n..total].fill(1.0);
    let mut iterations = 0;
    loop {
        if iterations > max_iters {
            return Err(SimplexError {
                phase: "phase 1",
                iterations,
                objective: phase_objective(&tab, &phase1_costs),
            });
        }
        iterations += 1;
        match tab.bland_step(&phase1_costs, total) {
            Ok(true) => break,
            Ok(false) => continue,
            Err(()) => unreachable!("phase-1 objective is bounded below by zero"),
        }
    }
    if phase_objective(&tab, &phase1_costs) > 1e-7 {
        return Ok(LpOutcome::Infeasible);
    }

    // Drive any artificial that is still basic (at zero) out of the basis;
    // rows that cannot be pivoted are linearly dependent and get dropped.
    let mut kept_rows: Vec<usize> = Vec::with_capacity(m);
    let mut drop_rows: Vec<usize> = Vec::new();
    for r in 0..m {
        if tab.basis[r] < n {
            kept_rows.push(r);
            continue;
        }
        let pivot_col = (0..n).find(|&j| !tab.basis.contains(&j) && tab.at(r, j).abs() > TOL);
        match pivot_col {
            Some(j) => {
                tab.pivot(r, j);
                kept_rows.push(r);
            }
            None => drop_rows.push(r),
        }
    }
    if !drop_rows.is_empty() {
        let mut new_t = Vec::with_capacity(kept_rows.len() * total);
        let mut new_rhs = Vec::with_capacity(kept_rows.len());
        let mut new_basis = Vec::with_capacity(kept_rows.len());
        for &r in &kept_rows {
            new_t.extend_from_slice(&tab.t[r * total..(r + 1) * total]);
            new_rhs.push(tab.rhs[r]);
            new_basis.push(tab.basis[r]);
        }
        tab = Tableau {
            rows: kept_rows.len(),
            cols: total,
            t: new_t,
            rhs: new_rhs,
            basis: new_basis,
        };
    }

    // Phase 2: original objective, artificials barred from entering.
    let mut phase2_costs = vec![0.0; total];
    phase2_costs[..n].copy_from_slice(&lp.c);
    let mut iterations2 = 0;
    loop {
        if iterations2 > max_iters {
            return Err(SimplexError {
                phase: "phase 2",
                iterations: iterations2,
                objective: phase_objective(&tab, &phase2_costs),
            });
        }
        iterations2 += 1;
        match tab.bland_step(&phase2_costs, n) {
            Ok(true) => break,
            Ok(false) => continue,
            Err(()) => return Ok(LpOutcome::Unbounded),
        }
    }

    let mut x = vec![0.0; n];
    for (r, &var) in tab.basis.iter().enumerate() {
        if var < n {
            x[var] = tab.rhs[r];
        }
    }
    let value = lp.c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    let dual = recover_dual(lp, &flip, &kept_rows, drop_rows.is_empty(), &tab.basis);
    Ok(LpOutcome::Optimal(LpSolution { x, value, dual }))
}

fn phase_objective(tab: &Tableau, costs: &[f64]) -> f64 {
    tab.basis
        .iter()
        .zip(&tab.rhs)
        .map(|(&var, &v)| costs[var] * v)
        .sum()
}

/// Recover y from Bᵀy = c_B using the original columns of the final basis.
/// Dropped (redundant) rows get a zero multiplier.
fn recover_dual(
    lp: &StandardForm,
    flip: &[f64],
    kept_rows: &[usize],
    all_kept: bool,
    basis: &[usize],
) -> Vec<f64> {
    let rows: Vec<usize> = if all_kept {
        (0..lp.num_rows).collect()
    } else {
        kept_rows.to_vec()
    };
    let k = rows.len();
    debug_assert_eq!(k, basis.len());
    // Solve (B^T) y = c_B over the kept rows.
    let mut mat = vec![0.0; k * k];
    let mut rhs = vec![0.0; k];
    for (bi, &var) in basis.iter().enumerate() {
        for (ri, &row) in rows.iter().enumerate() {
            mat[bi * k + ri] = lp.coeff(row, var) * flip[row];
        }
        rhs[bi] = lp.c[var];
    }
    let mut dual = vec![0.0; lp.num_rows];
    if let Some(y) = solve_linear_system(k, &mut mat, &mut rhs) {
        for (ri, &row) in rows.iter().enumerate() {
            dual[row] = y[ri] * flip[row];
        }
    }
    dual
}

/// Gaussian elimination with partial pivoting; `mat` is row-major n×n and is
/// consumed. Returns None when the matrix is numerically singular.
pub(crate) fn solve_linear_system(n: usize, mat: &mut [f64], rhs: &mut [f64]) -> Option<Vec<f64>> {
    debug_assert_eq!(mat.len(), n * n);
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&a, &b| {
                mat[a * n + col]
                    .abs()
                    .partial_cmp(&mat[b * n + col].abs())
                    .unwrap()
            })
            .unwrap();
        if mat[pivot_row * n + col].abs() < 1e-12 {
            return None;
        }
        if pivot_row != col {
            for j in 0..n {
                mat.swap(col * n + j, pivot_row * n + j);
            }
            rhs.swap(col, pivot_row);
        }
        let pivot = mat[col * n + col];
        for r in (col + 1)..n {
            let factor = mat[r * n + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                let delta = factor * mat[col * n + j];
                mat[r * n + j] -= delta;
            }
            rhs[r] -= factor * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for j in (row + 1)..n {
            acc -= mat[row * n + j] * x[j];
        }
        x[row] = acc / mat[row * n + row];
    }
    Some(x)
}
