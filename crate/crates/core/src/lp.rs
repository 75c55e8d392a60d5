//! Dense linear programming in standard form.
//!
//! `minimize c'z  s.t.  A z = b,  G z <= h,  z >= 0`
//!
//! solved by a two-phase primal simplex on a dense tableau. Entering columns
//! use Dantzig pricing and fall back to Bland's rule after a stall, which
//! guarantees termination on the degenerate problems produced by the
//! occupation-measure formulation. The solver is deterministic: the same
//! program always produces the same pivot sequence and the same vertex.

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Pivot elements smaller than this are treated as zero.
const PIVOT_TOL: f64 = 1e-10;
/// Reduced-cost optimality tolerance.
const OPT_TOL: f64 = 1e-9;
/// Primal feasibility tolerance (phase-1 objective and residual checks).
const FEAS_TOL: f64 = 1e-9;
/// Consecutive non-improving pivots before switching to Bland's rule.
const STALL_LIMIT: usize = 64;
const MAX_PIVOTS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    /// Values of the original variables (slacks excluded). Empty unless optimal.
    pub values: Vec<f64>,
    pub objective_value: f64,
    pub status: LpStatus,
}

#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub n_vars: usize,
    pub objective: Vec<f64>,
    pub eq_matrix: Mat,
    pub eq_rhs: Vec<f64>,
    pub ub_matrix: Mat,
    pub ub_rhs: Vec<f64>,
}

impl LinearProgram {
    pub fn new(
        objective: Vec<f64>,
        eq_matrix: Mat,
        eq_rhs: Vec<f64>,
        ub_matrix: Mat,
        ub_rhs: Vec<f64>,
    ) -> Result<Self> {
        let n = objective.len();
        if n == 0 {
            return Err(Error::Dimension("LP has no variables".into()));
        }
        if eq_matrix.rows != eq_rhs.len() || (eq_matrix.rows > 0 && eq_matrix.cols != n) {
            return Err(Error::Dimension(format!(
                "equality block {}x{} with rhs {} does not match {} variables",
                eq_matrix.rows,
                eq_matrix.cols,
                eq_rhs.len(),
                n
            )));
        }
        if ub_matrix.rows != ub_rhs.len() || (ub_matrix.rows > 0 && ub_matrix.cols != n) {
            return Err(Error::Dimension(format!(
                "inequality block {}x{} with rhs {} does not match {} variables",
                ub_matrix.rows,
                ub_matrix.cols,
                ub_rhs.len(),
                n
            )));
        }
        Ok(LinearProgram {
            n_vars: n,
            objective,
            eq_matrix,
            eq_rhs,
            ub_matrix,
            ub_rhs,
        })
    }

    pub fn num_constraints(&self) -> usize {
        self.eq_rhs.len() + self.ub_rhs.len()
    }
}

struct Tableau {
    /// Constraint rows followed by one cost row; `width` includes the rhs.
    data: Vec<f64>,
    rows: usize,
    width: usize,
    basis: Vec<usize>,
    n_struct: usize,
    bland: bool,
    stall: usize,
    last_obj: f64,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    #[inline]
    fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.width..(r + 1) * self.width]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.width - 1)
    }

    fn n_cols(&self) -> usize {
        self.width - 1
    }

    /// Rebuilds the cost row for the given cost vector by pricing out the
    /// current basis.
    fn install_costs(&mut self, costs: &[f64]) {
        let width = self.width;
        let cost_row_idx = self.rows;
        for c in 0..width {
            self.data[cost_row_idx * width + c] = if c < costs.len() { costs[c] } else { 0.0 };
        }
        for r in 0..self.rows {
            let cb = costs.get(self.basis[r]).copied().unwrap_or(0.0);
            if cb == 0.0 {
                continue;
            }
            let (head, tail) = self.data.split_at_mut(cost_row_idx * width);
            let cost_row = &mut tail[..width];
            let row = &head[r * width..(r + 1) * width];
            for (d, s) in cost_row.iter_mut().zip(row) {
                *d -= cb * s;
            }
        }
        self.bland = false;
        self.stall = 0;
        self.last_obj = -self.rhs(self.rows);
    }

    fn choose_entering(&self, allow: impl Fn(usize) -> bool) -> Option<usize> {
        let cost = &self.data[self.rows * self.width..];
        if self.bland {
            (0..self.n_cols()).find(|&j| allow(j) && cost[j] < -OPT_TOL)
        } else {
            let mut best = None;
            let mut best_val = -OPT_TOL;
            for j in 0..self.n_cols() {
                if allow(j) && cost[j] < best_val {
                    best_val = cost[j];
                    best = Some(j);
                }
            }
            best
        }
    }

    /// Minimum-ratio test. Negative right-hand sides (phase-transition noise)
    /// are treated as zero so a ratio can never go negative. In normal mode a
    /// second pass picks the numerically largest pivot among the rows within
    /// a small slack of the minimal ratio; in Bland mode the row with the
    /// smallest basic index wins, which keeps the fallback anti-cycling.
    fn choose_leaving(&self, enter: usize) -> Option<usize> {
        let mut theta = f64::INFINITY;
        for r in 0..self.rows {
            let a = self.at(r, enter);
            if a > PIVOT_TOL {
                theta = theta.min(self.rhs(r).max(0.0) / a);
            }
        }
        if theta.is_infinite() {
            return None;
        }
        let slack = 1e-10 + 1e-9 * theta;
        let mut best: Option<(usize, f64)> = None;
        for r in 0..self.rows {
            let a = self.at(r, enter);
            if a > PIVOT_TOL && self.rhs(r).max(0.0) / a <= theta + slack {
                let better = match best {
                    None => true,
                    Some((br, ba)) => {
                        if self.bland {
                            self.basis[r] < self.basis[br]
                        } else {
                            a > ba
                        }
                    }
                };
                if better {
                    best = Some((r, a));
                }
            }
        }
        best.map(|(r, _)| r)
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let width = self.width;
        let inv = 1.0 / self.at(row, col);
        for v in self.row_mut(row) {
            *v *= inv;
        }
        self.data[row * width + col] = 1.0;
        for r in 0..=self.rows {
            if r == row {
                continue;
            }
            let f = self.at(r, col);
            if f == 0.0 {
                continue;
            }
            let (pivot_row, target_row) = if r < row {
                let (a, b) = self.data.split_at_mut(row * width);
                (&b[..width], &mut a[r * width..(r + 1) * width])
            } else {
                let (a, b) = self.data.split_at_mut(r * width);
                (&a[row * width..(row + 1) * width], &mut b[..width])
            };
            for (t, p) in target_row.iter_mut().zip(pivot_row) {
                *t -= f * p;
            }
            self.data[r * width + col] = 0.0;
        }
        self.basis[row] = col;
    }

    fn note_progress(&mut self) {
        let obj = -self.rhs(self.rows);
        if obj < self.last_obj - 1e-12 {
            self.stall = 0;
        } else {
            self.stall += 1;
            if self.stall >= STALL_LIMIT {
                self.bland = true;
            }
        }
        self.last_obj = obj;
    }
}

/// Solves the program. `Infeasible` and `Unbounded` are reported through the
/// solution status; `Err` is reserved for solver breakdown (pivot cap).
pub fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    let n = lp.n_vars;
    let m_eq = lp.eq_rhs.len();
    let m_ub = lp.ub_rhs.len();
    let m = m_eq + m_ub;
    let n_struct = n + m_ub;

    if m == 0 {
        // Without constraints the optimum is z = 0 unless some cost is
        // negative, in which case the program is unbounded below.
        if lp.objective.iter().any(|&c| c < -OPT_TOL) {
            return Ok(LpSolution {
                values: Vec::new(),
                objective_value: f64::NEG_INFINITY,
                status: LpStatus::Unbounded,
            });
        }
        return Ok(LpSolution {
            values: vec![0.0; n],
            objective_value: 0.0,
            status: LpStatus::Optimal,
        });
    }

    // Rows that end up with a negative rhs are flipped; flipped inequality
    // rows lose their slack as a basis candidate and get an artificial.
    let mut need_art: Vec<bool> = vec![false; m];
    let mut flip: Vec<bool> = vec![false; m];
    for (i, &b) in lp.eq_rhs.iter().enumerate() {
        flip[i] = b < 0.0;
        need_art[i] = true;
    }
    for (k, &h) in lp.ub_rhs.iter().enumerate() {
        let i = m_eq + k;
        flip[i] = h < 0.0;
        need_art[i] = flip[i];
    }
    let n_art = need_art.iter().filter(|&&x| x).count();
    let width = n_struct + n_art + 1;

    let mut t = Tableau {
        data: vec![0.0; (m + 1) * width],
        rows: m,
        width,
        basis: vec![0; m],
        n_struct,
        bland: false,
        stall: 0,
        last_obj: f64::INFINITY,
    };

    let mut art_col = n_struct;
    for i in 0..m {
        let sgn = if flip[i] { -1.0 } else { 1.0 };
        let (coeffs, rhs): (&[f64], f64) = if i < m_eq {
            (lp.eq_matrix.row(i), lp.eq_rhs[i])
        } else {
            (lp.ub_matrix.row(i - m_eq), lp.ub_rhs[i - m_eq])
        };
        {
            let row = t.row_mut(i);
            for (j, &a) in coeffs.iter().enumerate() {
                row[j] = sgn * a;
            }
            if i >= m_eq {
                row[n + (i - m_eq)] = sgn; // slack for G z + s = h
            }
            row[width - 1] = sgn * rhs;
        }
        if need_art[i] {
            *t.row_mut(i).get_mut(art_col).unwrap() = 1.0;
            t.basis[i] = art_col;
            art_col += 1;
        } else {
            t.basis[i] = n + (i - m_eq);
        }
    }

    // Phase 1: minimize the sum of artificials.
    let mut phase1_cost = vec![0.0; n_struct + n_art];
    for c in n_struct..n_struct + n_art {
        phase1_cost[c] = 1.0;
    }
    t.install_costs(&phase1_cost);
    run_simplex(&mut t, |_| true)?;
    let rhs_scale = lp
        .eq_rhs
        .iter()
        .chain(lp.ub_rhs.iter())
        .fold(1.0_f64, |acc, &v| acc.max(v.abs()));
    if -t.rhs(m) > FEAS_TOL * rhs_scale {
        return Ok(LpSolution {
            values: Vec::new(),
            objective_value: f64::NAN,
            status: LpStatus::Infeasible,
        });
    }

    // Drive artificials out of the basis on a numerically solid pivot; rows
    // without one are redundant and stay inert at level zero.
    for r in 0..m {
        if t.basis[r] >= n_struct {
            let col = (0..n_struct)
                .filter(|&j| t.at(r, j).abs() > 1e-7)
                .max_by(|&a, &b| t.at(r, a).abs().total_cmp(&t.at(r, b).abs()));
            if let Some(col) = col {
                t.pivot(r, col);
            }
        }
    }

    // Phase 2 on the real objective; artificial columns are locked out.
    let mut phase2_cost = vec![0.0; n_struct + n_art];
    phase2_cost[..n].copy_from_slice(&lp.objective);
    t.install_costs(&phase2_cost);
    let n_struct_limit = n_struct;
    let unbounded = run_simplex(&mut t, |j| j < n_struct_limit)?;
    if unbounded {
        return Ok(LpSolution {
            values: Vec::new(),
            objective_value: f64::NEG_INFINITY,
            status: LpStatus::Unbounded,
        });
    }

    let mut values = vec![0.0; n];
    for r in 0..m {
        let b = t.basis[r];
        if b < n {
            values[b] = t.rhs(r);
        }
    }
    let objective_value: f64 = values
        .iter()
        .zip(&lp.objective)
        .map(|(v, c)| v * c)
        .sum();

    validate(lp, &values)?;
    Ok(LpSolution {
        values,
        objective_value,
        status: LpStatus::Optimal,
    })
}

/// Runs pivots until optimality. Returns true if the objective is unbounded.
fn run_simplex(t: &mut Tableau, allow: impl Fn(usize) -> bool) -> Result<bool> {
    for _ in 0..MAX_PIVOTS {
        let enter = match t.choose_entering(&allow) {
            Some(j) => j,
            None => return Ok(false),
        };
        let leave = match t.choose_leaving(enter) {
            Some(r) => r,
            None => return Ok(true),
        };
        t.pivot(leave, enter);
        t.note_progress();
    }
    Err(Error::Numerical(format!(
        "simplex did not terminate within {MAX_PIVOTS} pivots \
         ({} structural vars, {} rows)",
        t.n_struct,
        t.rows
    )))
}

/// Residual check on a claimed-optimal point, enforcing the advertised
/// solution guarantees.
fn validate(lp: &LinearProgram, z: &[f64]) -> Result<()> {
    let scale = lp
        .eq_rhs
        .iter()
        .chain(lp.ub_rhs.iter())
        .fold(1.0_f64, |acc, &v| acc.max(v.abs()));
    if let Some(v) = z.iter().find(|v| **v < -1e-10) {
        return Err(Error::Numerical(format!(
            "simplex returned negative variable {v}"
        )));
    }
    for (i, &b) in lp.eq_rhs.iter().enumerate() {
        let lhs: f64 = lp
            .eq_matrix
            .row(i)
            .iter()
            .zip(z)
            .map(|(a, v)| a * v)
            .sum();
        if (lhs - b).abs() > 1e-8 * scale {
            return Err(Error::Numerical(format!(
                "equality residual {} in row {i}",
                lhs - b
            )));
        }
    }
    for (i, &h) in lp.ub_rhs.iter().enumerate() {
        let lhs: f64 = lp
            .ub_matrix
            .row(i)
            .iter()
            .zip(z)
            .map(|(a, v)| a * v)
            .sum();
        if lhs - h > 1e-8 * scale {
            return Err(Error::Numerical(format!(
                "inequality violation {} in row {i}",
                lhs - h
            )));
        }
    }
    Ok(())
}
