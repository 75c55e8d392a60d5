//! Minimal dense linear algebra used by the solvers: row-major matrices and
//! an LU solve with partial pivoting. Everything here operates on problems
//! with at most a few hundred unknowns.

use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Dimension("ragged matrix rows".into()));
        }
        Ok(Mat {
            rows: r,
            cols: c,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// y = self^T x (x indexed over rows, y over columns).
    pub fn transpose_apply(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(y.len(), self.cols);
        y.fill(0.0);
        for r in 0..self.rows {
            let xr = x[r];
            if xr == 0.0 {
                continue;
            }
            let row = self.row(r);
            for (yc, a) in y.iter_mut().zip(row) {
                *yc += xr * a;
            }
        }
    }
}

/// Solves the dense square system `a x = b` in place by LU with partial
/// pivoting. `a` is consumed as scratch.
pub fn lu_solve(mut a: Mat, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = a.rows;
    if a.cols != n || b.len() != n {
        return Err(Error::Dimension(format!(
            "lu_solve: {}x{} system with rhs of length {}",
            a.rows,
            a.cols,
            b.len()
        )));
    }
    for col in 0..n {
        let mut pivot = col;
        let mut best = a.at(col, col).abs();
        for r in col + 1..n {
            let v = a.at(r, col).abs();
            if v > best {
                best = v;
                pivot = r;
            }
        }
        if best < 1e-13 {
            return Err(Error::Numerical("singular linear system".into()));
        }
        if pivot != col {
            for c in 0..n {
                let tmp = a.at(col, c);
                *a.at_mut(col, c) = a.at(pivot, c);
                *a.at_mut(pivot, c) = tmp;
            }
            b.swap(col, pivot);
        }
        let d = a.at(col, col);
        for r in col + 1..n {
            let f = a.at(r, col) / d;
            if f == 0.0 {
                continue;
            }
            *a.at_mut(r, col) = 0.0;
            for c in col + 1..n {
                *a.at_mut(r, c) -= f * a.at(col, c);
            }
            b[r] -= f * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut v = b[col];
        for c in col + 1..n {
            v -= a.at(col, c) * b[c];
        }
        b[col] = v / a.at(col, col);
    }
    Ok(b)
}

/// Stationary distribution of a row-stochastic matrix via a direct linear
/// solve of `pi P = pi`, `sum pi = 1`. Works for periodic chains too; the
/// result is validated and lightly clamped.
pub fn stationary_by_solve(p: &Mat) -> Result<Vec<f64>> {
    let n = p.rows;
    if p.cols != n {
        return Err(Error::Dimension("stationary: matrix not square".into()));
    }
    if n == 1 {
        return Ok(vec![1.0]);
    }
    // Rows of A: (P^T - I) pi = 0 with the last equation replaced by sum = 1.
    let mut a = Mat::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            *a.at_mut(r, c) = p.at(c, r) - if r == c { 1.0 } else { 0.0 };
        }
    }
    for c in 0..n {
        *a.at_mut(n - 1, c) = 1.0;
    }
    let mut b = vec![0.0; n];
    b[n - 1] = 1.0;
    let mut pi = lu_solve(a, b)?;
    let mut sum = 0.0;
    for v in pi.iter_mut() {
        if *v < 0.0 {
            if *v < -1e-9 {
                return Err(Error::Model(
                    "chain has no unique stationary distribution".into(),
                ));
            }
            *v = 0.0;
        }
        sum += *v;
    }
    if !(sum.is_finite() && (sum - 1.0).abs() < 1e-6) {
        return Err(Error::Model(
            "chain has no unique stationary distribution".into(),
        ));
    }
    for v in pi.iter_mut() {
        *v /= sum;
    }
    // Residual check guards against multiple recurrent classes slipping past
    // the solve.
    let mut residual: f64 = 0.0;
    for c in 0..n {
        let mut acc = 0.0;
        for r in 0..n {
            acc += pi[r] * p.at(r, c);
        }
        residual = residual.max((acc - pi[c]).abs());
    }
    if residual > 1e-8 {
        return Err(Error::Model(
            "stationary distribution residual too large (non-ergodic chain?)".into(),
        ));
    }
    Ok(pi)
}
