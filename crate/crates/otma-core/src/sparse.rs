//! Sparse linear algebra for the Newton systems: CSR storage, an ILU(0)
//! preconditioner, and BiCGSTAB.
//!
//! The Jacobians assembled by the solver are nonsymmetric (upwind boundary
//! rows, frozen min/max branches) with a mostly local stencil plus one dense
//! column from the additive gauge pin, so a Krylov method with an incomplete
//! factorization is a good fit and keeps the dependency surface small.

use crate::error::{OtmaError, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a square matrix from per-row `(column, value)` lists. Entries
    /// may repeat and arrive unsorted; duplicates are accumulated.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for (c, v) in row {
                debug_assert!(c < n);
                match merged.last_mut() {
                    Some((lc, lv)) if *lc == c => *lv += v,
                    _ => merged.push((c, v)),
                }
            }
            for (c, v) in merged {
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Columns and values of one row.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    /// Entry lookup; absent entries are zero.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// Largest absolute entry of each row (zero for an empty row).
    pub fn row_max_abs(&self) -> Vec<f64> {
        (0..self.n)
            .map(|r| self.row(r).1.iter().fold(0.0f64, |m, v| m.max(v.abs())))
            .collect()
    }

    /// Multiplies each row by its entry of `scale` in place.
    pub fn scale_rows(&mut self, scale: &[f64]) {
        debug_assert_eq!(scale.len(), self.n);
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                self.values[k] *= scale[r];
            }
        }
    }

    /// Adds `mu` to each stored diagonal entry along its own sign (a zero
    /// diagonal moves in the positive direction). Rows whose pattern lacks a
    /// diagonal entry are left untouched.
    pub fn shift_diagonal_signed(&mut self, mu: f64) {
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.col_idx[k] == r {
                    self.values[k] += if self.values[k] < 0.0 { -mu } else { mu };
                    break;
                }
            }
        }
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for r in 0..self.n {
            let (cols, vals) = self.row(r);
            let mut acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                acc += v * x[*c];
            }
            y[r] = acc;
        }
    }
}

/// ILU(0) factorization: incomplete LU restricted to the sparsity pattern of
/// the input, stored with L's unit diagonal implicit.
#[derive(Debug, Clone)]
pub struct Ilu0 {
    lu: CsrMatrix,
    diag: Vec<usize>,
}

/// Computes the ILU(0) factorization. Fails when a structural or numerical
/// zero pivot appears.
pub fn ilu0(a: &CsrMatrix) -> Result<Ilu0> {
    let n = a.n();
    let mut lu = a.clone();
    let mut diag = vec![usize::MAX; n];
    for r in 0..n {
        let (cols, _) = lu.row(r);
        if let Ok(k) = cols.binary_search(&r) {
            diag[r] = lu.row_ptr[r] + k;
        } else {
            return Err(OtmaError::LinearSolve(format!(
                "row {r} has no diagonal entry"
            )));
        }
    }
    // Position lookup scratch: pos[c] = index into values for row r, or MAX.
    let mut pos = vec![usize::MAX; n];
    for r in 0..n {
        let (lo, hi) = (lu.row_ptr[r], lu.row_ptr[r + 1]);
        for k in lo..hi {
            pos[lu.col_idx[k]] = k;
        }
        let mut k = lo;
        while k < hi {
            let pivot_col = lu.col_idx[k];
            if pivot_col >= r {
                break;
            }
            let pivot = lu.values[diag[pivot_col]];
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(OtmaError::LinearSolve(format!(
                    "zero pivot at row {pivot_col}"
                )));
            }
            let factor = lu.values[k] / pivot;
            lu.values[k] = factor;
            let (plo, phi) = (lu.row_ptr[pivot_col], lu.row_ptr[pivot_col + 1]);
            for pk in plo..phi {
                let c = lu.col_idx[pk];
                if c > pivot_col {
                    let here = pos[c];
                    if here != usize::MAX {
                        lu.values[here] -= factor * lu.values[pk];
                    }
                }
            }
            k += 1;
        }
        if lu.values[diag[r]] == 0.0 || !lu.values[diag[r]].is_finite() {
            return Err(OtmaError::LinearSolve(format!("zero pivot at row {r}")));
        }
        for k in lo..hi {
            pos[lu.col_idx[k]] = usize::MAX;
        }
    }
    Ok(Ilu0 { lu, diag })
}

impl Ilu0 {
    /// Solves `L U x = b`.
    pub fn apply(&self, b: &[f64], x: &mut [f64]) {
        let n = self.lu.n();
        debug_assert_eq!(b.len(), n);
        debug_assert_eq!(x.len(), n);
        // Forward substitution with unit lower triangle.
        for r in 0..n {
            let mut acc = b[r];
            let (lo, _) = (self.lu.row_ptr[r], self.lu.row_ptr[r + 1]);
            for k in lo..self.diag[r] {
                acc -= self.lu.values[k] * x[self.lu.col_idx[k]];
            }
            x[r] = acc;
        }
        // Backward substitution.
        for r in (0..n).rev() {
            let hi = self.lu.row_ptr[r + 1];
            let mut acc = x[r];
            for k in self.diag[r] + 1..hi {
                acc -= self.lu.values[k] * x[self.lu.col_idx[k]];
            }
            x[r] = acc / self.lu.values[self.diag[r]];
        }
    }
}

/// Stopping parameters for the Krylov iteration.
#[derive(Debug, Clone, Copy)]
pub struct IterParams {
    /// Relative residual target (against the right-hand side norm).
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for IterParams {
    fn default() -> Self {
        IterParams {
            tol: 1e-9,
            max_iter: 1000,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Outcome of a Krylov solve. `converged` records whether the relative
/// residual target was met; on iteration exhaustion the best iterate seen is
/// returned instead of being discarded, since a partially solved correction
/// is still useful to a damped Newton caller.
#[derive(Debug, Clone)]
pub struct KrylovSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub rel_residual: f64,
    pub converged: bool,
}

/// Preconditioned BiCGSTAB. Fails only on breakdown or non-finite values;
/// iteration exhaustion yields `converged: false` with the best iterate.
pub fn bicgstab(
    a: &CsrMatrix,
    b: &[f64],
    x0: &[f64],
    pre: Option<&Ilu0>,
    params: IterParams,
) -> Result<KrylovSolution> {
    let n = a.n();
    let mut x = x0.to_vec();
    let mut r = vec![0.0; n];
    a.matvec(&x, &mut r);
    for k in 0..n {
        r[k] = b[k] - r[k];
    }
    let bnorm = norm2(b).max(f64::MIN_POSITIVE);
    let mut best_rel = norm2(&r) / bnorm;
    if best_rel <= params.tol {
        return finish(x, 0, best_rel, true);
    }
    let mut best_x = x.clone();
    let rhat = r.clone();
    let mut rho = 1.0f64;
    let mut alpha = 1.0f64;
    let mut omega = 1.0f64;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut phat = vec![0.0; n];
    let mut shat = vec![0.0; n];
    let mut t = vec![0.0; n];
    let precondition = |z: &[f64], out: &mut Vec<f64>| match pre {
        Some(m) => m.apply(z, out),
        None => out.copy_from_slice(z),
    };
    for iter in 1..=params.max_iter {
        let rho_new = dot(&rhat, &r);
        if rho_new.abs() < f64::MIN_POSITIVE || !rho_new.is_finite() {
            return Err(OtmaError::LinearSolve(format!(
                "bicgstab breakdown (rho = {rho_new}) at iteration {iter}"
            )));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        for k in 0..n {
            p[k] = r[k] + beta * (p[k] - omega * v[k]);
        }
        precondition(&p, &mut phat);
        a.matvec(&phat, &mut v);
        let denom = dot(&rhat, &v);
        if denom.abs() < f64::MIN_POSITIVE || !denom.is_finite() {
            return Err(OtmaError::LinearSolve(format!(
                "bicgstab breakdown (rhat.v = {denom}) at iteration {iter}"
            )));
        }
        alpha = rho_new / denom;
        // s reuses r's storage: s = r - alpha v.
        for k in 0..n {
            r[k] -= alpha * v[k];
        }
        let half_rel = norm2(&r) / bnorm;
        if half_rel <= params.tol {
            for k in 0..n {
                x[k] += alpha * phat[k];
            }
            return finish(x, iter, half_rel, true);
        }
        precondition(&r, &mut shat);
        a.matvec(&shat, &mut t);
        let tt = dot(&t, &t);
        if tt < f64::MIN_POSITIVE || !tt.is_finite() {
            return Err(OtmaError::LinearSolve(format!(
                "bicgstab breakdown (t.t = {tt}) at iteration {iter}"
            )));
        }
        omega = dot(&t, &r) / tt;
        if omega.abs() < f64::MIN_POSITIVE || !omega.is_finite() {
            return Err(OtmaError::LinearSolve(format!(
                "bicgstab breakdown (omega = {omega}) at iteration {iter}"
            )));
        }
        for k in 0..n {
            x[k] += alpha * phat[k] + omega * shat[k];
            r[k] -= omega * t[k];
        }
        let rel = norm2(&r) / bnorm;
        if rel <= params.tol {
            return finish(x, iter, rel, true);
        }
        // BiCGSTAB residuals are not monotone; remember the best iterate so
        // exhaustion still hands back the most converged correction seen.
        if rel < best_rel && x.iter().all(|v| v.is_finite()) {
            best_rel = rel;
            best_x.copy_from_slice(&x);
        }
        rho = rho_new;
    }
    finish(best_x, params.max_iter, best_rel, false)
}

fn finish(x: Vec<f64>, iter: usize, rel: f64, converged: bool) -> Result<KrylovSolution> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(KrylovSolution {
            x,
            iterations: iter,
            rel_residual: rel,
            converged,
        })
    } else {
        Err(OtmaError::LinearSolve(
            "bicgstab produced non-finite values".into(),
        ))
    }
}
