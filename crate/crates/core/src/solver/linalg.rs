//! Minimal sparse linear algebra for the Newton systems: compressed
//! sparse row storage assembled row by row, and BiCGSTAB with Jacobi
//! (diagonal) preconditioning. The Jacobians here are nonsymmetric
//! (one-sided boundary rows, first-order transport terms), which rules out
//! plain CG; BiCGSTAB with a diagonal preconditioner is enough because the
//! rows are strongly diagonally dominated by the second-order stencil.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub(crate) struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

/// Row-by-row assembler. Entries within a row may repeat; they are merged
/// on `finish_row`.
pub(crate) struct CsrBuilder {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    current: Vec<(usize, f64)>,
}

impl CsrBuilder {
    pub fn new(n: usize) -> Self {
        CsrBuilder {
            n,
            row_ptr: vec![0],
            cols: Vec::new(),
            vals: Vec::new(),
            current: Vec::new(),
        }
    }

    pub fn add(&mut self, col: usize, val: f64) {
        debug_assert!(col < self.n);
        self.current.push((col, val));
    }

    pub fn finish_row(&mut self) {
        self.current.sort_unstable_by_key(|&(c, _)| c);
        let mut iter = self.current.drain(..).peekable();
        while let Some((col, mut val)) = iter.next() {
            while let Some(&(c, v)) = iter.peek() {
                if c != col {
                    break;
                }
                val += v;
                iter.next();
            }
            self.cols.push(col);
            self.vals.push(val);
        }
        self.row_ptr.push(self.cols.len());
    }

    pub fn finish(self) -> Result<CsrMatrix> {
        if self.row_ptr.len() != self.n + 1 {
            return Err(Error::Dimension(format!(
                "assembled {} rows for a {} x {} matrix",
                self.row_ptr.len() - 1,
                self.n,
                self.n
            )));
        }
        Ok(CsrMatrix {
            n: self.n,
            row_ptr: self.row_ptr,
            cols: self.cols,
            vals: self.vals,
        })
    }
}

impl CsrMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Column indices and values of row i.
    #[cfg(test)]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[span.clone()], &self.vals[span])
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[idx] * x[self.cols[idx]];
            }
            y[i] = acc;
        }
    }

    /// Diagonal entries, with zeros replaced by 1 so the Jacobi scaling is
    /// always defined.
    fn jacobi_diagonal(&self) -> Vec<f64> {
        let mut d = vec![1.0; self.n];
        for i in 0..self.n {
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.cols[idx] == i && self.vals[idx] != 0.0 {
                    d[i] = self.vals[idx];
                }
            }
        }
        d
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves A x = b to a relative residual `rel_tol` (against the 2-norm of
/// b), starting from zero. Returns the solution with the iteration count
/// and the achieved relative residual.
pub(crate) fn bicgstab(
    a: &CsrMatrix,
    b: &[f64],
    rel_tol: f64,
    max_iters: usize,
) -> Result<(Vec<f64>, usize, f64)> {
    let n = a.n();
    if b.len() != n {
        return Err(Error::Dimension(format!(
            "right-hand side has {} entries for a {n} x {n} matrix",
            b.len()
        )));
    }
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok((vec![0.0; n], 0, 0.0));
    }
    let inv_diag: Vec<f64> = a.jacobi_diagonal().iter().map(|d| 1.0 / d).collect();

    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let r_hat = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut p_hat = vec![0.0; n];
    let mut s_hat = vec![0.0; n];
    let mut t = vec![0.0; n];

    let mut best_rel = norm(&r) / b_norm;
    for iter in 1..=max_iters {
        let rho_new = dot(&r_hat, &r);
        if rho_new.abs() < f64::MIN_POSITIVE * 1e10 {
            break; // breakdown; report stagnation below
        }
        let beta = (rho_new / rho) * (alpha / omega);
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        for i in 0..n {
            p_hat[i] = p[i] * inv_diag[i];
        }
        a.matvec(&p_hat, &mut v);
        let denom = dot(&r_hat, &v);
        if denom.abs() < f64::MIN_POSITIVE * 1e10 {
            break;
        }
        alpha = rho_new / denom;
        // s lives in r's storage from here on.
        for i in 0..n {
            r[i] -= alpha * v[i];
        }
        let s_rel = norm(&r) / b_norm;
        if s_rel <= rel_tol {
            for i in 0..n {
                x[i] += alpha * p_hat[i];
            }
            return Ok((x, iter, s_rel));
        }
        for i in 0..n {
            s_hat[i] = r[i] * inv_diag[i];
        }
        a.matvec(&s_hat, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            break;
        }
        omega = dot(&t, &r) / tt;
        for i in 0..n {
            x[i] += alpha * p_hat[i] + omega * s_hat[i];
        }
        for i in 0..n {
            r[i] -= omega * t[i];
        }
        let rel = norm(&r) / b_norm;
        best_rel = best_rel.min(rel);
        if rel <= rel_tol {
            return Ok((x, iter, rel));
        }
        if omega == 0.0 {
            break;
        }
        rho = rho_new;
    }
    Err(Error::LinearSolveFailure {
        iterations: max_iters,
        relative_residual: best_rel,
    })
}
