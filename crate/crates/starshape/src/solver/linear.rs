//! Sparse linear backends for the Newton correction.
//!
//! Planar grids produce narrowly banded systems because nodes are numbered
//! with the short cross axis fastest, so a banded no-pivot factorization is
//! exact and fast. Spatial grids fall back to BiCGStab with diagonal
//! scaling: the bandwidth there grows like the squared cross extent and
//! direct elimination stops paying for itself.

use crate::error::Error;
use crate::exec;
use crate::linalg;
use crate::Result;

/// Relative residual target for the iterative branch.
pub const KRYLOV_TOL: f64 = 1e-10;

const KRYLOV_MAX_ITER: usize = 20_000;

/// Compressed sparse rows with per-row column-sorted entries.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n: usize,
    rowptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Assembles from per-row entry lists; entries in one row are summed if
    /// they repeat and stored sorted by column.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut rowptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        rowptr.push(0);
        for mut row in rows {
            row.sort_unstable_by_key(|&(c, _)| c);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for (c, v) in row {
                match merged.last_mut() {
                    Some(last) if last.0 == c => last.1 += v,
                    _ => merged.push((c, v)),
                }
            }
            for (c, v) in merged {
                cols.push(c);
                vals.push(v);
            }
            rowptr.push(cols.len());
        }
        CsrMatrix { n, rowptr, cols, vals }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let lo = self.rowptr[i];
        let hi = self.rowptr[i + 1];
        match self.cols[lo..hi].binary_search(&j) {
            Ok(k) => self.vals[lo + k],
            Err(_) => 0.0,
        }
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.rowptr[i];
        let hi = self.rowptr[i + 1];
        (&self.cols[lo..hi], &self.vals[lo..hi])
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        let (_, vals) = self.row(i);
        vals.iter().sum()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        exec::map(self.n, |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum()
        })
    }

    /// Largest column offset from the diagonal over all entries.
    pub fn half_bandwidth(&self) -> usize {
        let mut half = 0usize;
        for i in 0..self.n {
            let (cols, _) = self.row(i);
            for &c in cols {
                half = half.max(i.abs_diff(c));
            }
        }
        half
    }
}

/// Solves `A x = b` by banded LU without pivoting. The Newton matrices are
/// weakly diagonally dominant, so elimination order is safe; a vanishing
/// pivot still raises an error rather than dividing through.
pub fn solve_banded(a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.size();
    let half = a.half_bandwidth();
    let width = 2 * half + 1;
    let mut band = vec![0.0f64; n * width];
    for i in 0..n {
        let (cols, vals) = a.row(i);
        for (&c, &v) in cols.iter().zip(vals) {
            band[i * width + (c + half - i)] = v;
        }
    }

    for k in 0..n {
        let piv = band[k * width + half];
        if piv.abs() < 1e-300 {
            return Err(Error::structural(format!(
                "vanishing pivot at row {k} in banded factorization"
            )));
        }
        let imax = (k + half).min(n - 1);
        for i in k + 1..=imax {
            let lik = band[i * width + (k + half - i)] / piv;
            band[i * width + (k + half - i)] = lik;
            if lik != 0.0 {
                let jmax = (k + half).min(n - 1);
                for j in k + 1..=jmax {
                    let akj = band[k * width + (j + half - k)];
                    if akj != 0.0 {
                        band[i * width + (j + half - i)] -= lik * akj;
                    }
                }
            }
        }
    }

    let mut x = b.to_vec();
    for i in 0..n {
        let jlo = i.saturating_sub(half);
        let mut s = x[i];
        for j in jlo..i {
            s -= band[i * width + (j + half - i)] * x[j];
        }
        x[i] = s;
    }
    for i in (0..n).rev() {
        let jhi = (i + half).min(n - 1);
        let mut s = x[i];
        for j in i + 1..=jhi {
            s -= band[i * width + (j + half - i)] * x[j];
        }
        x[i] = s / band[i * width + half];
    }
    Ok(x)
}

/// Solves `A x = b` by BiCGStab after symmetric-free diagonal row scaling.
/// Returns the solution and the iteration count.
pub fn solve_bicgstab(a: &CsrMatrix, b: &[f64], x0: &[f64]) -> Result<(Vec<f64>, usize)> {
    let n = a.size();
    let mut diag = vec![0.0f64; n];
    for i in 0..n {
        let d = a.entry(i, i);
        if d.abs() < 1e-300 {
            return Err(Error::structural(format!(
                "vanishing diagonal at row {i}; cannot precondition"
            )));
        }
        diag[i] = d;
    }
    let scaled_b: Vec<f64> = b.iter().zip(&diag).map(|(&v, &d)| v / d).collect();
    let apply = |x: &[f64]| -> Vec<f64> {
        let mut y = a.matvec(x);
        for (v, &d) in y.iter_mut().zip(&diag) {
            *v /= d;
        }
        y
    };

    let bnorm = linalg::norm(&scaled_b).max(f64::MIN_POSITIVE);
    let mut x = x0.to_vec();
    let mut r = linalg::sub(&scaled_b, &apply(&x));
    if linalg::norm(&r) <= KRYLOV_TOL * bnorm {
        return Ok((x, 0));
    }
    let rhat = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0f64; n];
    let mut p = vec![0.0f64; n];

    for iter in 1..=KRYLOV_MAX_ITER {
        let rho_next = linalg::dot(&rhat, &r);
        if rho_next.abs() < 1e-300 {
            return Err(Error::no_convergence("Krylov breakdown: rho vanished"));
        }
        let beta = (rho_next / rho) * (alpha / omega);
        rho = rho_next;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        v = apply(&p);
        let denom = linalg::dot(&rhat, &v);
        if denom.abs() < 1e-300 {
            return Err(Error::no_convergence("Krylov breakdown: search collapsed"));
        }
        alpha = rho / denom;
        let s: Vec<f64> = (0..n).map(|i| r[i] - alpha * v[i]).collect();
        if linalg::norm(&s) <= KRYLOV_TOL * bnorm {
            for i in 0..n {
                x[i] += alpha * p[i];
            }
            return Ok((x, iter));
        }
        let t = apply(&s);
        let tt = linalg::dot(&t, &t);
        if tt < 1e-300 {
            return Err(Error::no_convergence("Krylov breakdown: stagnant update"));
        }
        omega = linalg::dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * p[i] + omega * s[i];
        }
        r = (0..n).map(|i| s[i] - omega * t[i]).collect();
        if linalg::norm(&r) <= KRYLOV_TOL * bnorm {
            return Ok((x, iter));
        }
    }
    Err(Error::no_convergence(format!(
        "BiCGStab stalled after {KRYLOV_MAX_ITER} iterations"
    )))
}
