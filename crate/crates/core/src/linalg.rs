//! Dense SPD factorisation, CSR sparse matrices and a Jacobi-preconditioned
//! conjugate-gradient solver.
//!
//! Solver roles in this crate are fixed by design:
//! - per-cell mass systems of fully-discontinuous spaces are solved by dense
//!   Cholesky, exactly (to roundoff); conservation arguments rely on this;
//! - global mass systems of spaces with continuous directions are solved by
//!   CG to a finite relative tolerance, recorded in run metadata; operators
//!   whose contract includes exact conservation polish the result with one
//!   iterative-refinement pass.

use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor of a small SPD matrix, stored row-major
/// in the lower triangle of `l`.
#[derive(Debug, Clone)]
pub struct DenseChol {
    n: usize,
    l: Vec<f64>,
}

impl DenseChol {
    /// Factors a row-major symmetric positive-definite `n x n` matrix.
    /// Fails with [`Error::Solver`] if a pivot is not strictly positive,
    /// which for mass matrices signals a non-positive weight field.
    pub fn factor(a: &[f64], n: usize) -> Result<Self> {
        assert_eq!(a.len(), n * n, "matrix size mismatch");
        let mut l = a.to_vec();
        for j in 0..n {
            let mut d = l[j * n + j];
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Solver(format!(
                    "Cholesky pivot {j} is {d:.3e}; matrix not positive definite"
                )));
            }
            let dj = d.sqrt();
            l[j * n + j] = dj;
            for i in (j + 1)..n {
                let mut s = l[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / dj;
            }
        }
        // Zero the strict upper triangle so the factor is self-describing.
        for i in 0..n {
            for j in (i + 1)..n {
                l[i * n + j] = 0.0;
            }
        }
        Ok(Self { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place, overwriting `b` with `x`.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        assert_eq!(b.len(), n, "rhs size mismatch");
        // Forward substitution L y = b.
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[i * n + k] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
        // Back substitution L^T x = y.
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= self.l[k * n + i] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
    }
}

/// Compressed sparse row matrix (square, symmetric usage only).
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from unordered triplets, summing duplicates.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            rows[i].push((j, v));
        }
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for row in &mut rows {
            row.sort_by_key(|&(j, _)| j);
            let mut last: Option<usize> = None;
            for &(j, v) in row.iter() {
                if last == Some(j) {
                    *data.last_mut().expect("duplicate without predecessor") += v;
                } else {
                    indices.push(j);
                    data.push(v);
                    last = Some(j);
                }
            }
            indptr.push(indices.len());
        }
        Self { n, indptr, indices, data }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        for i in 0..self.n {
            let mut s = 0.0;
            for k in self.indptr[i]..self.indptr[i + 1] {
                s += self.data[k] * x[self.indices[k]];
            }
            y[i] = s;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for i in 0..self.n {
            for k in self.indptr[i]..self.indptr[i + 1] {
                if self.indices[k] == i {
                    d[i] = self.data[k];
                }
            }
        }
        d
    }
}

/// Outcome of a CG solve; `iterations` and the achieved relative residual
/// are surfaced so the runner can record them.
#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub rel_residual: f64,
}

/// Preconditioned conjugate gradients with zero initial guess, stopping at
/// `||b - A x||_2 <= rtol * ||b||_2`. `apply_prec` computes z = P⁻¹r.
fn pcg(
    a: &CsrMatrix,
    b: &[f64],
    rtol: f64,
    max_iter: usize,
    mut apply_prec: impl FnMut(&[f64], &mut [f64]),
) -> Result<CgOutcome> {
    let n = a.n;
    assert_eq!(b.len(), n);
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if bnorm == 0.0 {
        return Ok(CgOutcome { x: vec![0.0; n], iterations: 0, rel_residual: 0.0 });
    }
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    apply_prec(&r, &mut z);
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    let tol = rtol * bnorm;
    let mut rnorm = bnorm;
    for it in 0..max_iter {
        if rnorm <= tol {
            return Ok(CgOutcome { x, iterations: it, rel_residual: rnorm / bnorm });
        }
        a.matvec(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            return Err(Error::Solver(format!(
                "CG breakdown: p^T A p = {pap:.3e} at iteration {it}"
            )));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        apply_prec(&r, &mut z);
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if rnorm <= tol {
        Ok(CgOutcome { x, iterations: max_iter, rel_residual: rnorm / bnorm })
    } else {
        Err(Error::Solver(format!(
            "CG did not reach rtol {rtol:.1e} in {max_iter} iterations (residual {:.3e})",
            rnorm / bnorm
        )))
    }
}

fn positive_diagonal(a: &CsrMatrix) -> Result<Vec<f64>> {
    let diag = a.diagonal();
    if diag.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::Solver("CG needs a strictly positive diagonal".into()));
    }
    Ok(diag)
}

/// Jacobi-preconditioned conjugate gradients.
pub fn cg_jacobi(a: &CsrMatrix, b: &[f64], rtol: f64, max_iter: usize) -> Result<CgOutcome> {
    let inv_diag: Vec<f64> = positive_diagonal(a)?.iter().map(|d| 1.0 / d).collect();
    pcg(a, b, rtol, max_iter, |r, z| {
        for i in 0..a.n {
            z[i] = r[i] * inv_diag[i];
        }
    })
}

/// Symmetric-Gauss-Seidel-preconditioned conjugate gradients:
/// P = (D+L) D⁻¹ (D+U), applied as a forward sweep, a diagonal scaling and
/// a backward sweep. Requires the symmetric matrix's rows to be sorted by
/// column (as `from_triplets` produces).
pub fn cg_sgs(a: &CsrMatrix, b: &[f64], rtol: f64, max_iter: usize) -> Result<CgOutcome> {
    let diag = positive_diagonal(a)?;
    let mut y = vec![0.0; a.n];
    pcg(a, b, rtol, max_iter, |r, z| {
        for i in 0..a.n {
            let mut s = r[i];
            for k in a.indptr[i]..a.indptr[i + 1] {
                let j = a.indices[k];
                if j >= i {
                    break;
                }
                s -= a.data[k] * y[j];
            }
            y[i] = s / diag[i];
        }
        for i in (0..a.n).rev() {
            let mut s = y[i] * diag[i];
            for k in (a.indptr[i]..a.indptr[i + 1]).rev() {
                let j = a.indices[k];
                if j <= i {
                    break;
                }
                s -= a.data[k] * z[j];
            }
            z[i] = s / diag[i];
        }
    })
}
