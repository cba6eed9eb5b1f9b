//! Direct and iterative solvers for the SPD systems produced by assembly.
//!
//! All systems here are symmetric positive definite after Dirichlet
//! elimination, and the uniform-grid node ordering keeps the bandwidth
//! small, so a banded Cholesky factorization is the workhorse. Very large
//! systems fall back to Jacobi-preconditioned conjugate gradients.

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

pub const DEFAULT_RELATIVE_TOL: f64 = 1e-12;

/// Switch to CG when the banded factor would exceed this many entries.
const BANDED_STORAGE_LIMIT: usize = 20_000_000;

/// Cholesky factorization stored in lower banded form:
/// `band[i * (bw + 1) + (bw - (i - j))] = L[i][j]` for `i - bw <= j <= i`.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    band: Vec<f64>,
}

impl BandedCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.n_rows();
        let bw = a.bandwidth();
        let stride = bw + 1;
        let mut band = vec![0.0f64; n * stride];
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (c, v) in cols.iter().zip(vals) {
                if *c <= i {
                    band[i * stride + (bw - (i - c))] = *v;
                }
            }
        }
        // in-place banded Cholesky, column variant
        for j in 0..n {
            let mut d = band[j * stride + bw];
            let k0 = j.saturating_sub(bw);
            for k in k0..j {
                let l_jk = band[j * stride + (bw - (j - k))];
                d -= l_jk * l_jk;
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(Error::IndefiniteSystem);
            }
            let d = d.sqrt();
            band[j * stride + bw] = d;
            let i_max = (j + bw).min(n - 1);
            for i in (j + 1)..=i_max {
                let mut s = band[i * stride + (bw - (i - j))];
                let k0 = i.saturating_sub(bw).max(j.saturating_sub(bw));
                for k in k0..j {
                    s -= band[i * stride + (bw - (i - k))] * band[j * stride + (bw - (j - k))];
                }
                band[i * stride + (bw - (i - j))] = s / d;
            }
        }
        Ok(BandedCholesky { n, bw, band })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, bw, stride) = (self.n, self.bw, self.bw + 1);
        let mut x = b.to_vec();
        // forward: L y = b
        for i in 0..n {
            let k0 = i.saturating_sub(bw);
            let mut s = x[i];
            for k in k0..i {
                s -= self.band[i * stride + (bw - (i - k))] * x[k];
            }
            x[i] = s / self.band[i * stride + bw];
        }
        // backward: L^T x = y
        for i in (0..n).rev() {
            let i_max = (i + bw).min(n - 1);
            let mut s = x[i];
            for k in (i + 1)..=i_max {
                s -= self.band[k * stride + (bw - (k - i))] * x[k];
            }
            x[i] = s / self.band[i * stride + bw];
        }
        x
    }
}

/// Jacobi-preconditioned conjugate gradients with a relative residual stop.
pub fn pcg_jacobi(a: &CsrMatrix, b: &[f64], rel_tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = a.n_rows();
    let inv_diag: Vec<f64> = (0..n)
        .map(|i| {
            let d = a.get(i, i);
            if d <= 0.0 {
                return Err(Error::IndefiniteSystem);
            }
            Ok(1.0 / d)
        })
        .collect::<Result<_>>()?;
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for _ in 0..max_iter {
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::IndefiniteSystem);
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if norm2(&r) <= rel_tol * b_norm {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::LinearSolveFailure {
        residual: norm2(&r) / b_norm,
        tolerance: rel_tol,
    })
}

/// A reusable solver for one SPD matrix: factored once, solved many times.
#[derive(Debug)]
pub enum SpdSolver {
    Banded(BandedCholesky),
    Iterative { matrix: CsrMatrix, rel_tol: f64 },
}

impl SpdSolver {
    pub fn new(a: &CsrMatrix, rel_tol: f64) -> Result<Self> {
        let storage = a.n_rows() * (a.bandwidth() + 1);
        if a.n_rows() <= 100_000 && storage <= BANDED_STORAGE_LIMIT {
            Ok(SpdSolver::Banded(BandedCholesky::factor(a)?))
        } else {
            Ok(SpdSolver::Iterative {
                matrix: a.clone(),
                rel_tol,
            })
        }
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        match self {
            SpdSolver::Banded(chol) => Ok(chol.solve(b)),
            SpdSolver::Iterative { matrix, rel_tol } => {
                pcg_jacobi(matrix, b, *rel_tol, 50 * matrix.n_rows().max(100))
            }
        }
    }
}

/// Factors, solves, and verifies the relative residual, refining once if
/// rounding left it above `rel_tol`.
pub fn solve_spd(a: &CsrMatrix, b: &[f64], rel_tol: f64) -> Result<Vec<f64>> {
    let solver = SpdSolver::new(a, rel_tol)?;
    solve_checked(a, &solver, b, rel_tol)
}

pub fn solve_checked(a: &CsrMatrix, solver: &SpdSolver, b: &[f64], rel_tol: f64) -> Result<Vec<f64>> {
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return Ok(vec![0.0; b.len()]);
    }
    // backward-error denominator: ||b|| alone is unattainable for stiff
    // systems in finite precision
    let scale = |x: &[f64]| b_norm + a.inf_norm() * norm2(x);
    let mut x = solver.solve(b)?;
    let mut residual = residual_norm(a, &x, b) / scale(&x);
    if residual > rel_tol {
        // one step of iterative refinement
        let r: Vec<f64> = {
            let ax = a.matvec(&x);
            b.iter().zip(&ax).map(|(bi, axi)| bi - axi).collect()
        };
        let dx = solver.solve(&r)?;
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi += di;
        }
        residual = residual_norm(a, &x, b) / scale(&x);
        if residual > rel_tol {
            return Err(Error::LinearSolveFailure {
                residual,
                tolerance: rel_tol,
            });
        }
    }
    Ok(x)
}

fn residual_norm(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.matvec(x);
    b.iter()
        .zip(&ax)
        .map(|(bi, axi)| (bi - axi) * (bi - axi))
        .sum::<f64>()
        .sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::Triplets;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn laplacian_1d(n: usize) -> CsrMatrix {
        let mut t = Triplets::new(n, n);
        for i in 0..n {
            t.push(i, i, 2.0);
            if i > 0 {
                t.push(i, i - 1, -1.0);
            }
            if i + 1 < n {
                t.push(i, i + 1, -1.0);
            }
        }
        t.into_csr()
    }

    #[test]
    fn cholesky_solves_tridiagonal_system() {
        let a = laplacian_1d(50);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x_true: Vec<f64> = (0..50).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = a.matvec(&x_true);
        let x = solve_spd(&a, &b, 1e-12).unwrap();
        for (xi, ti) in x.iter().zip(&x_true) {
            assert!((xi - ti).abs() < 1e-10);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite_matrix() {
        let mut t = Triplets::new(2, 2);
        t.push(0, 0, 1.0);
        t.push(0, 1, 3.0);
        t.push(1, 0, 3.0);
        t.push(1, 1, 1.0);
        let a = t.into_csr();
        assert!(matches!(
            BandedCholesky::factor(&a),
            Err(Error::IndefiniteSystem)
        ));
    }

    #[test]
    fn pcg_matches_cholesky() {
        let a = laplacian_1d(80);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b: Vec<f64> = (0..80).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x_direct = solve_spd(&a, &b, 1e-12).unwrap();
        let x_cg = pcg_jacobi(&a, &b, 1e-13, 10_000).unwrap();
        for (d, c) in x_direct.iter().zip(&x_cg) {
            assert!((d - c).abs() < 1e-8);
        }
    }

    #[test]
    fn pcg_detects_negative_curvature() {
        let mut t = Triplets::new(2, 2);
        t.push(0, 0, 1.0);
        t.push(0, 1, 3.0);
        t.push(1, 0, 3.0);
        t.push(1, 1, 1.0);
        let a = t.into_csr();
        assert!(matches!(
            pcg_jacobi(&a, &[1.0, -0.5], 1e-12, 100),
            Err(Error::IndefiniteSystem)
        ));
    }

    #[test]
    fn zero_rhs_gives_zero_solution() {
        let a = laplacian_1d(10);
        let x = solve_spd(&a, &vec![0.0; 10], 1e-12).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
    }
}
