//! Dense symmetric linear algebra on top of faer, with a deterministic
//! operation-count model.
//!
//! Cost model: an `n × m` Gram product `AᵀA` or a product/triangular solve
//! against an `m × m` factor costs `n·m²`; an `m × m` Cholesky factorization
//! costs `m³/3`; a symmetric eigendecomposition costs `4m³/3` (values only)
//! or `9m³` (with vectors); a pair of triangular solves costs `m²`.

use std::ops::AddAssign;

use faer::{
    linalg::triangular_solve::{solve_lower_triangular_in_place, solve_upper_triangular_in_place},
    Col, Mat, MatRef, Side,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel;

/// Relative asymmetry accepted by the symmetric routines.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// Relative jitter levels `10^{-j}` tried, in order, after a failed
/// factorization.
pub const JITTER_LEVELS: [f64; 3] = [1e-8, 1e-6, 1e-4];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCount {
    pub flops: u64,
    /// Kernel evaluations, tracked separately from the flop model.
    #[serde(default)]
    pub kernel_evaluations: u64,
}

impl OpCount {
    pub fn gram_product(&mut self, n: usize, m: usize) {
        self.flops += (n as u64) * (m as u64) * (m as u64);
    }

    pub fn factorization(&mut self, m: usize) {
        self.flops += (m as u64).pow(3) / 3;
    }

    pub fn eigendecomposition(&mut self, m: usize, vectors: bool) {
        let m3 = (m as u64).pow(3);
        self.flops += if vectors { 9 * m3 } else { 4 * m3 / 3 };
    }

    pub fn triangular_solves(&mut self, m: usize) {
        self.flops += (m as u64) * (m as u64);
    }

    pub fn matvec(&mut self, rows: usize, cols: usize) {
        self.flops += (rows as u64) * (cols as u64);
    }

    pub fn kernel_evals(&mut self, count: usize) {
        self.kernel_evaluations += count as u64;
    }

    pub fn merge(&mut self, other: OpCount) {
        self.flops += other.flops;
        self.kernel_evaluations += other.kernel_evaluations;
    }
}

impl AddAssign for OpCount {
    fn add_assign(&mut self, rhs: OpCount) {
        self.merge(rhs);
    }
}

/// Result of a regularized solve.
#[derive(Debug, Clone)]
pub struct RegularizedSolution {
    pub x: Vec<f64>,
    /// Extra diagonal shift added beyond the requested one (0 when the first
    /// factorization succeeded).
    pub jitter: f64,
}

fn max_abs(a: MatRef<'_, f64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].abs());
        }
    }
    m
}

pub fn is_symmetric(a: MatRef<'_, f64>, rel_tol: f64) -> bool {
    if a.nrows() != a.ncols() {
        return false;
    }
    let scale = max_abs(a).max(f64::MIN_POSITIVE);
    for j in 0..a.ncols() {
        for i in (j + 1)..a.nrows() {
            if (a[(i, j)] - a[(j, i)]).abs() > rel_tol * scale {
                return false;
            }
        }
    }
    true
}

fn require_symmetric(a: MatRef<'_, f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::arg(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if !is_symmetric(a, SYMMETRY_TOLERANCE) {
        return Err(Error::arg("matrix is not symmetric"));
    }
    Ok(())
}

/// Solves `(A + shift·I) x = b` by Cholesky. If the factorization fails the
/// shift is raised by `10^{-j}·max(shift, mean diag A)` for `j = 8, 6, 4`.
pub fn solve_regularized(
    a: MatRef<'_, f64>,
    shift: f64,
    b: &[f64],
    ops: &mut OpCount,
) -> Result<RegularizedSolution> {
    require_symmetric(a)?;
    if !(shift > 0.0) {
        return Err(Error::arg(format!("shift must be positive, got {shift}")));
    }
    let m = a.nrows();
    if b.len() != m {
        return Err(Error::arg(format!(
            "right-hand side has length {}, matrix is {m}x{m}",
            b.len()
        )));
    }
    let mean_diag = if m == 0 {
        0.0
    } else {
        (0..m).map(|i| a[(i, i)]).sum::<f64>() / m as f64
    };
    let guard = shift.max(mean_diag.abs());
    let mut tried = Vec::new();
    for jitter in std::iter::once(0.0).chain(JITTER_LEVELS.iter().map(|j| j * guard)) {
        let total = shift + jitter;
        let shifted = Mat::<f64>::from_fn(m, m, |i, j| {
            // Lower triangle only; faer reads the side we name.
            if i == j {
                a[(i, i)] + total
            } else {
                a[(i.max(j), i.min(j))]
            }
        });
        ops.factorization(m);
        match shifted.llt(Side::Lower) {
            Ok(llt) => {
                let mut rhs = Col::<f64>::from_fn(m, |i| b[i]);
                let l = llt.L();
                solve_lower_triangular_in_place(l, rhs.as_mat_mut(), faer::Par::Seq);
                solve_upper_triangular_in_place(l.transpose(), rhs.as_mat_mut(), faer::Par::Seq);
                ops.triangular_solves(m);
                return Ok(RegularizedSolution {
                    x: rhs.iter().copied().collect(),
                    jitter,
                });
            }
            Err(e) => tried.push(format!("shift {total:.3e}: {e:?}")),
        }
    }
    Err(Error::Numerical(format!(
        "Cholesky of the {m}x{m} shifted matrix failed at every jitter level ({})",
        tried.join("; ")
    )))
}

/// All eigenvalues of a symmetric matrix, in descending order.
pub fn sym_eigenvalues(a: MatRef<'_, f64>) -> Result<Vec<f64>> {
    require_symmetric(a)?;
    if a.nrows() == 0 {
        return Ok(vec![]);
    }
    let mut ev = symmetrized(a)
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numerical(format!("symmetric eigenvalue solver: {e:?}")))?;
    ev.reverse();
    Ok(ev)
}

/// Eigenpairs of a symmetric matrix: eigenvalues descending, eigenvectors as
/// the matching columns.
pub fn sym_eigen(a: MatRef<'_, f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    require_symmetric(a)?;
    let n = a.nrows();
    let evd = symmetrized(a)
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("symmetric eigensolver: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let values: Vec<f64> = (0..n).rev().map(|i| s[i]).collect();
    let vectors = Mat::<f64>::from_fn(n, n, |i, j| u[(i, n - 1 - j)]);
    Ok((values, vectors))
}

fn symmetrized(a: MatRef<'_, f64>) -> Mat<f64> {
    Mat::<f64>::from_fn(a.nrows(), a.ncols(), |i, j| 0.5 * (a[(i, j)] + a[(j, i)]))
}

/// Largest singular value.
pub fn operator_norm(a: MatRef<'_, f64>) -> Result<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(0.0);
    }
    if max_abs(a) == 0.0 {
        return Ok(0.0);
    }
    let sv = a
        .singular_values()
        .map_err(|e| Error::Numerical(format!("singular values: {e:?}")))?;
    Ok(sv.first().copied().unwrap_or(0.0))
}

/// `AᵀA` assembled in fixed column blocks, each computed sequentially, so the
/// result is bitwise independent of the number of workers.
pub fn gram_product(a: MatRef<'_, f64>, ops: &mut OpCount) -> Mat<f64> {
    let (n, m) = (a.nrows(), a.ncols());
    ops.gram_product(n, m);
    let blocks = parallel::blocks(m, 64);
    let parts = parallel::map_slice(&blocks, |&(lo, hi)| {
        let mut out = Mat::<f64>::zeros(m, hi - lo);
        faer::linalg::matmul::matmul(
            out.as_mut(),
            faer::Accum::Replace,
            a.transpose(),
            a.subcols(lo, hi - lo),
            1.0,
            faer::Par::Seq,
        );
        out
    });
    let mut g = Mat::<f64>::zeros(m, m);
    for (&(lo, hi), part) in blocks.iter().zip(parts) {
        g.as_mut().subcols_mut(lo, hi - lo).copy_from(part.as_ref());
    }
    // Exact symmetry.
    for j in 0..m {
        for i in (j + 1)..m {
            let v = 0.5 * (g[(i, j)] + g[(j, i)]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

/// `Aᵀv` with a fixed summation order.
pub fn transpose_matvec(a: MatRef<'_, f64>, v: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.nrows(), v.len());
    parallel::map_range(a.ncols(), |j| {
        let col = a.col(j);
        (0..a.nrows()).map(|i| col[i] * v[i]).sum()
    })
}

/// `Av` with a fixed summation order.
pub fn matvec(a: MatRef<'_, f64>, v: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.ncols(), v.len());
    parallel::map_range(a.nrows(), |i| (0..a.ncols()).map(|j| a[(i, j)] * v[j]).sum())
}
