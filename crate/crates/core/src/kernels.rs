//! Mercer kernels on scalar inputs.
//!
//! Two closed-form kernels (Gaussian, Laplacian) on the real line, and a
//! designed-spectral kernel on `[0, 1]` with explicit eigenpairs: under the
//! uniform measure the Fourier basis
//!
//! ```text
//! e_1(x) = 1,  e_{2j}(x) = √2 cos(2πjx),  e_{2j+1}(x) = √2 sin(2πjx)
//! ```
//!
//! is orthonormal, and `K(x, y) = Σ_{k ≤ T} μ_k e_k(x) e_k(y)` with
//! `μ_k = k^{-1/s}`. The integral operator of this kernel is diagonal in
//! `e_k` with eigenvalues `μ_k`, so every spectral quantity is available in
//! closed form.

use std::f64::consts::TAU;

use faer::{linalg::matmul::matmul, Accum, Mat, MatRef, Par};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel;

/// Default spectrum truncation for designed kernels.
pub const DEFAULT_TRUNCATION: usize = 2048;

/// Gram matrices are accepted as PSD when their smallest eigenvalue is at
/// least `-PSD_TOLERANCE_FACTOR * n * κ`.
pub const PSD_TOLERANCE_FACTOR: f64 = 1e-10;

/// Number of points in the uniform grid used to report `max K(x, x)`.
pub const KAPPA_GRID: usize = 10_000;

/// Polynomial eigenvalue decay `μ_k = k^{-1/s}`; `s` is the exponent in
/// `N(λ) ≍ λ^{-s}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecaySpec {
    pub s: f64,
}

impl DecaySpec {
    pub fn new(s: f64) -> Result<Self> {
        let d = DecaySpec { s };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s <= 1.0) {
            return Err(Error::arg(format!(
                "decay exponent s must lie in (0, 1], got {}",
                self.s
            )));
        }
        Ok(())
    }

    /// `s = 1` gives `μ_k = 1/k`, whose sum diverges without truncation.
    pub fn is_borderline(&self) -> bool {
        self.s >= 1.0
    }

    /// `μ_k` for 1-based `k`.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        debug_assert!(k >= 1);
        (k as f64).powf(-1.0 / self.s)
    }

    pub fn eigenvalues(&self, truncation: usize) -> Vec<f64> {
        (1..=truncation).map(|k| self.eigenvalue(k)).collect()
    }

    /// Upper bound on `Σ_{k > T} μ_k` (integral test). Infinite for `s = 1`.
    pub fn tail_bound(&self, truncation: usize) -> f64 {
        let p = 1.0 / self.s;
        if p <= 1.0 {
            return f64::INFINITY;
        }
        (truncation as f64).powf(1.0 - p) / (p - 1.0)
    }
}

fn default_truncation() -> usize {
    DEFAULT_TRUNCATION
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    /// `exp(-(x - y)² / (2σ²))`
    Gaussian { bandwidth: f64 },
    /// `exp(-|x - y| / σ)`
    Laplacian { bandwidth: f64 },
    DesignedSpectral {
        decay: DecaySpec,
        #[serde(default = "default_truncation")]
        truncation: usize,
    },
}

/// The two figures reported for `κ = sup_x K(x, x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaReport {
    /// Analytic upper bound (exact for the closed-form kernels).
    pub bound: f64,
    /// `max K(x, x)` over a uniform grid of [`KAPPA_GRID`] points.
    pub grid_max: f64,
}

/// `e_k(x)` for 1-based `k`.
pub fn fourier_basis(k: usize, x: f64) -> f64 {
    debug_assert!(k >= 1);
    if k == 1 {
        return 1.0;
    }
    let j = (k / 2) as f64;
    let angle = TAU * (j * x).fract();
    if k.is_multiple_of(2) {
        std::f64::consts::SQRT_2 * angle.cos()
    } else {
        std::f64::consts::SQRT_2 * angle.sin()
    }
}

/// Writes `e_1(x), …, e_T(x)` into `out`.
pub fn fourier_basis_into(x: f64, out: &mut [f64]) {
    let t = out.len();
    if t == 0 {
        return;
    }
    out[0] = 1.0;
    let mut k = 2;
    while k <= t {
        let j = (k / 2) as f64;
        let (sin, cos) = (TAU * (j * x).fract()).sin_cos();
        out[k - 1] = std::f64::consts::SQRT_2 * cos;
        if k < t {
            out[k] = std::f64::consts::SQRT_2 * sin;
        }
        k += 2;
    }
}

impl KernelSpec {
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        let k = KernelSpec::Gaussian { bandwidth };
        k.validate()?;
        Ok(k)
    }

    pub fn laplacian(bandwidth: f64) -> Result<Self> {
        let k = KernelSpec::Laplacian { bandwidth };
        k.validate()?;
        Ok(k)
    }

    pub fn designed(s: f64, truncation: usize) -> Result<Self> {
        let k = KernelSpec::DesignedSpectral {
            decay: DecaySpec::new(s)?,
            truncation,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Gaussian { bandwidth } | KernelSpec::Laplacian { bandwidth } => {
                if !(bandwidth > 0.0 && bandwidth.is_finite()) {
                    return Err(Error::arg(format!(
                        "bandwidth must be positive, got {bandwidth}"
                    )));
                }
            }
            KernelSpec::DesignedSpectral { decay, truncation } => {
                decay.validate()?;
                if truncation == 0 {
                    return Err(Error::arg("truncation must be at least 1"));
                }
            }
        }
        Ok(())
    }

    /// `(decay, truncation)` for designed kernels.
    pub fn designed_parts(&self) -> Option<(DecaySpec, usize)> {
        match *self {
            KernelSpec::DesignedSpectral { decay, truncation } => Some((decay, truncation)),
            _ => None,
        }
    }

    pub fn is_designed(&self) -> bool {
        self.designed_parts().is_some()
    }

    /// Mercer eigenvalues `μ_1 ≥ … ≥ μ_T` of a designed kernel.
    pub fn eigenvalues(&self) -> Option<Vec<f64>> {
        self.designed_parts().map(|(d, t)| d.eigenvalues(t))
    }

    pub fn check_domain(&self, x: f64) -> Result<()> {
        if self.is_designed() {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::Domain { point: x });
            }
        } else if !x.is_finite() {
            return Err(Error::arg(format!("non-finite input {x}")));
        }
        Ok(())
    }

    fn check_points(&self, xs: &[f64]) -> Result<()> {
        xs.iter().try_for_each(|&x| self.check_domain(x))
    }

    /// `K(x, y)`. Designed kernels are evaluated by direct basis summation.
    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        self.check_domain(x)?;
        self.check_domain(y)?;
        Ok(self.eval_unchecked(x, y))
    }

    pub(crate) fn eval_unchecked(&self, x: f64, y: f64) -> f64 {
        match *self {
            KernelSpec::Gaussian { bandwidth } => {
                let d = x - y;
                (-d * d / (2.0 * bandwidth * bandwidth)).exp()
            }
            KernelSpec::Laplacian { bandwidth } => (-(x - y).abs() / bandwidth).exp(),
            KernelSpec::DesignedSpectral { decay, truncation } => (1..=truncation)
                .map(|k| decay.eigenvalue(k) * fourier_basis(k, x) * fourier_basis(k, y))
                .sum(),
        }
    }

    /// Feature map `w(x)_k = √μ_k e_k(x)` of a designed kernel, one row per
    /// point, so that `K(x, y) = ⟨w(x), w(y)⟩`. These are also the
    /// coordinates of `K(·, x)` in the orthonormal basis `√μ_k e_k` of `H_K`.
    pub fn feature_matrix(&self, xs: &[f64]) -> Result<Mat<f64>> {
        let (decay, t) = self
            .designed_parts()
            .ok_or_else(|| Error::Unsupported("feature map needs a designed kernel".into()))?;
        self.check_points(xs)?;
        let sqrt_mu: Vec<f64> = decay.eigenvalues(t).iter().map(|m| m.sqrt()).collect();
        Ok(basis_rows(xs, t, Some(&sqrt_mu)))
    }

    /// `K(x, x)`.
    pub fn diag(&self, x: f64) -> Result<f64> {
        self.eval(x, x)
    }

    /// Gram matrix `K(x_i, x_j)`. Exactly symmetric: the lower triangle is
    /// computed and mirrored.
    pub fn gram(&self, xs: &[f64]) -> Result<Mat<f64>> {
        if xs.is_empty() {
            return Err(Error::arg("gram needs at least one point"));
        }
        let mut g = self.cross_gram(xs, xs)?;
        let n = xs.len();
        for j in 0..n {
            for i in (j + 1)..n {
                g[(j, i)] = g[(i, j)];
            }
        }
        Ok(g)
    }

    /// `K(x_i, u_j)` for rows `xs` and columns `inducing`.
    pub fn cross_gram(&self, xs: &[f64], inducing: &[f64]) -> Result<Mat<f64>> {
        if xs.is_empty() || inducing.is_empty() {
            return Err(Error::arg("cross_gram needs nonempty point lists"));
        }
        self.check_points(xs)?;
        self.check_points(inducing)?;
        let (n, m) = (xs.len(), inducing.len());
        match self.designed_parts() {
            None => {
                let blocks = parallel::blocks(n, parallel::ROW_BLOCK);
                let parts = parallel::map_slice(&blocks, |&(lo, hi)| {
                    Mat::<f64>::from_fn(hi - lo, m, |i, j| self.eval_unchecked(xs[lo + i], inducing[j]))
                });
                Ok(stack_rows(n, m, &blocks, parts))
            }
            Some(_) => {
                let wu = self.feature_matrix(inducing)?;
                let blocks = parallel::blocks(n, parallel::ROW_BLOCK);
                let parts = parallel::map_slice(&blocks, |&(lo, hi)| {
                    let wx = self
                        .feature_matrix(&xs[lo..hi])
                        .expect("points validated above");
                    let mut out = Mat::<f64>::zeros(hi - lo, m);
                    matmul(
                        out.as_mut(),
                        Accum::Replace,
                        wx.as_ref(),
                        wu.as_ref().transpose(),
                        1.0,
                        Par::Seq,
                    );
                    out
                });
                Ok(stack_rows(n, m, &blocks, parts))
            }
        }
    }

    /// `κ` used in bounds: exact for closed-form kernels, `μ_1 + 2Σ_{k≥2} μ_k`
    /// for designed kernels.
    pub fn kappa(&self) -> f64 {
        match *self {
            KernelSpec::Gaussian { .. } | KernelSpec::Laplacian { .. } => 1.0,
            KernelSpec::DesignedSpectral { decay, truncation } => {
                let mu = decay.eigenvalues(truncation);
                mu[0] + 2.0 * mu[1..].iter().sum::<f64>()
            }
        }
    }

    pub fn kappa_report(&self) -> KappaReport {
        let bound = self.kappa();
        let grid_max = match *self {
            KernelSpec::Gaussian { .. } | KernelSpec::Laplacian { .. } => 1.0,
            KernelSpec::DesignedSpectral { decay, truncation } => {
                let mu = decay.eigenvalues(truncation);
                let grid = uniform_grid(KAPPA_GRID);
                let vals = parallel::map_slice(&grid, |&x| {
                    let mut e = vec![0.0; truncation];
                    fourier_basis_into(x, &mut e);
                    mu.iter().zip(&e).map(|(m, v)| m * v * v).sum::<f64>()
                });
                vals.into_iter().fold(f64::NEG_INFINITY, f64::max)
            }
        };
        KappaReport { bound, grid_max }
    }

    /// Threshold below which a Gram eigenvalue counts as a PSD violation.
    pub fn psd_tolerance(&self, n: usize) -> f64 {
        -PSD_TOLERANCE_FACTOR * n as f64 * self.kappa()
    }
}

/// `n` equispaced points covering `[0, 1]` (both ends included when `n > 1`).
pub fn uniform_grid(n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.0],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

/// Rows `e(x_i)` (optionally scaled columnwise).
pub(crate) fn basis_rows(xs: &[f64], t: usize, scale: Option<&[f64]>) -> Mat<f64> {
    let mut out = Mat::<f64>::zeros(xs.len(), t);
    let mut row = vec![0.0; t];
    for (i, &x) in xs.iter().enumerate() {
        fourier_basis_into(x, &mut row);
        for k in 0..t {
            out[(i, k)] = match scale {
                Some(s) => s[k] * row[k],
                None => row[k],
            };
        }
    }
    out
}

fn stack_rows(n: usize, m: usize, blocks: &[(usize, usize)], parts: Vec<Mat<f64>>) -> Mat<f64> {
    let mut out = Mat::<f64>::zeros(n, m);
    for (&(lo, hi), part) in blocks.iter().zip(parts) {
        out.as_mut().subrows_mut(lo, hi - lo).copy_from(part.as_ref());
    }
    out
}

/// Smallest eigenvalue check used by tests and diagnostics.
pub fn min_eigenvalue(g: MatRef<'_, f64>) -> Result<f64> {
    let ev = crate::linalg::sym_eigenvalues(g)?;
    Ok(*ev.last().unwrap_or(&0.0))
}
