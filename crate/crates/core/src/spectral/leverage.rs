//! Pointwise leverage `N_x(λ) = ⟨K_x, (λI + J_K*J_K)^{-1} K_x⟩`, its
//! supremum `N_∞(λ)`, and the kernel source constant `c_γ`.

use faer::{linalg::triangular_solve::solve_lower_triangular_in_place, Mat, Par, Side};

use crate::error::{Error, Result};
use crate::kernels::{fourier_basis_into, uniform_grid, DecaySpec, KernelSpec};
use crate::parallel;

/// Grid size for suprema over `x ∈ [0, 1]`.
pub const DEFAULT_SUP_GRID: usize = 512;

/// Population `N_x(λ) = Σ_k μ_k e_k(x)² / (μ_k + λ)` of a designed kernel.
pub fn nx_analytic(decay: DecaySpec, truncation: usize, x: f64, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::arg(format!("lambda must be positive, got {lambda}")));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain { point: x });
    }
    let mu = decay.eigenvalues(truncation);
    let mut e = vec![0.0; truncation];
    fourier_basis_into(x, &mut e);
    Ok(mu.iter().zip(&e).map(|(m, v)| m * v * v / (m + lambda)).sum())
}

/// Empirical plug-in `N_x(λ)` with `J_K*J_K` replaced by the sample
/// covariance operator. Through Woodbury,
///
/// ```text
/// N̂_x(λ) = (1/λ) [ K(x,x) − (1/n) k_xᵀ (λI + 𝕂/n)^{-1} k_x ].
/// ```
///
/// The factorization of `λI + 𝕂/n` is kept for repeated queries.
pub struct NxEvaluator<'a> {
    kernel: &'a KernelSpec,
    xs: &'a [f64],
    lambda: f64,
    /// Cholesky factor of `λI + 𝕂/n`.
    chol: Mat<f64>,
    gram: Mat<f64>,
}

impl<'a> NxEvaluator<'a> {
    pub fn new(kernel: &'a KernelSpec, xs: &'a [f64], lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::arg(format!("lambda must be positive, got {lambda}")));
        }
        let gram = kernel.gram(xs)?;
        let n = xs.len();
        let a = Mat::<f64>::from_fn(n, n, |i, j| {
            gram[(i, j)] / n as f64 + if i == j { lambda } else { 0.0 }
        });
        let llt = a
            .llt(Side::Lower)
            .map_err(|e| Error::Numerical(format!("factorizing λI + 𝕂/n: {e:?}")))?;
        Ok(NxEvaluator {
            kernel,
            xs,
            lambda,
            chol: llt.L().to_owned(),
            gram,
        })
    }

    fn finish(&self, kxx: f64, quad: f64) -> Result<f64> {
        let n = self.xs.len() as f64;
        let v = (kxx - quad / n) / self.lambda;
        let floor = -1e-8 * self.kernel.kappa() / self.lambda;
        if v < floor {
            return Err(Error::Numerical(format!(
                "N_x(λ) evaluated to {v:.3e} (< {floor:.3e}) at λ = {:.3e}",
                self.lambda
            )));
        }
        Ok(v.max(0.0))
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        let mut k = self.kernel.cross_gram(self.xs, &[x])?;
        solve_lower_triangular_in_place(self.chol.as_ref(), k.as_mut(), Par::Seq);
        let quad: f64 = (0..k.nrows()).map(|i| k[(i, 0)] * k[(i, 0)]).sum();
        self.finish(self.kernel.eval(x, x)?, quad)
    }

    /// `N̂_{x_i}(λ)` for every training point.
    pub fn at_training_points(&self) -> Result<Vec<f64>> {
        let mut z = self.gram.clone();
        solve_lower_triangular_in_place(self.chol.as_ref(), z.as_mut(), parallel::faer_par());
        (0..self.xs.len())
            .map(|i| {
                let col = z.col(i);
                let quad: f64 = col.iter().map(|v| v * v).sum();
                self.finish(self.gram[(i, i)], quad)
            })
            .collect()
    }
}

pub fn nx_empirical(kernel: &KernelSpec, training_xs: &[f64], x: f64, lambda: f64) -> Result<f64> {
    NxEvaluator::new(kernel, training_xs, lambda)?.eval(x)
}

/// Where `N_∞(λ)` comes from.
#[derive(Debug, Clone, Copy)]
pub enum NInfinitySource<'a> {
    /// Population value for a designed kernel, maximized over a uniform grid.
    Designed(&'a KernelSpec),
    /// Empirical plug-in maximized over the training points.
    Empirical { kernel: &'a KernelSpec, xs: &'a [f64] },
}

/// `N_∞(λ) = sup_x N_x(λ)`.
pub fn n_infinity(source: NInfinitySource<'_>, lambda: f64, grid_size: usize) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::arg(format!("lambda must be positive, got {lambda}")));
    }
    match source {
        NInfinitySource::Designed(kernel) => {
            let (decay, t) = kernel.designed_parts().ok_or_else(|| {
                Error::Unsupported("analytic N_∞ needs a designed kernel; use the empirical source".into())
            })?;
            let mu = decay.eigenvalues(t);
            let w: Vec<f64> = mu.iter().map(|m| m / (m + lambda)).collect();
            let grid = uniform_grid(grid_size.max(1));
            let vals = parallel::map_slice(&grid, |&x| {
                let mut e = vec![0.0; t];
                fourier_basis_into(x, &mut e);
                w.iter().zip(&e).map(|(wk, v)| wk * v * v).sum::<f64>()
            });
            Ok(vals.into_iter().fold(0.0, f64::max))
        }
        NInfinitySource::Empirical { kernel, xs } => {
            let ev = NxEvaluator::new(kernel, xs, lambda)?;
            Ok(ev.at_training_points()?.into_iter().fold(0.0, f64::max))
        }
    }
}

/// `c_γ` for a designed kernel together with its analytic envelope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CGamma {
    /// Supremum over the `x`-grid.
    pub grid_sup: f64,
    /// Closed-form envelope valid for every `x`.
    pub upper_bound: f64,
}

impl CGamma {
    pub fn value(&self) -> f64 {
        self.grid_sup
    }

    pub fn squared(&self) -> f64 {
        self.grid_sup * self.grid_sup
    }
}

fn weighted_sup(decay: DecaySpec, truncation: usize, power: f64) -> CGamma {
    let w: Vec<f64> = decay.eigenvalues(truncation).iter().map(|m| m.powf(power)).collect();
    let grid = uniform_grid(DEFAULT_SUP_GRID);
    let vals = parallel::map_slice(&grid, |&x| {
        let mut e = vec![0.0; truncation];
        fourier_basis_into(x, &mut e);
        w.iter().zip(&e).map(|(wk, v)| wk * v * v).sum::<f64>()
    });
    let sup = vals.into_iter().fold(0.0, f64::max);
    let bound = w[0] + 2.0 * w[1..].iter().sum::<f64>();
    CGamma {
        grid_sup: sup.sqrt(),
        upper_bound: bound.sqrt(),
    }
}

/// `c_γ = sup_x √(Σ_k μ_k^{2−γ} e_k(x)²)` with envelope `√(μ_1^{2−γ} + 2Σ_{k≥2} μ_k^{2−γ})`.
///
/// The series converges as `T → ∞` iff `(2 − γ)/s > 1`; otherwise an
/// infeasibility error is returned.
pub fn c_gamma_for_designed(decay: DecaySpec, truncation: usize, gamma: f64) -> Result<CGamma> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::arg(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    decay.validate()?;
    if (2.0 - gamma) / decay.s <= 1.0 {
        return Err(Error::Infeasible(format!(
            "Σ μ_k^(2−γ) diverges for s = {}, γ = {gamma}; need γ < 2 − s",
            decay.s
        )));
    }
    Ok(weighted_sup(decay, truncation, 2.0 - gamma))
}

/// `sup_x ‖υ_x‖_{H_K}` where `K_x = (J_K*J_K)^{γ/2} υ_x`, i.e.
/// `sup_x √(Σ_k μ_k^{1−γ} e_k(x)²)`. This is the constant for which
/// `N_∞(λ) ≤ c²λ^{γ−1}` holds term by term; it stays bounded in `T` only
/// when `γ < 1 − s`.
pub fn kernel_source_constant(decay: DecaySpec, truncation: usize, gamma: f64) -> Result<CGamma> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::arg(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    Ok(weighted_sup(decay, truncation, 1.0 - gamma))
}
