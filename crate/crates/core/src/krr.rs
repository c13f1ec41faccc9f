//! Full-data kernel ridge regression.
//!
//! Minimizes `(1/n) Σ (f(x_i) − y_i)² + λ‖f‖²_{H_K}`. By the representer
//! theorem `f = Σ c_i K(·, x_i)` with `(𝕂 + λn I) c = Y`.

#[cfg(test)]
use faer::Mat;

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::linalg::{self, OpCount};
use crate::synthetic::Dataset;

/// Query points per block when predicting.
const PREDICT_BLOCK: usize = 4096;

/// A function `f = Σ_j a_j K(·, u_j)`.
pub trait KernelExpansion {
    fn centers(&self) -> &[f64];
    fn coefficients(&self) -> &[f64];

    fn predict(&self, kernel: &KernelSpec, xs: &[f64]) -> Result<Vec<f64>> {
        if xs.is_empty() {
            return Ok(vec![]);
        }
        let (centers, a) = (self.centers(), self.coefficients());
        if centers.is_empty() {
            return Ok(vec![0.0; xs.len()]);
        }
        let mut out = Vec::with_capacity(xs.len());
        for chunk in xs.chunks(PREDICT_BLOCK) {
            let k = kernel.cross_gram(chunk, centers)?;
            out.extend(linalg::matvec(k.as_ref(), a));
        }
        Ok(out)
    }

    /// `‖f‖²_{H_K} = aᵀ K_uu a`.
    fn rkhs_norm_sq(&self, kernel: &KernelSpec) -> Result<f64> {
        let (centers, a) = (self.centers(), self.coefficients());
        if centers.is_empty() {
            return Ok(0.0);
        }
        let g = kernel.gram(centers)?;
        let ga = linalg::matvec(g.as_ref(), a);
        Ok(a.iter().zip(&ga).map(|(x, y)| x * y).sum())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrrModel {
    pub training_xs: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub lambda: f64,
    pub opcount: OpCount,
}

impl KernelExpansion for KrrModel {
    fn centers(&self) -> &[f64] {
        &self.training_xs
    }

    fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }
}

impl KrrModel {
    pub fn predict(&self, kernel: &KernelSpec, xs: &[f64]) -> Result<Vec<f64>> {
        KernelExpansion::predict(self, kernel, xs)
    }
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::arg(format!("lambda must be positive and finite, got {lambda}")));
    }
    Ok(())
}

pub fn fit_krr(kernel: &KernelSpec, data: &Dataset, lambda: f64) -> Result<KrrModel> {
    check_lambda(lambda)?;
    let n = data.len();
    if n == 0 {
        return Err(Error::arg("cannot fit on an empty dataset"));
    }
    let mut ops = OpCount::default();
    let g = kernel.gram(&data.xs)?;
    ops.kernel_evals(n * (n + 1) / 2);
    let sol = linalg::solve_regularized(g.as_ref(), lambda * n as f64, &data.ys, &mut ops)?;
    if sol.jitter > 0.0 {
        log::warn!("KRR solve needed jitter {:.3e}", sol.jitter);
    }
    Ok(KrrModel {
        training_xs: data.xs.clone(),
        coefficients: sol.x,
        lambda,
        opcount: ops,
    })
}

pub fn predict(model: &KrrModel, kernel: &KernelSpec, xs: &[f64]) -> Result<Vec<f64>> {
    model.predict(kernel, xs)
}

/// `T_z^λ(f) = (1/n) Σ (f(x_i) − y_i)² + λ‖f‖²_{H_K}` for any expansion.
pub fn empirical_risk<M: KernelExpansion + ?Sized>(model: &M, kernel: &KernelSpec, data: &Dataset, lambda: f64) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::arg("empirical risk needs at least one sample"));
    }
    let pred = model.predict(kernel, &data.xs)?;
    let fit = pred
        .iter()
        .zip(&data.ys)
        .map(|(p, y)| (p - y) * (p - y))
        .sum::<f64>()
        / data.len() as f64;
    Ok(fit + lambda * model.rkhs_norm_sq(kernel)?)
}

#[cfg(test)]
/// Risk of `f = Σ a_j K(·, u_j)` from precomputed `K(x_i, u_j)` and `K_uu`.
pub(crate) fn risk_from_blocks(knm: &Mat<f64>, kmm: &Mat<f64>, a: &[f64], ys: &[f64], lambda: f64) -> f64 {
    let pred = linalg::matvec(knm.as_ref(), a);
    let fit = pred.iter().zip(ys).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / ys.len() as f64;
    let ka = linalg::matvec(kmm.as_ref(), a);
    fit + lambda * a.iter().zip(&ka).map(|(x, y)| x * y).sum::<f64>()
}
