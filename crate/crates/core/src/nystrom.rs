//! Plain Nyström subsampling: the minimizer of the KRR functional over the
//! span of `m` kernel sections at uniformly subsampled training points.
//!
//! The coefficients solve `(K_nmᵀ K_nm + λn K_mm) α = K_nmᵀ Y`. This system
//! is squared-condition-number bad when `K_mm` is nearly singular, so it is
//! solved in whitened form: with `K_mm = R Rᵀ` (Cholesky, or a truncated
//! eigendecomposition when Cholesky is unreliable) and `B = K_nm R^{-ᵀ}`,
//! `β = (BᵀB + λn I)^{-1} BᵀY` and `α = R^{-ᵀ} β`.

use std::fs;
use std::path::Path;

use faer::{
    linalg::triangular_solve::{solve_lower_triangular_in_place, solve_upper_triangular_in_place},
    Mat, Par, Side,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::krr::{check_lambda, KernelExpansion};
use crate::linalg::{self, OpCount};
use crate::parallel;
use crate::rng;
use crate::spectral::{n_infinity, NInfinitySource, DEFAULT_SUP_GRID};
use crate::synthetic::Dataset;

/// Cholesky of `K_mm` is used when every squared pivot is at least this
/// fraction of the largest diagonal entry.
pub const CHOLESKY_PIVOT_FLOOR: f64 = 1e-10;
/// Eigen-whitening keeps directions with eigenvalue above this fraction of
/// the largest one.
pub const EIGEN_RANK_FLOOR: f64 = 1e-12;

/// How `K_mm` was whitened.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Whitening {
    Cholesky,
    /// Truncated eigendecomposition keeping `rank` directions.
    Eigen { rank: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NystromModel {
    pub inducing_indices: Vec<usize>,
    /// The inducing points `x̃_j`, kept so the model predicts on its own.
    pub inducing_xs: Vec<f64>,
    pub alpha: Vec<f64>,
    pub lambda: f64,
    pub opcount: OpCount,
    pub whitening: Whitening,
    /// Extra shift added by the regularized solve, 0 when none was needed.
    pub jitter: f64,
}

impl KernelExpansion for NystromModel {
    fn centers(&self) -> &[f64] {
        &self.inducing_xs
    }

    fn coefficients(&self) -> &[f64] {
        &self.alpha
    }
}

impl NystromModel {
    pub fn m(&self) -> usize {
        self.alpha.len()
    }

    pub fn predict(&self, kernel: &KernelSpec, xs: &[f64]) -> Result<Vec<f64>> {
        KernelExpansion::predict(self, kernel, xs)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// `m` distinct indices from `0..n`, uniform over `m`-subsets.
pub fn subsample_plain(n: usize, m: usize, seed: u64) -> Result<Vec<usize>> {
    if m == 0 || m > n {
        return Err(Error::arg(format!("subsample size must satisfy 1 <= m <= n, got m = {m}, n = {n}")));
    }
    let mut rng = rng::stream(seed, 3);
    Ok(rand::seq::index::sample(&mut rng, n, m).into_vec())
}

pub fn fit_nystrom(kernel: &KernelSpec, data: &Dataset, lambda: f64, inducing_indices: &[usize]) -> Result<NystromModel> {
    check_lambda(lambda)?;
    let n = data.len();
    let m = inducing_indices.len();
    if n == 0 || m == 0 {
        return Err(Error::arg("Nyström fit needs data and at least one inducing point"));
    }
    let mut seen = vec![false; n];
    for &i in inducing_indices {
        if i >= n {
            return Err(Error::arg(format!("inducing index {i} out of range for n = {n}")));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::arg(format!("inducing index {i} repeated")));
        }
    }
    let inducing_xs: Vec<f64> = inducing_indices.iter().map(|&i| data.xs[i]).collect();
    let mut ops = OpCount::default();

    let knm = kernel.cross_gram(&data.xs, &inducing_xs)?;
    ops.kernel_evals(n * m);
    let kmm = Mat::<f64>::from_fn(m, m, |a, b| {
        0.5 * (knm[(inducing_indices[a], b)] + knm[(inducing_indices[b], a)])
    });

    let (b, whiten) = whiten(&knm, &kmm, &mut ops)?;
    let r = b.ncols();
    let btb = linalg::gram_product(b.as_ref(), &mut ops);
    let bty = linalg::transpose_matvec(b.as_ref(), &data.ys);
    ops.matvec(n, r);
    let sol = linalg::solve_regularized(btb.as_ref(), lambda * n as f64, &bty, &mut ops)?;
    if sol.jitter > 0.0 {
        log::warn!("Nyström reduced solve needed jitter {:.3e}", sol.jitter);
    }
    let alpha = whiten.unwhiten(&sol.x, &mut ops);

    Ok(NystromModel {
        inducing_indices: inducing_indices.to_vec(),
        inducing_xs,
        alpha,
        lambda,
        opcount: ops,
        whitening: whiten.kind(),
        jitter: sol.jitter,
    })
}

enum WhiteningMap {
    /// Lower Cholesky factor `L` of `K_mm`.
    Cholesky(Mat<f64>),
    /// `U_r Λ_r^{-1/2}`.
    Eigen(Mat<f64>),
}

impl WhiteningMap {
    fn kind(&self) -> Whitening {
        match self {
            WhiteningMap::Cholesky(_) => Whitening::Cholesky,
            WhiteningMap::Eigen(w) => Whitening::Eigen { rank: w.ncols() },
        }
    }

    /// `α` from the whitened solution `β`.
    fn unwhiten(&self, beta: &[f64], ops: &mut OpCount) -> Vec<f64> {
        match self {
            WhiteningMap::Cholesky(l) => {
                let mut x = Mat::<f64>::from_fn(beta.len(), 1, |i, _| beta[i]);
                solve_upper_triangular_in_place(l.transpose(), x.as_mut(), Par::Seq);
                ops.triangular_solves(beta.len());
                (0..beta.len()).map(|i| x[(i, 0)]).collect()
            }
            WhiteningMap::Eigen(w) => {
                ops.matvec(w.nrows(), w.ncols());
                linalg::matvec(w.as_ref(), beta)
            }
        }
    }
}

fn cholesky_factor(kmm: &Mat<f64>) -> Option<Mat<f64>> {
    let m = kmm.nrows();
    let max_diag = (0..m).map(|i| kmm[(i, i)]).fold(0.0, f64::max);
    if !(max_diag > 0.0) {
        return None;
    }
    let llt = kmm.llt(Side::Lower).ok()?;
    let l = llt.L().to_owned();
    let ok = (0..m).all(|i| l[(i, i)] * l[(i, i)] >= CHOLESKY_PIVOT_FLOOR * max_diag);
    ok.then_some(l)
}

/// `B = K_nm R^{-ᵀ}` together with the map back to `α`.
fn whiten(knm: &Mat<f64>, kmm: &Mat<f64>, ops: &mut OpCount) -> Result<(Mat<f64>, WhiteningMap)> {
    let (n, m) = (knm.nrows(), knm.ncols());
    ops.factorization(m);
    if let Some(l) = cholesky_factor(kmm) {
        // Rows of B solve L bᵢ = kᵢ; done per row block for determinism.
        let blocks = parallel::blocks(n, parallel::ROW_BLOCK);
        let parts = parallel::map_slice(&blocks, |&(lo, hi)| {
            let mut bt = knm.as_ref().subrows(lo, hi - lo).transpose().to_owned();
            solve_lower_triangular_in_place(l.as_ref(), bt.as_mut(), Par::Seq);
            bt
        });
        let mut b = Mat::<f64>::zeros(n, m);
        for (&(lo, hi), part) in blocks.iter().zip(parts) {
            b.as_mut().subrows_mut(lo, hi - lo).copy_from(part.transpose());
        }
        ops.gram_product(n, m);
        return Ok((b, WhiteningMap::Cholesky(l)));
    }

    ops.eigendecomposition(m, true);
    let (values, vectors) = linalg::sym_eigen(kmm.as_ref())?;
    let top = values.first().copied().unwrap_or(0.0);
    if !(top > 0.0) {
        return Err(Error::Numerical("inducing Gram block has no positive eigenvalue".into()));
    }
    let r = values.iter().take_while(|&&v| v > EIGEN_RANK_FLOOR * top).count();
    log::debug!("K_mm whitened by truncated eigendecomposition, rank {r} of {m}");
    let w = Mat::<f64>::from_fn(m, r, |i, j| vectors[(i, j)] / values[j].sqrt());
    let mut b = Mat::<f64>::zeros(n, r);
    let blocks = parallel::blocks(n, parallel::ROW_BLOCK);
    let parts = parallel::map_slice(&blocks, |&(lo, hi)| {
        let mut out = Mat::<f64>::zeros(hi - lo, r);
        faer::linalg::matmul::matmul(
            out.as_mut(),
            faer::Accum::Replace,
            knm.as_ref().subrows(lo, hi - lo),
            w.as_ref(),
            1.0,
            Par::Seq,
        );
        out
    });
    for (&(lo, hi), part) in blocks.iter().zip(parts) {
        b.as_mut().subrows_mut(lo, hi - lo).copy_from(part.as_ref());
    }
    ops.gram_product(n, m);
    Ok((b, WhiteningMap::Eigen(w)))
}

pub fn predict(model: &NystromModel, kernel: &KernelSpec, xs: &[f64]) -> Result<Vec<f64>> {
    model.predict(kernel, xs)
}

fn default_c() -> f64 {
    1.0
}

fn default_delta() -> f64 {
    0.1
}

/// Constants of the subsample-size rule `m ≥ c N_∞(λ) log(1/λ) log(1/δ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeRuleParams {
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Kernel source exponent; with `c_gamma` it replaces `N_∞(λ)` by
    /// `c_γ² λ^{γ−1}`.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub c_gamma: Option<f64>,
}

impl Default for SizeRuleParams {
    fn default() -> Self {
        SizeRuleParams {
            c: 1.0,
            delta: 0.1,
            gamma: None,
            c_gamma: None,
        }
    }
}

impl SizeRuleParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::arg(format!("size-rule constant c must be positive, got {}", self.c)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::arg(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g <= 1.0) {
                return Err(Error::arg(format!("gamma must lie in (0, 1], got {g}")));
            }
        }
        if let Some(c) = self.c_gamma {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::arg(format!("c_gamma must be positive, got {c}")));
            }
        }
        Ok(())
    }

    /// `c_γ² λ^{γ−1}` when both constants are set.
    pub fn lemma_bound(&self, lambda: f64) -> Option<f64> {
        match (self.gamma, self.c_gamma) {
            (Some(g), Some(c)) => Some(c * c * lambda.powf(g - 1.0)),
            _ => None,
        }
    }
}

/// `min(n, ⌈c N_∞ log(1/λ) log(1/δ)⌉)` for a given `N_∞(λ)`.
pub fn size_from_n_infinity(n_inf: f64, n: usize, lambda: f64, params: &SizeRuleParams) -> Result<usize> {
    params.validate()?;
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::arg(format!("size rule needs 0 < lambda < 1, got {lambda}")));
    }
    if n == 0 {
        return Err(Error::arg("sample size must be at least 1"));
    }
    let raw = params.c * n_inf * (1.0 / lambda).ln() * (1.0 / params.delta).ln();
    let m = raw.ceil().max(1.0);
    Ok(if m >= n as f64 { n } else { m as usize })
}

/// Subsample size for a kernel and training inputs. `N_∞(λ)` comes from the
/// bound `c_γ² λ^{γ−1}` when `γ, c_γ` are set, else the analytic value for designed
/// kernels, else the empirical plug-in maximized over the training points.
pub fn subsample_size(kernel: &KernelSpec, xs: &[f64], lambda: f64, params: &SizeRuleParams) -> Result<usize> {
    params.validate()?;
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::arg(format!("size rule needs 0 < lambda < 1, got {lambda}")));
    }
    let n_inf = match params.lemma_bound(lambda) {
        Some(v) => v,
        None if kernel.is_designed() => n_infinity(NInfinitySource::Designed(kernel), lambda, DEFAULT_SUP_GRID)?,
        None => n_infinity(NInfinitySource::Empirical { kernel, xs }, lambda, 0)?,
    };
    size_from_n_infinity(n_inf, xs.len(), lambda, params)
}

/// Lower end `c log(n/δ)/n` of the admissible λ window.
pub fn lambda_lower_endpoint(n: usize, delta: f64, c: f64) -> f64 {
    c * (n as f64 / delta).ln() / n as f64
}

/// `c log(n/δ)/n ≤ λ ≤ operator_norm_bound`.
pub fn lambda_admissible(lambda: f64, n: usize, delta: f64, operator_norm_bound: f64, c: f64) -> bool {
    if n == 0 || !(delta > 0.0 && delta < 1.0) {
        return false;
    }
    lambda_lower_endpoint(n, delta, c) <= lambda && lambda <= operator_norm_bound
}
