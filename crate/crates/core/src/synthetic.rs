//! Synthetic regression problems with a known source condition.
//!
//! Targets are built in the designed eigenbasis as `f_k = φ(μ_k) v_k` with
//! `‖v‖ = 1`, inputs are uniform on `[0, 1]`, and labels carry Gaussian or
//! bounded noise. Because the basis is orthonormal in `L2(ρ_X)` the error of
//! any kernel expansion is available in closed form.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{basis_rows, DecaySpec, KernelSpec};
use crate::krr::KernelExpansion;
use crate::parallel;
use crate::rng;
use crate::spectral::IndexFunction;

/// Distribution of the unit vector `v` in `f = φ(J_K J_K*) v`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientLaw {
    /// Uniform on the unit sphere of `R^T`.
    #[default]
    Sphere,
    /// `v_k ∝ ±k^{-1/2}` with independent random signs, normalized. Spreads
    /// mass over all scales, so the approximation error decays at the
    /// worst-case rate for the given φ instead of saturating at the
    /// truncation level.
    Harmonic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub phi: IndexFunction,
    pub coeff_seed: u64,
    #[serde(default)]
    pub law: CoefficientLaw,
    pub v: Vec<f64>,
    /// `f_k = φ(μ_k) v_k`.
    pub coefficients: Vec<f64>,
}

impl TargetSpec {
    /// Truncation length `T`.
    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    /// `f_ρ(x) = Σ_k f_k e_k(x)`.
    pub fn eval(&self, x: f64) -> f64 {
        let mut e = vec![0.0; self.len()];
        crate::kernels::fourier_basis_into(x, &mut e);
        e.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum()
    }

    pub fn eval_many(&self, xs: &[f64]) -> Vec<f64> {
        let blocks = parallel::blocks(xs.len(), parallel::ROW_BLOCK);
        let parts = parallel::map_slice(&blocks, |&(lo, hi)| {
            let e = basis_rows(&xs[lo..hi], self.len(), None);
            (0..hi - lo)
                .map(|i| (0..self.len()).map(|k| e[(i, k)] * self.coefficients[k]).sum())
                .collect::<Vec<f64>>()
        });
        parts.concat()
    }

    /// `‖f_ρ‖_ρ`.
    pub fn l2_norm(&self) -> f64 {
        self.coefficients.iter().map(|f| f * f).sum::<f64>().sqrt()
    }

    /// `Σ_k f_k² / μ_k`: the squared `H_K` norm of the truncated target.
    /// Growth without bound in `T` witnesses `f_ρ ∉ H_K`.
    pub fn rkhs_norm_proxy(&self, decay: DecaySpec) -> f64 {
        decay
            .eigenvalues(self.len())
            .iter()
            .zip(&self.coefficients)
            .map(|(m, f)| f * f / m)
            .sum()
    }
}

fn draw_unit_vector(law: CoefficientLaw, t: usize, rng: &mut rng::Rng) -> Vec<f64> {
    let mut v: Vec<f64> = match law {
        CoefficientLaw::Sphere => (0..t).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
        CoefficientLaw::Harmonic => (1..=t)
            .map(|k| {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                sign / (k as f64).sqrt()
            })
            .collect(),
    };
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm == 0.0 {
        v[0] = 1.0;
    } else {
        v.iter_mut().for_each(|a| *a /= norm);
    }
    v
}

/// Target with `v` uniform on the sphere.
pub fn make_target(decay: DecaySpec, truncation: usize, phi: IndexFunction, seed: u64) -> Result<TargetSpec> {
    make_target_with(decay, truncation, phi, seed, CoefficientLaw::Sphere)
}

pub fn make_target_with(
    decay: DecaySpec,
    truncation: usize,
    phi: IndexFunction,
    seed: u64,
    law: CoefficientLaw,
) -> Result<TargetSpec> {
    decay.validate()?;
    phi.validate()?;
    if truncation == 0 {
        return Err(Error::arg("truncation must be at least 1"));
    }
    let mu = decay.eigenvalues(truncation);
    if !phi.check_admissible(mu[0]).ok() {
        return Err(Error::arg(format!("index function {phi:?} is not admissible")));
    }
    let mut rng = rng::stream(seed, 0);
    let v = draw_unit_vector(law, truncation, &mut rng);
    Ok(target_from_v(decay, phi, seed, law, v))
}

/// Target for an explicitly given `v` (not renormalized).
pub fn target_from_v(decay: DecaySpec, phi: IndexFunction, seed: u64, law: CoefficientLaw, v: Vec<f64>) -> TargetSpec {
    let mu = decay.eigenvalues(v.len());
    let coefficients = mu.iter().zip(&v).map(|(m, vk)| phi.eval(*m) * vk).collect();
    TargetSpec {
        phi,
        coeff_seed: seed,
        law,
        v,
        coefficients,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    Gaussian { sigma: f64 },
    UniformBounded { half_width: f64 },
}

/// Constants `(M, σ)` of the moment condition `E|ε|^p ≤ ½ p! M^{p−2} σ²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BernsteinParams {
    pub m: f64,
    pub sigma: f64,
}

impl BernsteinParams {
    /// Right-hand side of the moment condition for order `p ≥ 2`.
    pub fn moment_bound(&self, p: u32) -> f64 {
        let fact: f64 = (1..=p).map(f64::from).product();
        0.5 * fact * self.m.powi(p as i32 - 2) * self.sigma * self.sigma
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseSpec::Gaussian { sigma } if !(sigma >= 0.0 && sigma.is_finite()) => {
                Err(Error::arg(format!("noise sigma must be nonnegative, got {sigma}")))
            }
            NoiseSpec::UniformBounded { half_width } if !(half_width >= 0.0 && half_width.is_finite()) => {
                Err(Error::arg(format!("noise half width must be nonnegative, got {half_width}")))
            }
            _ => Ok(()),
        }
    }

    pub fn bernstein_params(&self) -> BernsteinParams {
        match *self {
            NoiseSpec::Gaussian { sigma } => BernsteinParams { m: sigma, sigma },
            NoiseSpec::UniformBounded { half_width } => BernsteinParams {
                m: half_width,
                sigma: half_width / 3f64.sqrt(),
            },
        }
    }

    pub fn sample(&self, rng: &mut rng::Rng) -> f64 {
        match *self {
            NoiseSpec::Gaussian { sigma } if sigma > 0.0 => Normal::new(0.0, sigma).expect("validated").sample(rng),
            NoiseSpec::UniformBounded { half_width } if half_width > 0.0 => {
                Uniform::new_inclusive(-half_width, half_width).expect("validated").sample(rng)
            }
            _ => 0.0,
        }
    }
}

/// The exact regression function behind a synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub target: TargetSpec,
    pub decay: DecaySpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub truth: Option<GroundTruth>,
}

/// Sidecar metadata written next to a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub n: usize,
    pub decay: Option<DecaySpec>,
    pub truncation: Option<usize>,
    pub phi: Option<IndexFunction>,
    pub coeff_seed: Option<u64>,
    #[serde(default)]
    pub law: CoefficientLaw,
    pub noise: Option<NoiseSpec>,
    pub sample_seed: Option<u64>,
}

impl Dataset {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::arg(format!(
                "inputs and labels differ in length ({} vs {})",
                xs.len(),
                ys.len()
            )));
        }
        Ok(Dataset { xs, ys, truth: None })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Writes `x,y` rows to `csv_path` and `meta` as JSON to
    /// `<csv_path>.json`.
    pub fn save(&self, csv_path: &Path, meta: &DatasetMeta) -> Result<()> {
        let mut w = csv::Writer::from_path(csv_path)?;
        w.write_record(["x", "y"])?;
        for (x, y) in self.xs.iter().zip(&self.ys) {
            w.write_record([format!("{x:.17e}"), format!("{y:.17e}")])?;
        }
        w.flush().map_err(|e| Error::io(csv_path, e))?;
        let side = sidecar_path(csv_path);
        fs::write(&side, serde_json::to_string_pretty(meta)?).map_err(|e| Error::io(&side, e))?;
        Ok(())
    }

    /// Reads a dataset and its sidecar. When the sidecar describes a
    /// synthetic target it is regenerated, so `truth` is restored.
    pub fn load(csv_path: &Path) -> Result<(Self, DatasetMeta)> {
        let mut r = csv::Reader::from_path(csv_path)?;
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for rec in r.deserialize::<(f64, f64)>() {
            let (x, y) = rec?;
            xs.push(x);
            ys.push(y);
        }
        let side = sidecar_path(csv_path);
        let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let meta: DatasetMeta = serde_json::from_str(&text)?;
        let mut ds = Dataset::new(xs, ys)?;
        if let (Some(decay), Some(t), Some(phi), Some(seed)) = (meta.decay, meta.truncation, meta.phi, meta.coeff_seed) {
            ds.truth = Some(GroundTruth {
                target: make_target_with(decay, t, phi, seed, meta.law)?,
                decay,
            });
        }
        Ok((ds, meta))
    }
}

fn sidecar_path(csv_path: &Path) -> PathBuf {
    let mut s = csv_path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Draws `n` points `x_i ~ U[0, 1]` and labels `y_i = f_ρ(x_i) + ε_i`.
pub fn sample_dataset(
    decay: DecaySpec,
    target: &TargetSpec,
    noise: NoiseSpec,
    n: usize,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::arg("sample size must be at least 1"));
    }
    noise.validate()?;
    let mut rng = rng::stream(seed, 1);
    let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let clean = target.eval_many(&xs);
    let ys = clean.into_iter().map(|f| f + noise.sample(&mut rng)).collect();
    Ok(Dataset {
        xs,
        ys,
        truth: Some(GroundTruth {
            target: target.clone(),
            decay,
        }),
    })
}

/// Exact `‖f̂ − f_ρ‖_ρ` and the spectral tail the truncated kernel misses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L2Error {
    pub error: f64,
    /// `Σ_{k>T} μ_k` for the kernel's truncation `T`.
    pub truncation_tail: f64,
}

/// Exact `L2(ρ)` error of a kernel expansion under a designed kernel. The
/// estimator has coefficients `(f̂)_k = μ_k Σ_j α_j e_k(x̃_j)`.
pub fn l2_rho_error<M: KernelExpansion + ?Sized>(model: &M, kernel: &KernelSpec, truth: &GroundTruth) -> Result<L2Error> {
    let (decay, t) = kernel
        .designed_parts()
        .ok_or_else(|| Error::Unsupported("exact L2(ρ) error needs a designed kernel; use monte_carlo_error".into()))?;
    let coeffs = expansion_coefficients(model, decay, t)?;
    let f = &truth.target.coefficients;
    let len = t.max(f.len());
    let sq: f64 = (0..len)
        .map(|k| {
            let a = coeffs.get(k).copied().unwrap_or(0.0);
            let b = f.get(k).copied().unwrap_or(0.0);
            (a - b) * (a - b)
        })
        .sum();
    Ok(L2Error {
        error: sq.sqrt(),
        truncation_tail: decay.tail_bound(t),
    })
}

/// Basis coefficients `μ_k Σ_j α_j e_k(x̃_j)` of a designed-kernel expansion.
pub fn expansion_coefficients<M: KernelExpansion + ?Sized>(model: &M, decay: DecaySpec, t: usize) -> Result<Vec<f64>> {
    let centers = model.centers();
    let alpha = model.coefficients();
    if centers.len() != alpha.len() {
        return Err(Error::arg("model centers and coefficients differ in length"));
    }
    if let Some(&x) = centers.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::Domain { point: x });
    }
    let mu = decay.eigenvalues(t);
    let blocks = parallel::blocks(centers.len(), parallel::ROW_BLOCK);
    let parts = parallel::map_slice(&blocks, |&(lo, hi)| {
        let e = basis_rows(&centers[lo..hi], t, None);
        (0..t)
            .map(|k| (0..hi - lo).map(|j| alpha[lo + j] * e[(j, k)]).sum::<f64>())
            .collect::<Vec<f64>>()
    });
    let mut out = vec![0.0; t];
    for part in parts {
        for (o, p) in out.iter_mut().zip(part) {
            *o += p;
        }
    }
    Ok(out.into_iter().zip(mu).map(|(s, m)| s * m).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McError {
    /// Root mean square of `f̂ − f_ρ` over the draws.
    pub rms: f64,
    /// Delta-method standard error of `rms`.
    pub stderr: f64,
}

/// Monte-Carlo estimate of `‖f̂ − f_ρ‖_ρ` from `n_mc` uniform draws.
pub fn monte_carlo_error<M, F>(model: &M, kernel: &KernelSpec, target: F, n_mc: usize, seed: u64) -> Result<McError>
where
    M: KernelExpansion + ?Sized,
    F: Fn(f64) -> f64 + Sync,
{
    if n_mc == 0 {
        return Err(Error::arg("n_mc must be at least 1"));
    }
    let mut rng = rng::stream(seed, 2);
    let us: Vec<f64> = (0..n_mc).map(|_| rng.random::<f64>()).collect();
    let pred = model.predict(kernel, &us)?;
    let d2: Vec<f64> = us.iter().zip(&pred).map(|(u, p)| (p - target(*u)).powi(2)).collect();
    let n = n_mc as f64;
    let mean = d2.iter().sum::<f64>() / n;
    let var = if n_mc > 1 {
        d2.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let rms = mean.sqrt();
    let se_mean = (var / n).sqrt();
    let stderr = if rms > 0.0 { se_mean / (2.0 * rms) } else { se_mean.sqrt() };
    Ok(McError { rms, stderr })
}
