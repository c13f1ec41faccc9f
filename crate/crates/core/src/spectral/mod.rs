//! Effective dimensions, index functions, filter qualification, and the
//! a-priori regularization parameter λ₀ solving `N(λ) = λ n`.

mod filters;
mod index;
mod leverage;

use std::io::Write;

use faer::MatRef;
use serde::{Deserialize, Serialize};

pub use filters::{filters, qualification_envelope, qualification_margin, Filter, QUALIFICATION_ENVELOPE};
pub use index::{holder_perturbation_check, Admissibility, IndexFunction};
pub use leverage::{
    c_gamma_for_designed, kernel_source_constant, n_infinity, nx_analytic, nx_empirical, CGamma,
    NInfinitySource, NxEvaluator, DEFAULT_SUP_GRID,
};

use crate::error::{Error, Result};
use crate::kernels::{DecaySpec, KernelSpec};
use crate::linalg;

/// Lower end of the λ₀ bracket.
pub const LAMBDA0_FLOOR: f64 = 1e-16;
/// Relative bracket width at which bisection for λ₀ stops.
pub const LAMBDA0_REL_WIDTH: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ProfileSource {
    Analytic { decay: DecaySpec, truncation: usize },
    /// Eigenvalues of `𝕂/n` for a sample of size `n`.
    Empirical { n: usize },
    Explicit,
}

/// Descending nonnegative eigenvalue sequence; the top value stands in for
/// `‖J_K* J_K‖`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralProfile {
    eigenvalues: Vec<f64>,
    source: ProfileSource,
}

impl SpectralProfile {
    pub fn analytic(decay: DecaySpec, truncation: usize) -> Result<Self> {
        decay.validate()?;
        if truncation == 0 {
            return Err(Error::arg("truncation must be at least 1"));
        }
        Ok(SpectralProfile {
            eigenvalues: decay.eigenvalues(truncation),
            source: ProfileSource::Analytic { decay, truncation },
        })
    }

    /// Analytic profile of a designed kernel.
    pub fn for_kernel(kernel: &KernelSpec) -> Result<Self> {
        let (decay, t) = kernel
            .designed_parts()
            .ok_or_else(|| Error::Unsupported("analytic profile needs a designed kernel".into()))?;
        Self::analytic(decay, t)
    }

    /// Eigenvalues of `𝕂/n` from the Gram matrix of the sample. Round-off
    /// negatives are clamped to zero.
    pub fn empirical(kernel: &KernelSpec, xs: &[f64]) -> Result<Self> {
        let g = kernel.gram(xs)?;
        Self::from_gram(g.as_ref())
    }

    pub fn from_gram(gram: MatRef<'_, f64>) -> Result<Self> {
        let n = gram.nrows();
        let ev = linalg::sym_eigenvalues(gram)?;
        Ok(SpectralProfile {
            eigenvalues: ev.into_iter().map(|v| (v / n as f64).max(0.0)).collect(),
            source: ProfileSource::Empirical { n },
        })
    }

    pub fn from_eigenvalues(mut eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::arg("eigenvalues must be finite and nonnegative"));
        }
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        Ok(SpectralProfile {
            eigenvalues,
            source: ProfileSource::Explicit,
        })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn source(&self) -> &ProfileSource {
        &self.source
    }

    pub fn top(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    /// `N(λ) = Σ σ_k / (σ_k + λ)`.
    pub fn effective_dimension(&self, lambda: f64) -> Result<f64> {
        if !(lambda > 0.0) {
            return Err(Error::arg(format!("lambda must be positive, got {lambda}")));
        }
        Ok(self.effective_dimension_unchecked(lambda))
    }

    pub(crate) fn effective_dimension_unchecked(&self, lambda: f64) -> f64 {
        self.eigenvalues.iter().map(|&s| s / (s + lambda)).sum()
    }

    /// Writes `index,eigenvalue` rows (1-based index).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "eigenvalue"])?;
        for (i, v) in self.eigenvalues.iter().enumerate() {
            w.write_record([(i + 1).to_string(), format!("{v:.17e}")])?;
        }
        w.flush().map_err(|e| Error::io("<profile csv>", e))?;
        Ok(())
    }
}

/// Unique root of `N(λ) = λ n`, by bisection in `log λ` on
/// `[1e-16, σ_1]` (the bracket is widened if a degenerate profile needs it).
pub fn lambda0(profile: &SpectralProfile, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::arg("sample size must be at least 1"));
    }
    if profile.top() <= 0.0 {
        return Err(Error::NoSolution(
            "all eigenvalues are zero, N(λ) = λn has no positive root".into(),
        ));
    }
    let n = n as f64;
    let f = |lam: f64| profile.effective_dimension_unchecked(lam) - lam * n;
    let (mut lo, mut hi) = (LAMBDA0_FLOOR, profile.top());
    while f(hi) > 0.0 {
        hi *= 2.0;
    }
    while f(lo) < 0.0 {
        lo /= 2.0;
        if lo < f64::MIN_POSITIVE {
            return Err(Error::NoSolution("could not bracket λ₀ from below".into()));
        }
    }
    while hi / lo > 1.0 + LAMBDA0_REL_WIDTH {
        let mid = (lo * hi).sqrt();
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo * hi).sqrt())
}

/// `θ_φ(λ) = φ(λ) (1 + √(N(λ) / (n λ)))`.
pub fn theta(phi: &IndexFunction, profile: &SpectralProfile, n: usize, lambda: f64) -> Result<f64> {
    let nl = profile.effective_dimension(lambda)?;
    Ok(phi.eval(lambda) * (1.0 + (nl / (n as f64 * lambda)).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaMinimum {
    pub lambda: f64,
    pub value: f64,
}

/// Minimum of `θ_φ` over a log grid of `points` values in `[lo, hi]`.
pub fn theta_grid_min(
    phi: &IndexFunction,
    profile: &SpectralProfile,
    n: usize,
    lo: f64,
    hi: f64,
    points: usize,
) -> Result<ThetaMinimum> {
    let grid = log_grid(lo, hi, points);
    let vals = crate::parallel::map_slice(&grid, |&lam| theta(phi, profile, n, lam));
    let mut best = ThetaMinimum {
        lambda: f64::NAN,
        value: f64::INFINITY,
    };
    for (lam, v) in grid.iter().zip(vals) {
        let v = v?;
        if v < best.value {
            best = ThetaMinimum { lambda: *lam, value: v };
        }
    }
    Ok(best)
}

/// `points` log-uniform values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi >= lo, "log grid needs 0 < lo <= hi");
    match points {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..points)
                .map(|i| {
                    if i == points - 1 {
                        hi
                    } else {
                        (a + (b - a) * i as f64 / (points - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn effective_dimension_examples() {
        let p = SpectralProfile::from_eigenvalues(vec![1.0, 0.25]).unwrap();
        assert_abs_diff_eq!(p.effective_dimension(0.5).unwrap(), 1.0, epsilon = 1e-15);
        assert!(p.effective_dimension(1e300).unwrap() < 1e-299);
        let zero = SpectralProfile::from_eigenvalues(vec![0.0, 0.0]).unwrap();
        assert_eq!(zero.effective_dimension(0.1).unwrap(), 0.0);
        let one = SpectralProfile::from_eigenvalues(vec![0.3]).unwrap();
        assert_eq!(one.effective_dimension(0.3).unwrap(), 0.5);
        assert!(p.effective_dimension(0.0).is_err());
        assert!(p.effective_dimension(-1.0).is_err());
    }

    #[test]
    fn lambda0_quadratic_oracle() {
        // 1/(1+λ) = 2λ  ⇒  λ = (√3 − 1)/2.
        let p = SpectralProfile::from_eigenvalues(vec![1.0]).unwrap();
        let l = lambda0(&p, 2).unwrap();
        assert_abs_diff_eq!(l, (3f64.sqrt() - 1.0) / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn lambda0_decreases_with_n() {
        let p = SpectralProfile::analytic(DecaySpec::new(0.5).unwrap(), 512).unwrap();
        let mut prev = f64::INFINITY;
        for n in [1, 2, 4, 100, 1000, 10_000, 1_000_000] {
            let l = lambda0(&p, n).unwrap();
            assert!(l < prev);
            // Bracket endpoints have opposite signs.
            let f = |x: f64| p.effective_dimension(x).unwrap() - x * n as f64;
            assert!(f(LAMBDA0_FLOOR) > 0.0);
            assert!(f(p.top()) < 0.0 || n == 1);
            assert!(f(l).abs() <= 1e-9 * (l * n as f64).max(1.0));
            prev = l;
        }
    }

    #[test]
    fn lambda0_degenerate_profile() {
        let p = SpectralProfile::from_eigenvalues(vec![0.0; 3]).unwrap();
        assert!(matches!(lambda0(&p, 10), Err(Error::NoSolution(_))));
    }

    #[test]
    fn theta_at_lambda0_is_twice_phi() {
        let p = SpectralProfile::analytic(DecaySpec::new(0.5).unwrap(), 256).unwrap();
        let phi = IndexFunction::holder(0.25).unwrap();
        let n = 5000;
        let l0 = lambda0(&p, n).unwrap();
        let t = theta(&phi, &p, n, l0).unwrap();
        assert_abs_diff_eq!(t, 2.0 * phi.eval(l0), epsilon = 1e-10);
    }

    #[test]
    fn theta_with_null_profile_is_phi() {
        let p = SpectralProfile::from_eigenvalues(vec![0.0]).unwrap();
        let phi = IndexFunction::holder(0.5).unwrap();
        assert_eq!(theta(&phi, &p, 10, 0.04).unwrap(), 0.2);
        let m = theta_grid_min(&phi, &p, 10, 1e-8, 1.0, 50).unwrap();
        assert_abs_diff_eq!(m.lambda, 1e-8, epsilon = 1e-20);
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(1e-8, 1.0, 50);
        assert_eq!(g.len(), 50);
        assert_abs_diff_eq!(g[0], 1e-8, epsilon = 1e-22);
        assert_eq!(g[49], 1.0);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn profile_csv() {
        let p = SpectralProfile::from_eigenvalues(vec![0.5, 1.0]).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("index,eigenvalue\n1,1.0"));
        assert_eq!(s.lines().count(), 3);
    }
}
