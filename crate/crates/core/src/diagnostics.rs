//! Monte-Carlo checks of the operator concentration bounds.
//!
//! Everything is expressed in the truncated designed eigenbasis. `K(·, x)`
//! has coordinates `w(x)_k = √μ_k e_k(x)`, so `S_x*S_x = (1/n) Σ w(x_i) w(x_i)ᵀ`,
//! `J_K*J_K = diag(μ)`, `P_{zν}` projects onto `span{w(x̃_j)}`, and
//! `S_x*𝕐 = (1/n) Σ y_i w(x_i)`. Each check runs independent trials, every
//! one on its own seeded stream, and summarizes the left-hand sides.

use std::io::Write;

use faer::Mat;
use rand::Rng as _;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{basis_rows, DecaySpec};
use crate::linalg::{self, OpCount};
use crate::nystrom::{size_from_n_infinity, subsample_plain, SizeRuleParams};
use crate::parallel;
use crate::rng;
use crate::spectral::{n_infinity, IndexFunction, NInfinitySource, SpectralProfile, DEFAULT_SUP_GRID};
use crate::synthetic::{NoiseSpec, TargetSpec};
use crate::KernelSpec;

/// Largest truncation accepted by the checks.
pub const MAX_TRUNCATION: usize = 512;
/// Eigenvalues of `W̃ᵀW̃` below this fraction of the top one are treated as
/// outside the sampled span.
const SPAN_FLOOR: f64 = 1e-12;

/// Common Monte-Carlo settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialSetup {
    pub decay: DecaySpec,
    pub truncation: usize,
    pub n: usize,
    pub lambda: f64,
    pub delta: f64,
    pub trials: usize,
    pub seed: u64,
}

impl TrialSetup {
    fn validate(&self) -> Result<()> {
        self.decay.validate()?;
        if self.truncation == 0 || self.truncation > MAX_TRUNCATION {
            return Err(Error::arg(format!(
                "diagnostics need 1 <= T <= {MAX_TRUNCATION}, got {}",
                self.truncation
            )));
        }
        if self.n == 0 || self.trials == 0 {
            return Err(Error::arg("diagnostics need n >= 1 and trials >= 1"));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::arg(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::arg(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        Ok(())
    }

    fn mu(&self) -> Vec<f64> {
        self.decay.eigenvalues(self.truncation)
    }

    fn kernel(&self) -> KernelSpec {
        KernelSpec::DesignedSpectral {
            decay: self.decay,
            truncation: self.truncation,
        }
    }

    fn trial_rng(&self, check: u64, trial: usize) -> rng::Rng {
        let t = trial as u64;
        rng::stream(self.seed, rng::stream_id([check, t >> 32, (t >> 16) & 0xffff, t & 0xffff]))
    }

    fn draw_points(&self, rng: &mut rng::Rng) -> Vec<f64> {
        (0..self.n).map(|_| rng.random::<f64>()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheckReport {
    pub bound_name: String,
    pub n: usize,
    pub lambda: f64,
    pub m: Option<usize>,
    pub trials: usize,
    pub delta: f64,
    pub violations: usize,
    pub violation_rate: f64,
    /// Max over trials of lhs/rhs (rhs is the threshold, or the scale the
    /// quantile ratio divides by).
    pub observed_max_ratio: f64,
    pub median_lhs: f64,
    /// Empirical `(1−δ)`-quantile of the lhs.
    pub quantile_lhs: f64,
    /// `quantile_lhs` over the bound's scale.
    pub quantile_ratio: f64,
    /// Pass/fail threshold on the lhs, for bounds with explicit constants.
    pub threshold: Option<f64>,
    pub truncation_tail: f64,
    pub warnings: Vec<String>,
}

pub const REPORT_HEADER: [&str; 15] = [
    "bound_name",
    "n",
    "lambda",
    "m",
    "trials",
    "violation_rate",
    "quantile_ratio",
    "delta",
    "violations",
    "observed_max_ratio",
    "median_lhs",
    "quantile_lhs",
    "threshold",
    "truncation_tail",
    "warnings",
];

impl BoundCheckReport {
    fn build(
        name: &str,
        setup: &TrialSetup,
        m: Option<usize>,
        lhs: Vec<f64>,
        threshold: Option<f64>,
        scale: f64,
        warnings: Vec<String>,
    ) -> Self {
        let mut sorted = lhs.clone();
        sorted.sort_by(f64::total_cmp);
        let violations = threshold.map_or(0, |t| lhs.iter().filter(|&&v| v > t).count());
        let q = quantile(&sorted, 1.0 - setup.delta);
        let denom = threshold.unwrap_or(scale);
        BoundCheckReport {
            bound_name: name.to_string(),
            n: setup.n,
            lambda: setup.lambda,
            m,
            trials: lhs.len(),
            delta: setup.delta,
            violations,
            violation_rate: violations as f64 / lhs.len() as f64,
            observed_max_ratio: sorted.last().copied().unwrap_or(0.0) / denom,
            median_lhs: quantile(&sorted, 0.5),
            quantile_lhs: q,
            quantile_ratio: if scale > 0.0 { q / scale } else { f64::INFINITY },
            threshold,
            truncation_tail: setup.decay.tail_bound(setup.truncation),
            warnings,
        }
    }

    /// Binomial contract `violation_rate ≤ δ + 2√(δ/trials)`; `None` for
    /// bounds with unspecified constants.
    pub fn passes(&self) -> Option<bool> {
        self.threshold
            .map(|_| self.violation_rate <= self.delta + 2.0 * (self.delta / self.trials as f64).sqrt())
    }

    pub fn csv_record(&self) -> Vec<String> {
        vec![
            self.bound_name.clone(),
            self.n.to_string(),
            format!("{:.10e}", self.lambda),
            self.m.map(|m| m.to_string()).unwrap_or_default(),
            self.trials.to_string(),
            format!("{:.6}", self.violation_rate),
            format!("{:.6e}", self.quantile_ratio),
            format!("{}", self.delta),
            self.violations.to_string(),
            format!("{:.6e}", self.observed_max_ratio),
            format!("{:.6e}", self.median_lhs),
            format!("{:.6e}", self.quantile_lhs),
            self.threshold.map(|t| format!("{t:.6e}")).unwrap_or_default(),
            format!("{:.6e}", self.truncation_tail),
            self.warnings.join("; "),
        ]
    }
}

pub fn write_reports<W: Write>(out: W, reports: &[BoundCheckReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_HEADER)?;
    for r in reports {
        w.write_record(r.csv_record())?;
    }
    w.flush().map_err(|e| Error::io("<diagnostics csv>", e))?;
    Ok(())
}

/// Order statistic at `⌈p·len⌉` of an ascending slice.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let idx = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

/// Orthonormal basis (columns) of the row span of `w`.
pub fn span_basis(w: &Mat<f64>) -> Result<Mat<f64>> {
    let t = w.ncols();
    if w.nrows() == 0 {
        return Ok(Mat::zeros(t, 0));
    }
    let g = linalg::gram_product(w.as_ref(), &mut OpCount::default());
    let (values, vectors) = linalg::sym_eigen(g.as_ref())?;
    let top = values.first().copied().unwrap_or(0.0);
    let r = values.iter().take_while(|&&v| top > 0.0 && v > SPAN_FLOOR * top).count();
    Ok(vectors.subcols(0, r).to_owned())
}

/// `‖diag(√μ)(I − QQᵀ)‖²`.
pub fn projection_lhs(mu: &[f64], q: &Mat<f64>) -> Result<f64> {
    let t = mu.len();
    let a = Mat::<f64>::from_fn(t, t, |i, j| {
        let pq: f64 = (0..q.ncols()).map(|c| q[(i, c)] * q[(j, c)]).sum();
        mu[i].sqrt() * (if i == j { 1.0 } else { 0.0 } - pq)
    });
    Ok(linalg::operator_norm(a.as_ref())?.powi(2))
}

/// `Ŝ = (1/n) WᵀW`.
fn second_moment(w: &Mat<f64>) -> Mat<f64> {
    let n = w.nrows() as f64;
    let mut s = linalg::gram_product(w.as_ref(), &mut OpCount::default());
    for j in 0..s.ncols() {
        for i in 0..s.nrows() {
            s[(i, j)] /= n;
        }
    }
    s
}

/// `‖(λI + diag μ)^{1/2} (λI + Ŝ)^{-1/2}‖`.
pub fn norm_equivalence_lhs(mu: &[f64], s_hat: &Mat<f64>, lambda: f64) -> Result<f64> {
    let t = mu.len();
    let shifted = Mat::<f64>::from_fn(t, t, |i, j| s_hat[(i, j)] + if i == j { lambda } else { 0.0 });
    let (values, v) = linalg::sym_eigen(shifted.as_ref())?;
    let inv_sqrt: Vec<f64> = values.iter().map(|s| 1.0 / s.max(lambda).sqrt()).collect();
    let m = Mat::<f64>::from_fn(t, t, |i, j| {
        let root: f64 = (0..t).map(|c| v[(i, c)] * inv_sqrt[c] * v[(j, c)]).sum();
        (lambda + mu[i]).sqrt() * root
    });
    linalg::operator_norm(m.as_ref())
}

/// `‖(λI + diag μ)^{-1/2} (diag μ − Ŝ)‖`.
pub fn operator_concentration_lhs(mu: &[f64], s_hat: &Mat<f64>, lambda: f64) -> Result<f64> {
    let t = mu.len();
    let m = Mat::<f64>::from_fn(t, t, |i, j| {
        let d = if i == j { mu[i] } else { 0.0 } - s_hat[(i, j)];
        d / (lambda + mu[i]).sqrt()
    });
    linalg::operator_norm(m.as_ref())
}

/// `‖(λI + diag μ)^{-1/2} (J_K*f_ρ − S_x*𝕐)‖` with `J_K*f_ρ = (√μ_k f_k)`.
pub fn vector_concentration_lhs(mu: &[f64], f: &[f64], w: &Mat<f64>, ys: &[f64], lambda: f64) -> f64 {
    let n = ys.len() as f64;
    let sy = linalg::transpose_matvec(w.as_ref(), ys);
    mu.iter()
        .enumerate()
        .map(|(k, m)| {
            let d = m.sqrt() * f.get(k).copied().unwrap_or(0.0) - sy[k] / n;
            d * d / (lambda + m)
        })
        .sum::<f64>()
        .sqrt()
}

/// `‖φ(diag μ) − φ(diag(√μ) QQᵀ diag(√μ))‖` for a Hölder φ.
pub fn smoothness_lhs(mu: &[f64], q: &Mat<f64>, phi: &IndexFunction) -> Result<f64> {
    let t = mu.len();
    let mp = Mat::<f64>::from_fn(t, t, |i, j| {
        let pq: f64 = (0..q.ncols()).map(|c| q[(i, c)] * q[(j, c)]).sum();
        mu[i].sqrt() * pq * mu[j].sqrt()
    });
    let (values, v) = linalg::sym_eigen(mp.as_ref())?;
    let phis: Vec<f64> = values.iter().map(|x| phi.eval(x.max(0.0))).collect();
    let diff = Mat::<f64>::from_fn(t, t, |i, j| {
        let pm: f64 = (0..t).map(|c| v[(i, c)] * phis[c] * v[(j, c)]).sum();
        (if i == j { phi.eval(mu[i]) } else { 0.0 }) - pm
    });
    linalg::operator_norm(diff.as_ref())
}

fn required_m(setup: &TrialSetup) -> Result<usize> {
    let kernel = setup.kernel();
    let n_inf = n_infinity(NInfinitySource::Designed(&kernel), setup.lambda, DEFAULT_SUP_GRID)?;
    let params = SizeRuleParams {
        delta: setup.delta,
        ..SizeRuleParams::default()
    };
    size_from_n_infinity(n_inf, setup.n, setup.lambda, &params)
}

fn size_warnings(setup: &TrialSetup, m: usize) -> Vec<String> {
    match required_m(setup) {
        Ok(req) if m < req => vec![format!("m = {m} below the size rule ({req})")],
        Ok(_) => vec![],
        Err(e) => vec![format!("size rule not evaluated: {e}")],
    }
}

fn check_m(setup: &TrialSetup, m: usize) -> Result<()> {
    if m == 0 || m > setup.n {
        return Err(Error::arg(format!("need 1 <= m <= n, got m = {m}, n = {}", setup.n)));
    }
    Ok(())
}

fn inducing_features(setup: &TrialSetup, m: usize, trial: usize, check: u64, sqrt_mu: &[f64]) -> Result<Mat<f64>> {
    let mut rng = setup.trial_rng(check, trial);
    let xs = setup.draw_points(&mut rng);
    let idx = subsample_plain(setup.n, m, rng.random())?;
    let picked: Vec<f64> = idx.iter().map(|&i| xs[i]).collect();
    Ok(basis_rows(&picked, setup.truncation, Some(sqrt_mu)))
}

/// `‖J_K(I − P_{zν})‖² ≤ 3λ`.
pub fn check_projection_bound(setup: &TrialSetup, m: usize) -> Result<BoundCheckReport> {
    setup.validate()?;
    check_m(setup, m)?;
    let mu = setup.mu();
    let sqrt_mu: Vec<f64> = mu.iter().map(|v| v.sqrt()).collect();
    let lhs = parallel::map_range(setup.trials, |trial| {
        let w = inducing_features(setup, m, trial, 1, &sqrt_mu)?;
        projection_lhs(&mu, &span_basis(&w)?)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let thr = 3.0 * setup.lambda;
    Ok(BoundCheckReport::build("projection", setup, Some(m), lhs, Some(thr), thr, size_warnings(setup, m)))
}

/// `‖(λI + J*J)^{1/2}(λI + S*S)^{-1/2}‖ ≤ 2`.
pub fn check_norm_equivalence(setup: &TrialSetup) -> Result<BoundCheckReport> {
    setup.validate()?;
    let mu = setup.mu();
    let sqrt_mu: Vec<f64> = mu.iter().map(|v| v.sqrt()).collect();
    let lhs = parallel::map_range(setup.trials, |trial| {
        let mut rng = setup.trial_rng(2, trial);
        let xs = setup.draw_points(&mut rng);
        let w = basis_rows(&xs, setup.truncation, Some(&sqrt_mu));
        norm_equivalence_lhs(&mu, &second_moment(&w), setup.lambda)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(BoundCheckReport::build("norm_equivalence", setup, None, lhs, Some(2.0), 2.0, vec![]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Concentration<'a> {
    Operator,
    Vector { target: &'a TargetSpec, noise: NoiseSpec },
}

/// Concentration of `S_x*S_x` or `S_x*𝕐`. The quantile ratio divides by
/// `log(1/δ) √(N(λ)/n)`, estimating the unspecified constant.
pub fn check_concentration(setup: &TrialSetup, which: Concentration<'_>) -> Result<BoundCheckReport> {
    setup.validate()?;
    let mu = setup.mu();
    let sqrt_mu: Vec<f64> = mu.iter().map(|v| v.sqrt()).collect();
    let (name, tag) = match which {
        Concentration::Operator => ("concentration_operator", 3),
        Concentration::Vector { noise, .. } => {
            noise.validate()?;
            ("concentration_vector", 4)
        }
    };
    let lhs = parallel::map_range(setup.trials, |trial| {
        let mut rng = setup.trial_rng(tag, trial);
        let xs = setup.draw_points(&mut rng);
        let w = basis_rows(&xs, setup.truncation, Some(&sqrt_mu));
        match which {
            Concentration::Operator => operator_concentration_lhs(&mu, &second_moment(&w), setup.lambda),
            Concentration::Vector { target, noise } => {
                let ys: Vec<f64> = target
                    .eval_many(&xs)
                    .into_iter()
                    .map(|f| f + noise.sample(&mut rng))
                    .collect();
                Ok(vector_concentration_lhs(&mu, &target.coefficients, &w, &ys, setup.lambda))
            }
        }
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let profile = SpectralProfile::analytic(setup.decay, setup.truncation)?;
    let nl = profile.effective_dimension(setup.lambda)?;
    let scale = (1.0 / setup.delta).ln() * (nl / setup.n as f64).sqrt();
    let mut warnings = vec![];
    if let Concentration::Vector { target, .. } = which {
        if target.len() > setup.truncation {
            warnings.push(format!(
                "target has {} coefficients, only the first {} enter",
                target.len(),
                setup.truncation
            ));
        }
    }
    Ok(BoundCheckReport::build(name, setup, None, lhs, None, scale, warnings))
}

/// `‖φ(J_K J_K*) − φ(J_K P J_K*)‖` against `φ(λ)`, Hölder φ only.
pub fn check_smoothness_perturbation(setup: &TrialSetup, m: usize, phi: &IndexFunction) -> Result<BoundCheckReport> {
    setup.validate()?;
    check_m(setup, m)?;
    if !matches!(phi, IndexFunction::Holder { .. }) {
        return Err(Error::Unsupported(
            "smoothness perturbation check needs a Hölder index function".into(),
        ));
    }
    let mu = setup.mu();
    let sqrt_mu: Vec<f64> = mu.iter().map(|v| v.sqrt()).collect();
    let lhs = parallel::map_range(setup.trials, |trial| {
        let w = inducing_features(setup, m, trial, 5, &sqrt_mu)?;
        smoothness_lhs(&mu, &span_basis(&w)?, phi)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(BoundCheckReport::build(
        "smoothness_perturbation",
        setup,
        Some(m),
        lhs,
        None,
        phi.eval(setup.lambda),
        size_warnings(setup, m),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::lambda0;
    use crate::synthetic::{target_from_v, CoefficientLaw};
    use approx::assert_abs_diff_eq;

    fn setup(t: usize, n: usize, lambda: f64, trials: usize) -> TrialSetup {
        TrialSetup {
            decay: DecaySpec::new(0.5).unwrap(),
            truncation: t,
            n,
            lambda,
            delta: 0.1,
            trials,
            seed: 17,
        }
    }

    #[test]
    fn quantile_indexing() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(quantile(&v, 0.9), 9.0);
        assert_eq!(quantile(&v, 0.5), 5.0);
        assert_eq!(quantile(&v, 1.0), 10.0);
    }

    #[test]
    fn full_projection_has_no_violation() {
        // m = n ≥ T distinct points span R^T, so lhs ≈ 0.
        let s = setup(16, 40, 1e-6, 10);
        let r = check_projection_bound(&s, 40).unwrap();
        assert!(r.quantile_lhs < 1e-10, "{}", r.quantile_lhs);
        assert_eq!(r.violations, 0);
    }

    #[test]
    fn single_point_projection_with_large_lambda() {
        let s = setup(32, 100, 1.0 / 3.0, 20);
        let r = check_projection_bound(&s, 1).unwrap();
        assert_eq!(r.violations, 0);
        assert!(r.observed_max_ratio <= 1.0 + 1e-12);
    }

    #[test]
    fn projection_derived_setting() {
        let mut s = setup(256, 2048, 0.0, 200);
        let profile = SpectralProfile::analytic(s.decay, 256).unwrap();
        s.lambda = lambda0(&profile, 2048).unwrap();
        let m = required_m(&s).unwrap();
        let r = check_projection_bound(&s, m).unwrap();
        assert!(r.violation_rate <= 0.15, "{r:?}");
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn norm_equivalence_limits() {
        let r = check_norm_equivalence(&setup(16, 100_000, 1e-2, 5)).unwrap();
        assert!((r.median_lhs - 1.0).abs() < 0.05, "{}", r.median_lhs);
        let r = check_norm_equivalence(&setup(16, 50, 1e4, 5)).unwrap();
        assert!((r.median_lhs - 1.0).abs() < 1e-3);
        assert_eq!(r.violations, 0);
    }

    #[test]
    fn norm_equivalence_derived_setting() {
        let mut s = setup(256, 2048, 0.0, 200);
        let profile = SpectralProfile::analytic(s.decay, 256).unwrap();
        s.lambda = lambda0(&profile, 2048).unwrap();
        let r = check_norm_equivalence(&s).unwrap();
        assert!(r.violation_rate <= 0.15, "{r:?}");
        assert_eq!(r.passes(), Some(true));
    }

    #[test]
    fn vector_concentration_vanishes_without_signal() {
        let d = DecaySpec::new(0.5).unwrap();
        let zero = target_from_v(d, IndexFunction::holder(0.25).unwrap(), 0, CoefficientLaw::Sphere, vec![0.0; 16]);
        let s = setup(16, 200, 1e-2, 5);
        let r = check_concentration(&s, Concentration::Vector { target: &zero, noise: NoiseSpec::Gaussian { sigma: 0.0 } }).unwrap();
        assert_eq!(r.quantile_ratio, 0.0);
    }

    #[test]
    fn operator_concentration_rate() {
        let lambda = 1e-2;
        let ns = [1_000usize, 10_000, 100_000];
        let meds: Vec<f64> = ns
            .iter()
            .map(|&n| check_concentration(&setup(8, n, lambda, 40), Concentration::Operator).unwrap().median_lhs)
            .collect();
        let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
        let ys: Vec<f64> = meds.iter().map(|m| m.ln()).collect();
        let slope = crate::experiments::fit::ols(&xs, &ys).unwrap().slope;
        assert!((slope + 0.5).abs() <= 0.1, "slope {slope}");
    }

    #[test]
    fn concentration_ratio_stable_in_lambda() {
        let s0 = setup(64, 2048, 0.0, 50);
        let l0 = lambda0(&SpectralProfile::analytic(s0.decay, 64).unwrap(), 2048).unwrap();
        let ratios: Vec<f64> = [l0 / 4.0, l0, 4.0 * l0]
            .iter()
            .map(|&l| {
                check_concentration(&TrialSetup { lambda: l, ..s0 }, Concentration::Operator)
                    .unwrap()
                    .quantile_ratio
            })
            .collect();
        let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), r| (a.min(*r), b.max(*r)));
        assert!(hi / lo <= 3.0, "{ratios:?}");
    }

    #[test]
    fn smoothness_trivial_cases() {
        let mu = DecaySpec::new(0.5).unwrap().eigenvalues(8);
        let phi = IndexFunction::holder(0.5).unwrap();
        let empty = Mat::<f64>::zeros(8, 0);
        assert_abs_diff_eq!(smoothness_lhs(&mu, &empty, &phi).unwrap(), mu[0].sqrt(), epsilon = 1e-12);
        let id = Mat::<f64>::identity(8, 8);
        assert!(smoothness_lhs(&mu, &id, &phi).unwrap() < 1e-7);
        let s = setup(8, 8, 0.1, 4);
        let r = check_smoothness_perturbation(&s, 8, &phi).unwrap();
        assert!(r.median_lhs < 1e-6);
        let log = IndexFunction::log_type(0.5).unwrap();
        assert!(matches!(check_smoothness_perturbation(&s, 8, &log), Err(Error::Unsupported(_))));
    }

    #[test]
    fn reports_are_deterministic() {
        let s = setup(32, 300, 0.01, 8);
        let a = check_projection_bound(&s, 30).unwrap();
        let b = check_projection_bound(&s, 30).unwrap();
        assert_eq!(a, b);
        let mut buf = Vec::new();
        write_reports(&mut buf, &[a]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("bound_name,n,lambda,m,trials,violation_rate,quantile_ratio"));
    }
}
