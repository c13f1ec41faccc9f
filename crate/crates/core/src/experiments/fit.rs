//! Least-squares fits on log-log data.

use faer::{linalg::solvers::SolveLstsq, Mat};
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y ≈ intercept + slope·x`.
pub fn ols(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    let f = ols_multi(&[xs.to_vec()], ys)?;
    Ok(LinearFit {
        slope: f.coefficients[1],
        intercept: f.coefficients[0],
        r_squared: f.r_squared,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiFit {
    /// Intercept first, then one coefficient per covariate.
    pub coefficients: Vec<f64>,
    pub r_squared: f64,
}

/// Least squares with an intercept and the given covariate columns, solved
/// by QR.
pub fn ols_multi(covariates: &[Vec<f64>], ys: &[f64]) -> Result<MultiFit> {
    let n = ys.len();
    let p = covariates.len() + 1;
    if covariates.iter().any(|c| c.len() != n) {
        return Err(Error::arg("covariates and responses differ in length"));
    }
    if n < p + 1 {
        return Err(Error::arg(format!("need at least {} points for {} coefficients, got {n}", p + 1, p)));
    }
    if ys.iter().chain(covariates.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::arg("fit data must be finite"));
    }
    let x = Mat::<f64>::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { covariates[j - 1][i] });
    let y = Mat::<f64>::from_fn(n, 1, |i, _| ys[i]);
    let beta = x.qr().solve_lstsq(&y);
    let coefficients: Vec<f64> = (0..p).map(|j| beta[(j, 0)]).collect();
    let mean = ys.iter().sum::<f64>() / n as f64;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for i in 0..n {
        let fit: f64 = (0..p).map(|j| x[(i, j)] * coefficients[j]).sum();
        ss_res += (ys[i] - fit).powi(2);
        ss_tot += (ys[i] - mean).powi(2);
    }
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(MultiFit {
        coefficients,
        r_squared,
    })
}

/// Empirical rate: slope of log(median error) against log n.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFitResult {
    pub exponent: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// `(log n, log median error)`.
    pub points: Vec<(f64, f64)>,
}

pub fn fit_rate(ns: &[usize], medians: &[f64]) -> Result<RateFitResult> {
    if ns.len() < 3 {
        return Err(Error::arg(format!("a rate fit needs at least 3 points, got {}", ns.len())));
    }
    if medians.iter().any(|m| !(*m > 0.0)) {
        return Err(Error::arg("errors must be positive for a log-log fit"));
    }
    let points: Vec<(f64, f64)> = ns.iter().zip(medians).map(|(&n, &e)| ((n as f64).ln(), e.ln())).collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
    let f = ols(&xs, &ys)?;
    Ok(RateFitResult {
        exponent: f.slope,
        intercept: f.intercept,
        r_squared: f.r_squared,
        points,
    })
}

/// Median (mean of the two middle values for even lengths).
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = v.len() / 2;
    if v.len() % 2 == 1 {
        v[h]
    } else {
        0.5 * (v[h - 1] + v[h])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 0.5 * x).collect();
        let f = ols(&xs, &ys).unwrap();
        assert_abs_diff_eq!(f.slope, -0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(f.intercept, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.r_squared, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn recovers_loglog_model() {
        let ns: Vec<f64> = (10..=15).map(|k| 2f64.powi(k)).collect();
        let l: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
        let ll: Vec<f64> = l.iter().map(|v| v.ln()).collect();
        let ys: Vec<f64> = l.iter().zip(&ll).map(|(a, b)| 1.0 + 1.3 * a + 2.0 * b).collect();
        let f = ols_multi(&[l, ll], &ys).unwrap();
        assert_abs_diff_eq!(f.coefficients[1], 1.3, epsilon = 1e-8);
        assert_abs_diff_eq!(f.coefficients[2], 2.0, epsilon = 1e-7);
    }

    #[test]
    fn rate_fit_power_law() {
        let ns = [256, 512, 1024, 2048, 4096];
        let errs: Vec<f64> = ns.iter().map(|&n| 3.0 * (n as f64).powf(-1.0 / 6.0)).collect();
        let f = fit_rate(&ns, &errs).unwrap();
        assert_abs_diff_eq!(f.exponent, -1.0 / 6.0, epsilon = 1e-12);
        assert_eq!(f.points.len(), 5);
        assert!(fit_rate(&ns[..2], &errs[..2]).is_err());
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    proptest! {
        #[test]
        fn slope_is_shift_invariant(a in -5.0f64..5.0, b in -3.0f64..3.0, shift in -10.0f64..10.0) {
            let xs: Vec<f64> = (0..6).map(f64::from).collect();
            let ys: Vec<f64> = xs.iter().enumerate().map(|(i, x)| a + b * x + if i % 2 == 0 { 0.1 } else { -0.1 }).collect();
            let ys2: Vec<f64> = ys.iter().map(|y| y + shift).collect();
            let f1 = ols(&xs, &ys).unwrap();
            let f2 = ols(&xs, &ys2).unwrap();
            prop_assert!((f1.slope - f2.slope).abs() < 1e-9);
        }
    }
}
