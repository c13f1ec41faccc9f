use crate::error::{Error, Result};

use super::IndexFunction;

/// Tikhonov filter `g_λ(t) = 1/(t+λ)` and residual `r_λ(t) = λ/(t+λ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Filter {
    pub g: f64,
    pub r: f64,
}

pub fn filters(lambda: f64, t: f64) -> Filter {
    debug_assert!(lambda > 0.0 && t >= 0.0);
    let denom = t + lambda;
    Filter {
        g: 1.0 / denom,
        r: lambda / denom,
    }
}

/// Envelope used for `q > 0`; the inequality there only holds up to an
/// unspecified constant.
pub const QUALIFICATION_ENVELOPE: f64 = 2.0;

/// `max_t r_λ(t) t^q φ(t) / (λ^q φ(λ))` over `t_grid`.
pub fn qualification_margin(phi: &IndexFunction, lambda: f64, q: f64, t_grid: &[f64]) -> Result<f64> {
    if !(0.0..=0.5).contains(&q) {
        return Err(Error::arg(format!("qualification order q must lie in [0, 1/2], got {q}")));
    }
    if !(lambda > 0.0) {
        return Err(Error::arg(format!("lambda must be positive, got {lambda}")));
    }
    let denom = lambda.powf(q) * phi.eval(lambda);
    let sup = t_grid
        .iter()
        .filter(|&&t| t > 0.0)
        .map(|&t| filters(lambda, t).r * t.powf(q) * phi.eval(t))
        .fold(0.0f64, f64::max);
    Ok(sup / denom)
}

/// Envelope the margin must respect: 1 for `q = 0`, 2 otherwise.
pub fn qualification_envelope(q: f64) -> f64 {
    if q == 0.0 {
        1.0
    } else {
        QUALIFICATION_ENVELOPE
    }
}

#[cfg(test)]
mod tests {
    use super::super::log_grid;
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn filter_values() {
        let f = filters(0.5, 0.0);
        assert_eq!(f.g, 2.0);
        assert_eq!(f.r, 1.0);
        assert_eq!(filters(0.3, 0.3).r, 0.5);
    }

    #[test]
    fn sqrt_margin_is_one_half() {
        // sup_t λ√t/(λ+t) = √λ/2 at t = λ.
        let phi = IndexFunction::holder(0.5).unwrap();
        for lambda in [1e-6, 1e-3, 0.1] {
            let mut grid = log_grid(1e-12, 1.0, 5000);
            grid.push(lambda);
            let m = qualification_margin(&phi, lambda, 0.0, &grid).unwrap();
            assert_abs_diff_eq!(m, 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn half_order_bound_on_sqrt() {
        let phi = IndexFunction::holder(0.5).unwrap();
        let grid = log_grid(1e-14, 1.0, 10_000);
        for lambda in log_grid(1e-8, 1.0, 20) {
            let m = qualification_margin(&phi, lambda, 0.5, &grid).unwrap();
            assert!(m <= 1.0 + 1e-12, "λ={lambda}: {m}");
        }
    }

    #[test]
    fn quarter_holder_order_zero() {
        let phi = IndexFunction::holder(0.25).unwrap();
        let grid = log_grid(1e-14, 1.0, 10_000);
        for lambda in log_grid(1e-8, 1.0, 20) {
            assert!(qualification_margin(&phi, lambda, 0.0, &grid).unwrap() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn order_out_of_range() {
        let phi = IndexFunction::holder(0.5).unwrap();
        assert!(qualification_margin(&phi, 0.1, 0.6, &[0.1]).is_err());
        assert!(qualification_margin(&phi, 0.1, -0.1, &[0.1]).is_err());
    }

    proptest! {
        #[test]
        fn filter_identity(t in 0.0f64..1e6, lambda in 1e-12f64..1e6) {
            let f = filters(lambda, t);
            prop_assert!((f.g * t + f.r - 1.0).abs() <= 4.0 * f64::EPSILON);
            prop_assert!(f.r > 0.0 && f.r <= 1.0);
        }
    }
}
