use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smoothness index function φ of a source condition `f = φ(J_K J_K*) v`.
///
/// `LogType` is `log^{-r}(1/t)`, which blows up as `t → 1`. It is evaluated
/// up to a cap and held constant above it. The default cap is
/// `e^{-max(1, 2r)}`: at `e^{-1}` for `r ≤ 1/2`, and lower for larger `r`
/// because `√t / log^{-r}(1/t)` stops being nondecreasing above `e^{-2r}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum IndexFunction {
    Holder {
        r: f64,
    },
    LogType {
        r: f64,
        #[serde(default)]
        cap: Option<f64>,
    },
}

/// Outcome of the numerical admissibility check on a log grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Admissibility {
    /// `φ` strictly increasing on `(0, cap]` and nondecreasing beyond.
    pub increasing: bool,
    /// `√t / φ(t)` nondecreasing.
    pub misspecified: bool,
}

impl Admissibility {
    pub fn ok(&self) -> bool {
        self.increasing && self.misspecified
    }
}

impl IndexFunction {
    pub fn holder(r: f64) -> Result<Self> {
        let f = IndexFunction::Holder { r };
        f.validate()?;
        Ok(f)
    }

    pub fn log_type(r: f64) -> Result<Self> {
        let f = IndexFunction::LogType { r, cap: None };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            IndexFunction::Holder { r } => {
                if !(r > 0.0 && r <= 0.5) {
                    return Err(Error::arg(format!("Hölder exponent must lie in (0, 1/2], got {r}")));
                }
            }
            IndexFunction::LogType { r, cap } => {
                if !(r > 0.0 && r <= 1.0) {
                    return Err(Error::arg(format!("log-type exponent must lie in (0, 1], got {r}")));
                }
                if let Some(c) = cap {
                    if !(c > 0.0 && c < 1.0) {
                        return Err(Error::arg(format!("log-type cap must lie in (0, 1), got {c}")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn exponent(&self) -> f64 {
        match *self {
            IndexFunction::Holder { r } | IndexFunction::LogType { r, .. } => r,
        }
    }

    /// Cap above which a log-type φ is held constant (`None` for Hölder).
    pub fn cap(&self) -> Option<f64> {
        match *self {
            IndexFunction::Holder { .. } => None,
            IndexFunction::LogType { r, cap } => Some(cap.unwrap_or((-(2.0 * r).max(1.0)).exp())),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match *self {
            IndexFunction::Holder { r } => t.powf(r),
            IndexFunction::LogType { r, .. } => {
                let t = t.min(self.cap().unwrap());
                (1.0 / t).ln().powf(-r)
            }
        }
    }

    /// Checks monotonicity of φ and of `√t/φ(t)` on a log grid over
    /// `[1e-12, upper]`.
    pub fn check_admissible(&self, upper: f64) -> Admissibility {
        let grid = super::log_grid(1e-12, upper.max(1e-11), 2000);
        let cap = self.cap().unwrap_or(f64::INFINITY);
        let mut increasing = self.eval(0.0) == 0.0;
        let mut misspecified = true;
        for w in grid.windows(2) {
            let (a, b) = (self.eval(w[0]), self.eval(w[1]));
            if w[1] <= cap {
                increasing &= b > a;
            } else {
                increasing &= b >= a;
            }
            let (qa, qb) = (w[0].sqrt() / a, w[1].sqrt() / b);
            misspecified &= qb >= qa * (1.0 - 1e-12);
        }
        Admissibility {
            increasing,
            misspecified,
        }
    }
}

/// Checks `|a^r − b^r| ≤ |a − b|^r`, the scalar form of the Hölder
/// perturbation inequality with constant 1.
pub fn holder_perturbation_check(r: f64, a: f64, b: f64) -> bool {
    debug_assert!(a >= 0.0 && b >= 0.0);
    let lhs = (a.powf(r) - b.powf(r)).abs();
    let rhs = (a - b).abs().powf(r);
    lhs <= rhs * (1.0 + 1e-12) + 1e-300
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    #[test]
    fn evaluation() {
        let h = IndexFunction::holder(0.5).unwrap();
        assert_eq!(h.eval(0.0), 0.0);
        assert_abs_diff_eq!(h.eval(0.25), 0.5, epsilon = 1e-15);
        let l = IndexFunction::log_type(0.5).unwrap();
        assert_abs_diff_eq!(l.eval((-4.0f64).exp()), 0.5, epsilon = 1e-14);
        // Constant above the cap e^{-1}.
        assert_abs_diff_eq!(l.eval(0.9), 1.0, epsilon = 1e-14);
        assert_eq!(l.eval(0.0), 0.0);
    }

    #[test]
    fn validation() {
        assert!(IndexFunction::holder(0.6).is_err());
        assert!(IndexFunction::holder(0.0).is_err());
        assert!(IndexFunction::log_type(1.2).is_err());
    }

    #[test]
    fn in_scope_families_are_admissible() {
        for r in [0.05, 0.1, 0.25, 0.5] {
            assert!(IndexFunction::holder(r).unwrap().check_admissible(1.5).ok());
        }
        for r in [0.25, 0.5, 0.75, 1.0] {
            let a = IndexFunction::log_type(r).unwrap().check_admissible(1.5);
            assert!(a.ok(), "log r={r}: {a:?}");
        }
    }

    #[test]
    fn cap_at_e_inverse_breaks_large_log_exponents() {
        let f = IndexFunction::LogType {
            r: 1.0,
            cap: Some((-1.0f64).exp()),
        };
        assert!(!f.check_admissible(1.0).misspecified);
    }

    #[test]
    fn holder_perturbation_examples() {
        assert!(holder_perturbation_check(0.3, 2.0, 2.0));
        assert!(holder_perturbation_check(0.5, 1.0, 0.0));
        let mut rng = crate::rng::stream(11, 0);
        for r in [0.1, 0.2, 0.3, 0.4, 0.5] {
            for _ in 0..10_000 {
                let a = 10.0 * rng.random::<f64>();
                let b = 10.0 * rng.random::<f64>();
                assert!(holder_perturbation_check(r, a, b), "r={r} a={a} b={b}");
            }
        }
    }
}
