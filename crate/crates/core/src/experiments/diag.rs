//! Monte-Carlo checks of the probabilistic bounds.

use std::fmt::Write as _;

use super::{derive_seed, fit_rate, median, out_dir, write_summary, Check, ExperimentConfig, RateFitResult, SweepOutput};
use crate::diagnostics::{
    check_concentration, check_norm_equivalence, check_projection_bound, check_smoothness_perturbation, write_reports,
    BoundCheckReport, Concentration, TrialSetup,
};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::nystrom::size_from_n_infinity;
use crate::spectral::{lambda0, n_infinity, IndexFunction, NInfinitySource, SpectralProfile, DEFAULT_SUP_GRID};
use crate::synthetic::make_target_with;

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsResult {
    pub setup: TrialSetup,
    pub m: usize,
    pub reports: Vec<BoundCheckReport>,
    /// Operator-concentration median lhs against `n`, when configured.
    pub slope: Option<RateFitResult>,
    pub output: SweepOutput,
}

pub fn run_diagnostics(cfg: &ExperimentConfig) -> Result<DiagnosticsResult> {
    cfg.validate()?;
    let d = &cfg.diagnostics;
    let (decay, _) = cfg.target_spectrum();
    let t = d.truncation;
    let profile = SpectralProfile::analytic(decay, t)?;
    let lambda = match d.lambda {
        Some(l) => l,
        None => lambda0(&profile, d.n)?,
    };
    let setup = TrialSetup {
        decay,
        truncation: t,
        n: d.n,
        lambda,
        delta: cfg.size_rule.delta,
        trials: d.trials,
        seed: cfg.seed,
    };
    let m = match d.m {
        Some(m) => m,
        None => {
            let kernel = KernelSpec::DesignedSpectral { decay, truncation: t };
            let n_inf = match cfg.size_rule.lemma_bound(lambda) {
                Some(v) => v,
                None => n_infinity(NInfinitySource::Designed(&kernel), lambda, DEFAULT_SUP_GRID)?,
            };
            size_from_n_infinity(n_inf, d.n, lambda, &cfg.size_rule)?
        }
    };
    let target = make_target_with(
        decay,
        t,
        cfg.target.phi,
        derive_seed(cfg.seed, [super::TAG_TARGET, 0, 0, 1]),
        cfg.target.law,
    )?;
    let (phi, phi_note) = match cfg.target.phi {
        IndexFunction::Holder { .. } => (cfg.target.phi, None),
        _ => (
            IndexFunction::Holder { r: 0.5 },
            Some("smoothness check uses holder(0.5); the configured φ is not Hölder".to_string()),
        ),
    };
    log::info!("diagnostics: T = {t}, n = {}, λ = {lambda:.3e}, m = {m}", d.n);

    let mut reports = vec![
        check_projection_bound(&setup, m)?,
        check_norm_equivalence(&setup)?,
        check_concentration(&setup, Concentration::Operator)?,
        check_concentration(
            &setup,
            Concentration::Vector {
                target: &target,
                noise: cfg.noise,
            },
        )?,
        check_smoothness_perturbation(&setup, m, &phi)?,
    ];
    if let Some(note) = phi_note {
        reports[4].warnings.push(note);
    }

    let slope = if d.slope_n_grid.is_empty() {
        None
    } else {
        let slope_profile = SpectralProfile::analytic(decay, d.slope_truncation)?;
        if !(d.slope_lambda > 0.0) {
            return Err(Error::Config("diagnostics.slope_lambda must be positive".into()));
        }
        slope_profile.effective_dimension(d.slope_lambda)?;
        let medians = d
            .slope_n_grid
            .iter()
            .map(|&n| {
                let s = TrialSetup {
                    truncation: d.slope_truncation,
                    n,
                    lambda: d.slope_lambda,
                    ..setup
                };
                check_concentration(&s, Concentration::Operator).map(|r| r.median_lhs)
            })
            .collect::<Result<Vec<_>>>()?;
        Some(fit_rate(&d.slope_n_grid, &medians)?)
    };

    let mut checks: Vec<Check> = reports
        .iter()
        .filter_map(|r| {
            r.passes().map(|ok| {
                Check::new(
                    format!("{}_violation_rate", r.bound_name),
                    ok,
                    format!(
                        "{} of {} trials violate, rate {:.4} (δ = {})",
                        r.violations, r.trials, r.violation_rate, r.delta
                    ),
                )
            })
        })
        .collect();
    if let Some(f) = &slope {
        checks.push(Check::new(
            "operator_concentration_slope",
            (f.exponent + 0.5).abs() <= d.slope_tolerance,
            format!("slope {:.4}, expected -0.5 ± {}", f.exponent, d.slope_tolerance),
        ));
    }

    let dir = out_dir(cfg)?;
    let csv = dir.join("diagnostics.csv");
    let mut buf = Vec::new();
    write_reports(&mut buf, &reports)?;
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut text = format!("# krr-nystrom diagnostics\n# generated_unix_seconds={stamp}\n");
    text.push_str(&String::from_utf8(buf).expect("CSV output is UTF-8"));
    std::fs::write(&csv, text).map_err(|e| Error::io(&csv, e))?;

    let mut body = String::new();
    let _ = writeln!(body, "T = {t}, n = {}, λ = {lambda:.6e}, m = {m}, trials = {}", d.n, d.trials);
    for r in &reports {
        let _ = writeln!(
            body,
            "{:<24} median lhs {:.4e}  quantile ratio {:.4}  max ratio {:.4}",
            r.bound_name, r.median_lhs, r.quantile_ratio, r.observed_max_ratio
        );
    }
    if let Some(f) = &slope {
        let meds: Vec<f64> = f.points.iter().map(|p| p.1.exp()).collect();
        let _ = writeln!(
            body,
            "operator concentration slope {:.4} over n = {:?} (median lhs {:?}, overall median {:.3e})",
            f.exponent,
            d.slope_n_grid,
            meds,
            median(&meds)
        );
    }
    let summary_path = dir.join("diagnostics_summary.txt");
    let summary = write_summary(&summary_path, "diagnostics", &body, &checks)?;
    Ok(DiagnosticsResult {
        setup,
        m,
        reports,
        slope,
        output: SweepOutput {
            csv,
            summary_path,
            summary,
            checks,
        },
    })
}
