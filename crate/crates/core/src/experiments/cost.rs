//! Flop scaling of Nyström KRR at `λ₀` when `m` follows `N∞(λ) ≤ c_γ² λ^{γ−1}`.

use std::fmt::Write as _;

use super::rate::whitening_label;
use super::{
    fmt_f, fmt_opt, median, ols, ols_multi, out_dir, run_batched, write_csv, write_summary, Check, ErrorRecord,
    ExperimentConfig, LinearFit, Problem, SweepOutput, Timer,
};
use crate::error::{Error, Result};
use crate::nystrom::{fit_nystrom, size_from_n_infinity, subsample_plain, SizeRuleParams, Whitening};
use crate::spectral::{c_gamma_for_designed, lambda0};

pub const COST_HEADER: [&str; 13] = [
    "n",
    "rep",
    "m",
    "lambda",
    "seed",
    "n_infinity_bound",
    "error",
    "mc_error",
    "mc_stderr",
    "flops",
    "kernel_evals",
    "wall_ms",
    "warnings",
];

#[derive(Debug, Clone, PartialEq)]
pub struct CostRow {
    pub n: usize,
    pub rep: usize,
    pub m: usize,
    pub lambda: f64,
    pub seed: u64,
    pub n_infinity_bound: f64,
    pub error: ErrorRecord,
    pub flops: u64,
    pub kernel_evals: u64,
    pub wall_ms: String,
    pub whitening: Whitening,
    pub warnings: Vec<String>,
}

impl CostRow {
    fn record(&self) -> Vec<String> {
        let mut warnings = self.warnings.clone();
        if self.whitening != Whitening::Cholesky {
            warnings.push(format!("whitening {}", whitening_label(self.whitening)));
        }
        vec![
            self.n.to_string(),
            self.rep.to_string(),
            self.m.to_string(),
            fmt_f(self.lambda),
            self.seed.to_string(),
            fmt_f(self.n_infinity_bound),
            fmt_opt(self.error.exact),
            fmt_opt(self.error.mc.map(|m| m.rms)),
            fmt_opt(self.error.mc.map(|m| m.stderr)),
            self.flops.to_string(),
            self.kernel_evals.to_string(),
            self.wall_ms.clone(),
            warnings.join("; "),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostSweepResult {
    pub rows: Vec<CostRow>,
    pub gamma: f64,
    pub c_gamma: f64,
    /// `(3 + s − 2γ)/(1 + s)`.
    pub predicted_exponent: f64,
    /// log flops on log n.
    pub plain_fit: LinearFit,
    /// log flops on log n and log log n; this is the log n coefficient.
    pub adjusted_exponent: f64,
    pub adjusted_r_squared: f64,
    /// `2γ + s > 1`.
    pub subquadratic: bool,
    pub output: SweepOutput,
}

pub fn predicted_cost_exponent(s: f64, gamma: f64) -> f64 {
    (3.0 + s - 2.0 * gamma) / (1.0 + s)
}

pub fn run_cost_sweep(cfg: &ExperimentConfig) -> Result<CostSweepResult> {
    let p = Problem::new(cfg)?;
    let (decay, t) = cfg
        .kernel
        .designed_parts()
        .ok_or_else(|| Error::Unsupported("cost-sweep needs a designed_spectral kernel".into()))?;
    let gamma = cfg
        .size_rule
        .gamma
        .ok_or_else(|| Error::Config("cost-sweep needs size_rule.gamma".into()))?;
    let c_gamma = match cfg.size_rule.c_gamma {
        Some(c) => c,
        None => c_gamma_for_designed(decay, t, gamma)?.value(),
    };
    if cfg.n_grid.len() < 3 {
        return Err(Error::Config("cost-sweep needs at least 3 n_grid points".into()));
    }
    let rule = SizeRuleParams {
        c_gamma: Some(c_gamma),
        ..cfg.size_rule
    };
    let profile = p.profile.as_ref().expect("designed kernels carry a profile");
    let subquadratic = 2.0 * gamma + decay.s > 1.0;
    let reps = cfg.repetitions;

    let mut rows = Vec::new();
    for (n_idx, &n) in cfg.n_grid.iter().enumerate() {
        let lambda = lambda0(profile, n)?;
        let bound = rule.lemma_bound(lambda).expect("gamma and c_gamma are set");
        let m = size_from_n_infinity(bound, n, lambda, &rule)?;
        let batch = p.batch_size(n, Some(m), reps);
        log::info!("cost-sweep n = {n}: λ₀ = {lambda:.3e}, m = {m}");
        let reps_idx: Vec<usize> = (0..reps).collect();
        let cells = run_batched(&reps_idx, batch, |&rep| -> Result<CostRow> {
            let timer = Timer::start(cfg.timing);
            let target = p.target(rep)?;
            let (data, seed) = p.dataset(&target, n, [n_idx as u64, rep as u64])?;
            let idx = subsample_plain(n, m, p.subsample_seed([n_idx as u64, rep as u64, 0]))?;
            let model = fit_nystrom(&p.kernel, &data, lambda, &idx)?;
            let truth = data.truth.as_ref().expect("synthetic data has a ground truth");
            let error = p.error(&model, truth, [n_idx as u64, rep as u64, 0])?;
            let mut warnings: Vec<String> = p.admissibility_warning(lambda, n, &data.xs)?.into_iter().collect();
            if !subquadratic {
                warnings.push("no subquadratic guarantee".into());
            }
            Ok(CostRow {
                n,
                rep,
                m,
                lambda,
                seed,
                n_infinity_bound: bound,
                error,
                flops: model.opcount.flops,
                kernel_evals: model.opcount.kernel_evaluations,
                wall_ms: timer.cell(),
                whitening: model.whitening,
                warnings,
            })
        });
        for c in cells {
            rows.push(c?);
        }
    }

    let log_n: Vec<f64> = cfg.n_grid.iter().map(|&n| (n as f64).ln()).collect();
    let log_flops: Vec<f64> = cfg
        .n_grid
        .iter()
        .map(|&n| {
            let f: Vec<f64> = rows.iter().filter(|r| r.n == n).map(|r| r.flops as f64).collect();
            median(&f).ln()
        })
        .collect();
    let plain_fit = ols(&log_n, &log_flops)?;
    let loglog: Vec<f64> = log_n.iter().map(|l| l.ln()).collect();
    let (adjusted_exponent, adjusted_r_squared) = if cfg.n_grid.len() >= 4 {
        let f = ols_multi(&[log_n.clone(), loglog], &log_flops)?;
        (f.coefficients[1], f.r_squared)
    } else {
        (plain_fit.slope, plain_fit.r_squared)
    };
    let predicted = predicted_cost_exponent(decay.s, gamma);

    let tol = &cfg.tolerances;
    let checks = vec![
        Check::new(
            "cost_exponent",
            (adjusted_exponent - predicted).abs() <= tol.cost_tolerance,
            format!(
                "log-adjusted exponent {adjusted_exponent:.4}, predicted {predicted:.4} ± {}",
                tol.cost_tolerance
            ),
        ),
        Check::new(
            "cost_ceiling",
            plain_fit.slope < tol.cost_ceiling,
            format!("plain exponent {:.4}, need < {}", plain_fit.slope, tol.cost_ceiling),
        ),
    ];

    let dir = out_dir(cfg)?;
    let csv = dir.join("cost_sweep.csv");
    let records: Vec<Vec<String>> = rows.iter().map(CostRow::record).collect();
    write_csv(&csv, "cost-sweep", &COST_HEADER, &records)?;
    let mut body = String::new();
    let _ = writeln!(body, "gamma = {gamma}, c_gamma = {c_gamma:.6}, s = {}", decay.s);
    if !subquadratic {
        let _ = writeln!(body, "warning: 2γ + s ≤ 1, no subquadratic guarantee");
    }
    for (i, &n) in cfg.n_grid.iter().enumerate() {
        let r = rows.iter().find(|r| r.n == n).expect("every n has a row");
        let _ = writeln!(
            body,
            "n = {n:>7}  λ₀ = {:.4e}  m = {:>6}  median flops = {:.4e}",
            r.lambda,
            r.m,
            log_flops[i].exp()
        );
    }
    let _ = writeln!(
        body,
        "plain exponent {:.4} (r² {:.4}); log-adjusted exponent {adjusted_exponent:.4} (r² {adjusted_r_squared:.4}); predicted {predicted:.4}",
        plain_fit.slope, plain_fit.r_squared
    );
    let summary_path = dir.join("cost_sweep_summary.txt");
    let summary = write_summary(&summary_path, "cost-sweep", &body, &checks)?;
    Ok(CostSweepResult {
        rows,
        gamma,
        c_gamma,
        predicted_exponent: predicted,
        plain_fit,
        adjusted_exponent,
        adjusted_r_squared,
        subquadratic,
        output: SweepOutput {
            csv,
            summary_path,
            summary,
            checks,
        },
    })
}
