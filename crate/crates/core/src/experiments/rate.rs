//! Learning-rate sweep over `n`.

use std::fmt::Write as _;

use super::{
    fmt_f, fmt_opt, median, out_dir, run_batched, write_csv, write_summary, Check, ErrorRecord, ExperimentConfig,
    LambdaPolicy, Problem, RateFitResult, SweepOutput, Timer,
};
use crate::error::{Error, Result};
use crate::krr::fit_krr;
use crate::nystrom::{fit_nystrom, subsample_plain, subsample_size, Whitening};

/// Fewest grid points accepted for a rate fit.
pub const MIN_RATE_POINTS: usize = 5;

pub const RATE_HEADER: [&str; 15] = [
    "n",
    "rep",
    "m",
    "lambda",
    "lambda_admissible",
    "seed",
    "error",
    "mc_error",
    "mc_stderr",
    "krr_error",
    "flops",
    "kernel_evals",
    "wall_ms",
    "whitening",
    "warnings",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub n: usize,
    pub rep: usize,
    pub m: usize,
    pub lambda: f64,
    pub lambda_admissible: bool,
    pub seed: u64,
    pub error: ErrorRecord,
    pub krr_error: Option<ErrorRecord>,
    pub flops: u64,
    pub kernel_evals: u64,
    pub wall_ms: String,
    pub whitening: Whitening,
    pub warnings: Vec<String>,
}

impl RateRow {
    fn record(&self) -> Vec<String> {
        vec![
            self.n.to_string(),
            self.rep.to_string(),
            self.m.to_string(),
            fmt_f(self.lambda),
            self.lambda_admissible.to_string(),
            self.seed.to_string(),
            fmt_opt(self.error.exact),
            fmt_opt(self.error.mc.map(|m| m.rms)),
            fmt_opt(self.error.mc.map(|m| m.stderr)),
            fmt_opt(self.krr_error.map(|e| e.value())),
            self.flops.to_string(),
            self.kernel_evals.to_string(),
            self.wall_ms.clone(),
            whitening_label(self.whitening),
            self.warnings.join("; "),
        ]
    }
}

pub(crate) fn whitening_label(w: Whitening) -> String {
    match w {
        Whitening::Cholesky => "cholesky".into(),
        Whitening::Eigen { rank } => format!("eigen:{rank}"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateSweepResult {
    pub rows: Vec<RateRow>,
    /// `(n, median Nyström error)`.
    pub medians: Vec<(usize, f64)>,
    pub fit: RateFitResult,
    pub expected_exponent: Option<f64>,
    /// `(n, median of Nyström/KRR error ratios)` where the baseline ran.
    pub krr_ratios: Vec<(usize, f64)>,
    pub output: SweepOutput,
}

fn run_cell(p: &Problem<'_>, n_idx: usize, n: usize, rep: usize) -> Result<RateRow> {
    let cfg = p.cfg;
    let timer = Timer::start(cfg.timing);
    let target = p.target(rep)?;
    let (data, seed) = p.dataset(&target, n, [n_idx as u64, rep as u64])?;
    let lambda = match &cfg.lambda_policy {
        LambdaPolicy::Lambda0 => p.lambda0(n, &data.xs)?,
        LambdaPolicy::Fixed { value } => *value,
        LambdaPolicy::Grid { .. } => unreachable!("rejected before the sweep starts"),
    };
    let mut warnings = vec![];
    let adm = p.admissibility_warning(lambda, n, &data.xs)?;
    let lambda_admissible = adm.is_none();
    warnings.extend(adm);
    let m = subsample_size(&p.kernel, &data.xs, lambda, &cfg.size_rule)?;
    let idx = subsample_plain(n, m, p.subsample_seed([n_idx as u64, rep as u64, 0]))?;
    let model = fit_nystrom(&p.kernel, &data, lambda, &idx)?;
    if model.jitter > 0.0 {
        warnings.push(format!("jitter {:.1e}", model.jitter));
    }
    let truth = data.truth.as_ref().expect("synthetic data has a ground truth");
    let error = p.error(&model, truth, [n_idx as u64, rep as u64, 0])?;
    let krr_error = match cfg.krr_baseline_max_n {
        Some(max) if n <= max => {
            let krr = fit_krr(&p.kernel, &data, lambda)?;
            Some(p.error(&krr, truth, [n_idx as u64, rep as u64, 1])?)
        }
        _ => None,
    };
    Ok(RateRow {
        n,
        rep,
        m,
        lambda,
        lambda_admissible,
        seed,
        error,
        krr_error,
        flops: model.opcount.flops,
        kernel_evals: model.opcount.kernel_evaluations,
        wall_ms: timer.cell(),
        whitening: model.whitening,
        warnings,
    })
}

pub fn run_rate_sweep(cfg: &ExperimentConfig) -> Result<RateSweepResult> {
    let p = Problem::new(cfg)?;
    if matches!(cfg.lambda_policy, LambdaPolicy::Grid { .. }) {
        return Err(Error::Config(
            "rate-sweep needs lambda_policy lambda0 or fixed; grids belong to lambda-sweep".into(),
        ));
    }
    if cfg.n_grid.len() < MIN_RATE_POINTS {
        return Err(Error::Config(format!(
            "rate-sweep needs at least {MIN_RATE_POINTS} n_grid points, got {}",
            cfg.n_grid.len()
        )));
    }
    let reps = cfg.repetitions;
    let mut rows = Vec::with_capacity(cfg.n_grid.len() * reps);
    for (n_idx, &n) in cfg.n_grid.iter().enumerate() {
        let lambda_hint = match (&cfg.lambda_policy, &p.profile) {
            (LambdaPolicy::Fixed { value }, _) => Some(*value),
            (_, Some(profile)) => Some(crate::spectral::lambda0(profile, n)?),
            _ => None,
        };
        let m_hint = lambda_hint.and_then(|l| p.planned_m(n, l));
        let baseline = cfg.krr_baseline_max_n.is_some_and(|max| n <= max);
        let width = if baseline { Some(n) } else { m_hint };
        let batch = p.batch_size(n, width, reps);
        log::info!("rate-sweep n = {n}: m ≈ {m_hint:?}, {reps} reps in batches of {batch}");
        let reps_idx: Vec<usize> = (0..reps).collect();
        for row in run_batched(&reps_idx, batch, |&rep| run_cell(&p, n_idx, n, rep)) {
            rows.push(row?);
        }
    }

    let medians: Vec<(usize, f64)> = cfg
        .n_grid
        .iter()
        .map(|&n| {
            let errs: Vec<f64> = rows.iter().filter(|r| r.n == n).map(|r| r.error.value()).collect();
            (n, median(&errs))
        })
        .collect();
    let (ns, meds): (Vec<usize>, Vec<f64>) = medians.iter().copied().unzip();
    let fit = super::fit_rate(&ns, &meds)?;
    let krr_ratios: Vec<(usize, f64)> = cfg
        .n_grid
        .iter()
        .filter_map(|&n| {
            let ratios: Vec<f64> = rows
                .iter()
                .filter(|r| r.n == n)
                .filter_map(|r| r.krr_error.map(|k| r.error.value() / k.value()))
                .collect();
            (!ratios.is_empty()).then(|| (n, median(&ratios)))
        })
        .collect();

    let tol = &cfg.tolerances;
    let expected = cfg.expected_rate();
    let mut checks = vec![];
    if let Some(e) = expected {
        checks.push(Check::new(
            "rate_exponent",
            (fit.exponent - e).abs() <= tol.rate_tolerance,
            format!("fitted {:.4}, expected {e:.4} ± {}", fit.exponent, tol.rate_tolerance),
        ));
    }
    checks.push(Check::new(
        "rate_r_squared",
        fit.r_squared >= tol.min_r_squared,
        format!("r² = {:.4}, need ≥ {}", fit.r_squared, tol.min_r_squared),
    ));
    for &(n, ratio) in &krr_ratios {
        checks.push(Check::new(
            format!("nystrom_vs_krr_n{n}"),
            ratio <= tol.nystrom_ratio,
            format!("median error ratio {ratio:.4}, need ≤ {}", tol.nystrom_ratio),
        ));
    }

    let dir = out_dir(cfg)?;
    let csv = dir.join("rate_sweep.csv");
    let records: Vec<Vec<String>> = rows.iter().map(RateRow::record).collect();
    write_csv(&csv, "rate-sweep", &RATE_HEADER, &records)?;
    let mut body = String::new();
    let _ = writeln!(body, "repetitions: {reps}, seed: {}", cfg.seed);
    for (n, med) in &medians {
        let ms: Vec<f64> = rows.iter().filter(|r| r.n == *n).map(|r| r.m as f64).collect();
        let _ = writeln!(body, "n = {n:>7}  median m = {:>7.1}  median error = {med:.6e}", median(&ms));
    }
    let _ = writeln!(
        body,
        "fitted exponent {:.4} (intercept {:.4}, r² {:.4}){}",
        fit.exponent,
        fit.intercept,
        fit.r_squared,
        expected.map(|e| format!(", expected {e:.4}")).unwrap_or_default()
    );
    let inadmissible = rows.iter().filter(|r| !r.lambda_admissible).count();
    if inadmissible > 0 {
        let _ = writeln!(body, "warning: {inadmissible} rows used λ outside the admissible window");
    }
    let summary_path = dir.join("rate_sweep_summary.txt");
    let summary = write_summary(&summary_path, "rate-sweep", &body, &checks)?;
    Ok(RateSweepResult {
        rows,
        medians,
        fit,
        expected_exponent: expected,
        krr_ratios,
        output: SweepOutput {
            csv,
            summary_path,
            summary,
            checks,
        },
    })
}
