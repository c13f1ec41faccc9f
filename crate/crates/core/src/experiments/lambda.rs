//! Error as a function of λ around `λ₀` at fixed `n`.

use std::fmt::Write as _;

use super::{
    fmt_f, fmt_opt, median, out_dir, run_batched, write_csv, write_summary, Check, ErrorRecord, ExperimentConfig,
    LambdaPolicy, Problem, SweepOutput, Timer,
};
use crate::error::Result;
use crate::nystrom::{fit_nystrom, subsample_plain, subsample_size};
use crate::spectral::{log_grid, theta, SpectralProfile};
use crate::synthetic::Dataset;

pub const LAMBDA_HEADER: [&str; 11] = [
    "n",
    "rep",
    "m",
    "lambda",
    "seed",
    "error",
    "mc_error",
    "mc_stderr",
    "flops",
    "wall_ms",
    "warnings",
];

pub const LAMBDA_SUMMARY_HEADER: [&str; 6] = ["lambda", "median_m", "median_error", "theta", "phi", "is_lambda0"];

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaRow {
    pub n: usize,
    pub rep: usize,
    pub m: usize,
    pub lambda: f64,
    pub seed: u64,
    pub error: ErrorRecord,
    pub flops: u64,
    pub wall_ms: String,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSummaryRow {
    pub lambda: f64,
    pub median_m: f64,
    pub median_error: f64,
    pub theta: f64,
    pub phi: f64,
    pub is_lambda0: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSweepResult {
    pub n: usize,
    pub lambda0: f64,
    pub rows: Vec<LambdaRow>,
    pub summary_rows: Vec<LambdaSummaryRow>,
    /// Median error at `λ₀` over the grid minimum.
    pub lambda0_ratio: f64,
    pub slope_sign_changes: usize,
    pub output: SweepOutput,
}

/// Sign changes of the discrete slope, skipping steps smaller than `flat`.
pub fn slope_sign_changes(values: &[f64], flat: f64) -> usize {
    let signs: Vec<f64> = values
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| d.abs() > flat)
        .map(f64::signum)
        .collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

/// Log grid over `[λ₀/span, λ₀·span]` that contains `λ₀` exactly.
pub fn grid_around(lambda0: f64, span: f64, points: usize) -> Vec<f64> {
    let mut g = log_grid(lambda0 / span, lambda0 * span, points);
    if points % 2 == 1 {
        g[points / 2] = lambda0;
    } else {
        g.push(lambda0);
        g.sort_by(f64::total_cmp);
    }
    g
}

pub fn run_lambda_sensitivity(cfg: &ExperimentConfig) -> Result<LambdaSweepResult> {
    let p = Problem::new(cfg)?;
    let ls = &cfg.lambda_sweep;
    let n = ls.n.unwrap_or(*cfg.n_grid.last().expect("validated nonempty"));
    let reps = cfg.repetitions;

    let target = p.target(0)?;
    let datasets: Vec<(Dataset, u64)> = (0..reps)
        .map(|rep| p.dataset(&target, n, [0, rep as u64]))
        .collect::<Result<_>>()?;
    let profile = match &p.profile {
        Some(pr) => pr.clone(),
        None => SpectralProfile::empirical(&p.kernel, &datasets[0].0.xs)?,
    };
    let lambda0 = crate::spectral::lambda0(&profile, n)?;
    let mut grid = match &cfg.lambda_policy {
        LambdaPolicy::Grid { values } => {
            let mut g = values.clone();
            g.push(lambda0);
            g.sort_by(f64::total_cmp);
            g.dedup();
            g
        }
        _ => grid_around(lambda0, ls.span, ls.points),
    };
    grid.retain(|l| *l < 1.0);

    let cells: Vec<(usize, usize)> = (0..grid.len()).flat_map(|i| (0..reps).map(move |r| (i, r))).collect();
    let batch = p.batch_size(n, Some(n), cells.len());
    let rows = run_batched(&cells, batch, |&(i, rep)| -> Result<LambdaRow> {
        let timer = Timer::start(cfg.timing);
        let lambda = grid[i];
        let (data, seed) = &datasets[rep];
        let m = subsample_size(&p.kernel, &data.xs, lambda, &cfg.size_rule)?;
        let idx = subsample_plain(n, m, p.subsample_seed([0, rep as u64, 0]))?;
        let model = fit_nystrom(&p.kernel, data, lambda, &idx)?;
        let truth = data.truth.as_ref().expect("synthetic data has a ground truth");
        let error = p.error(&model, truth, [i as u64, rep as u64, 0])?;
        Ok(LambdaRow {
            n,
            rep,
            m,
            lambda,
            seed: *seed,
            error,
            flops: model.opcount.flops,
            wall_ms: timer.cell(),
            warnings: p.admissibility_warning(lambda, n, &data.xs)?.into_iter().collect(),
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let phi = cfg.target.phi;
    let summary_rows: Vec<LambdaSummaryRow> = grid
        .iter()
        .enumerate()
        .map(|(i, &lambda)| {
            let here: Vec<&LambdaRow> = rows.iter().filter(|r| r.lambda == grid[i]).collect();
            let errs: Vec<f64> = here.iter().map(|r| r.error.value()).collect();
            let ms: Vec<f64> = here.iter().map(|r| r.m as f64).collect();
            Ok(LambdaSummaryRow {
                lambda,
                median_m: median(&ms),
                median_error: median(&errs),
                theta: theta(&phi, &profile, n, lambda)?,
                phi: phi.eval(lambda),
                is_lambda0: lambda == lambda0,
            })
        })
        .collect::<Result<_>>()?;

    let min_err = summary_rows.iter().map(|r| r.median_error).fold(f64::INFINITY, f64::min);
    let at_l0 = summary_rows
        .iter()
        .find(|r| r.is_lambda0)
        .map(|r| r.median_error)
        .expect("λ₀ is on the grid");
    let lambda0_ratio = at_l0 / min_err;
    let log_errs: Vec<f64> = summary_rows.iter().map(|r| r.median_error.ln()).collect();
    let changes = slope_sign_changes(&log_errs, ls.flat_tolerance);
    let checks = vec![
        Check::new(
            "lambda0_near_minimum",
            lambda0_ratio <= ls.factor,
            format!("error(λ₀)/min = {lambda0_ratio:.4}, need ≤ {}", ls.factor),
        ),
        Check::new(
            "error_curve_shape",
            changes <= 1,
            format!("{changes} slope sign changes, need ≤ 1"),
        ),
    ];

    let dir = out_dir(cfg)?;
    let csv = dir.join("lambda_sweep.csv");
    let records: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                r.rep.to_string(),
                r.m.to_string(),
                fmt_f(r.lambda),
                r.seed.to_string(),
                fmt_opt(r.error.exact),
                fmt_opt(r.error.mc.map(|m| m.rms)),
                fmt_opt(r.error.mc.map(|m| m.stderr)),
                r.flops.to_string(),
                r.wall_ms.clone(),
                r.warnings.join("; "),
            ]
        })
        .collect();
    write_csv(&csv, "lambda-sweep", &LAMBDA_HEADER, &records)?;
    let overlay: Vec<Vec<String>> = summary_rows
        .iter()
        .map(|r| {
            vec![
                fmt_f(r.lambda),
                fmt_f(r.median_m),
                fmt_f(r.median_error),
                fmt_f(r.theta),
                fmt_f(r.phi),
                r.is_lambda0.to_string(),
            ]
        })
        .collect();
    write_csv(
        &dir.join("lambda_sweep_theta.csv"),
        "lambda-sweep",
        &LAMBDA_SUMMARY_HEADER,
        &overlay,
    )?;
    let mut body = String::new();
    let _ = writeln!(body, "n = {n}, λ₀ = {lambda0:.6e}, repetitions = {reps}");
    for r in &summary_rows {
        let _ = writeln!(
            body,
            "λ = {:.4e}{}  median m = {:>7.1}  median error = {:.6e}  θ = {:.6e}",
            r.lambda,
            if r.is_lambda0 { " *" } else { "  " },
            r.median_m,
            r.median_error,
            r.theta
        );
    }
    let summary_path = dir.join("lambda_sweep_summary.txt");
    let summary = write_summary(&summary_path, "lambda-sweep", &body, &checks)?;
    Ok(LambdaSweepResult {
        n,
        lambda0,
        rows,
        summary_rows,
        lambda0_ratio,
        slope_sign_changes: changes,
        output: SweepOutput {
            csv,
            summary_path,
            summary,
            checks,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_contains_center() {
        let g = grid_around(0.01, 100.0, 21);
        assert_eq!(g.len(), 21);
        assert_eq!(g[10], 0.01);
        assert!((g[0] - 1e-4).abs() < 1e-16 && (g[20] - 1.0).abs() < 1e-12);
        let even = grid_around(0.01, 10.0, 4);
        assert_eq!(even.len(), 5);
        assert!(even.contains(&0.01));
    }

    #[test]
    fn sign_changes() {
        assert_eq!(slope_sign_changes(&[3.0, 2.0, 1.0, 1.5, 2.0], 0.0), 1);
        assert_eq!(slope_sign_changes(&[3.0, 2.0, 1.0, 0.5], 0.0), 0);
        assert_eq!(slope_sign_changes(&[1.0, 2.0, 1.0, 2.0], 0.0), 2);
        assert_eq!(slope_sign_changes(&[1.0, 0.5, 0.51, 0.505, 1.0], 0.05), 1);
    }
}
