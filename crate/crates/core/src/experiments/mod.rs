//! Config-driven sweeps: learning rates, Nyström cost, λ sensitivity and
//! the Monte-Carlo bound checks.
//!
//! Every sweep writes a CSV whose body depends only on the configuration
//! and seed. Lines starting with `#` carry run metadata (command, time) and
//! are the only part that changes between reruns.

pub mod config;
mod cost;
mod diag;
pub mod fit;
mod lambda;
mod rate;

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::Rng as _;

pub use config::{DiagnosticsConfig, ExperimentConfig, LambdaPolicy, LambdaSweepConfig, TargetConfig, Tolerances};
pub use cost::{run_cost_sweep, CostRow, CostSweepResult};
pub use diag::{run_diagnostics, DiagnosticsResult};
pub use fit::{fit_rate, median, ols, ols_multi, LinearFit, MultiFit, RateFitResult};
pub use lambda::{run_lambda_sensitivity, LambdaRow, LambdaSummaryRow, LambdaSweepResult};
pub use rate::{run_rate_sweep, RateRow, RateSweepResult};

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::krr::KernelExpansion;
use crate::nystrom::{self, lambda_admissible};
use crate::rng;
use crate::spectral::{self, n_infinity, NInfinitySource, SpectralProfile, DEFAULT_SUP_GRID};
use crate::synthetic::{self, make_target_with, Dataset, GroundTruth, TargetSpec};

/// Bytes of dense working memory a batch of concurrent cells may use.
const CELL_MEMORY_BUDGET: usize = 1 << 31;

/// Seed-stream tags.
const TAG_TARGET: u64 = 1;
const TAG_DATA: u64 = 2;
const TAG_SUBSAMPLE: u64 = 3;
const TAG_MC: u64 = 4;

/// One pass/fail line of a sweep summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// Files written by a sweep and its checks.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub csv: PathBuf,
    pub summary_path: PathBuf,
    pub summary: String,
    pub checks: Vec<Check>,
}

impl SweepOutput {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub(crate) fn derive_seed(seed: u64, labels: [u64; 4]) -> u64 {
    rng::stream(seed, rng::stream_id(labels)).random()
}

pub(crate) fn fmt_f(v: f64) -> String {
    format!("{v:.10e}")
}

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f).unwrap_or_default()
}

/// Writes `# ` metadata lines followed by a CSV table.
pub(crate) fn write_csv(path: &Path, command: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    writeln!(file, "# krr-nystrom {command}").map_err(|e| Error::io(path, e))?;
    writeln!(file, "# generated_unix_seconds={stamp}").map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub(crate) fn write_summary(path: &Path, title: &str, body: &str, checks: &[Check]) -> Result<String> {
    let mut s = String::new();
    let _ = writeln!(s, "{title}");
    s.push_str(body);
    for c in checks {
        let _ = writeln!(s, "[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    fs::write(path, &s).map_err(|e| Error::io(path, e))?;
    Ok(s)
}

/// Elapsed milliseconds, or an empty cell when timing is off.
pub(crate) struct Timer(Option<Instant>);

impl Timer {
    pub(crate) fn start(enabled: bool) -> Self {
        Timer(enabled.then(Instant::now))
    }

    pub(crate) fn cell(&self) -> String {
        self.0
            .map(|t| format!("{:.3}", t.elapsed().as_secs_f64() * 1e3))
            .unwrap_or_default()
    }
}

/// Shared per-configuration state.
pub(crate) struct Problem<'a> {
    pub cfg: &'a ExperimentConfig,
    pub kernel: KernelSpec,
    /// Analytic profile of a designed kernel.
    pub profile: Option<SpectralProfile>,
}

/// Error of a fitted expansion: exact under designed kernels, Monte-Carlo
/// otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRecord {
    pub exact: Option<f64>,
    pub mc: Option<synthetic::McError>,
}

impl ErrorRecord {
    pub fn value(&self) -> f64 {
        self.exact.or(self.mc.map(|m| m.rms)).unwrap_or(f64::NAN)
    }
}

impl<'a> Problem<'a> {
    pub(crate) fn new(cfg: &'a ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let kernel = cfg.kernel;
        let profile = if kernel.is_designed() {
            Some(SpectralProfile::for_kernel(&kernel)?)
        } else {
            None
        };
        Ok(Problem { cfg, kernel, profile })
    }

    pub(crate) fn target(&self, rep: usize) -> Result<TargetSpec> {
        let (decay, t) = self.cfg.target_spectrum();
        make_target_with(
            decay,
            t,
            self.cfg.target.phi,
            derive_seed(self.cfg.seed, [TAG_TARGET, rep as u64, 0, 0]),
            self.cfg.target.law,
        )
    }

    pub(crate) fn dataset(&self, target: &TargetSpec, n: usize, cell: [u64; 2]) -> Result<(Dataset, u64)> {
        let seed = derive_seed(self.cfg.seed, [TAG_DATA, cell[0], cell[1], 0]);
        let (decay, _) = self.cfg.target_spectrum();
        Ok((synthetic::sample_dataset(decay, target, self.cfg.noise, n, seed)?, seed))
    }

    pub(crate) fn subsample_seed(&self, cell: [u64; 3]) -> u64 {
        derive_seed(self.cfg.seed, [TAG_SUBSAMPLE, cell[0], cell[1], cell[2]])
    }

    /// `λ₀(n)` from the analytic profile, or from the sample's Gram
    /// eigenvalues for closed-form kernels.
    pub(crate) fn lambda0(&self, n: usize, xs: &[f64]) -> Result<f64> {
        match &self.profile {
            Some(p) => spectral::lambda0(p, n),
            None => spectral::lambda0(&SpectralProfile::empirical(&self.kernel, xs)?, n),
        }
    }

    /// `‖J_K*J_K‖` surrogate used by the admissibility window.
    pub(crate) fn operator_norm_bound(&self, xs: &[f64]) -> Result<f64> {
        match &self.profile {
            Some(p) => Ok(p.top()),
            None => Ok(SpectralProfile::empirical(&self.kernel, xs)?.top()),
        }
    }

    pub(crate) fn admissibility_warning(&self, lambda: f64, n: usize, xs: &[f64]) -> Result<Option<String>> {
        let bound = self.operator_norm_bound(xs)?;
        let sr = &self.cfg.size_rule;
        Ok((!lambda_admissible(lambda, n, sr.delta, bound, sr.c)).then(|| {
            format!(
                "lambda {lambda:.3e} outside admissible window [{:.3e}, {bound:.3e}]",
                nystrom::lambda_lower_endpoint(n, sr.delta, sr.c)
            )
        }))
    }

    /// Subsample size the rule gives at `(n, λ)` without touching data,
    /// when that is possible (designed kernel or the `c_γ` plug-in).
    pub(crate) fn planned_m(&self, n: usize, lambda: f64) -> Option<usize> {
        let sr = &self.cfg.size_rule;
        let n_inf = match sr.lemma_bound(lambda) {
            Some(v) => v,
            None if self.kernel.is_designed() => {
                n_infinity(NInfinitySource::Designed(&self.kernel), lambda, DEFAULT_SUP_GRID).ok()?
            }
            None => return None,
        };
        nystrom::size_from_n_infinity(n_inf, n, lambda, sr).ok()
    }

    pub(crate) fn error<M: KernelExpansion + ?Sized>(&self, model: &M, truth: &GroundTruth, cell: [u64; 3]) -> Result<ErrorRecord> {
        if self.kernel.is_designed() {
            let e = synthetic::l2_rho_error(model, &self.kernel, truth)?;
            Ok(ErrorRecord {
                exact: Some(e.error),
                mc: None,
            })
        } else {
            let seed = derive_seed(self.cfg.seed, [TAG_MC, cell[0], cell[1], cell[2]]);
            let t = &truth.target;
            let mc = synthetic::monte_carlo_error(model, &self.kernel, |x| t.eval(x), self.cfg.mc_samples, seed)?;
            Ok(ErrorRecord { exact: None, mc: Some(mc) })
        }
    }

    /// How many cells of size `(n, m)` may run at once.
    pub(crate) fn batch_size(&self, n: usize, m: Option<usize>, total: usize) -> usize {
        let width = m.unwrap_or(n).max(1);
        let bytes = 24 * n * width;
        (CELL_MEMORY_BUDGET / bytes.max(1)).clamp(1, total.max(1))
    }
}

/// Runs `f` over `items` in concurrent batches of `batch`, preserving order.
pub(crate) fn run_batched<S, T, F>(items: &[S], batch: usize, f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    let mut out = Vec::with_capacity(items.len());
    for chunk in items.chunks(batch.max(1)) {
        out.extend(crate::parallel::map_slice(chunk, &f));
    }
    out
}

/// Resolves the output directory, creating it.
pub(crate) fn out_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = cfg.outputs.clone();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

/// `λ₀`, `m` and related quantities for one `n`, as printed by the
/// `lambda0` command.
#[derive(Debug, Clone, PartialEq)]
pub struct Lambda0Report {
    pub n: usize,
    pub lambda0: f64,
    pub m: usize,
    pub effective_dimension: f64,
    pub n_infinity: f64,
    pub admissible: bool,
}

/// `λ₀(n)` and the Nyström size at `λ₀` for each `n`. Closed-form kernels
/// use a seeded sample of size `n` for the empirical profile.
pub fn lambda0_table(cfg: &ExperimentConfig, ns: &[usize]) -> Result<Vec<Lambda0Report>> {
    let p = Problem::new(cfg)?;
    let target = p.target(0)?;
    ns.iter()
        .enumerate()
        .map(|(i, &n)| {
            let (ds, _) = p.dataset(&target, n, [i as u64, 0])?;
            let lambda = p.lambda0(n, &ds.xs)?;
            let profile = match &p.profile {
                Some(pr) => pr.clone(),
                None => SpectralProfile::empirical(&p.kernel, &ds.xs)?,
            };
            let n_inf = match cfg.size_rule.lemma_bound(lambda) {
                Some(v) => v,
                None if p.kernel.is_designed() => n_infinity(NInfinitySource::Designed(&p.kernel), lambda, DEFAULT_SUP_GRID)?,
                None => n_infinity(
                    NInfinitySource::Empirical {
                        kernel: &p.kernel,
                        xs: &ds.xs,
                    },
                    lambda,
                    0,
                )?,
            };
            let m = nystrom::size_from_n_infinity(n_inf, n, lambda, &cfg.size_rule)?;
            let bound = profile.top();
            Ok(Lambda0Report {
                n,
                lambda0: lambda,
                m,
                effective_dimension: profile.effective_dimension(lambda)?,
                n_infinity: n_inf,
                admissible: lambda_admissible(lambda, n, cfg.size_rule.delta, bound, cfg.size_rule.c),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batches_preserve_order() {
        let items: Vec<usize> = (0..10).collect();
        assert_eq!(run_batched(&items, 3, |&i| i * 2), (0..10).map(|i| i * 2).collect::<Vec<_>>());
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, [1, 0, 0, 0]), derive_seed(1, [1, 1, 0, 0]));
        assert_eq!(derive_seed(1, [2, 3, 4, 5]), derive_seed(1, [2, 3, 4, 5]));
    }
}
