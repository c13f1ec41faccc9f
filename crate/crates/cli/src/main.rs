use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use krr_nystrom::experiments::{
    lambda0_table, run_cost_sweep, run_diagnostics, run_lambda_sensitivity, run_rate_sweep, ExperimentConfig,
    SweepOutput,
};

/// Nyström kernel ridge regression experiments.
#[derive(Parser)]
#[command(name = "krr-nystrom", version, about)]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Error of Nyström KRR across n_grid and the fitted rate exponent.
    RateSweep(Common),
    /// Flop count at λ₀ with the size rule driven by `c_γ² λ^{γ−1}` and the fitted exponent.
    CostSweep(Common),
    /// Error across a λ grid around λ₀ at a fixed n.
    LambdaSweep(Common),
    /// Monte-Carlo checks of the probabilistic bounds.
    Diagnostics(Common),
    /// Print λ₀ and the Nyström size for each n.
    Lambda0 {
        #[command(flatten)]
        common: Common,
        /// Sample sizes; defaults to the config's n_grid.
        #[arg(long = "n", value_delimiter = ',')]
        ns: Vec<usize>,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML, or JSON with a .json extension).
    #[arg(short, long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    reps: Option<usize>,
    /// Fill the wall_ms column.
    #[arg(long)]
    timing: bool,
}

impl Common {
    fn load(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(d) = &self.out_dir {
            cfg.outputs = d.clone();
        }
        if let Some(r) = self.reps {
            cfg.repetitions = r;
        }
        cfg.timing |= self.timing;
        cfg.validate().context("invalid configuration after overrides")?;
        Ok(cfg)
    }
}

fn report(out: &SweepOutput) -> bool {
    print!("{}", out.summary);
    println!("csv: {}", out.csv.display());
    out.passed()
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    Ok(match cli.command {
        Command::RateSweep(c) => report(&run_rate_sweep(&c.load()?)?.output),
        Command::CostSweep(c) => report(&run_cost_sweep(&c.load()?)?.output),
        Command::LambdaSweep(c) => report(&run_lambda_sensitivity(&c.load()?)?.output),
        Command::Diagnostics(c) => report(&run_diagnostics(&c.load()?)?.output),
        Command::Lambda0 { common, ns } => {
            let cfg = common.load()?;
            let ns = if ns.is_empty() { cfg.n_grid.clone() } else { ns };
            println!("n,lambda0,m,effective_dimension,n_infinity,admissible");
            for r in lambda0_table(&cfg, &ns)? {
                println!(
                    "{},{:.10e},{},{:.6},{:.6},{}",
                    r.n, r.lambda0, r.m, r.effective_dimension, r.n_infinity, r.admissible
                );
            }
            true
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
