//! Command-line front end for the finite-mixture experiment runner.
//!
//! Exit codes: 0 on success, 1 when a check command finds a failure
//! (condition checks, sampler validation), 2 on usage or configuration
//! errors.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use finmix::experiments::{
    derive_seed, run_consistency_curve, simulate_replicate_data, validate_sampler,
    write_condition_csv, write_consistency_csv, write_data_csv, write_k_posterior_csv,
    write_validation_csv, EngineConfig, ExperimentConfig, STREAM_ENGINE,
};
use finmix::posterior::{exact_k_posterior, mcmc_run, McmcOptions};
use finmix::priors::{check_conditions, CheckBudget};

#[derive(Parser)]
#[command(
    name = "finmix",
    about = "Bayesian finite mixtures with a prior on the number of components",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a data set from the configured true parameter and write it
    /// as CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Sample size; defaults to the last entry of the n-schedule.
        #[arg(long)]
        n: Option<usize>,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the prior-condition checkers; exits 1 if any sub-condition fails.
    CheckConditions {
        #[arg(long)]
        config: PathBuf,
        /// Optional CSV report path.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Simulate a data set and compute the posterior over the component
    /// count with the configured engine.
    Posterior {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the configured engine (exact | mcmc).
        #[arg(long)]
        engine: Option<String>,
    },
    /// Compare the sampler against the exact enumeration on a small data
    /// set; exits 1 if the total-variation distance exceeds the threshold.
    ValidateSampler {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Data-set size for the comparison (must stay enumerable).
        #[arg(long, default_value_t = 6)]
        n: usize,
        #[arg(long, default_value_t = 200_000)]
        sweeps: usize,
        #[arg(long, default_value_t = 0.02)]
        tv_threshold: f64,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the consistency-curve experiment and write one CSV row per
    /// (n, replicate, epsilon).
    ConsistencyCurve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        engine: Option<String>,
    },
}

fn load_config(
    path: &Path,
    seed: Option<u64>,
    engine: Option<&String>,
) -> finmix::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = seed {
        cfg.master_seed = seed;
    }
    if let Some(engine) = engine {
        cfg.engine = EngineConfig::default_for(engine)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn writer(path: &Path) -> finmix::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn run(cli: Cli) -> finmix::Result<u8> {
    match cli.command {
        Command::Simulate { config, out, n, seed } => {
            let cfg = load_config(&config, seed, None)?;
            let prior = cfg.to_prior_spec()?;
            let theta0 = cfg.resolve_theta0(&prior)?;
            let n = n.unwrap_or(*cfg.n_schedule.last().expect("validated"));
            let (xs, labels) =
                simulate_replicate_data(&prior.family, &theta0, n, cfg.master_seed, 0);
            let mut w = writer(&out)?;
            write_data_csv(&xs, &labels, &mut w)?;
            w.flush()?;
            eprintln!("wrote {n} observations to {}", out.display());
            Ok(0)
        }
        Command::CheckConditions { config, out, seed } => {
            let cfg = load_config(&config, seed, None)?;
            let prior = cfg.to_prior_spec()?;
            let report = check_conditions(&prior, &CheckBudget::default(), cfg.master_seed);
            print!("{report}");
            if let Some(out) = out {
                let mut w = writer(&out)?;
                write_condition_csv(&report, &mut w)?;
                w.flush()?;
            }
            Ok(if report.has_failure() { 1 } else { 0 })
        }
        Command::Posterior { config, out, n, seed, engine } => {
            let cfg = load_config(&config, seed, engine.as_ref())?;
            let prior = cfg.to_prior_spec()?;
            let theta0 = cfg.resolve_theta0(&prior)?;
            let n = n.unwrap_or(*cfg.n_schedule.last().expect("validated"));
            let (xs, _) = simulate_replicate_data(&prior.family, &theta0, n, cfg.master_seed, 0);
            let engine_seed = derive_seed(cfg.master_seed, STREAM_ENGINE, 0, 0);
            let post = match cfg.engine {
                EngineConfig::Exact { .. } => exact_k_posterior(&xs, &prior, cfg.k_max)?,
                EngineConfig::Mcmc { sweeps, burn_in, thin } => {
                    mcmc_run(
                        &xs,
                        &prior,
                        cfg.k_max,
                        &McmcOptions {
                            sweeps,
                            burn_in,
                            thin: thin.unwrap_or(1),
                        },
                        engine_seed,
                    )?
                    .k_posterior
                }
            };
            let mut w = writer(&out)?;
            write_k_posterior_csv(&post, &mut w)?;
            w.flush()?;
            eprintln!(
                "wrote k-posterior ({} engine, n = {n}) to {}",
                cfg.engine.label(),
                out.display()
            );
            Ok(0)
        }
        Command::ValidateSampler {
            config,
            out,
            n,
            sweeps,
            tv_threshold,
            seed,
        } => {
            let cfg = load_config(&config, seed, None)?;
            let prior = cfg.to_prior_spec()?;
            let theta0 = cfg.resolve_theta0(&prior)?;
            let (xs, _) = simulate_replicate_data(&prior.family, &theta0, n, cfg.master_seed, 0);
            let engine_seed = derive_seed(cfg.master_seed, STREAM_ENGINE, 0, 1);
            let v = validate_sampler(&xs, &prior, cfg.k_max, sweeps, engine_seed)?;
            println!(
                "tv distance {:.6} over {sweeps} sweeps (k-move acceptance {:.3})",
                v.tv_distance,
                v.diagnostics.acceptance_rate()
            );
            if let Some(out) = out {
                let mut w = writer(&out)?;
                write_validation_csv(&v, &mut w)?;
                w.flush()?;
            }
            Ok(if v.tv_distance <= tv_threshold { 0 } else { 1 })
        }
        Command::ConsistencyCurve { config, out, seed, engine } => {
            let cfg = load_config(&config, seed, engine.as_ref())?;
            let records = run_consistency_curve(&cfg)?;
            let failures = records.iter().filter(|r| r.error.is_some()).count();
            let mut w = writer(&out)?;
            write_consistency_csv(&records, &mut w)?;
            w.flush()?;
            eprintln!(
                "wrote {} rows to {} ({failures} engine failures)",
                records.len(),
                out.display()
            );
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
