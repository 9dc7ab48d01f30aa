//! Seeded, reproducible consistency experiments.
//!
//! [`run_consistency_curve`] simulates growing data sets from a fixed
//! parameter point and tracks two posterior functionals across the sample
//! size schedule: the mass on the true component count and the mass on a
//! label-invariant neighborhood of the truth. Replicates are independent
//! work units (run in parallel); every random stream is derived from the
//! master seed by a fixed splitting rule, so reruns are byte-identical.
//!
//! Seed layout: stream `1` feeds replicate data (one growing sequence per
//! replicate, so the schedule's data sets are nested prefixes of each
//! other), stream `2` feeds the engine run at each `(replicate, n)` pair.

pub mod config;

pub use config::{EngineConfig, ExperimentConfig, FamilyConfig, Theta0Config};

use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::families::{sample_mixture, Family};
use crate::param_space::{MixtureParams, NeighborhoodSpec};
use crate::posterior::{
    estimate_neighborhood_prob, exact_k_posterior, exact_theta_draws, mcmc_run, KPosterior,
    McmcDiagnostics, McmcOptions, ThetaDraws,
};
use crate::priors::PriorSpec;
use crate::Result;

/// Seed stream feeding replicate data sequences.
pub const STREAM_DATA: u64 = 1;
/// Seed stream feeding engine runs.
pub const STREAM_ENGINE: u64 = 2;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from the master seed. The rule is a
/// SplitMix64 chain over `(stream, a, b)`; it is part of the output format
/// in the sense that changing it changes every emitted number.
pub fn derive_seed(master: u64, stream: u64, a: u64, b: u64) -> u64 {
    let mut state = master;
    let mut out = 0u64;
    for x in [stream, a, b] {
        state ^= x.wrapping_mul(0xA24B_AED4_963E_E407);
        out = splitmix64(&mut state);
    }
    out
}

/// The data sequence of one replicate. Calling this with a smaller `n`
/// yields a prefix of the larger call, which is what makes the consistency
/// curves nested along the schedule.
pub fn simulate_replicate_data(
    family: &Family,
    theta0: &MixtureParams,
    n: usize,
    master_seed: u64,
    replicate: u64,
) -> (Vec<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(master_seed, STREAM_DATA, replicate, 0));
    sample_mixture(family, theta0, n, &mut rng)
}

/// One experiment row: the two posterior functionals for a given
/// `(n, replicate, epsilon)`.
#[derive(Debug, Clone)]
pub struct ConsistencyRecord {
    pub n: usize,
    pub replicate: usize,
    pub seed: u64,
    pub k0: usize,
    pub pr_k: f64,
    pub pr_k_se: f64,
    pub eps: f64,
    pub pr_nbhd: f64,
    pub pr_nbhd_se: f64,
    pub trunc_bound: f64,
    pub engine: &'static str,
    /// Measured wall time of the engine run backing this row. Reported via
    /// the API; the CSV writer zeroes this column so identical runs emit
    /// identical bytes.
    pub walltime_ms: u64,
    /// Engine failure for this row, if any; successful rows carry `None`.
    pub error: Option<String>,
}

enum EngineRun {
    Exact {
        k_posterior: KPosterior,
        draws: ThetaDraws,
    },
    Mcmc {
        k_posterior: KPosterior,
        draws: ThetaDraws,
    },
}

impl EngineRun {
    fn k_estimate(&self, k0: usize) -> (f64, f64) {
        match self {
            EngineRun::Exact { k_posterior, .. } => (k_posterior.prob(k0), 0.0),
            EngineRun::Mcmc { k_posterior, .. } => {
                (k_posterior.prob(k0), k_posterior.std_error(k0))
            }
        }
    }

    fn nbhd_estimate(&self, theta0: &MixtureParams, eps: f64, k0: usize) -> Result<(f64, f64)> {
        let nbhd = NeighborhoodSpec::new(theta0.clone(), eps)?;
        match self {
            // At the metric cap the neighborhood is the whole same-k slice,
            // so the exact engine can report the enumerated k-mass instead
            // of a Monte Carlo estimate of the same quantity.
            EngineRun::Exact { draws, .. } => {
                if eps >= 1.0 {
                    Ok(self.k_estimate(k0))
                } else {
                    estimate_neighborhood_prob(draws, &nbhd)
                }
            }
            EngineRun::Mcmc { draws, .. } => estimate_neighborhood_prob(draws, &nbhd),
        }
    }

    fn trunc_bound(&self) -> f64 {
        match self {
            EngineRun::Exact { draws, .. } | EngineRun::Mcmc { draws, .. } => {
                draws.truncation_mass_bound
            }
        }
    }
}

fn run_engine(
    data: &[f64],
    prior: &PriorSpec,
    k_max: usize,
    engine: &EngineConfig,
    seed: u64,
) -> Result<EngineRun> {
    match *engine {
        EngineConfig::Exact { n_draws } => {
            let k_posterior = exact_k_posterior(data, prior, k_max)?;
            let draws = exact_theta_draws(data, prior, k_max, n_draws, seed)?;
            Ok(EngineRun::Exact { k_posterior, draws })
        }
        EngineConfig::Mcmc { sweeps, burn_in, thin } => {
            let out = mcmc_run(
                data,
                prior,
                k_max,
                &McmcOptions {
                    sweeps,
                    burn_in,
                    thin: thin.unwrap_or(1),
                },
                seed,
            )?;
            Ok(EngineRun::Mcmc {
                k_posterior: out.k_posterior,
                draws: out.draws,
            })
        }
    }
}

/// Runs the full consistency experiment. Rows come back sorted by
/// `(n, replicate, epsilon)`; identical config and seed give identical rows.
/// Engine failures are recorded per row in the `error` field rather than
/// aborting the other replicates.
pub fn run_consistency_curve(cfg: &ExperimentConfig) -> Result<Vec<ConsistencyRecord>> {
    cfg.validate()?;
    let prior = cfg.to_prior_spec()?;
    let theta0 = cfg.resolve_theta0(&prior)?;
    let k0 = theta0.k();
    let n_max = *cfg.n_schedule.last().expect("validated non-empty");
    let engine_label = cfg.engine.label();

    let per_replicate: Vec<Vec<ConsistencyRecord>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let (xs, _) =
                simulate_replicate_data(&prior.family, &theta0, n_max, cfg.master_seed, r as u64);
            let mut rows = Vec::with_capacity(cfg.n_schedule.len() * cfg.epsilons.len());
            for (ni, &n) in cfg.n_schedule.iter().enumerate() {
                let seed = derive_seed(cfg.master_seed, STREAM_ENGINE, r as u64, ni as u64);
                let started = Instant::now();
                let run = run_engine(&xs[..n], &prior, cfg.k_max, &cfg.engine, seed);
                let walltime_ms = started.elapsed().as_millis() as u64;
                match run {
                    Ok(run) => {
                        let (pr_k, pr_k_se) = run.k_estimate(k0);
                        for &eps in &cfg.epsilons {
                            let (pr_nbhd, pr_nbhd_se) = run.nbhd_estimate(&theta0, eps, k0)?;
                            rows.push(ConsistencyRecord {
                                n,
                                replicate: r,
                                seed,
                                k0,
                                pr_k,
                                pr_k_se,
                                eps,
                                pr_nbhd,
                                pr_nbhd_se,
                                trunc_bound: run.trunc_bound(),
                                engine: engine_label,
                                walltime_ms,
                                error: None,
                            });
                        }
                    }
                    Err(e) => {
                        let message = e.to_string();
                        for &eps in &cfg.epsilons {
                            rows.push(ConsistencyRecord {
                                n,
                                replicate: r,
                                seed,
                                k0,
                                pr_k: f64::NAN,
                                pr_k_se: f64::NAN,
                                eps,
                                pr_nbhd: f64::NAN,
                                pr_nbhd_se: f64::NAN,
                                trunc_bound: f64::NAN,
                                engine: engine_label,
                                walltime_ms,
                                error: Some(message.clone()),
                            });
                        }
                    }
                }
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut records: Vec<ConsistencyRecord> = per_replicate.into_iter().flatten().collect();
    records.sort_by(|a, b| {
        (a.n, a.replicate)
            .cmp(&(b.n, b.replicate))
            .then(a.eps.partial_cmp(&b.eps).expect("finite eps"))
    });
    Ok(records)
}

fn csv_field(value: f64) -> String {
    if value.is_nan() {
        String::new()
    } else {
        format!("{value}")
    }
}

fn csv_escape(text: &str) -> String {
    if text.contains([',', '"', '\n']) {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}

/// Fixed-order CSV emission (UTF-8, LF, header row). The `walltime_ms`
/// column is zeroed: wall time is nondeterministic and the emitted file
/// must be byte-identical across reruns of the same seed. Timings stay
/// available on [`ConsistencyRecord`].
pub fn write_consistency_csv<W: Write>(records: &[ConsistencyRecord], mut out: W) -> Result<()> {
    writeln!(
        out,
        "n,replicate,seed,k0,pr_k,pr_k_se,eps,pr_nbhd,pr_nbhd_se,trunc_bound,engine,walltime_ms,error"
    )?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},0,{}",
            r.n,
            r.replicate,
            r.seed,
            r.k0,
            csv_field(r.pr_k),
            csv_field(r.pr_k_se),
            r.eps,
            csv_field(r.pr_nbhd),
            csv_field(r.pr_nbhd_se),
            csv_field(r.trunc_bound),
            r.engine,
            csv_escape(r.error.as_deref().unwrap_or("")),
        )?;
    }
    Ok(())
}

/// CSV emission for a simulated data set; labels are diagnostics.
pub fn write_data_csv<W: Write>(xs: &[f64], labels: &[usize], mut out: W) -> Result<()> {
    writeln!(out, "i,x,label")?;
    for (i, (x, label)) in xs.iter().zip(labels).enumerate() {
        writeln!(out, "{i},{x},{label}")?;
    }
    Ok(())
}

/// CSV emission for a posterior over the component count.
pub fn write_k_posterior_csv<W: Write>(post: &KPosterior, mut out: W) -> Result<()> {
    writeln!(out, "k,prob,se,trunc_bound")?;
    for (&k, &p) in &post.probs {
        writeln!(
            out,
            "{k},{p},{},{}",
            post.std_error(k),
            post.truncation_mass_bound
        )?;
    }
    Ok(())
}

/// CSV emission for a condition-check report.
pub fn write_condition_csv<W: Write>(
    report: &crate::priors::ConditionReport,
    mut out: W,
) -> Result<()> {
    writeln!(out, "condition,verdict,detail")?;
    for c in &report.checks {
        writeln!(
            out,
            "{},{},{}",
            csv_escape(c.condition.label()),
            c.verdict,
            csv_escape(&c.detail)
        )?;
    }
    Ok(())
}

/// Exact-vs-MCMC agreement on the k-posterior for one data set.
#[derive(Debug, Clone)]
pub struct SamplerValidation {
    pub tv_distance: f64,
    pub exact: KPosterior,
    pub mcmc: KPosterior,
    pub diagnostics: McmcDiagnostics,
}

/// Runs both engines on the same data and reports the total-variation
/// distance between the two k-posteriors.
pub fn validate_sampler(
    data: &[f64],
    prior: &PriorSpec,
    k_max: usize,
    sweeps: usize,
    seed: u64,
) -> Result<SamplerValidation> {
    let exact = exact_k_posterior(data, prior, k_max)?;
    let out = mcmc_run(
        data,
        prior,
        k_max,
        &McmcOptions {
            sweeps,
            burn_in: None,
            thin: 1,
        },
        seed,
    )?;
    let mut tv = 0.0;
    for k in 1..=k_max {
        tv += (exact.prob(k) - out.k_posterior.prob(k)).abs();
    }
    Ok(SamplerValidation {
        tv_distance: 0.5 * tv,
        exact,
        mcmc: out.k_posterior,
        diagnostics: out.diagnostics,
    })
}

/// CSV emission for [`SamplerValidation`].
pub fn write_validation_csv<W: Write>(v: &SamplerValidation, mut out: W) -> Result<()> {
    writeln!(out, "k,exact,mcmc")?;
    let k_hi = v
        .exact
        .probs
        .keys()
        .chain(v.mcmc.probs.keys())
        .copied()
        .max()
        .unwrap_or(1);
    for k in 1..=k_hi {
        writeln!(out, "{k},{},{}", v.exact.prob(k), v.mcmc.prob(k))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(engine: &str) -> ExperimentConfig {
        let text = format!(
            r#"{{
            "family": {{"kind": "normal_known_var", "sigma": 1.0, "mu0": 0.0, "tau0_sq": 16.0}},
            "prior": {{
                "k": {{"kind": "geometric", "p": 0.5}},
                "weights": {{"kind": "dirichlet", "alpha": 1.0}},
                "params": {{"kind": "iid"}}
            }},
            "theta0": {{"kind": "explicit", "w": [0.5, 0.5], "v": [[-2.0], [2.0]]}},
            "n_schedule": [4, 6],
            "epsilons": [0.5, 1.0],
            "replicates": 2,
            "engine": {engine},
            "master_seed": 99,
            "k_max": 3
        }}"#
        );
        ExperimentConfig::from_json(&text).unwrap()
    }

    fn exact_engine() -> ExperimentConfig {
        small_config(r#"{"kind": "exact", "n_draws": 400}"#)
    }

    fn mcmc_engine() -> ExperimentConfig {
        small_config(r#"{"kind": "mcmc", "sweeps": 400, "burn_in": 100, "thin": 1}"#)
    }

    #[test]
    fn derive_seed_is_stable_and_sensitive() {
        let a = derive_seed(1, 2, 3, 4);
        assert_eq!(a, derive_seed(1, 2, 3, 4));
        assert_ne!(a, derive_seed(1, 2, 3, 5));
        assert_ne!(a, derive_seed(1, 2, 4, 3));
        assert_ne!(a, derive_seed(2, 2, 3, 4));
    }

    #[test]
    fn replicate_data_is_prefix_nested() {
        let cfg = exact_engine();
        let prior = cfg.to_prior_spec().unwrap();
        let theta0 = cfg.resolve_theta0(&prior).unwrap();
        let (long, long_labels) =
            simulate_replicate_data(&prior.family, &theta0, 50, cfg.master_seed, 1);
        let (short, short_labels) =
            simulate_replicate_data(&prior.family, &theta0, 20, cfg.master_seed, 1);
        assert_eq!(&long[..20], &short[..]);
        assert_eq!(&long_labels[..20], &short_labels[..]);

        // Different replicates see different data.
        let (other, _) = simulate_replicate_data(&prior.family, &theta0, 20, cfg.master_seed, 2);
        assert_ne!(short, other);
    }

    #[test]
    fn rows_are_sorted_and_complete() {
        let cfg = exact_engine();
        let records = run_consistency_curve(&cfg).unwrap();
        assert_eq!(records.len(), 2 * 2 * 2);
        let keys: Vec<_> = records
            .iter()
            .map(|r| (r.n, r.replicate, r.eps))
            .collect();
        let mut sorted = keys.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(keys, sorted);
        assert!(records.iter().all(|r| r.error.is_none()));
        assert!(records.iter().all(|r| r.k0 == 2));
    }

    #[test]
    fn cap_epsilon_column_equals_k_mass_on_every_row() {
        for cfg in [exact_engine(), mcmc_engine()] {
            let records = run_consistency_curve(&cfg).unwrap();
            for r in records.iter().filter(|r| r.eps == 1.0) {
                assert_eq!(r.pr_nbhd, r.pr_k, "engine {}", r.engine);
            }
        }
    }

    #[test]
    fn probabilities_are_monotone_in_epsilon_within_a_row_group() {
        let records = run_consistency_curve(&exact_engine()).unwrap();
        for pair in records.chunks(2) {
            assert_eq!((pair[0].n, pair[0].replicate), (pair[1].n, pair[1].replicate));
            assert!(pair[0].eps < pair[1].eps);
            assert!(pair[0].pr_nbhd <= pair[1].pr_nbhd);
        }
    }

    #[test]
    fn reruns_are_byte_identical() {
        for cfg in [exact_engine(), mcmc_engine()] {
            let mut a = Vec::new();
            write_consistency_csv(&run_consistency_curve(&cfg).unwrap(), &mut a).unwrap();
            let mut b = Vec::new();
            write_consistency_csv(&run_consistency_curve(&cfg).unwrap(), &mut b).unwrap();
            assert_eq!(a, b, "engine {}", cfg.engine.label());
        }
    }

    #[test]
    fn schedule_of_zero_reports_the_normalized_prior() {
        let mut cfg = exact_engine();
        cfg.n_schedule = vec![0];
        let records = run_consistency_curve(&cfg).unwrap();
        let prior = cfg.to_prior_spec().unwrap();
        let raw: Vec<f64> = (1..=3).map(|k| prior.log_pmf_k(k).unwrap().exp()).collect();
        let expected = raw[1] / raw.iter().sum::<f64>();
        for r in &records {
            assert!((r.pr_k - expected).abs() < 1e-12, "{} vs {expected}", r.pr_k);
        }
    }

    #[test]
    fn engine_failures_land_in_the_error_column() {
        let mut cfg = exact_engine();
        // n = 30 blows the enumeration budget for k_max = 3.
        cfg.n_schedule = vec![4, 30];
        let records = run_consistency_curve(&cfg).unwrap();
        let failed: Vec<_> = records.iter().filter(|r| r.error.is_some()).collect();
        assert_eq!(failed.len(), 2 * 2);
        assert!(failed.iter().all(|r| r.n == 30));
        let mut csv = Vec::new();
        write_consistency_csv(&records, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.contains("budget"));
    }

    #[test]
    fn sampler_validation_on_a_tiny_case() {
        let cfg = exact_engine();
        let prior = cfg.to_prior_spec().unwrap();
        let theta0 = cfg.resolve_theta0(&prior).unwrap();
        let (xs, _) = simulate_replicate_data(&prior.family, &theta0, 5, 7, 0);
        let v = validate_sampler(&xs, &prior, 3, 50_000, 11).unwrap();
        assert!(v.tv_distance < 0.05, "tv {}", v.tv_distance);
        let mut csv = Vec::new();
        write_validation_csv(&v, &mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().lines().count() >= 4);
    }
}
