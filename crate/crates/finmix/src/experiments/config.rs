//! JSON experiment configuration.
//!
//! A single document configures the family, the prior triple, the
//! data-generating parameter, the sample-size schedule, and the inference
//! engine. Unknown keys are rejected everywhere: a typo should fail the
//! run, not silently fall back to a default.

use serde::{Deserialize, Serialize};

use crate::families::Family;
use crate::param_space::{collapse, is_canonical, validate, MixtureParams};
use crate::priors::{KPrior, ParamsPrior, PriorSpec, RepulsionMode, WeightsPrior};
use crate::{Error, Result};

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub family: FamilyConfig,
    pub prior: PriorConfig,
    pub theta0: Theta0Config,
    pub n_schedule: Vec<usize>,
    pub epsilons: Vec<f64>,
    pub replicates: usize,
    pub engine: EngineConfig,
    pub master_seed: u64,
    pub k_max: usize,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilyConfig {
    NormalKnownVar { sigma: f64, mu0: f64, tau0_sq: f64 },
    NormalMeanVar { mu0: f64, kappa0: f64, a0: f64, b0: f64 },
    Poisson { a0: f64, b0: f64 },
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub k: KPriorConfig,
    pub weights: WeightsConfig,
    pub params: ParamsConfig,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KPriorConfig {
    Geometric { p: f64 },
    ShiftedPoisson { mu: f64 },
    TruncatedGeometric { p: f64, k_cap: usize },
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightsConfig {
    Dirichlet { alpha: f64 },
    GeneralizedDirichlet { a: f64, b: f64 },
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ParamsConfig {
    Iid,
    Repulsive { tau: f64, mode: RepulsionModeConfig },
    PointMass { value: Vec<f64> },
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RepulsionModeConfig {
    Product,
    Min,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Theta0Config {
    Explicit { w: Vec<f64>, v: Vec<Vec<f64>> },
    DrawFromPrior { seed: u64 },
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EngineConfig {
    Exact {
        n_draws: usize,
    },
    Mcmc {
        sweeps: usize,
        #[serde(default)]
        burn_in: Option<usize>,
        #[serde(default)]
        thin: Option<usize>,
    },
}

impl EngineConfig {
    pub fn label(&self) -> &'static str {
        match self {
            EngineConfig::Exact { .. } => "exact",
            EngineConfig::Mcmc { .. } => "mcmc",
        }
    }

    /// Default engine parameters for a CLI `--engine` override.
    pub fn default_for(label: &str) -> Result<Self> {
        match label {
            "exact" => Ok(EngineConfig::Exact { n_draws: 2_000 }),
            "mcmc" => Ok(EngineConfig::Mcmc {
                sweeps: 3_000,
                burn_in: None,
                thin: None,
            }),
            other => Err(Error::InvalidConfig(format!("unknown engine: {other}"))),
        }
    }
}

impl FamilyConfig {
    pub fn to_family(&self) -> Family {
        match *self {
            FamilyConfig::NormalKnownVar { sigma, mu0, tau0_sq } => {
                Family::NormalKnownVar { sigma, mu0, tau0_sq }
            }
            FamilyConfig::NormalMeanVar { mu0, kappa0, a0, b0 } => {
                Family::NormalMeanVar { mu0, kappa0, a0, b0 }
            }
            FamilyConfig::Poisson { a0, b0 } => Family::Poisson { a0, b0 },
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_prior_spec(&self) -> Result<PriorSpec> {
        let family = self.family.to_family();
        let k_prior = match self.prior.k {
            KPriorConfig::Geometric { p } => KPrior::Geometric { p },
            KPriorConfig::ShiftedPoisson { mu } => KPrior::ShiftedPoisson { mu },
            KPriorConfig::TruncatedGeometric { p, k_cap } => {
                KPrior::TruncatedGeometric { p, k_cap }
            }
        };
        let weights_prior = match self.prior.weights {
            WeightsConfig::Dirichlet { alpha } => WeightsPrior::Dirichlet { alpha },
            WeightsConfig::GeneralizedDirichlet { a, b } => {
                WeightsPrior::GeneralizedDirichlet { a, b }
            }
        };
        let params_prior = match &self.prior.params {
            ParamsConfig::Iid => ParamsPrior::Iid,
            ParamsConfig::Repulsive { tau, mode } => ParamsPrior::Repulsive {
                tau: *tau,
                mode: match mode {
                    RepulsionModeConfig::Product => RepulsionMode::Product,
                    RepulsionModeConfig::Min => RepulsionMode::Min,
                },
            },
            ParamsConfig::PointMass { value } => ParamsPrior::PointMass {
                value: value.clone(),
            },
        };
        let spec = PriorSpec {
            k_prior,
            weights_prior,
            params_prior,
            family,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Resolves the data-generating parameter: explicit points are
    /// canonicalized on ingestion (so reported results are label-stable) and
    /// must have distinct components; `draw_from_prior` draws once with its
    /// own seed.
    pub fn resolve_theta0(&self, prior: &PriorSpec) -> Result<MixtureParams> {
        let theta0 = match &self.theta0 {
            Theta0Config::Explicit { w, v } => MixtureParams::new(w.clone(), v.clone())?,
            Theta0Config::DrawFromPrior { seed } => {
                use rand::SeedableRng;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(*seed);
                prior.sample_theta(&mut rng)?
            }
        };
        validate(&theta0, &prior.family).map_err(Error::from)?;
        let theta0 = collapse(&theta0);
        if theta0.k() > 1 && !is_canonical(&theta0) {
            return Err(Error::InvalidConfig(
                "theta0 must have distinct component parameters".into(),
            ));
        }
        Ok(theta0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_schedule.is_empty() {
            return Err(Error::InvalidConfig("n_schedule must be non-empty".into()));
        }
        if !self.n_schedule.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidConfig(
                "n_schedule must be strictly increasing".into(),
            ));
        }
        if self.replicates < 1 {
            return Err(Error::InvalidConfig("replicates must be >= 1".into()));
        }
        if self.epsilons.is_empty() {
            return Err(Error::InvalidConfig("epsilons must be non-empty".into()));
        }
        if self
            .epsilons
            .iter()
            .any(|&e| !(e > 0.0 && e <= 1.0) || !e.is_finite())
        {
            return Err(Error::InvalidConfig(
                "epsilons must lie in (0, 1]".into(),
            ));
        }
        if self.k_max < 1 {
            return Err(Error::InvalidConfig("k_max must be >= 1".into()));
        }
        match self.engine {
            EngineConfig::Exact { n_draws } => {
                if n_draws == 0 {
                    return Err(Error::InvalidConfig("exact engine needs n_draws >= 1".into()));
                }
            }
            EngineConfig::Mcmc { sweeps, burn_in, thin } => {
                let burn = burn_in.unwrap_or(sweeps / 5);
                if sweeps == 0 || burn >= sweeps {
                    return Err(Error::InvalidConfig(
                        "mcmc engine needs burn_in < sweeps".into(),
                    ));
                }
                if thin == Some(0) {
                    return Err(Error::InvalidConfig("thin must be >= 1".into()));
                }
            }
        }
        // Construction of the prior performs the per-component validations.
        self.to_prior_spec()?;
        Ok(())
    }
}
