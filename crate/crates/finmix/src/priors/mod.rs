//! The prior hierarchy: component count, mixture weights, component
//! parameters, and the partition law obtained by integrating the weights
//! out of a symmetric Dirichlet.

pub mod conditions;

pub use conditions::{check_conditions, CheckBudget, ConditionCheck, ConditionId, ConditionReport, Verdict};

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, Poisson as PoissonDist};
use statrs::function::gamma::ln_gamma;

use crate::families::Family;
use crate::param_space::MixtureParams;
use crate::{Error, Result};

/// Attempts allowed to the repulsive rejection sampler before it reports a
/// pathological repulsion scale.
pub const REJECTION_ATTEMPT_CAP: usize = 1_000_000;

/// Prior on the number of components. The geometric and shifted-Poisson
/// kinds put positive mass on every count; the truncated kind deliberately
/// does not and exists as a negative fixture for the condition checker.
#[derive(Debug, Clone, PartialEq)]
pub enum KPrior {
    /// `pmf(k) = p (1-p)^(k-1)` on k = 1, 2, ...
    Geometric { p: f64 },
    /// `K = 1 + Poisson(mu)`.
    ShiftedPoisson { mu: f64 },
    /// Geometric conditioned on `k <= k_cap`; zero mass beyond the cap.
    TruncatedGeometric { p: f64, k_cap: usize },
}

impl KPrior {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            KPrior::Geometric { p } => p > 0.0 && p < 1.0,
            KPrior::ShiftedPoisson { mu } => mu > 0.0 && mu.is_finite(),
            KPrior::TruncatedGeometric { p, k_cap } => p > 0.0 && p < 1.0 && k_cap >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig("invalid count-prior parameters".into()))
        }
    }

    /// Log mass at `k >= 1`; `-inf` where the support has been truncated.
    pub fn log_pmf(&self, k: usize) -> Result<f64> {
        if k < 1 {
            return Err(Error::InvalidK(k));
        }
        Ok(match *self {
            KPrior::Geometric { p } => p.ln() + (k as f64 - 1.0) * (-p).ln_1p(),
            KPrior::ShiftedPoisson { mu } => {
                -mu + (k as f64 - 1.0) * mu.ln() - ln_gamma(k as f64)
            }
            KPrior::TruncatedGeometric { p, k_cap } => {
                if k > k_cap {
                    f64::NEG_INFINITY
                } else {
                    // Normalizer 1 - (1-p)^k_cap via expm1 for accuracy.
                    let norm = -((k_cap as f64) * (-p).ln_1p()).exp_m1();
                    p.ln() + (k as f64 - 1.0) * (-p).ln_1p() - norm.ln()
                }
            }
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match *self {
            KPrior::Geometric { p } => sample_geometric(p, rng),
            KPrior::ShiftedPoisson { mu } => {
                1 + PoissonDist::new(mu).unwrap().sample(rng) as usize
            }
            KPrior::TruncatedGeometric { p, k_cap } => loop {
                let k = sample_geometric(p, rng);
                if k <= k_cap {
                    return k;
                }
            },
        }
    }

    /// `Pr(K > k_max)`: the prior mass lost when inference truncates at
    /// `k_max`.
    pub fn truncation_mass_beyond(&self, k_max: usize) -> f64 {
        match *self {
            KPrior::Geometric { p } => (1.0 - p).powi(k_max as i32),
            KPrior::ShiftedPoisson { .. } => {
                let mut mass = 0.0;
                for k in 1..=k_max {
                    mass += self.log_pmf(k).expect("k >= 1").exp();
                }
                (1.0 - mass).clamp(0.0, 1.0)
            }
            KPrior::TruncatedGeometric { k_cap, .. } => {
                if k_max >= k_cap {
                    0.0
                } else {
                    let mut mass = 0.0;
                    for k in 1..=k_max {
                        mass += self.log_pmf(k).expect("k >= 1").exp();
                    }
                    (1.0 - mass).clamp(0.0, 1.0)
                }
            }
        }
    }

    /// `Some(cap)` when the support is bounded (which violates the
    /// positive-mass condition), `None` for the proper kinds.
    pub fn bounded_support(&self) -> Option<usize> {
        match *self {
            KPrior::TruncatedGeometric { k_cap, .. } => Some(k_cap),
            _ => None,
        }
    }
}

fn sample_geometric<R: Rng + ?Sized>(p: f64, rng: &mut R) -> usize {
    // Inversion: u in (0, 1], k = 1 + floor(ln u / ln(1-p)).
    let u = 1.0 - rng.random::<f64>();
    let k = 1.0 + (u.ln() / (-p).ln_1p()).floor();
    k as usize
}

/// Prior on the mixture weights given `k`.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightsPrior {
    /// Symmetric Dirichlet with concentration `alpha` in every coordinate.
    Dirichlet { alpha: f64 },
    /// Stick-breaking with `Z_i ~ Beta(a, b)` independently; the
    /// generalized Dirichlet distribution.
    GeneralizedDirichlet { a: f64, b: f64 },
}

impl WeightsPrior {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            WeightsPrior::Dirichlet { alpha } => alpha > 0.0 && alpha.is_finite(),
            WeightsPrior::GeneralizedDirichlet { a, b } => {
                a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig("invalid weights-prior parameters".into()))
        }
    }

    /// Per-component Dirichlet concentrations for a given `k`, when this
    /// kind supports conjugate weight integration.
    pub fn alphas(&self, k: usize) -> Option<Vec<f64>> {
        match *self {
            WeightsPrior::Dirichlet { alpha } => Some(vec![alpha; k]),
            WeightsPrior::GeneralizedDirichlet { .. } => None,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            WeightsPrior::Dirichlet { .. } => "dirichlet",
            WeightsPrior::GeneralizedDirichlet { .. } => "generalized_dirichlet",
        }
    }

    /// A draw from the interior of the k-simplex; `k = 1` always yields
    /// `[1.0]`.
    pub fn sample<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<f64> {
        if k == 1 {
            return vec![1.0];
        }
        match *self {
            WeightsPrior::Dirichlet { alpha } => loop {
                let gamma = Gamma::new(alpha, 1.0).unwrap();
                let raw: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
                let sum: f64 = raw.iter().sum();
                if raw.iter().all(|&g| g > 0.0) && sum.is_finite() && sum > 0.0 {
                    return raw.into_iter().map(|g| g / sum).collect();
                }
            },
            WeightsPrior::GeneralizedDirichlet { a, b } => loop {
                let beta = Beta::new(a, b).unwrap();
                let mut w = Vec::with_capacity(k);
                let mut remaining = 1.0;
                for _ in 0..k - 1 {
                    let z: f64 = beta.sample(rng);
                    w.push(z * remaining);
                    remaining *= 1.0 - z;
                }
                // The last weight is the un-broken remainder of the stick,
                // which stays strictly positive where `1 - sum` may not.
                w.push(remaining);
                let sum: f64 = w.iter().sum();
                if w.iter().all(|&x| x > 0.0) && sum > 0.0 {
                    return w.into_iter().map(|x| x / sum).collect();
                }
            },
        }
    }

    /// Log density of the weight vector with respect to (k-1)-dimensional
    /// Lebesgue measure `dw_1 .. dw_{k-1}`. Defined (and strictly positive)
    /// on the interior of the simplex; `0.0` at `k = 1`.
    pub fn log_density(&self, w: &[f64]) -> f64 {
        let k = w.len();
        if k == 1 {
            return 0.0;
        }
        if w.iter().any(|&x| x <= 0.0 || x >= 1.0) {
            return f64::NEG_INFINITY;
        }
        match *self {
            WeightsPrior::Dirichlet { alpha } => {
                ln_gamma(k as f64 * alpha) - k as f64 * ln_gamma(alpha)
                    + (alpha - 1.0) * w.iter().map(|x| x.ln()).sum::<f64>()
            }
            WeightsPrior::GeneralizedDirichlet { a, b } => {
                // Transform to sticks z_i = w_i / r_{i-1}; the Jacobian of
                // w -> z is triangular with determinant prod r_{i-1}.
                let ln_beta_norm = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b);
                let mut remaining = 1.0;
                let mut logp = 0.0;
                for &wi in &w[..k - 1] {
                    let z = wi / remaining;
                    if !(z > 0.0 && z < 1.0) {
                        return f64::NEG_INFINITY;
                    }
                    logp += ln_beta_norm + (a - 1.0) * z.ln() + (b - 1.0) * (1.0 - z).ln()
                        - remaining.ln();
                    remaining -= wi;
                }
                logp
            }
        }
    }
}

/// How the repulsion factor combines pairwise separations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RepulsionMode {
    Product,
    Min,
}

/// Prior on the component parameters given `k`.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamsPrior {
    /// Rows i.i.d. from the family's base prior `G0`.
    Iid,
    /// Density proportional to `h(v) prod_i g0(v_i)` with
    /// `h` built from `rho(s) = s / (s + tau)`, favoring well-separated
    /// components. Sampled by rejection from the i.i.d. proposal
    /// (`h <= 1`, so the acceptance weight is `h` itself).
    Repulsive { tau: f64, mode: RepulsionMode },
    /// Every row equals a fixed vector. A degenerate negative fixture for
    /// the condition checker; never a modeling choice.
    PointMass { value: Vec<f64> },
}

impl ParamsPrior {
    pub fn validate(&self, family: &Family) -> Result<()> {
        match self {
            ParamsPrior::Iid => Ok(()),
            ParamsPrior::Repulsive { tau, .. } => {
                if *tau > 0.0 && tau.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidConfig("repulsion scale must be positive".into()))
                }
            }
            ParamsPrior::PointMass { value } => {
                if family.contains(value) {
                    Ok(())
                } else {
                    Err(Error::InvalidConfig(
                        "point-mass value lies outside the family domain".into(),
                    ))
                }
            }
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ParamsPrior::Iid => "iid",
            ParamsPrior::Repulsive { .. } => "repulsive",
            ParamsPrior::PointMass { .. } => "point_mass",
        }
    }

    /// Whether the prior has a Lebesgue density on `V^k` (the point-mass
    /// fixture does not).
    pub fn has_lebesgue_density(&self) -> bool {
        !matches!(self, ParamsPrior::PointMass { .. })
    }

    /// Log repulsion factor `ln h(v)`; `0.0` for the non-repulsive kinds.
    pub fn log_h(&self, rows: &[Vec<f64>]) -> f64 {
        match self {
            ParamsPrior::Repulsive { tau, mode } => {
                let k = rows.len();
                if k < 2 {
                    return 0.0;
                }
                let rho = |s: f64| s / (s + tau);
                match mode {
                    RepulsionMode::Product => {
                        let mut total = 0.0;
                        for i in 0..k {
                            for j in i + 1..k {
                                total += rho(euclid(&rows[i], &rows[j])).ln();
                            }
                        }
                        total
                    }
                    RepulsionMode::Min => {
                        let mut min_sep = f64::INFINITY;
                        for i in 0..k {
                            for j in i + 1..k {
                                min_sep = min_sep.min(euclid(&rows[i], &rows[j]));
                            }
                        }
                        rho(min_sep).ln()
                    }
                }
            }
            _ => 0.0,
        }
    }

    /// Unnormalized log density `ln h(v) + sum_i ln g0(v_i)`; `None` when no
    /// Lebesgue density exists.
    pub fn log_density_unnorm(&self, family: &Family, rows: &[Vec<f64>]) -> Option<f64> {
        match self {
            ParamsPrior::PointMass { .. } => None,
            _ => {
                let base: f64 = rows.iter().map(|r| family.log_density_g0(r)).sum();
                Some(base + self.log_h(rows))
            }
        }
    }

    /// Draws the k parameter rows. Repulsive sampling rejects until the
    /// acceptance weight `h(v)` fires, up to [`REJECTION_ATTEMPT_CAP`]
    /// attempts.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        family: &Family,
        k: usize,
        rng: &mut R,
    ) -> Result<Vec<Vec<f64>>> {
        match self {
            ParamsPrior::Iid => Ok((0..k).map(|_| family.sample_g0(rng)).collect()),
            ParamsPrior::Repulsive { .. } => {
                for _ in 0..REJECTION_ATTEMPT_CAP {
                    let rows: Vec<Vec<f64>> = (0..k).map(|_| family.sample_g0(rng)).collect();
                    let log_h = self.log_h(&rows);
                    if rng.random::<f64>().ln() < log_h {
                        return Ok(rows);
                    }
                }
                Err(Error::RejectionFailure {
                    attempts: REJECTION_ATTEMPT_CAP,
                })
            }
            ParamsPrior::PointMass { value } => Ok(vec![value.clone(); k]),
        }
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// The full prior triple plus the component family it governs.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    pub k_prior: KPrior,
    pub weights_prior: WeightsPrior,
    pub params_prior: ParamsPrior,
    pub family: Family,
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        self.family.validate()?;
        self.k_prior.validate()?;
        self.weights_prior.validate()?;
        self.params_prior.validate(&self.family)
    }

    pub fn log_pmf_k(&self, k: usize) -> Result<f64> {
        self.k_prior.log_pmf(k)
    }

    pub fn sample_k<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.k_prior.sample(rng)
    }

    pub fn sample_weights<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<f64> {
        self.weights_prior.sample(k, rng)
    }

    pub fn sample_params<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        self.params_prior.sample(&self.family, k, rng)
    }

    /// One draw from the full hierarchy: `K`, then `W | K`, then `V | K`.
    pub fn sample_theta<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<MixtureParams> {
        let k = self.sample_k(rng);
        let w = self.sample_weights(k, rng);
        let v = self.sample_params(k, rng)?;
        MixtureParams::new(w, v).map_err(Error::from)
    }
}

/// Log probability of a label vector with the weights integrated out of a
/// Dirichlet prior:
/// `ln Gamma(sum a) - ln Gamma(n + sum a) + sum_j [ln Gamma(n_j + a_j) - ln Gamma(a_j)]`.
///
/// Labels are 0-based and must lie in `0..k`; empty clusters contribute
/// nothing. Errors on weight priors without conjugate Dirichlet form.
pub fn log_partition_prior(z: &[usize], k: usize, weights: &WeightsPrior) -> Result<f64> {
    if k < 1 {
        return Err(Error::InvalidK(k));
    }
    let alphas = weights.alphas(k).ok_or(Error::UnsupportedPrior {
        required: "dirichlet weights prior",
        got: weights.kind_name(),
    })?;
    let mut counts = vec![0usize; k];
    for &label in z {
        if label >= k {
            return Err(Error::InvalidLabel { label, k });
        }
        counts[label] += 1;
    }
    Ok(log_dirichlet_multinomial(&counts, &alphas))
}

/// Dirichlet-multinomial log mass from cluster counts; shared by the
/// partition prior and the sampler's k-move ratios.
pub(crate) fn log_dirichlet_multinomial(counts: &[usize], alphas: &[f64]) -> f64 {
    debug_assert_eq!(counts.len(), alphas.len());
    let n: usize = counts.iter().sum();
    let alpha_sum: f64 = alphas.iter().sum();
    let mut logp = ln_gamma(alpha_sum) - ln_gamma(n as f64 + alpha_sum);
    for (&c, &a) in counts.iter().zip(alphas) {
        if c > 0 {
            logp += ln_gamma(c as f64 + a) - ln_gamma(a);
        }
    }
    logp
}
