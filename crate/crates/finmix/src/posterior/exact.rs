//! Brute-force posterior enumeration for small data sets.
//!
//! With the weights integrated out of a Dirichlet prior and the component
//! parameters integrated out by conjugacy, the joint posterior over
//! `(k, z)` has weight `pi(k) * p(z | k) * prod_j m_j(z)` per state, where
//! `m_j` is the cluster marginal likelihood. For `k <= k_max` and small `n`
//! every state can be enumerated in log space, which makes this engine the
//! correctness oracle for the sampler.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::families::Family;
use crate::math::{log_sum_exp, LogSumExp};
use crate::param_space::MixtureParams;
use crate::posterior::{KPosterior, Provenance, ThetaDraws, WeightedDraw};
use crate::priors::{log_dirichlet_multinomial, ParamsPrior, PriorSpec};
use crate::{Error, Result};

/// Hard cap on the number of enumerated states.
const STATE_BUDGET: u128 = 2_000_000;

/// The fully enumerated joint posterior over `(k, z)`, `k <= k_max`.
///
/// States are indexed contiguously: the block for a given `k` holds the
/// `k^n` label vectors in base-k counting order (`z[i]` is the i-th digit).
#[derive(Debug, Clone)]
pub struct JointEnumeration {
    pub n: usize,
    pub k_max: usize,
    /// Unnormalized log weight per state.
    pub log_weights: Vec<f64>,
    /// `log sum_states exp(log_weight)`.
    pub log_norm: f64,
    /// Start index of each k-block (`offsets[k-1]`).
    offsets: Vec<usize>,
}

impl JointEnumeration {
    pub fn num_states(&self) -> usize {
        self.log_weights.len()
    }

    /// Decodes a state index into `(k, z)`.
    pub fn decode(&self, idx: usize) -> (usize, Vec<usize>) {
        let k = match self.offsets.partition_point(|&off| off <= idx) {
            0 => unreachable!("offsets start at 0"),
            block => block,
        };
        let mut rem = idx - self.offsets[k - 1];
        let mut z = Vec::with_capacity(self.n);
        for _ in 0..self.n {
            z.push(rem % k);
            rem /= k;
        }
        (k, z)
    }

    /// Index of the state `(k, z)`; `None` if out of range.
    pub fn index_of(&self, k: usize, z: &[usize]) -> Option<usize> {
        if k < 1 || k > self.k_max || z.len() != self.n {
            return None;
        }
        let mut code = 0usize;
        for &label in z.iter().rev() {
            if label >= k {
                return None;
            }
            code = code * k + label;
        }
        Some(self.offsets[k - 1] + code)
    }

    /// Normalized posterior probability of a state.
    pub fn prob(&self, idx: usize) -> f64 {
        (self.log_weights[idx] - self.log_norm).exp()
    }

    /// `Pr(K = k | data)` for each k, normalized over `k <= k_max`.
    pub fn k_marginals(&self) -> BTreeMap<usize, f64> {
        let mut out = BTreeMap::new();
        for k in 1..=self.k_max {
            let lo = self.offsets[k - 1];
            let hi = self
                .offsets
                .get(k)
                .copied()
                .unwrap_or(self.log_weights.len());
            let mut acc = LogSumExp::new();
            for &lw in &self.log_weights[lo..hi] {
                acc.add(lw);
            }
            out.insert(k, (acc.total() - self.log_norm).exp());
        }
        out
    }
}

fn require_conjugate_path(prior: &PriorSpec) -> Result<()> {
    if prior.weights_prior.alphas(1).is_none() {
        return Err(Error::UnsupportedPrior {
            required: "dirichlet weights prior",
            got: prior.weights_prior.kind_name(),
        });
    }
    if !matches!(prior.params_prior, ParamsPrior::Iid) {
        return Err(Error::UnsupportedPrior {
            required: "iid conjugate base prior",
            got: prior.params_prior.kind_name(),
        });
    }
    Ok(())
}

fn check_data(family: &Family, data: &[f64]) -> Result<()> {
    for &x in data {
        if !family.data_ok(x) {
            return Err(Error::InvalidData {
                family: family.name(),
                value: x,
            });
        }
    }
    Ok(())
}

fn state_count(n: usize, k_max: usize) -> Result<u128> {
    let mut states: u128 = 0;
    for k in 1..=k_max {
        let block = (k as u128)
            .checked_pow(n as u32)
            .ok_or(Error::BudgetExceeded {
                states: u128::MAX,
                budget: STATE_BUDGET,
            })?;
        states += block;
        if states > STATE_BUDGET {
            return Err(Error::BudgetExceeded {
                states,
                budget: STATE_BUDGET,
            });
        }
    }
    Ok(states)
}

/// Enumerates the joint posterior over `(k, z)` for `k <= k_max`.
pub fn enumerate_joint(data: &[f64], prior: &PriorSpec, k_max: usize) -> Result<JointEnumeration> {
    if k_max < 1 {
        return Err(Error::InvalidK(k_max));
    }
    require_conjugate_path(prior)?;
    check_data(&prior.family, data)?;
    let n = data.len();
    let total = state_count(n, k_max)? as usize;

    let mut log_weights = Vec::with_capacity(total);
    let mut offsets = Vec::with_capacity(k_max);
    let family = &prior.family;

    for k in 1..=k_max {
        offsets.push(log_weights.len());
        let log_pi = prior.log_pmf_k(k)?;
        let alphas = prior
            .weights_prior
            .alphas(k)
            .expect("checked conjugate path");
        let block = (k as u128).pow(n as u32) as usize;
        let mut counts = vec![0usize; k];
        let mut stats = vec![family.empty_stats(); k];
        let mut z = vec![0usize; n];
        for code in 0..block {
            // Rebuild cluster statistics for this label vector.
            for c in counts.iter_mut() {
                *c = 0;
            }
            for s in stats.iter_mut() {
                *s = family.empty_stats();
            }
            let mut rem = code;
            for zi in z.iter_mut() {
                *zi = rem % k;
                rem /= k;
            }
            for (i, &label) in z.iter().enumerate() {
                counts[label] += 1;
                family.add_obs(&mut stats[label], data[i]);
            }
            let mut lw = log_pi + log_dirichlet_multinomial(&counts, &alphas);
            for s in &stats {
                if !s.is_empty() {
                    lw += family.cluster_log_marginal(s);
                }
            }
            log_weights.push(lw);
        }
    }

    let log_norm = log_sum_exp(&log_weights);
    Ok(JointEnumeration {
        n,
        k_max,
        log_weights,
        log_norm,
        offsets,
    })
}

/// Log-space normalization check of the enumeration itself: the enumerated
/// prior joint over `(k <= k_max, z)`, with the count prior renormalized to
/// the truncated support, must sum to 1. Returns the log of that sum
/// (ideally 0).
pub fn enumeration_log_normalization(n: usize, prior: &PriorSpec, k_max: usize) -> Result<f64> {
    if k_max < 1 {
        return Err(Error::InvalidK(k_max));
    }
    require_conjugate_path(prior)?;
    state_count(n, k_max)?;

    let log_pis: Vec<f64> = (1..=k_max)
        .map(|k| prior.log_pmf_k(k))
        .collect::<Result<_>>()?;
    let log_pi_norm = log_sum_exp(&log_pis);

    let mut acc = LogSumExp::new();
    for k in 1..=k_max {
        let alphas = prior.weights_prior.alphas(k).expect("checked");
        let block = (k as u128).pow(n as u32) as usize;
        let mut counts = vec![0usize; k];
        for code in 0..block {
            for c in counts.iter_mut() {
                *c = 0;
            }
            let mut rem = code;
            for _ in 0..n {
                counts[rem % k] += 1;
                rem /= k;
            }
            acc.add(log_pis[k - 1] - log_pi_norm + log_dirichlet_multinomial(&counts, &alphas));
        }
    }
    Ok(acc.total())
}

/// Exact posterior over the number of components, by full enumeration.
pub fn exact_k_posterior(data: &[f64], prior: &PriorSpec, k_max: usize) -> Result<KPosterior> {
    let joint = enumerate_joint(data, prior, k_max)?;
    let probs = joint.k_marginals();
    let std_errors = probs.keys().map(|&k| (k, 0.0)).collect();
    Ok(KPosterior {
        probs,
        std_errors,
        truncation_mass_bound: prior.k_prior.truncation_mass_beyond(k_max),
    })
}

/// I.i.d. exact posterior draws of the mixture parameters: a state `(k, z)`
/// from the enumerated joint, then the weights from their Dirichlet
/// conditional and each component parameter from its conjugate conditional
/// (base prior for empty clusters).
pub fn exact_theta_draws(
    data: &[f64],
    prior: &PriorSpec,
    k_max: usize,
    n_draws: usize,
    seed: u64,
) -> Result<ThetaDraws> {
    if n_draws == 0 {
        return Err(Error::EmptyDraws);
    }
    let joint = enumerate_joint(data, prior, k_max)?;
    let family = &prior.family;

    // Cumulative state probabilities for inverse-cdf sampling.
    let mut cum = Vec::with_capacity(joint.num_states());
    let mut acc = 0.0;
    for idx in 0..joint.num_states() {
        acc += joint.prob(idx);
        cum.push(acc);
    }
    let total = acc;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = Vec::with_capacity(n_draws);
    let weight = 1.0 / n_draws as f64;
    for _ in 0..n_draws {
        let u: f64 = rng.random::<f64>() * total;
        let idx = cum.partition_point(|&c| c <= u).min(cum.len() - 1);
        let (k, z) = joint.decode(idx);

        let mut counts = vec![0usize; k];
        let mut stats = vec![family.empty_stats(); k];
        for (i, &label) in z.iter().enumerate() {
            counts[label] += 1;
            family.add_obs(&mut stats[label], data[i]);
        }

        let alphas = prior.weights_prior.alphas(k).expect("checked");
        let w = sample_dirichlet_posterior(&alphas, &counts, &mut rng);
        let v = stats
            .iter()
            .map(|s| family.sample_param_posterior(s, &mut rng))
            .collect();
        draws.push(WeightedDraw {
            theta: MixtureParams::new(w, v)?,
            weight,
        });
    }

    Ok(ThetaDraws {
        draws,
        provenance: Provenance::ExactOracle,
        seed,
        iterations: n_draws,
        truncation_mass_bound: prior.k_prior.truncation_mass_beyond(k_max),
    })
}

/// Dirichlet(alpha_j + n_j) draw via normalized Gamma variates.
pub(crate) fn sample_dirichlet_posterior<R: Rng + ?Sized>(
    alphas: &[f64],
    counts: &[usize],
    rng: &mut R,
) -> Vec<f64> {
    loop {
        let raw: Vec<f64> = alphas
            .iter()
            .zip(counts)
            .map(|(&a, &c)| Gamma::new(a + c as f64, 1.0).unwrap().sample(rng))
            .collect();
        let sum: f64 = raw.iter().sum();
        if raw.iter().all(|&g| g > 0.0) && sum.is_finite() && sum > 0.0 {
            return raw.into_iter().map(|g| g / sum).collect();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posterior::estimate_k_posterior;
    use crate::priors::{KPrior, WeightsPrior};

    fn nkv_prior() -> PriorSpec {
        PriorSpec {
            k_prior: KPrior::Geometric { p: 0.5 },
            weights_prior: WeightsPrior::Dirichlet { alpha: 1.0 },
            params_prior: ParamsPrior::Iid,
            family: Family::NormalKnownVar {
                sigma: 1.0,
                mu0: 0.0,
                tau0_sq: 16.0,
            },
        }
    }

    fn normalized_prior_pmf(prior: &PriorSpec, k_max: usize) -> Vec<f64> {
        let raw: Vec<f64> = (1..=k_max)
            .map(|k| prior.log_pmf_k(k).unwrap().exp())
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|p| p / total).collect()
    }

    #[test]
    fn no_data_returns_the_normalized_prior() {
        let prior = nkv_prior();
        let post = exact_k_posterior(&[], &prior, 4).unwrap();
        let expected = normalized_prior_pmf(&prior, 4);
        for k in 1..=4 {
            assert!(
                (post.prob(k) - expected[k - 1]).abs() < 1e-12,
                "k = {k}: {} vs {}",
                post.prob(k),
                expected[k - 1]
            );
        }
    }

    #[test]
    fn single_observation_carries_no_information_about_k() {
        // With exchangeable clusters the evidence factorizes identically for
        // every k, so one observation leaves the k-posterior at the prior.
        for (prior, x) in [
            (nkv_prior(), 1.3),
            (
                PriorSpec {
                    k_prior: KPrior::Geometric { p: 0.3 },
                    weights_prior: WeightsPrior::Dirichlet { alpha: 0.7 },
                    params_prior: ParamsPrior::Iid,
                    family: Family::Poisson { a0: 2.0, b0: 0.5 },
                },
                4.0,
            ),
        ] {
            let post = exact_k_posterior(&[x], &prior, 4).unwrap();
            let expected = normalized_prior_pmf(&prior, 4);
            for k in 1..=4 {
                assert!(
                    (post.prob(k) - expected[k - 1]).abs() < 1e-10,
                    "k = {k}: {} vs {}",
                    post.prob(k),
                    expected[k - 1]
                );
            }
        }
    }

    #[test]
    fn enumeration_normalizes_in_log_space() {
        let prior = nkv_prior();
        for n in [0usize, 1, 4, 6] {
            let log_total = enumeration_log_normalization(n, &prior, 3).unwrap();
            assert!(log_total.abs() < 1e-10, "n = {n}: {log_total}");
        }
    }

    #[test]
    fn data_order_does_not_matter() {
        let prior = nkv_prior();
        let data = [-2.1, 1.8, -1.9, 2.3, 0.2, -0.4];
        let mut shuffled = data;
        shuffled.reverse();
        shuffled.swap(1, 3);
        let a = exact_k_posterior(&data, &prior, 3).unwrap();
        let b = exact_k_posterior(&shuffled, &prior, 3).unwrap();
        for k in 1..=3 {
            assert!((a.prob(k) - b.prob(k)).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_unsupported_priors_and_bad_data() {
        let mut prior = nkv_prior();
        prior.weights_prior = WeightsPrior::GeneralizedDirichlet { a: 1.0, b: 1.0 };
        assert!(matches!(
            exact_k_posterior(&[0.0], &prior, 2),
            Err(Error::UnsupportedPrior { .. })
        ));

        let poisson = PriorSpec {
            k_prior: KPrior::Geometric { p: 0.5 },
            weights_prior: WeightsPrior::Dirichlet { alpha: 1.0 },
            params_prior: ParamsPrior::Iid,
            family: Family::Poisson { a0: 1.0, b0: 1.0 },
        };
        assert!(matches!(
            exact_k_posterior(&[1.5], &poisson, 2),
            Err(Error::InvalidData { .. })
        ));
    }

    #[test]
    fn budget_guard_trips_on_large_instances() {
        let prior = nkv_prior();
        let data = vec![0.0; 25];
        assert!(matches!(
            exact_k_posterior(&data, &prior, 6),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn joint_indexing_round_trips() {
        let prior = nkv_prior();
        let joint = enumerate_joint(&[0.5, -0.5, 1.0], &prior, 3).unwrap();
        for idx in 0..joint.num_states() {
            let (k, z) = joint.decode(idx);
            assert_eq!(joint.index_of(k, &z), Some(idx));
        }
        assert_eq!(joint.num_states(), 1 + 8 + 27);
    }

    #[test]
    fn oracle_draws_with_no_data_match_the_prior_over_k() {
        let prior = nkv_prior();
        let draws = exact_theta_draws(&[], &prior, 4, 40_000, 99).unwrap();
        for d in &draws.draws {
            assert!(crate::param_space::validate(&d.theta, &prior.family).is_ok());
        }
        let est = estimate_k_posterior(&draws).unwrap();
        let expected = normalized_prior_pmf(&prior, 4);
        for k in 1..=4 {
            let se = est.std_error(k).max(1e-3);
            assert!(
                (est.prob(k) - expected[k - 1]).abs() < 4.0 * se,
                "k = {k}: {} vs {}",
                est.prob(k),
                expected[k - 1]
            );
        }
    }

    #[test]
    fn degenerate_k_max_one_forces_unit_weight() {
        let prior = nkv_prior();
        let draws = exact_theta_draws(&[0.3, -0.7], &prior, 1, 200, 5).unwrap();
        for d in &draws.draws {
            assert_eq!(d.theta.k(), 1);
            assert_eq!(d.theta.weights(), &[1.0]);
        }
    }

    #[test]
    fn frozen_two_cluster_fixtures() {
        // Expected values tabulated by an independent NumPy/SciPy
        // enumeration of the same model.
        let prior = nkv_prior();
        let data = [-2.1, -1.9, -2.2, 1.8, 2.0, 2.3];
        let post = exact_k_posterior(&data, &prior, 4).unwrap();
        let expected = [
            (1, 0.001580909608282),
            (2, 0.535619799209320),
            (3, 0.309790414063638),
            (4, 0.153008877118760),
        ];
        for (k, p) in expected {
            assert!(
                (post.prob(k) - p).abs() < 1e-10,
                "k = {k}: {} vs {p}",
                post.prob(k)
            );
        }

        let poisson = PriorSpec {
            k_prior: KPrior::Geometric { p: 0.5 },
            weights_prior: WeightsPrior::Dirichlet { alpha: 1.0 },
            params_prior: ParamsPrior::Iid,
            family: Family::Poisson { a0: 1.0, b0: 0.2 },
        };
        let data = [1.0, 9.0, 2.0, 11.0, 0.0, 8.0];
        let post = exact_k_posterior(&data, &poisson, 3).unwrap();
        let expected = [
            (1, 0.003266673618219),
            (2, 0.566996915199630),
            (3, 0.429736411182151),
        ];
        for (k, p) in expected {
            assert!(
                (post.prob(k) - p).abs() < 1e-10,
                "k = {k}: {} vs {p}",
                post.prob(k)
            );
        }
    }

    #[test]
    fn oracle_draws_reproduce_the_exact_k_posterior() {
        let prior = nkv_prior();
        let data = [-2.0, -1.8, 2.1, 1.9, 0.0];
        let exact = exact_k_posterior(&data, &prior, 3).unwrap();
        let draws = exact_theta_draws(&data, &prior, 3, 60_000, 123).unwrap();
        let est = estimate_k_posterior(&draws).unwrap();
        for k in 1..=3 {
            let se = est.std_error(k).max(1e-3);
            assert!(
                (est.prob(k) - exact.prob(k)).abs() < 3.0 * se,
                "k = {k}: {} vs {} (se {se})",
                est.prob(k),
                exact.prob(k)
            );
        }
    }
}
