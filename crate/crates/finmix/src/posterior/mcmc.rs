//! Trans-dimensional allocation sampler.
//!
//! The chain lives on `(k, z)` with the mixture weights integrated out of a
//! symmetric Dirichlet and the component parameters integrated out by
//! conjugacy, so the target is
//! `p(k, z | data) ∝ pi(k) p(z | k) prod_j m_j(z)`. Components may be
//! empty; that is what lets `k` move without trans-dimensional parameter
//! proposals, since `(w, v)` are recovered afterwards by exact conditional
//! draws. Each sweep runs single-site Gibbs over the labels followed by one
//! Metropolis-Hastings add/delete of an empty component:
//!
//! - add inserts an empty component at a uniform position among `k + 1`;
//! - delete removes one of the `e` empty components uniformly at random.
//!
//! With those proposal weights the acceptance ratio for add is
//! `pi(k+1) p(z'|k+1) (k+1) / (pi(k) p(z|k) (e+1))`, and the mirrored ratio
//! for delete; the pair is in detailed balance with the target (checked
//! exactly by the transition-flow tests).
//!
//! Each sweep ends with a uniform label transposition. The target is
//! invariant under relabeling components, so the move is always accepted;
//! without it the chain can sit in one labeling of well-separated clusters
//! for arbitrarily long, which starves the mirror states the exact
//! enumeration weights equally.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::families::{ClusterStats, Family};
use crate::param_space::MixtureParams;
use crate::posterior::exact::sample_dirichlet_posterior;
use crate::posterior::{
    estimate_k_posterior, AssignmentState, KPosterior, Provenance, ThetaDraws, WeightedDraw,
};
use crate::priors::{log_dirichlet_multinomial, ParamsPrior, PriorSpec, WeightsPrior};
use crate::{Error, Result};

/// Chain length controls for [`mcmc_run`].
#[derive(Debug, Clone, Copy)]
pub struct McmcOptions {
    pub sweeps: usize,
    /// Defaults to `sweeps / 5` when unset.
    pub burn_in: Option<usize>,
    pub thin: usize,
}

impl Default for McmcOptions {
    fn default() -> Self {
        McmcOptions {
            sweeps: 2_000,
            burn_in: None,
            thin: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct McmcDiagnostics {
    pub sweeps: usize,
    pub k_move_proposals: usize,
    pub k_move_accepts: usize,
    /// Add proposals rejected because the chain sat at `k_max`.
    pub truncation_rejects: usize,
    pub distinct_k_visited: usize,
}

impl McmcDiagnostics {
    pub fn acceptance_rate(&self) -> f64 {
        if self.k_move_proposals == 0 {
            0.0
        } else {
            self.k_move_accepts as f64 / self.k_move_proposals as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct McmcOutput {
    pub draws: ThetaDraws,
    pub k_posterior: KPosterior,
    pub diagnostics: McmcDiagnostics,
}

/// The collapsed-state sampler. Exposed so validation code can drive sweeps
/// directly and inspect states and acceptance ratios.
#[derive(Debug, Clone)]
pub struct AllocationSampler<'a> {
    data: &'a [f64],
    family: Family,
    prior: PriorSpec,
    alpha: f64,
    k_max: usize,
    k: usize,
    z: Vec<usize>,
    counts: Vec<usize>,
    stats: Vec<ClusterStats>,
    k_move_proposals: usize,
    k_move_accepts: usize,
    truncation_rejects: usize,
    k_seen: Vec<bool>,
}

impl<'a> AllocationSampler<'a> {
    /// Starts from the all-in-one-cluster state `k = 1`.
    pub fn new(data: &'a [f64], prior: &PriorSpec, k_max: usize) -> Result<Self> {
        let state = AssignmentState::new(1, vec![0; data.len()])?;
        Self::from_state(data, prior, k_max, &state)
    }

    /// Starts at `k = k_max` with labels assigned by one sequential pass of
    /// the predictive conditionals. Redundant components end up empty or
    /// small, and deleting them is cheap, whereas growing `k` from below
    /// costs a rare accept per step at large `n`. This is the
    /// initialization [`mcmc_run`] uses.
    pub fn new_sequential<R: Rng + ?Sized>(
        data: &'a [f64],
        prior: &PriorSpec,
        k_max: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut sampler = Self::from_state(
            data,
            prior,
            k_max,
            &AssignmentState::new(k_max, vec![0; data.len()])?,
        )?;
        // Tear down the placeholder allocation and rebuild it point by
        // point from the predictive weights.
        for (i, &x) in data.iter().enumerate() {
            sampler.counts[sampler.z[i]] -= 1;
            sampler
                .family
                .remove_obs(&mut sampler.stats[sampler.z[i]], x);
        }
        for (i, &x) in data.iter().enumerate() {
            let mut log_w = Vec::with_capacity(k_max);
            for j in 0..k_max {
                log_w.push(
                    (sampler.counts[j] as f64 + sampler.alpha).ln()
                        + sampler.family.log_predictive(&sampler.stats[j], x),
                );
            }
            let label = sample_categorical_log(&log_w, rng);
            sampler.z[i] = label;
            sampler.counts[label] += 1;
            sampler.family.add_obs(&mut sampler.stats[label], x);
        }
        Ok(sampler)
    }

    /// Starts from an explicit allocation state.
    pub fn from_state(
        data: &'a [f64],
        prior: &PriorSpec,
        k_max: usize,
        state: &AssignmentState,
    ) -> Result<Self> {
        if k_max < 1 {
            return Err(Error::InvalidK(k_max));
        }
        if state.k > k_max {
            return Err(Error::InvalidK(state.k));
        }
        if state.z.len() != data.len() {
            return Err(Error::LengthMismatch(state.z.len(), data.len()));
        }
        for &label in &state.z {
            if label >= state.k {
                return Err(Error::InvalidLabel { label, k: state.k });
            }
        }
        let alpha = match prior.weights_prior {
            WeightsPrior::Dirichlet { alpha } => alpha,
            _ => {
                return Err(Error::UnsupportedPrior {
                    required: "dirichlet weights prior",
                    got: prior.weights_prior.kind_name(),
                })
            }
        };
        if !matches!(prior.params_prior, ParamsPrior::Iid) {
            return Err(Error::UnsupportedPrior {
                required: "iid conjugate base prior",
                got: prior.params_prior.kind_name(),
            });
        }
        let family = prior.family.clone();
        for &x in data {
            if !family.data_ok(x) {
                return Err(Error::InvalidData {
                    family: family.name(),
                    value: x,
                });
            }
        }

        let mut counts = vec![0usize; state.k];
        let mut stats = vec![family.empty_stats(); state.k];
        for (i, &label) in state.z.iter().enumerate() {
            counts[label] += 1;
            family.add_obs(&mut stats[label], data[i]);
        }
        let mut k_seen = vec![false; k_max + 1];
        k_seen[state.k] = true;
        Ok(AllocationSampler {
            data,
            family,
            prior: prior.clone(),
            alpha,
            k_max,
            k: state.k,
            z: state.z.clone(),
            counts,
            stats,
            k_move_proposals: 0,
            k_move_accepts: 0,
            truncation_rejects: 0,
            k_seen,
        })
    }

    pub fn state(&self) -> AssignmentState {
        AssignmentState {
            k: self.k,
            z: self.z.clone(),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    fn empty_components(&self) -> usize {
        self.counts.iter().filter(|&&c| c == 0).count()
    }

    /// Log unnormalized target of the current state.
    pub fn log_target(&self) -> f64 {
        let alphas = vec![self.alpha; self.k];
        let mut lt = self.prior.log_pmf_k(self.k).expect("k >= 1")
            + log_dirichlet_multinomial(&self.counts, &alphas);
        for s in &self.stats {
            if !s.is_empty() {
                lt += self.family.cluster_log_marginal(s);
            }
        }
        lt
    }

    fn log_partition_counts(&self, counts: &[usize]) -> f64 {
        let alphas = vec![self.alpha; counts.len()];
        log_dirichlet_multinomial(counts, &alphas)
    }

    /// Log acceptance ratio of the add-empty-component move; `None` when the
    /// chain sits at `k_max`.
    pub fn log_add_ratio(&self) -> Option<f64> {
        if self.k == self.k_max {
            return None;
        }
        let k = self.k;
        let e = self.empty_components();
        let mut grown = self.counts.clone();
        grown.push(0);
        let log_prior = self.prior.log_pmf_k(k + 1).expect("k >= 1")
            - self.prior.log_pmf_k(k).expect("k >= 1");
        let log_partition = self.log_partition_counts(&grown) - self.log_partition_counts(&self.counts);
        Some(log_prior + log_partition + ((k + 1) as f64).ln() - ((e + 1) as f64).ln())
    }

    /// Log acceptance ratio of the delete-empty-component move; `None` when
    /// no empty component exists or `k` would drop below 1.
    pub fn log_delete_ratio(&self) -> Option<f64> {
        if self.k == 1 {
            return None;
        }
        let e = self.empty_components();
        if e == 0 {
            return None;
        }
        let k = self.k;
        let mut shrunk = self.counts.clone();
        let drop_at = shrunk.iter().position(|&c| c == 0).expect("e > 0");
        shrunk.remove(drop_at);
        let log_prior = self.prior.log_pmf_k(k - 1).expect("k >= 2")
            - self.prior.log_pmf_k(k).expect("k >= 1");
        let log_partition = self.log_partition_counts(&shrunk) - self.log_partition_counts(&self.counts);
        Some(log_prior + log_partition + (e as f64).ln() - (k as f64).ln())
    }

    fn gibbs_site<R: Rng + ?Sized>(&mut self, i: usize, rng: &mut R) {
        let x = self.data[i];
        let old = self.z[i];
        self.counts[old] -= 1;
        self.family.remove_obs(&mut self.stats[old], x);

        let mut log_w = Vec::with_capacity(self.k);
        for j in 0..self.k {
            log_w.push(
                (self.counts[j] as f64 + self.alpha).ln()
                    + self.family.log_predictive(&self.stats[j], x),
            );
        }
        let new = sample_categorical_log(&log_w, rng);
        self.z[i] = new;
        self.counts[new] += 1;
        self.family.add_obs(&mut self.stats[new], x);
    }

    fn k_move<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.k_move_proposals += 1;
        let propose_add = rng.random::<f64>() < 0.5;
        if propose_add {
            if self.k == self.k_max {
                self.truncation_rejects += 1;
                return;
            }
            let pos = rng.random_range(0..=self.k);
            let log_r = self.log_add_ratio().expect("k < k_max");
            if rng.random::<f64>().ln() < log_r {
                for label in self.z.iter_mut() {
                    if *label >= pos {
                        *label += 1;
                    }
                }
                self.counts.insert(pos, 0);
                self.stats.insert(pos, self.family.empty_stats());
                self.k += 1;
                self.k_seen[self.k] = true;
                self.k_move_accepts += 1;
            }
        } else {
            let Some(log_r) = self.log_delete_ratio() else {
                return;
            };
            let empties: Vec<usize> = (0..self.k).filter(|&j| self.counts[j] == 0).collect();
            let pick = empties[rng.random_range(0..empties.len())];
            if rng.random::<f64>().ln() < log_r {
                for label in self.z.iter_mut() {
                    if *label > pick {
                        *label -= 1;
                    }
                }
                self.counts.remove(pick);
                self.stats.remove(pick);
                self.k -= 1;
                self.k_seen[self.k] = true;
                self.k_move_accepts += 1;
            }
        }
    }

    /// Swaps two component labels chosen uniformly. The collapsed target is
    /// exchangeable in the labels, so the acceptance ratio is exactly 1.
    fn label_transposition<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        if self.k < 2 {
            return;
        }
        let a = rng.random_range(0..self.k);
        let mut b = rng.random_range(0..self.k - 1);
        if b >= a {
            b += 1;
        }
        self.counts.swap(a, b);
        self.stats.swap(a, b);
        for label in self.z.iter_mut() {
            if *label == a {
                *label = b;
            } else if *label == b {
                *label = a;
            }
        }
    }

    /// One full sweep: Gibbs over every site, one add/delete attempt, one
    /// label transposition.
    pub fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for i in 0..self.data.len() {
            self.gibbs_site(i, rng);
        }
        self.k_move(rng);
        self.label_transposition(rng);
    }

    /// Exact conditional draw of `(w, v)` given the current `(k, z)`.
    pub fn draw_theta<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<MixtureParams> {
        let alphas = vec![self.alpha; self.k];
        let w = sample_dirichlet_posterior(&alphas, &self.counts, rng);
        let v = self
            .stats
            .iter()
            .map(|s| self.family.sample_param_posterior(s, rng))
            .collect();
        MixtureParams::new(w, v).map_err(Error::from)
    }

    pub fn diagnostics(&self, sweeps: usize) -> McmcDiagnostics {
        McmcDiagnostics {
            sweeps,
            k_move_proposals: self.k_move_proposals,
            k_move_accepts: self.k_move_accepts,
            truncation_rejects: self.truncation_rejects,
            distinct_k_visited: self.k_seen.iter().filter(|&&s| s).count(),
        }
    }
}

fn sample_categorical_log<R: Rng + ?Sized>(log_w: &[f64], rng: &mut R) -> usize {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let probs: Vec<f64> = log_w.iter().map(|&lw| (lw - max).exp()).collect();
    let total: f64 = probs.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (j, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    probs.len() - 1
}

/// Runs the allocation sampler and recovers `(w, v)` draws.
///
/// Burn-in defaults to a fifth of the sweep count; thinning keeps every
/// `thin`-th post-burn-in sweep. The k-posterior is estimated from the
/// retained draws with batch-means standard errors.
pub fn mcmc_run(
    data: &[f64],
    prior: &PriorSpec,
    k_max: usize,
    opts: &McmcOptions,
    seed: u64,
) -> Result<McmcOutput> {
    if k_max < 2 {
        return Err(Error::InvalidConfig(format!(
            "mcmc requires k_max >= 2, got {k_max}"
        )));
    }
    let burn_in = opts.burn_in.unwrap_or(opts.sweeps / 5);
    let thin = opts.thin.max(1);
    if opts.sweeps == 0 || burn_in >= opts.sweeps {
        return Err(Error::InvalidConfig(format!(
            "need burn_in < sweeps, got {burn_in} >= {}",
            opts.sweeps
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sampler = AllocationSampler::new_sequential(data, prior, k_max, &mut rng)?;
    let mut raw_draws = Vec::new();
    for t in 0..opts.sweeps {
        sampler.sweep(&mut rng);
        if t >= burn_in && (t - burn_in).is_multiple_of(thin) {
            raw_draws.push(sampler.draw_theta(&mut rng)?);
        }
    }

    let weight = 1.0 / raw_draws.len() as f64;
    let draws = ThetaDraws {
        draws: raw_draws
            .into_iter()
            .map(|theta| WeightedDraw { theta, weight })
            .collect(),
        provenance: Provenance::Mcmc,
        seed,
        iterations: opts.sweeps,
        truncation_mass_bound: prior.k_prior.truncation_mass_beyond(k_max),
    };
    let k_posterior = estimate_k_posterior(&draws)?;
    let diagnostics = sampler.diagnostics(opts.sweeps);
    Ok(McmcOutput {
        draws,
        k_posterior,
        diagnostics,
    })
}
