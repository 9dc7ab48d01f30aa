//! The disjoint-union parameter space of finite mixtures.
//!
//! A parameter point bundles a component count `k`, a weight vector on the
//! open k-simplex, and one parameter row per component. Points with
//! different `k` live in disjoint slices; the metric [`d_theta`] is the
//! Euclidean distance on the concatenated `(w, v)` vector capped at 1 within
//! a slice, and exactly 1 across slices. Because relabeling the components
//! does not change the mixture distribution, distances to a reference point
//! are taken up to permutation ([`min_perm_distance`]) and a canonical
//! labeling is available via [`collapse`].

use std::cmp::Ordering;

use crate::assignment::{assignment_cost, min_cost_exhaustive, min_cost_hungarian};
use crate::families::Family;
use crate::{Error, Result};

/// Weight-sum slack accepted by constructors before renormalizing.
const SIMPLEX_CONSTRUCT_TOL: f64 = 1e-9;
/// Weight-sum slack required of an already-constructed point.
const SIMPLEX_VALID_TOL: f64 = 1e-12;
/// Component counts up to this size use exhaustive permutation search;
/// larger ones go through the Hungarian solver (6! = 720 is still cheaper
/// than the O(k^3) machinery, and exact by construction).
const EXHAUSTIVE_K_MAX: usize = 6;

/// First invariant violated by a candidate parameter point.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Violation {
    #[error("component count must be at least 1")]
    NoComponents,
    #[error("{weights} weights vs {rows} parameter rows")]
    ComponentCountMismatch { weights: usize, rows: usize },
    #[error("parameter rows have unequal lengths")]
    RaggedRows,
    #[error("non-finite entry in weights or parameters")]
    NonFinite,
    #[error("weight {index} is not strictly positive: {value}")]
    NonPositiveWeight { index: usize, value: f64 },
    #[error("weights sum to {sum}, too far from 1")]
    WeightSum { sum: f64 },
    #[error("parameter row {row} has dimension {got}, family expects {expected}")]
    ParamDim { row: usize, got: usize, expected: usize },
    #[error("parameter row {row} lies outside the family domain")]
    OutsideDomain { row: usize },
}

/// A point `theta = (w, v)` of the mixture parameter space.
///
/// `k` is implicit as the number of weights; `v` holds one row per
/// component. Equality is exact float equality, which is what the metric's
/// `d = 0` case requires.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureParams {
    w: Vec<f64>,
    v: Vec<Vec<f64>>,
}

impl MixtureParams {
    /// Builds a point, checking the structural invariants. Weight vectors
    /// whose sum is within `1e-9` of 1 are renormalized by their sum
    /// (stick-breaking and Dirichlet draws carry that much round-off);
    /// anything further off is rejected.
    pub fn new(w: Vec<f64>, v: Vec<Vec<f64>>) -> std::result::Result<Self, Violation> {
        check_structure(&w, &v, SIMPLEX_CONSTRUCT_TOL)?;
        let sum: f64 = w.iter().sum();
        let w = w.into_iter().map(|x| x / sum).collect();
        Ok(MixtureParams { w, v })
    }

    /// Builds a point without any checking. Intended for tests and for
    /// callers that need to feed deliberately invalid points to
    /// [`validate`].
    pub fn new_unchecked(w: Vec<f64>, v: Vec<Vec<f64>>) -> Self {
        MixtureParams { w, v }
    }

    /// Number of mixture components.
    pub fn k(&self) -> usize {
        self.w.len()
    }

    /// Dimension of each component parameter row.
    pub fn param_dim(&self) -> usize {
        self.v.first().map_or(0, Vec::len)
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn component_params(&self) -> &[Vec<f64>] {
        &self.v
    }

    pub fn component(&self, i: usize) -> (f64, &[f64]) {
        (self.w[i], &self.v[i])
    }
}

fn check_structure(w: &[f64], v: &[Vec<f64>], sum_tol: f64) -> std::result::Result<(), Violation> {
    if w.is_empty() {
        return Err(Violation::NoComponents);
    }
    if w.len() != v.len() {
        return Err(Violation::ComponentCountMismatch {
            weights: w.len(),
            rows: v.len(),
        });
    }
    let dim = v[0].len();
    if v.iter().any(|row| row.len() != dim) {
        return Err(Violation::RaggedRows);
    }
    if w.iter().any(|x| !x.is_finite()) || v.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Violation::NonFinite);
    }
    for (index, &value) in w.iter().enumerate() {
        if value <= 0.0 {
            return Err(Violation::NonPositiveWeight { index, value });
        }
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > sum_tol {
        return Err(Violation::WeightSum { sum });
    }
    Ok(())
}

/// Checks every invariant of `theta` against a family's parameter domain;
/// reports the first violation found, in the order the invariants are
/// declared (structure, then simplex, then per-row domain membership).
pub fn validate(theta: &MixtureParams, family: &Family) -> std::result::Result<(), Violation> {
    check_structure(&theta.w, &theta.v, SIMPLEX_VALID_TOL)?;
    let expected = family.param_dim();
    for (row, value) in theta.v.iter().enumerate() {
        if value.len() != expected {
            return Err(Violation::ParamDim {
                row,
                got: value.len(),
                expected,
            });
        }
        if !family.contains(value) {
            return Err(Violation::OutsideDomain { row });
        }
    }
    Ok(())
}

/// A permutation of component labels, stored 0-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    /// Checks that `sigma` is a bijection of `{0, .., len-1}`.
    pub fn new(sigma: Vec<usize>) -> Result<Self> {
        let len = sigma.len();
        let mut seen = vec![false; len];
        for &s in &sigma {
            if s >= len || seen[s] {
                return Err(Error::InvalidPermutation {
                    len,
                    detail: format!("{sigma:?}"),
                });
            }
            seen[s] = true;
        }
        Ok(Permutation(sigma))
    }

    pub fn identity(len: usize) -> Self {
        Permutation((0..len).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0usize; self.0.len()];
        for (i, &s) in self.0.iter().enumerate() {
            inv[s] = i;
        }
        Permutation(inv)
    }
}

/// Relabels components: `theta[sigma] = (w_sigma, v_sigma)` with
/// `w_sigma[i] = w[sigma[i]]`.
pub fn permute(theta: &MixtureParams, sigma: &Permutation) -> Result<MixtureParams> {
    if sigma.len() != theta.k() {
        return Err(Error::LengthMismatch(sigma.len(), theta.k()));
    }
    let w = sigma.indices().iter().map(|&i| theta.w[i]).collect();
    let v = sigma.indices().iter().map(|&i| theta.v[i].clone()).collect();
    Ok(MixtureParams { w, v })
}

fn squared_euclidean(a: &MixtureParams, b: &MixtureParams) -> f64 {
    let mut sq = 0.0;
    for i in 0..a.k() {
        let dw = a.w[i] - b.w[i];
        sq += dw * dw;
        for (x, y) in a.v[i].iter().zip(&b.v[i]) {
            let d = x - y;
            sq += d * d;
        }
    }
    sq
}

/// The capped disjoint-union metric: Euclidean distance on the concatenated
/// `(w, v)` vector capped at 1 when the component counts agree, and exactly
/// 1 otherwise. Points with unequal parameter dimensions live in different
/// spaces and are also at distance 1.
pub fn d_theta(a: &MixtureParams, b: &MixtureParams) -> f64 {
    if a.k() != b.k() || a.param_dim() != b.param_dim() {
        return 1.0;
    }
    squared_euclidean(a, b).sqrt().min(1.0)
}

fn perm_cost_matrix(theta: &MixtureParams, theta0: &MixtureParams) -> Vec<Vec<f64>> {
    let k = theta.k();
    (0..k)
        .map(|i| {
            (0..k)
                .map(|j| {
                    let dw = theta.w[i] - theta0.w[j];
                    let mut c = dw * dw;
                    for (x, y) in theta.v[i].iter().zip(&theta0.v[j]) {
                        let d = x - y;
                        c += d * d;
                    }
                    c
                })
                .collect()
        })
        .collect()
}

/// `min_sigma d_theta(theta, theta0[sigma])`, i.e. the distance from `theta`
/// to the relabeling orbit of `theta0`. The squared norm decomposes over
/// components, so the minimum is a minimum-cost assignment with
/// `cost[i][j] = (w_i - w0_j)^2 + |v_i - v0_j|^2`; small `k` is solved
/// exhaustively and larger `k` by the Hungarian method.
pub fn min_perm_distance(theta: &MixtureParams, theta0: &MixtureParams) -> f64 {
    if theta.k() != theta0.k() || theta.param_dim() != theta0.param_dim() {
        return 1.0;
    }
    if theta.k() <= EXHAUSTIVE_K_MAX {
        min_perm_distance_exhaustive(theta, theta0)
    } else {
        min_perm_distance_hungarian(theta, theta0)
    }
}

/// Exhaustive-search variant of [`min_perm_distance`]; exact for any `k`
/// but O(k!).
pub fn min_perm_distance_exhaustive(theta: &MixtureParams, theta0: &MixtureParams) -> f64 {
    if theta.k() != theta0.k() || theta.param_dim() != theta0.param_dim() {
        return 1.0;
    }
    let cost = perm_cost_matrix(theta, theta0);
    min_cost_exhaustive(&cost).sqrt().min(1.0)
}

/// Hungarian-solver variant of [`min_perm_distance`]. The winning
/// assignment's cost is recomputed in row order, so on instances without
/// cost ties this agrees bit-for-bit with the exhaustive search.
pub fn min_perm_distance_hungarian(theta: &MixtureParams, theta0: &MixtureParams) -> f64 {
    if theta.k() != theta0.k() || theta.param_dim() != theta0.param_dim() {
        return 1.0;
    }
    let cost = perm_cost_matrix(theta, theta0);
    let (assign, _) = min_cost_hungarian(&cost);
    assignment_cost(&cost, &assign).sqrt().min(1.0)
}

/// A label-invariant ball around a reference point.
#[derive(Debug, Clone)]
pub struct NeighborhoodSpec {
    pub center: MixtureParams,
    pub radius: f64,
}

impl NeighborhoodSpec {
    pub fn new(center: MixtureParams, radius: f64) -> Result<Self> {
        if !radius.is_finite() || radius <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "neighborhood radius must be a positive real, got {radius}"
            )));
        }
        Ok(NeighborhoodSpec { center, radius })
    }
}

/// Membership in the label-invariant neighborhood.
///
/// For radii below the metric cap this is
/// `min_perm_distance(theta, center) < radius`, which forces
/// `k(theta) = k(center)`. At radius >= 1 the ball saturates to the whole
/// same-k slice of the parameter space: membership is exactly
/// `k(theta) = k(center)`, so a radius-1 estimate coincides with the
/// posterior mass on the center's component count.
pub fn in_neighborhood(theta: &MixtureParams, nbhd: &NeighborhoodSpec) -> bool {
    if theta.k() != nbhd.center.k() || theta.param_dim() != nbhd.center.param_dim() {
        return false;
    }
    if nbhd.radius >= 1.0 {
        return true;
    }
    min_perm_distance(theta, &nbhd.center) < nbhd.radius
}

/// Dictionary (lexicographic) order on equal-length real vectors, using
/// exact float comparison.
pub fn lex_cmp(u: &[f64], v: &[f64]) -> Result<Ordering> {
    if u.len() != v.len() {
        return Err(Error::LengthMismatch(u.len(), v.len()));
    }
    Ok(lex_cmp_unchecked(u, v))
}

fn lex_cmp_unchecked(u: &[f64], v: &[f64]) -> Ordering {
    for (a, b) in u.iter().zip(v) {
        if a < b {
            return Ordering::Less;
        }
        if a > b {
            return Ordering::Greater;
        }
    }
    Ordering::Equal
}

/// True iff the parameter rows are strictly increasing in dictionary order,
/// i.e. `theta` already carries the canonical labeling.
pub fn is_canonical(theta: &MixtureParams) -> bool {
    theta
        .v
        .windows(2)
        .all(|pair| lex_cmp_unchecked(&pair[0], &pair[1]) == Ordering::Less)
}

/// The canonicalization map: relabels so the parameter rows come in strictly
/// increasing dictionary order when all rows are distinct, and returns the
/// point unchanged when any two rows compare equal. Idempotent, and the
/// mixture distribution is unchanged because only labels move.
pub fn collapse(theta: &MixtureParams) -> MixtureParams {
    let k = theta.k();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| lex_cmp_unchecked(&theta.v[i], &theta.v[j]));
    for pair in order.windows(2) {
        if lex_cmp_unchecked(&theta.v[pair[0]], &theta.v[pair[1]]) == Ordering::Equal {
            return theta.clone();
        }
    }
    let w = order.iter().map(|&i| theta.w[i]).collect();
    let v = order.iter().map(|&i| theta.v[i].clone()).collect();
    MixtureParams { w, v }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::Family;

    fn theta(w: &[f64], v: &[&[f64]]) -> MixtureParams {
        MixtureParams::new(w.to_vec(), v.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    fn normal_family() -> Family {
        Family::NormalKnownVar {
            sigma: 1.0,
            mu0: 0.0,
            tau0_sq: 1.0,
        }
    }

    #[test]
    fn validate_accepts_wellformed_point() {
        let t = theta(&[0.5, 0.5], &[&[0.0], &[1.0]]);
        assert!(validate(&t, &normal_family()).is_ok());
    }

    #[test]
    fn validate_reports_weight_sum() {
        let t = MixtureParams::new_unchecked(vec![0.5, 0.6], vec![vec![0.0], vec![1.0]]);
        match validate(&t, &normal_family()) {
            Err(Violation::WeightSum { sum }) => assert!((sum - 1.1).abs() < 1e-12),
            other => panic!("expected weight-sum violation, got {other:?}"),
        }
    }

    #[test]
    fn validate_reports_domain_violation() {
        let family = Family::Poisson { a0: 1.0, b0: 1.0 };
        let t = MixtureParams::new_unchecked(vec![1.0], vec![vec![-3.0]]);
        assert_eq!(
            validate(&t, &family),
            Err(Violation::OutsideDomain { row: 0 })
        );
    }

    #[test]
    fn constructor_renormalizes_small_slack() {
        let t = MixtureParams::new(vec![0.5, 0.5 + 3e-10], vec![vec![0.0], vec![1.0]]).unwrap();
        assert!((t.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        assert!(MixtureParams::new(vec![0.5, 0.6], vec![vec![0.0], vec![1.0]]).is_err());
    }

    #[test]
    fn permute_swaps_both_weights_and_rows() {
        let t = theta(&[0.3, 0.7], &[&[0.0], &[2.0]]);
        let sigma = Permutation::new(vec![1, 0]).unwrap();
        let got = permute(&t, &sigma).unwrap();
        assert_eq!(got.weights(), &[0.7, 0.3]);
        assert_eq!(got.component_params(), &[vec![2.0], vec![0.0]]);

        // sigma then its inverse is the identity.
        let back = permute(&got, &sigma.inverse()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn permute_identity_and_three_cycle() {
        let t = theta(&[0.2, 0.3, 0.5], &[&[1.0], &[2.0], &[3.0]]);
        let id = Permutation::identity(3);
        assert_eq!(permute(&t, &id).unwrap(), t);

        // 1-based (3,1,2) is 0-based (2,0,1): new rows are (c, a, b).
        let sigma = Permutation::new(vec![2, 0, 1]).unwrap();
        let got = permute(&t, &sigma).unwrap();
        assert_eq!(got.weights(), &[0.5, 0.2, 0.3]);
        assert_eq!(
            got.component_params(),
            &[vec![3.0], vec![1.0], vec![2.0]]
        );
    }

    #[test]
    fn permute_rejects_length_mismatch() {
        let t = theta(&[0.3, 0.7], &[&[0.0], &[2.0]]);
        let sigma = Permutation::new(vec![0, 2, 1]).unwrap();
        assert!(permute(&t, &sigma).is_err());
    }

    #[test]
    fn permutation_rejects_non_bijections() {
        assert!(Permutation::new(vec![0, 0]).is_err());
        assert!(Permutation::new(vec![1, 2]).is_err());
    }

    #[test]
    fn metric_cross_slice_and_zero_cases() {
        let a = theta(&[1.0], &[&[0.0]]);
        let b = theta(&[0.5, 0.5], &[&[0.0], &[1.0]]);
        assert_eq!(d_theta(&a, &b), 1.0);
        assert_eq!(d_theta(&b, &b), 0.0);
    }

    #[test]
    fn metric_caps_at_one() {
        // Raw distance sqrt(18) > 1, so the cap binds.
        let a = theta(&[0.5, 0.5], &[&[0.0], &[3.0]]);
        let b = theta(&[0.5, 0.5], &[&[3.0], &[0.0]]);
        assert_eq!(d_theta(&a, &b), 1.0);
    }

    #[test]
    fn min_perm_distance_zero_on_relabelings() {
        let t0 = theta(&[0.2, 0.3, 0.5], &[&[1.0], &[2.0], &[3.0]]);
        let sigma = Permutation::new(vec![2, 0, 1]).unwrap();
        let t = permute(&t0, &sigma).unwrap();
        assert_eq!(min_perm_distance(&t, &t0), 0.0);
    }

    #[test]
    fn min_perm_distance_hand_worked_pair() {
        // Best matching pairs components 1<->2, leaving residual
        // sqrt(0.1^2 + 0.1^2) = sqrt(0.02).
        let t0 = theta(&[0.3, 0.7], &[&[0.0], &[2.0]]);
        let t = theta(&[0.7, 0.3], &[&[2.1], &[-0.1]]);
        let d = min_perm_distance(&t, &t0);
        assert!((d - 0.02f64.sqrt()).abs() < 1e-12, "got {d}");
    }

    #[test]
    fn min_perm_distance_k_mismatch_is_one() {
        let a = theta(&[0.5, 0.5], &[&[0.0], &[1.0]]);
        let b = theta(&[0.3, 0.3, 0.4], &[&[0.0], &[1.0], &[2.0]]);
        assert_eq!(min_perm_distance(&a, &b), 1.0);
    }

    #[test]
    fn neighborhood_membership_examples() {
        let t0 = theta(&[0.3, 0.7], &[&[0.0], &[2.0]]);
        let sigma = Permutation::new(vec![1, 0]).unwrap();
        let relabeled = permute(&t0, &sigma).unwrap();
        let tiny = NeighborhoodSpec::new(t0.clone(), 1e-9).unwrap();
        assert!(in_neighborhood(&relabeled, &tiny));

        let k1 = theta(&[1.0], &[&[0.0]]);
        let half = NeighborhoodSpec::new(t0.clone(), 0.5).unwrap();
        assert!(!in_neighborhood(&k1, &half));

        // Hand-worked distance sqrt(0.02) ~ 0.1414.
        let t = theta(&[0.7, 0.3], &[&[2.1], &[-0.1]]);
        assert!(in_neighborhood(
            &t,
            &NeighborhoodSpec::new(t0.clone(), 0.2).unwrap()
        ));
        assert!(!in_neighborhood(
            &t,
            &NeighborhoodSpec::new(t0, 0.1).unwrap()
        ));
    }

    #[test]
    fn radius_one_saturates_to_the_k_slice() {
        let t0 = theta(&[0.5, 0.5], &[&[-2.0], &[2.0]]);
        let far = theta(&[0.5, 0.5], &[&[40.0], &[80.0]]);
        let nbhd = NeighborhoodSpec::new(t0, 1.0).unwrap();
        assert!(in_neighborhood(&far, &nbhd));
    }

    #[test]
    fn lex_cmp_examples() {
        assert_eq!(lex_cmp(&[1.0, 5.0], &[2.0, 0.0]).unwrap(), Ordering::Less);
        assert_eq!(lex_cmp(&[1.0, 5.0], &[1.0, 5.0]).unwrap(), Ordering::Equal);
        assert_eq!(
            lex_cmp(&[1.0, 5.0], &[1.0, 4.0]).unwrap(),
            Ordering::Greater
        );
        assert!(lex_cmp(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn collapse_sorts_rows_and_carries_weights() {
        let t = theta(&[0.2, 0.8], &[&[5.0], &[1.0]]);
        let got = collapse(&t);
        assert_eq!(got.weights(), &[0.8, 0.2]);
        assert_eq!(got.component_params(), &[vec![1.0], vec![5.0]]);
    }

    #[test]
    fn collapse_is_idempotent_and_keeps_ties_unchanged() {
        let canonical = theta(&[0.2, 0.8], &[&[1.0], &[5.0]]);
        assert_eq!(collapse(&canonical), canonical);

        let tied = theta(&[0.4, 0.6], &[&[1.0], &[1.0]]);
        assert_eq!(collapse(&tied), tied);
    }

    #[test]
    fn is_canonical_requires_strict_order() {
        assert!(is_canonical(&theta(&[0.5, 0.5], &[&[1.0], &[5.0]])));
        assert!(!is_canonical(&theta(&[0.5, 0.5], &[&[5.0], &[1.0]])));
        assert!(!is_canonical(&theta(&[0.5, 0.5], &[&[1.0], &[1.0]])));
    }

    #[test]
    fn canonical_points_admit_only_the_identity_relabeling() {
        let t = theta(&[0.1, 0.4, 0.5], &[&[-1.0], &[0.5], &[2.0]]);
        assert!(is_canonical(&t));
        let sigma = Permutation::new(vec![2, 0, 1]).unwrap();
        let shuffled = permute(&t, &sigma).unwrap();
        assert!(!is_canonical(&shuffled));
        assert_eq!(collapse(&shuffled), t);
    }
}
