//! Group-specific scaling laws of generalization error and the risks of an
//! allocation under them.
//!
//! A group's expected risk when it contributes `n_g` of `n` training examples is
//! `c * n_g^(-p) + tau * n^(-q) + delta`. Sample counts are real-valued here;
//! rounding to integers only happens when a dataset is actually built.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn default_min_group_size() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupScalingLaw<T> {
    /// Multiplicative difficulty of the group.
    pub c: T,
    /// Group-size exponent.
    pub p: T,
    /// Aggregate-size coefficient.
    pub tau: T,
    /// Aggregate-size exponent.
    pub q: T,
    /// Irreducible risk.
    pub delta: T,
    /// Smallest group size for which the law is trusted.
    #[serde(default = "default_min_group_size")]
    pub min_group_size: u64,
}

/// A group risk together with a flag raised when `n_g` fell below the law's
/// `min_group_size`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupRisk<T> {
    pub value: T,
    pub below_min_group_size: bool,
}

impl<T: Scalar> GroupScalingLaw<T> {
    pub fn new(c: T, p: T, tau: T, q: T, delta: T) -> Result<Self> {
        let law = Self {
            c,
            p,
            tau,
            q,
            delta,
            min_group_size: 1,
        };
        law.validate()?;
        Ok(law)
    }

    /// Law with only the group term, `c * n_g^(-p)`.
    pub fn power(c: T, p: T) -> Result<Self> {
        Self::new(c, p, T::zero(), T::one(), T::zero())
    }

    pub fn with_min_group_size(mut self, m: u64) -> Self {
        self.min_group_size = m;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.c, self.p, self.tau, self.q, self.delta];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("scaling-law coefficients must be finite"));
        }
        if self.p <= T::zero() || self.q <= T::zero() {
            return Err(Error::invalid(format!(
                "exponents must be positive (p = {}, q = {})",
                self.p, self.q
            )));
        }
        if self.c < T::zero() || self.tau < T::zero() || self.delta < T::zero() {
            return Err(Error::invalid("c, tau and delta must be non-negative"));
        }
        if self.min_group_size == 0 {
            return Err(Error::invalid("min_group_size must be at least 1"));
        }
        Ok(())
    }

    /// `tau * n^(-q) + delta`, the part of the risk that does not depend on the
    /// group's own share.
    pub fn offset(&self, n: T) -> T {
        self.tau * n.powf(-self.q) + self.delta
    }

    /// Risk without argument checks; used inside solvers.
    pub fn risk_unchecked(&self, n_g: T, n: T) -> T {
        self.c * n_g.powf(-self.p) + self.offset(n)
    }

    pub fn risk(&self, n_g: T, n: T) -> Result<GroupRisk<T>> {
        if !n_g.is_finite() || !n.is_finite() {
            return Err(Error::invalid("sample sizes must be finite"));
        }
        if n_g <= T::zero() || n <= T::zero() {
            return Err(Error::invalid("sample sizes must be positive"));
        }
        if n_g > n * (T::one() + T::simplex_tol(1)) {
            return Err(Error::invalid(format!(
                "group size {n_g} exceeds total size {n}"
            )));
        }
        let below = n_g < T::lit(self.min_group_size as f64);
        Ok(GroupRisk {
            value: self.risk_unchecked(n_g, n),
            below_min_group_size: below,
        })
    }
}

/// Risk of a single group with `n_g` of `n` examples.
pub fn group_risk<T: Scalar>(law: &GroupScalingLaw<T>, n_g: T, n: T) -> Result<GroupRisk<T>> {
    law.validate()?;
    law.risk(n_g, n)
}

fn check_simplex<T: Scalar>(what: &str, v: &[T]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::invalid(format!(
            "{what} must have at least one group"
        )));
    }
    if v.iter().any(|x| !x.is_finite() || *x <= T::zero()) {
        return Err(Error::invalid(format!(
            "{what} entries must be finite and strictly positive"
        )));
    }
    let sum = v.iter().fold(T::zero(), |a, &b| a + b);
    if (sum - T::one()).abs() > T::simplex_tol(v.len()) {
        return Err(Error::invalid(format!(
            "{what} must sum to 1 (sum = {sum})"
        )));
    }
    Ok(())
}

/// Population prevalence of each group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<T>", into = "Vec<T>")]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct GroupDistribution<T>(Vec<T>);

impl<T: Scalar> GroupDistribution<T> {
    pub fn new(gamma: Vec<T>) -> Result<Self> {
        check_simplex("group distribution", &gamma)?;
        Ok(Self(gamma))
    }

    pub fn uniform(groups: usize) -> Result<Self> {
        Self::new(vec![T::one() / T::lit(groups as f64); groups])
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<T: Scalar> TryFrom<Vec<T>> for GroupDistribution<T> {
    type Error = Error;
    fn try_from(v: Vec<T>) -> Result<Self> {
        Self::new(v)
    }
}

impl<T> From<GroupDistribution<T>> for Vec<T> {
    fn from(d: GroupDistribution<T>) -> Self {
        d.0
    }
}

/// Fraction of the training set drawn from each group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<T>", into = "Vec<T>")]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct Allocation<T>(Vec<T>);

/// Mass given to groups a formula assigns zero, before renormalizing.
pub const ALLOCATION_FLOOR: f64 = 1e-12;

impl<T: Scalar> Allocation<T> {
    pub fn new(alpha: Vec<T>) -> Result<Self> {
        check_simplex("allocation", &alpha)?;
        Ok(Self(alpha))
    }

    pub fn uniform(groups: usize) -> Result<Self> {
        Self::new(vec![T::one() / T::lit(groups as f64); groups])
    }

    /// Normalizes non-negative weights onto the simplex, flooring zero (or
    /// underflowed) entries at [`ALLOCATION_FLOOR`] first.
    pub fn from_weights(weights: &[T]) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < T::zero()) {
            return Err(Error::invalid(
                "allocation weights must be finite and non-negative",
            ));
        }
        let total = weights.iter().fold(T::zero(), |a, &b| a + b);
        if total <= T::zero() {
            return Err(Error::invalid("allocation weights are all zero"));
        }
        let floor = T::lit(ALLOCATION_FLOOR);
        let mut alpha: Vec<T> = weights.iter().map(|&w| (w / total).max(floor)).collect();
        let s = alpha.iter().fold(T::zero(), |a, &b| a + b);
        alpha.iter_mut().for_each(|a| *a = *a / s);
        Self::new(alpha)
    }

    /// Normalizes `exp(log_weights)` without overflow.
    pub fn from_log_weights(log_weights: &[T]) -> Result<Self> {
        if log_weights
            .iter()
            .any(|w| w.is_nan() || *w == T::infinity())
        {
            return Err(Error::invalid("log-weights must not be NaN or +inf"));
        }
        let max = log_weights.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        if max == T::neg_infinity() {
            return Err(Error::invalid("allocation weights are all zero"));
        }
        let w: Vec<T> = log_weights.iter().map(|&l| (l - max).exp()).collect();
        Self::from_weights(&w)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Sup-norm distance to another allocation.
    pub fn sup_distance(&self, other: &Self) -> T {
        self.0
            .iter()
            .zip(&other.0)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }
}

impl<T: Scalar> TryFrom<Vec<T>> for Allocation<T> {
    type Error = Error;
    fn try_from(v: Vec<T>) -> Result<Self> {
        Self::new(v)
    }
}

impl<T> From<Allocation<T>> for Vec<T> {
    fn from(a: Allocation<T>) -> Self {
        a.0
    }
}

/// Weights of the population risk and of the worst-group risk in the frontier
/// objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeoffWeight<T> {
    pub omega_acc: T,
    pub omega_fair: T,
}

impl<T: Scalar> TradeoffWeight<T> {
    pub fn new(omega_acc: T, omega_fair: T) -> Result<Self> {
        if !omega_acc.is_finite() || !omega_fair.is_finite() {
            return Err(Error::invalid("trade-off weights must be finite"));
        }
        if omega_acc < T::zero() || omega_fair < T::zero() {
            return Err(Error::invalid("trade-off weights must be non-negative"));
        }
        if omega_acc == T::zero() && omega_fair == T::zero() {
            return Err(Error::invalid("trade-off weights cannot both be zero"));
        }
        Ok(Self {
            omega_acc,
            omega_fair,
        })
    }

    /// Single-parameter form `(omega, 1 - omega)`.
    pub fn from_omega(omega: T) -> Result<Self> {
        if !(omega >= T::zero() && omega <= T::one()) {
            return Err(Error::invalid(format!(
                "omega must lie in [0, 1], got {omega}"
            )));
        }
        Self::new(omega, T::one() - omega)
    }

    /// `omega_acc / (omega_acc + omega_fair)`.
    pub fn normalized_omega(&self) -> T {
        self.omega_acc / (self.omega_acc + self.omega_fair)
    }
}

pub(crate) fn check_laws<T: Scalar>(laws: &[GroupScalingLaw<T>]) -> Result<()> {
    if laws.is_empty() {
        return Err(Error::invalid("at least one scaling law is required"));
    }
    laws.iter().try_for_each(|l| l.validate())
}

fn check_dims(laws: usize, other: usize, what: &str) -> Result<()> {
    if laws != other {
        return Err(Error::invalid(format!(
            "dimension mismatch: {laws} scaling laws but {other} {what} entries"
        )));
    }
    Ok(())
}

fn check_n<T: Scalar>(n: T) -> Result<()> {
    if !n.is_finite() || n <= T::zero() {
        return Err(Error::invalid(format!(
            "total size n must be positive, got {n}"
        )));
    }
    Ok(())
}

/// Risk of every group at allocation `alpha` (no validation).
pub(crate) fn group_risks_unchecked<T: Scalar>(
    laws: &[GroupScalingLaw<T>],
    alpha: &[T],
    n: T,
) -> Vec<T> {
    laws.iter()
        .zip(alpha)
        .map(|(law, &a)| law.risk_unchecked(a * n, n))
        .collect()
}

pub(crate) fn frontier_risk_unchecked<T: Scalar>(
    laws: &[GroupScalingLaw<T>],
    gamma: &[T],
    alpha: &[T],
    n: T,
    w: TradeoffWeight<T>,
) -> T {
    let risks = group_risks_unchecked(laws, alpha, n);
    let pop = risks
        .iter()
        .zip(gamma)
        .fold(T::zero(), |s, (&r, &g)| s + g * r);
    let worst = risks.iter().fold(T::neg_infinity(), |m, &r| m.max(r));
    w.omega_acc * pop + w.omega_fair * worst
}

/// `Σ_g γ_g · risk_g(α_g n, n)`.
pub fn population_risk<T: Scalar>(
    laws: &[GroupScalingLaw<T>],
    gamma: &GroupDistribution<T>,
    alpha: &Allocation<T>,
    n: T,
) -> Result<T> {
    check_laws(laws)?;
    check_dims(laws.len(), gamma.len(), "gamma")?;
    check_dims(laws.len(), alpha.len(), "alpha")?;
    check_n(n)?;
    Ok(group_risks_unchecked(laws, alpha.as_slice(), n)
        .iter()
        .zip(gamma.as_slice())
        .fold(T::zero(), |s, (&r, &g)| s + g * r))
}

/// `max_g risk_g(α_g n, n)`.
pub fn worst_case_risk<T: Scalar>(
    laws: &[GroupScalingLaw<T>],
    alpha: &Allocation<T>,
    n: T,
) -> Result<T> {
    check_laws(laws)?;
    check_dims(laws.len(), alpha.len(), "alpha")?;
    check_n(n)?;
    Ok(group_risks_unchecked(laws, alpha.as_slice(), n)
        .into_iter()
        .fold(T::neg_infinity(), |m, r| m.max(r)))
}

/// `ω_acc · population_risk + ω_fair · worst_case_risk`.
pub fn frontier_risk<T: Scalar>(
    laws: &[GroupScalingLaw<T>],
    gamma: &GroupDistribution<T>,
    alpha: &Allocation<T>,
    n: T,
    w: TradeoffWeight<T>,
) -> Result<T> {
    let pop = population_risk(laws, gamma, alpha, n)?;
    let worst = worst_case_risk(laws, alpha, n)?;
    Ok(w.omega_acc * pop + w.omega_fair * worst)
}

/// A scaling-law set as read from JSON: `{"laws": [...], "gamma": [...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LawSet {
    pub laws: Vec<GroupScalingLaw<f64>>,
    #[serde(default)]
    pub gamma: Option<Vec<f64>>,
    /// Optional weights for the weighted-risk objective.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    /// Optional total training-set size.
    #[serde(default)]
    pub n: Option<f64>,
}

impl LawSet {
    pub fn validate(&self) -> Result<()> {
        check_laws(&self.laws)?;
        if let Some(g) = &self.gamma {
            check_dims(self.laws.len(), g.len(), "gamma")?;
            GroupDistribution::new(g.clone())?;
        }
        if let Some(w) = &self.weights {
            check_dims(self.laws.len(), w.len(), "weights")?;
        }
        Ok(())
    }

    pub fn gamma(&self) -> Result<GroupDistribution<f64>> {
        match &self.gamma {
            Some(g) => GroupDistribution::new(g.clone()),
            None => Err(Error::invalid("scaling-law set has no gamma array")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn law(c: f64, p: f64, tau: f64, q: f64, delta: f64) -> GroupScalingLaw<f64> {
        GroupScalingLaw::new(c, p, tau, q, delta).unwrap()
    }

    #[test]
    fn group_risk_examples() {
        let r = group_risk(&law(1.0, 1.0, 0.0, 1.0, 0.0), 10.0, 100.0).unwrap();
        assert_relative_eq!(r.value, 0.1, epsilon = 1e-15);
        let r = group_risk(&law(0.0, 1.0, 2.0, 1.0, 0.5), 5.0, 10.0).unwrap();
        assert_relative_eq!(r.value, 0.7, epsilon = 1e-15);
        // 3 * 4^-0.5 + 1/16 + 0.1
        let r = group_risk(&law(3.0, 0.5, 1.0, 1.0, 0.1), 4.0, 16.0).unwrap();
        assert_relative_eq!(r.value, 1.6625, epsilon = 1e-14);
    }

    #[test]
    fn below_min_group_size_warns_but_evaluates() {
        let l = law(1.0, 1.0, 0.0, 1.0, 0.0).with_min_group_size(20);
        let r = group_risk(&l, 10.0, 100.0).unwrap();
        assert!(r.below_min_group_size);
        assert_relative_eq!(r.value, 0.1);
        assert!(!group_risk(&l, 20.0, 100.0).unwrap().below_min_group_size);
    }

    #[test]
    fn non_finite_inputs_rejected() {
        let l = law(1.0, 1.0, 0.0, 1.0, 0.0);
        assert!(group_risk(&l, f64::NAN, 10.0).is_err());
        assert!(group_risk(&l, 1.0, f64::INFINITY).is_err());
        assert!(GroupScalingLaw::new(f64::NAN, 1.0, 0.0, 1.0, 0.0).is_err());
        assert!(GroupScalingLaw::new(1.0, 0.0, 0.0, 1.0, 0.0).is_err());
        assert!(GroupScalingLaw::new(-1.0, 1.0, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn population_risk_symmetry_and_boundary() {
        let l = law(2.0, 0.7, 0.3, 0.5, 0.05);
        let laws = vec![l.clone(), l.clone()];
        let g = GroupDistribution::new(vec![0.5, 0.5]).unwrap();
        let a = Allocation::new(vec![0.5, 0.5]).unwrap();
        let pop = population_risk(&laws, &g, &a, 200.0).unwrap();
        assert_relative_eq!(pop, l.risk_unchecked(100.0, 200.0), epsilon = 1e-14);
        assert!(GroupDistribution::new(vec![1.0, 0.0]).is_err());
        let a3 = Allocation::uniform(3).unwrap();
        assert!(population_risk(&laws, &g, &a3, 200.0).is_err());
    }

    #[test]
    fn three_group_risks_match_hand_summation() {
        let laws = vec![
            law(1.3, 0.6, 0.2, 0.4, 0.01),
            law(0.4, 0.6, 0.7, 0.9, 0.03),
            law(2.2, 0.6, 0.1, 0.3, 0.0),
        ];
        let g = GroupDistribution::new(vec![0.6, 0.3, 0.1]).unwrap();
        let a = Allocation::new(vec![0.2, 0.5, 0.3]).unwrap();
        let n = 500.0_f64;
        let r: Vec<f64> = laws
            .iter()
            .zip([0.2, 0.5, 0.3])
            .map(|(l, al)| l.c * (al * n).powf(-l.p) + l.tau * n.powf(-l.q) + l.delta)
            .collect();
        let pop = 0.6 * r[0] + 0.3 * r[1] + 0.1 * r[2];
        let worst = r.iter().cloned().fold(f64::MIN, f64::max);
        assert_relative_eq!(
            population_risk(&laws, &g, &a, n).unwrap(),
            pop,
            epsilon = 1e-14
        );
        assert_relative_eq!(
            worst_case_risk(&laws, &a, n).unwrap(),
            worst,
            epsilon = 1e-14
        );
        let w = TradeoffWeight::from_omega(0.5).unwrap();
        assert_relative_eq!(
            frontier_risk(&laws, &g, &a, n, w).unwrap(),
            0.5 * pop + 0.5 * worst,
            epsilon = 1e-14
        );
    }

    #[test]
    fn worst_case_picks_harder_group() {
        let laws = vec![law(1.0, 1.0, 0.1, 1.0, 0.1), law(2.0, 1.0, 0.1, 1.0, 0.1)];
        let a = Allocation::uniform(2).unwrap();
        let w = worst_case_risk(&laws, &a, 100.0).unwrap();
        assert_relative_eq!(w, laws[1].risk_unchecked(50.0, 100.0));
    }

    #[test]
    fn frontier_endpoints() {
        let laws = vec![law(1.0, 0.8, 0.1, 1.0, 0.1), law(3.0, 0.8, 0.1, 1.0, 0.1)];
        let g = GroupDistribution::new(vec![0.8, 0.2]).unwrap();
        let a = Allocation::new(vec![0.6, 0.4]).unwrap();
        let one = TradeoffWeight::from_omega(1.0).unwrap();
        let zero = TradeoffWeight::from_omega(0.0).unwrap();
        assert_eq!(
            frontier_risk(&laws, &g, &a, 50.0, one).unwrap(),
            population_risk(&laws, &g, &a, 50.0).unwrap()
        );
        assert_eq!(
            frontier_risk(&laws, &g, &a, 50.0, zero).unwrap(),
            worst_case_risk(&laws, &a, 50.0).unwrap()
        );
    }

    #[test]
    fn tradeoff_validation() {
        assert!(TradeoffWeight::new(0.0, 0.0).is_err());
        assert!(TradeoffWeight::from_omega(1.5).is_err());
        let w = TradeoffWeight::new(2.0, 6.0).unwrap();
        assert_relative_eq!(w.normalized_omega(), 0.25);
    }

    #[test]
    fn generic_over_f32() {
        let l = GroupScalingLaw::<f32>::new(1.0, 1.0, 0.0, 1.0, 0.0).unwrap();
        let r = group_risk(&l, 10.0, 100.0).unwrap();
        assert!((r.value - 0.1).abs() < 1e-7);
        let a = Allocation::<f32>::new(vec![0.25, 0.25, 0.5]).unwrap();
        assert_eq!(a.len(), 3);
    }

    #[test]
    fn law_set_json_roundtrip() {
        let js = r#"{"laws":[{"c":1,"p":1,"tau":0,"q":1,"delta":0},
                    {"c":4,"p":1,"tau":0,"q":1,"delta":0,"min_group_size":5}],
                    "gamma":[0.5,0.5]}"#;
        let set: LawSet = serde_json::from_str(js).unwrap();
        set.validate().unwrap();
        assert_eq!(set.laws[0].min_group_size, 1);
        assert_eq!(set.laws[1].min_group_size, 5);
        let back: LawSet = serde_json::from_str(&serde_json::to_string(&set).unwrap()).unwrap();
        assert_eq!(back, set);
        let bad = r#"[0.7, 0.2]"#;
        assert!(serde_json::from_str::<GroupDistribution<f64>>(bad).is_err());
    }

    fn arb_alloc(k: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.05f64..1.0, k).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn risk_monotone_in_sizes(c in 0.01f64..5.0, p in 0.1f64..2.0, tau in 0.0f64..2.0,
                                  q in 0.1f64..2.0, d in 0.0f64..1.0,
                                  ng in 1.0f64..100.0, extra in 0.0f64..100.0) {
            let l = law(c, p, tau, q, d);
            let n = 200.0;
            prop_assert!(l.risk_unchecked(ng + extra, n) <= l.risk_unchecked(ng, n));
            prop_assert!(l.risk_unchecked(ng, n + extra) <= l.risk_unchecked(ng, n));
            if extra > 1e-9 {
                prop_assert!(l.risk_unchecked(ng + extra, n) < l.risk_unchecked(ng, n));
            }
        }

        #[test]
        fn frontier_risk_is_midpoint_convex(a in arb_alloc(3), b in arb_alloc(3), om in 0.0f64..1.0) {
            let laws = vec![law(1.0, 0.5, 0.2, 1.0, 0.1), law(3.0, 0.5, 0.2, 1.0, 0.1),
                            law(0.5, 0.5, 0.2, 1.0, 0.1)];
            let g = [0.7, 0.2, 0.1];
            let w = TradeoffWeight::from_omega(om).unwrap();
            let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
            let f = |x: &[f64]| frontier_risk_unchecked(&laws, &g, x, 100.0, w);
            prop_assert!(f(&mid) <= 0.5 * (f(&a) + f(&b)) + 1e-12);
        }

        #[test]
        fn scaling_c_scales_group_terms(a in arb_alloc(3), k in 0.1f64..10.0) {
            let base = vec![law(1.0, 0.7, 0.0, 1.0, 0.0), law(2.0, 0.7, 0.0, 1.0, 0.0),
                            law(0.3, 0.7, 0.0, 1.0, 0.0)];
            let scaled: Vec<_> = base.iter().map(|l| law(l.c * k, l.p, 0.0, 1.0, 0.0)).collect();
            let g = GroupDistribution::new(vec![0.5, 0.3, 0.2]).unwrap();
            let al = Allocation::new(a).unwrap();
            let p0 = population_risk(&base, &g, &al, 80.0).unwrap();
            let p1 = population_risk(&scaled, &g, &al, 80.0).unwrap();
            prop_assert!((p1 - k * p0).abs() <= 1e-12 * p1.abs().max(1.0));
            let w0 = worst_case_risk(&base, &al, 80.0).unwrap();
            let w1 = worst_case_risk(&scaled, &al, 80.0).unwrap();
            prop_assert!((w1 - k * w0).abs() <= 1e-12 * w1.abs().max(1.0));
        }
    }
}
