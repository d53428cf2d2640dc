use serde::{Deserialize, Serialize};

use super::{dims, positive_n, shared_p};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::scaling::{check_laws, Allocation, GroupScalingLaw};

/// Non-negative per-group weights of the weighted risk `Σ w_g risk_g`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<T>", into = "Vec<T>")]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct WeightedRiskWeights<T>(Vec<T>);

impl<T: Scalar> WeightedRiskWeights<T> {
    pub fn new(w: Vec<T>) -> Result<Self> {
        if w.iter().any(|x| !x.is_finite() || *x < T::zero()) {
            return Err(Error::invalid("weights must be finite and non-negative"));
        }
        if !w.iter().any(|x| *x > T::zero()) {
            return Err(Error::invalid("at least one weight must be positive"));
        }
        Ok(Self(w))
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }
}

impl<T: Scalar> TryFrom<Vec<T>> for WeightedRiskWeights<T> {
    type Error = Error;
    fn try_from(v: Vec<T>) -> Result<Self> {
        Self::new(v)
    }
}

impl<T> From<WeightedRiskWeights<T>> for Vec<T> {
    fn from(w: WeightedRiskWeights<T>) -> Self {
        w.0
    }
}

/// `α_g ∝ (w_g c_g)^(1/(p+1))` for a shared exponent.
pub fn weighted_allocation_shared_p<T: Scalar>(
    laws: &[GroupScalingLaw<T>],
    w: &WeightedRiskWeights<T>,
) -> Result<Allocation<T>> {
    let p = shared_p(laws, "weighted_allocation_general_p")?;
    dims(laws.len(), w.as_slice(), "weights")?;
    let e = T::one() / (p + T::one());
    let logs: Vec<T> = laws
        .iter()
        .zip(w.as_slice())
        .map(|(l, &wg)| e * (wg * l.c).ln())
        .collect();
    if logs.iter().all(|v| *v == T::neg_infinity()) {
        return Err(Error::invalid("all products w_g c_g are zero"));
    }
    Allocation::from_log_weights(&logs)
}

/// Exact minimizer of `Σ w_g c_g (α_g n)^(-p_g)` for per-group exponents.
///
/// Stationarity gives `α_g = (w_g c_g p_g n^(-p_g) / μ)^(1/(p_g+1))`; the
/// multiplier `μ` is found by bisection so that the shares sum to one. With a
/// shared `p` this is the same as normalizing `(w_g c_g)^(1/(p+1))`.
pub fn weighted_allocation_general_p<T: Scalar>(
    laws: &[GroupScalingLaw<T>],
    w: &WeightedRiskWeights<T>,
    n: T,
) -> Result<Allocation<T>> {
    check_laws(laws)?;
    dims(laws.len(), w.as_slice(), "weights")?;
    positive_n(n)?;
    // log A_g with A_g = w c p n^(-p)
    let log_a: Vec<T> = laws
        .iter()
        .zip(w.as_slice())
        .map(|(l, &wg)| (wg * l.c * l.p).ln() - l.p * n.ln())
        .collect();
    let live: Vec<usize> = (0..laws.len())
        .filter(|&g| log_a[g] > T::neg_infinity())
        .collect();
    if live.is_empty() {
        return Err(Error::invalid("all products w_g c_g are zero"));
    }
    let share = |m: T| -> T {
        live.iter().fold(T::zero(), |s, &g| {
            s + ((log_a[g] - m) / (laws[g].p + T::one())).exp()
        })
    };
    let k = T::lit(live.len() as f64);
    // At m_lo the largest share alone is one; at m_hi every share is at most 1/k.
    let mut lo = live
        .iter()
        .map(|&g| log_a[g])
        .fold(T::neg_infinity(), T::max);
    let mut hi = live
        .iter()
        .map(|&g| log_a[g] + (laws[g].p + T::one()) * k.ln())
        .fold(T::neg_infinity(), T::max);
    for _ in 0..300 {
        let mid = (lo + hi) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        if share(mid) > T::one() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let m = (lo + hi) / T::lit(2.0);
    let logs: Vec<T> = (0..laws.len())
        .map(|g| (log_a[g] - m) / (laws[g].p + T::one()))
        .collect();
    Allocation::from_log_weights(&logs)
}
