use super::{dims, nuisance_shared, positive_n, shared_p};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::scaling::{GroupDistribution, GroupScalingLaw, TradeoffWeight};

fn ratio<T: Scalar>(w: TradeoffWeight<T>) -> Result<T> {
    if w.omega_acc == T::zero() {
        return Err(Error::invalid(
            "omega_acc must be positive for the ratio omega_fair/omega_acc",
        ));
    }
    Ok(w.omega_fair / w.omega_acc)
}

/// Groups satisfying
/// `γ_g < (ω_fair/ω_acc) · c_g^(1/p) l_g^((p+1)/p) / Σ_h c_h^(1/p) l_h^((p+1)/p)`.
///
/// Every returned group is up-sampled by the frontier allocation. `n` is only
/// validated; `l` carries its effect.
pub fn sufficient_underrep<T: Scalar>(
    laws: &[GroupScalingLaw<T>],
    gamma: &GroupDistribution<T>,
    w: TradeoffWeight<T>,
    n: T,
    l: &[T],
) -> Result<Vec<usize>> {
    let p = shared_p(laws, "a shared-p model")?;
    dims(laws.len(), gamma.as_slice(), "gamma")?;
    dims(laws.len(), l, "l")?;
    positive_n(n)?;
    if l.iter().any(|x| !(x.is_finite() && *x > T::zero())) {
        return Err(Error::invalid("l_g must be finite and positive"));
    }
    let r = ratio(w)?;
    let inv_p = T::one() / p;
    let s: Vec<T> = laws
        .iter()
        .zip(l)
        .map(|(law, &lg)| law.c.powf(inv_p) * lg.powf((p + T::one()) * inv_p))
        .collect();
    let total = s.iter().fold(T::zero(), |a, &b| a + b);
    if total <= T::zero() {
        return Err(Error::invalid("all c_g are zero"));
    }
    Ok((0..laws.len())
        .filter(|&g| gamma.as_slice()[g] < r * s[g] / total)
        .collect())
}

/// Risk threshold that separates the up-sampled set `b` from the rest when
/// each group is trained on its natural share `γ_g n`.
pub fn selection_threshold<T: Scalar>(
    laws: &[GroupScalingLaw<T>],
    gamma: &GroupDistribution<T>,
    b: &[usize],
    w: TradeoffWeight<T>,
    n: T,
) -> Result<T> {
    let p = shared_p(laws, "a shared-p model")?;
    dims(laws.len(), gamma.as_slice(), "gamma")?;
    positive_n(n)?;
    if !nuisance_shared(laws) {
        return Err(Error::invalid(
            "selection threshold needs shared tau, q and delta",
        ));
    }
    if b.is_empty() {
        return Err(Error::invalid("the up-sampled set must not be empty"));
    }
    if b.iter().any(|&g| g >= laws.len()) {
        return Err(Error::invalid("group index out of range"));
    }
    let r = ratio(w)?;
    let inv_p = T::one() / p;
    let gsum = b.iter().fold(T::zero(), |s, &g| s + gamma.as_slice()[g]);
    let csum = b.iter().fold(T::zero(), |s, &g| s + laws[g].c.powf(inv_p));
    if csum <= T::zero() {
        return Err(Error::invalid(
            "threshold is undefined when every c_g in the set is zero",
        ));
    }
    let c = ((r + gsum) / csum).powf(-p);
    Ok(c * n.powf(-p) + laws[0].offset(n))
}
