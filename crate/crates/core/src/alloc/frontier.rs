use serde::Serialize;

use super::{dims, positive_n, shared_p};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::scaling::{
    frontier_risk_unchecked, Allocation, GroupDistribution, GroupScalingLaw, TradeoffWeight,
};

/// Residuals of the optimality conditions at a frontier solution.
#[derive(Clone, Debug, Serialize)]
pub struct FrontierKkt<T> {
    /// `|Σ_g θ_g γ_g - 1|`
    pub sum_theta_gamma: T,
    /// `max_g (ω - θ_g)`, at most zero when feasible.
    pub theta_below_omega: T,
    /// Largest relative gap between `c_g (α_g n)^(-p)` on the up-sampled set
    /// and its maximum over all groups.
    pub argmax_gap: T,
}

#[derive(Clone, Debug, Serialize)]
#[serde(bound(serialize = "T: Scalar + Serialize"))]
pub struct FrontierSolution<T> {
    pub alpha: Allocation<T>,
    pub theta: Vec<T>,
    /// Up-sampled groups, in ascending key order.
    pub underrep_set: Vec<usize>,
    pub risk: T,
    /// `γ_g c_g^(-1/p)`
    pub sort_key: Vec<T>,
    pub kkt: FrontierKkt<T>,
}

/// Frontier-optimal allocation for `ω · population + (1 - ω) · worst-group`.
///
/// Groups are visited in ascending `γ_g c_g^(-1/p)`. Every up-sampled group
/// shares a level `u` with `θ_g = u / key_g`; the level is raised over a
/// growing prefix until `Σ θ_g γ_g = 1` or the next key is reached, and tied
/// keys join the prefix together. Offsets `τ n^(-q) + δ` do not enter.
pub fn frontier_allocation<T: Scalar>(
    laws: &[GroupScalingLaw<T>],
    gamma: &GroupDistribution<T>,
    n: T,
    omega: T,
) -> Result<FrontierSolution<T>> {
    let p = shared_p(laws, "oracle_minimize_frontier")?;
    dims(laws.len(), gamma.as_slice(), "gamma")?;
    positive_n(n)?;
    let w = TradeoffWeight::from_omega(omega)?;
    let gam = gamma.as_slice();
    let k = laws.len();
    let inv_p = T::one() / p;
    let root: Vec<T> = laws.iter().map(|l| l.c.powf(inv_p)).collect();
    let key: Vec<T> = (0..k)
        .map(|g| {
            if root[g] > T::zero() {
                gam[g] / root[g]
            } else {
                T::infinity()
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        key[a]
            .partial_cmp(&key[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    if key[order[0]] == T::infinity() {
        return Err(Error::invalid("all c_g are zero"));
    }

    let mut prefix = 0;
    let mut root_sum = T::zero();
    let mut rest_gamma = T::one();
    let level = loop {
        // Admit the next block of tied keys.
        let start = prefix;
        while prefix < k && (prefix == start || key[order[prefix]] == key[order[start]]) {
            root_sum = root_sum + root[order[prefix]];
            rest_gamma = rest_gamma - gam[order[prefix]];
            prefix += 1;
        }
        let u = (T::one() - omega * rest_gamma.max(T::zero())) / root_sum;
        let next = order.get(prefix).map(|&g| key[g]).filter(|x| x.is_finite());
        match next {
            Some(kn) if u > omega * kn => continue,
            _ => break u,
        }
    };

    let thresh = omega * (T::one() + T::lit(1e-12));
    let mut theta = vec![omega; k];
    let mut underrep_set = Vec::new();
    for &g in &order[..prefix] {
        let t = level / key[g];
        if t > thresh {
            theta[g] = t;
            underrep_set.push(g);
        }
    }

    let e = T::one() / (p + T::one());
    let logs: Vec<T> = (0..k)
        .map(|g| e * (gam[g] * laws[g].c * theta[g]).ln())
        .collect();
    let alpha = Allocation::from_log_weights(&logs)?;
    let risk = frontier_risk_unchecked(laws, gam, alpha.as_slice(), n, w);

    let stg = theta
        .iter()
        .zip(gam)
        .fold(T::zero(), |s, (&t, &g)| s + t * g);
    let below = theta
        .iter()
        .fold(T::neg_infinity(), |m, &t| m.max(omega - t));
    let lead: Vec<T> = laws
        .iter()
        .zip(alpha.as_slice())
        .map(|(l, &a)| l.c * (a * n).powf(-p))
        .collect();
    let top = lead.iter().cloned().fold(T::neg_infinity(), T::max);
    let argmax_gap = underrep_set
        .iter()
        .fold(T::zero(), |m, &g| m.max((top - lead[g]).abs() / top));
    Ok(FrontierSolution {
        alpha,
        theta,
        underrep_set,
        risk,
        sort_key: key,
        kkt: FrontierKkt {
            sum_theta_gamma: (stg - T::one()).abs(),
            theta_below_omega: below,
            argmax_gap,
        },
    })
}

/// Which regime the two-group closed form is in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TwoGroupBranch {
    /// Only the harder group is up-sampled.
    HarderOnly,
    /// Both groups are up-sampled and their leading risks are equal.
    Equalized,
}

/// Closed form for γ = (½, ½) and `c_2 = t c_1`; returns α₁.
///
/// With `s = t^(1/p)` and `t >= 1`: if `ω > 2/(1+s)` only group 2 is
/// up-sampled and `α₁ = 1/(1 + (t(2-ω)/ω)^(1/(p+1)))`; otherwise both are and
/// `α₁ = 1/(1+s)`. The two expressions agree at the boundary. `t < 1` is
/// handled by swapping the groups.
pub fn two_group_frontier_alpha<T: Scalar>(t: T, p: T, omega: T) -> Result<(T, TwoGroupBranch)> {
    if !(t.is_finite() && t > T::zero() && p.is_finite() && p > T::zero()) {
        return Err(Error::invalid("t and p must be positive"));
    }
    if !(omega >= T::zero() && omega <= T::one()) {
        return Err(Error::invalid("omega must lie in [0, 1]"));
    }
    if t < T::one() {
        let (a, b) = two_group_frontier_alpha(T::one() / t, p, omega)?;
        return Ok((T::one() - a, b));
    }
    let s = t.powf(T::one() / p);
    let two = T::lit(2.0);
    if omega > two / (T::one() + s) {
        let r = (t * (two - omega) / omega).powf(T::one() / (p + T::one()));
        Ok((T::one() / (T::one() + r), TwoGroupBranch::HarderOnly))
    } else {
        Ok((T::one() / (T::one() + s), TwoGroupBranch::Equalized))
    }
}
