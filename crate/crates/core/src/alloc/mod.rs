//! Optimal group-size allocations under weighted, worst-case and frontier
//! objectives, and a numeric oracle to check them against.

mod criteria;
mod frontier;
mod oracle;
mod weighted;
mod worstcase;

pub use criteria::{selection_threshold, sufficient_underrep};
pub use frontier::{
    frontier_allocation, two_group_frontier_alpha, FrontierKkt, FrontierSolution, TwoGroupBranch,
};
pub use oracle::{
    oracle_minimize_frontier, oracle_minimize_frontier_with, OracleConfig, OracleResult,
};
pub use weighted::{
    weighted_allocation_general_p, weighted_allocation_shared_p, WeightedRiskWeights,
};
pub use worstcase::{
    worstcase_allocation_shared_all, worstcase_allocation_shared_p, WorstCaseSolution,
};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::scaling::{check_laws, GroupScalingLaw};

fn same<T: Scalar>(a: T, b: T) -> bool {
    (a - b).abs() <= T::lit(1e-12) * a.abs().max(b.abs()).max(T::one())
}

/// The common exponent `p`, or an error naming the fallback.
pub(crate) fn shared_p<T: Scalar>(laws: &[GroupScalingLaw<T>], fallback: &str) -> Result<T> {
    check_laws(laws)?;
    let p = laws[0].p;
    if laws.iter().any(|l| !same(l.p, p)) {
        return Err(Error::invalid(format!(
            "groups have different exponents p; use {fallback}"
        )));
    }
    Ok(p)
}

pub(crate) fn dims<T>(laws: usize, v: &[T], what: &str) -> Result<()> {
    if v.len() != laws {
        return Err(Error::invalid(format!(
            "{what} has {} entries but there are {laws} groups",
            v.len()
        )));
    }
    Ok(())
}

pub(crate) fn positive_n<T: Scalar>(n: T) -> Result<()> {
    if !(n.is_finite() && n > T::zero()) {
        return Err(Error::invalid(format!("n must be positive, got {n}")));
    }
    Ok(())
}

pub(crate) fn nuisance_shared<T: Scalar>(laws: &[GroupScalingLaw<T>]) -> bool {
    let f = &laws[0];
    laws.iter()
        .all(|l| same(l.q, f.q) && same(l.tau, f.tau) && same(l.delta, f.delta))
}
