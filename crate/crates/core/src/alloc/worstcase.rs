use serde::Serialize;

use super::{nuisance_shared, positive_n, shared_p};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::scaling::{group_risks_unchecked, Allocation, GroupScalingLaw};

/// Minimax allocation with its adversarial group weights.
#[derive(Clone, Debug, Serialize)]
#[serde(bound(serialize = "T: Scalar + Serialize"))]
pub struct WorstCaseSolution<T> {
    pub alpha: Allocation<T>,
    /// Adversarial weights `v_g ∝ c_g^(1/p) l_g^((p+1)/p)`.
    pub v: Vec<T>,
    /// Common group risk at the optimum.
    pub lambda: T,
    /// `1 / (λ - τ_g n^(-q_g) - δ_g)`.
    pub l: Vec<T>,
    /// `|Σ_g (c_g l_g)^(1/p) / n - 1|` at the returned `λ`.
    pub residual: T,
    pub risk: T,
}

/// `α_g ∝ c_g^(1/p)` when `p`, `q`, `τ` and `δ` are shared.
pub fn worstcase_allocation_shared_all<T: Scalar>(
    laws: &[GroupScalingLaw<T>],
) -> Result<Allocation<T>> {
    let p = shared_p(laws, "worstcase_allocation_shared_p")?;
    if !nuisance_shared(laws) {
        return Err(Error::invalid(
            "groups differ in tau, q or delta; use worstcase_allocation_shared_p",
        ));
    }
    let logs: Vec<T> = laws.iter().map(|l| l.c.ln() / p).collect();
    if logs.iter().all(|v| *v == T::neg_infinity()) {
        return Err(Error::invalid("all c_g are zero"));
    }
    Allocation::from_log_weights(&logs)
}

/// Minimax allocation for a shared `p` with arbitrary per-group offsets.
///
/// At the optimum every group with `c_g > 0` sits at risk `λ`, so
/// `α_g n = (c_g l_g)^(1/p)` and `λ` solves `Σ_g (c_g l_g)^(1/p) = n`. The
/// left side is decreasing in the gap `s = λ - max_g a_g`, which is bisected
/// in log space.
pub fn worstcase_allocation_shared_p<T: Scalar>(
    laws: &[GroupScalingLaw<T>],
    n: T,
) -> Result<WorstCaseSolution<T>> {
    let p = shared_p(laws, "an oracle (per-group p is not supported)")?;
    positive_n(n)?;
    let a: Vec<T> = laws.iter().map(|l| l.offset(n)).collect();
    let a_max = a.iter().cloned().fold(T::neg_infinity(), T::max);
    let d: Vec<T> = a.iter().map(|&x| a_max - x).collect();
    let inv_p = T::one() / p;
    if laws.iter().all(|l| l.c == T::zero()) {
        return Err(Error::invalid("all c_g are zero"));
    }
    // log Σ_g (c_g / (s + d_g))^(1/p)
    let log_f = |s: T| -> T {
        let terms: Vec<T> = laws
            .iter()
            .zip(&d)
            .filter(|(l, _)| l.c > T::zero())
            .map(|(l, &dg)| inv_p * (l.c.ln() - (s + dg).ln()))
            .collect();
        let m = terms.iter().cloned().fold(T::neg_infinity(), T::max);
        m + terms
            .iter()
            .fold(T::zero(), |acc, &t| acc + (t - m).exp())
            .ln()
    };
    let target = n.ln();
    let sum_root = laws.iter().fold(T::zero(), |s, l| s + l.c.powf(inv_p));
    // f(hi) <= n since every term is at most (c_g / s)^(1/p).
    let hi0 = (sum_root / n).powf(p);
    // One group alone reaches n at s = c_g n^(-p) - d_g.
    let mut lo = laws
        .iter()
        .zip(&d)
        .map(|(l, &dg)| l.c * n.powf(-p) - dg)
        .fold(T::neg_infinity(), T::max);
    if !(lo > T::zero()) {
        lo = hi0;
        let mut tries = 0;
        while log_f(lo) < target {
            lo = lo * T::lit(1e-3);
            tries += 1;
            if tries > 100 || lo <= T::min_positive_value() {
                let s0 = T::min_positive_value();
                return Err(Error::NoRoot {
                    lo: (a_max + s0).as_f64(),
                    hi: (a_max + hi0).as_f64(),
                    residual: (log_f(s0) - target).as_f64(),
                });
            }
        }
    }
    let (mut llo, mut lhi) = (lo.ln(), hi0.max(lo).ln());
    let tol = T::lit(1e-12);
    let mut s = lo;
    for _ in 0..400 {
        let mid = (llo + lhi) / T::lit(2.0);
        s = mid.exp();
        let r = log_f(s) - target;
        if r.abs() <= tol || mid <= llo || mid >= lhi {
            break;
        }
        if r > T::zero() {
            llo = mid;
        } else {
            lhi = mid;
        }
    }
    let l: Vec<T> = d.iter().map(|&dg| T::one() / (s + dg)).collect();
    let lambda = a_max + s;
    let residual = (log_f(s) - target).exp() - T::one();
    let alpha_logs: Vec<T> = laws
        .iter()
        .zip(&l)
        .map(|(law, &lg)| inv_p * (law.c * lg).ln())
        .collect();
    let alpha = Allocation::from_log_weights(&alpha_logs)?;
    let v_logs: Vec<T> = laws
        .iter()
        .zip(&l)
        .map(|(law, &lg)| inv_p * law.c.ln() + (p + T::one()) * inv_p * lg.ln())
        .collect();
    let v = Allocation::from_log_weights(&v_logs)?.into();
    let risk = group_risks_unchecked(laws, alpha.as_slice(), n)
        .into_iter()
        .fold(T::neg_infinity(), T::max);
    Ok(WorstCaseSolution {
        alpha,
        v,
        lambda,
        l,
        residual: residual.abs(),
        risk,
    })
}
