use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Acquisition signals. Scores from [`acquisition_scores`] are oriented so
/// that larger means acquire first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signal {
    Random,
    Margin,
    Diversity,
    Variance,
    PredictedUnderrep,
    /// True minority indicator; an upper bound for the learned signals.
    Oracle,
}

/// Per-member outputs, each `[member][example]`.
#[derive(Clone, Debug, Default)]
pub struct EnsembleOutputs {
    pub p_y: Vec<Vec<f64>>,
    pub p_b: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

fn check(rows: &[Vec<f64>], what: &str) -> Result<usize> {
    let n = rows
        .first()
        .ok_or_else(|| Error::invalid(format!("{what}: ensemble is empty")))?
        .len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::invalid(format!(
            "{what}: members disagree on example count"
        )));
    }
    Ok(n)
}

fn mean_over_members(rows: &[Vec<f64>], i: usize) -> f64 {
    rows.iter().map(|r| r[i]).sum::<f64>() / rows.len() as f64
}

/// `2 |mean_k p_k(y|x) - 0.5|`; small means uncertain.
pub fn margin(p_y: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = check(p_y, "margin")?;
    Ok((0..n)
        .map(|i| 2.0 * (mean_over_members(p_y, i) - 0.5).abs())
        .collect())
}

/// `mean_k p_k(b|x)`
pub fn predicted_underrep(p_b: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = check(p_b, "predicted underrepresentation")?;
    Ok((0..n).map(|i| mean_over_members(p_b, i)).collect())
}

/// Population variance over members of `p_k(y|x)`.
pub fn diversity(p_y: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = check(p_y, "diversity")?;
    if p_y.len() < 2 {
        return Err(Error::invalid(
            "diversity needs at least two ensemble members",
        ));
    }
    Ok((0..n)
        .map(|i| {
            let m = mean_over_members(p_y, i);
            p_y.iter().map(|r| (r[i] - m).powi(2)).sum::<f64>() / p_y.len() as f64
        })
        .collect())
}

/// `mean_k v_k(x)`
pub fn variance_signal(v: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = check(v, "variance")?;
    Ok((0..n).map(|i| mean_over_members(v, i)).collect())
}

/// Scores where larger means acquire first. `Random` and `Oracle` are not
/// computed from ensemble outputs and are rejected here.
pub fn acquisition_scores(signal: Signal, out: &EnsembleOutputs) -> Result<Vec<f64>> {
    match signal {
        Signal::Margin => Ok(margin(&out.p_y)?.into_iter().map(|m| -m).collect()),
        Signal::Diversity => diversity(&out.p_y),
        Signal::Variance => variance_signal(&out.v),
        Signal::PredictedUnderrep => predicted_underrep(&out.p_b),
        Signal::Random | Signal::Oracle => Err(Error::invalid(format!(
            "{signal:?} does not score from ensemble outputs"
        ))),
    }
}
