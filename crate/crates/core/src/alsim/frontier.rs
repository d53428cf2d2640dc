use rayon::prelude::*;
use serde::Serialize;

use super::data::{Dataset2D, N_GROUPS};
use crate::error::{Error, Result};
use crate::learner::{train_erm, IntrospectiveModel, MlpSpec, Sample, TrainConfig};
use crate::metrics::{accuracy, pareto_indices, worst_group_accuracy};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Evaluation {
    pub acc: f64,
    pub wga: f64,
    /// `(acc + wga) / 2`
    pub combined: f64,
}

/// Accuracy of the ensemble-mean prediction against clean test labels, overall
/// and in the worst of the four groups.
pub fn evaluate(models: &[IntrospectiveModel], test: &Dataset2D) -> Result<Evaluation> {
    if models.is_empty() {
        return Err(Error::invalid("no models to evaluate"));
    }
    let preds: Vec<u8> = test
        .x
        .iter()
        .map(|x| {
            let p = models
                .iter()
                .map(|m| m.forward(x).map(|f| f.p_y()))
                .sum::<Result<f64>>()?;
            Ok((p / models.len() as f64 > 0.5) as u8)
        })
        .collect::<Result<_>>()?;
    let acc = accuracy(&preds, &test.y_true);
    let wga = worst_group_accuracy(&preds, &test.y_true, &test.group, N_GROUPS);
    Ok(Evaluation {
        acc,
        wga,
        combined: 0.5 * (acc + wga),
    })
}

#[derive(Clone, Debug)]
pub struct ReweightResult {
    pub model: IntrospectiveModel,
    /// Number of examples with score above the threshold.
    pub upweighted: usize,
    /// Set when nothing exceeded the threshold and plain ERM was run.
    pub empty_set: bool,
}

/// Label-only training with weight `lambda_up` on examples whose score
/// exceeds `t` and weight 1 elsewhere.
pub fn reweighted_train(
    data: &[Sample],
    scores: &[f64],
    t: f64,
    lambda_up: f64,
    spec: &MlpSpec,
    cfg: &TrainConfig,
) -> Result<ReweightResult> {
    if scores.len() != data.len() {
        return Err(Error::invalid("one score per example is required"));
    }
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::invalid(format!(
            "threshold t must lie in (0, 1], got {t}"
        )));
    }
    if !(lambda_up.is_finite() && lambda_up >= 1.0) {
        return Err(Error::invalid(format!(
            "lambda_up must be at least 1, got {lambda_up}"
        )));
    }
    let weighted: Vec<Sample> = data
        .iter()
        .zip(scores)
        .map(|(s, &sc)| Sample {
            weight: if sc > t { lambda_up } else { 1.0 },
            ..s.clone()
        })
        .collect();
    let upweighted = scores.iter().filter(|&&s| s > t).count();
    let report = train_erm(&weighted, spec, cfg)?;
    Ok(ReweightResult {
        model: report.model,
        upweighted,
        empty_set: upweighted == 0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrontierCell {
    pub t: f64,
    pub lambda_up: f64,
    pub acc: f64,
    pub wga: f64,
    pub combined: f64,
    pub empty_set: bool,
    /// Training failure for this cell, if any; such cells are never Pareto.
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrontierTrace {
    pub cells: Vec<FrontierCell>,
    /// Cells (by index) not dominated in `(acc, wga)`.
    pub pareto: Vec<usize>,
}

impl FrontierTrace {
    /// Cell with the highest combined accuracy (lowest index on ties).
    pub fn best_combined(&self) -> Option<&FrontierCell> {
        self.cells.iter().filter(|c| c.error.is_none()).fold(
            None,
            |best: Option<&FrontierCell>, c| match best {
                Some(b) if b.combined >= c.combined => Some(b),
                _ => Some(c),
            },
        )
    }
}

/// `t ∈ {0.05, ..., 1.0}` by 0.05 and `log λ ∈ {0, ..., 10}` by 0.5, as
/// `(t, λ)` pairs.
pub fn reweight_grid() -> Vec<(f64, f64)> {
    let mut g = Vec::with_capacity(20 * 21);
    for i in 1..=20 {
        for j in 0..=20 {
            g.push((i as f64 * 0.05, (j as f64 * 0.5).exp()));
        }
    }
    g
}

/// Trains one reweighted model per `(t, λ)` cell and evaluates it on `test`.
pub fn trace_frontier(
    data: &[Sample],
    scores: &[f64],
    grid: &[(f64, f64)],
    spec: &MlpSpec,
    cfg: &TrainConfig,
    test: &Dataset2D,
) -> Result<FrontierTrace> {
    if grid.is_empty() {
        return Err(Error::invalid("frontier grid is empty"));
    }
    if scores.len() != data.len() {
        return Err(Error::invalid("one score per example is required"));
    }
    let cells: Vec<FrontierCell> = grid
        .par_iter()
        .map(|&(t, lambda_up)| {
            let run = reweighted_train(data, scores, t, lambda_up, spec, cfg).and_then(|r| {
                evaluate(std::slice::from_ref(&r.model), test).map(|e| (e, r.empty_set))
            });
            match run {
                Ok((e, empty_set)) => FrontierCell {
                    t,
                    lambda_up,
                    acc: e.acc,
                    wga: e.wga,
                    combined: e.combined,
                    empty_set,
                    error: None,
                },
                Err(err) => FrontierCell {
                    t,
                    lambda_up,
                    acc: f64::NAN,
                    wga: f64::NAN,
                    combined: f64::NAN,
                    empty_set: false,
                    error: Some(err.to_string()),
                },
            }
        })
        .collect();
    let ok: Vec<usize> = (0..cells.len())
        .filter(|&i| cells[i].error.is_none())
        .collect();
    let pts: Vec<(f64, f64)> = ok.iter().map(|&i| (cells[i].acc, cells[i].wga)).collect();
    let pareto = pareto_indices(&pts).into_iter().map(|k| ok[k]).collect();
    Ok(FrontierTrace { cells, pareto })
}
