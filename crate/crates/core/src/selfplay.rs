//! Cross-validated ensembles and the self-play estimate of each example's
//! generalization gap.
//!
//! Each of `K` members trains on `m` consecutive folds. For example `i`,
//! `f̄_in` averages the members that saw it and the gap is the mean absolute
//! difference between `f̄_in` and each member that did not.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::learner::{train_with_callback, IntrospectiveModel, MlpSpec, Sample, TrainConfig};
use crate::metrics::empirical_cdf;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub m: usize,
    /// Fold of each example.
    pub fold: Vec<usize>,
    /// `incidence[j][f]` is true when member `j` trains on fold `f`.
    pub incidence: Vec<Vec<bool>>,
}

impl FoldAssignment {
    pub fn n(&self) -> usize {
        self.fold.len()
    }

    pub fn in_sample(&self, member: usize, example: usize) -> bool {
        self.incidence[member][self.fold[example]]
    }

    pub fn members_in(&self, example: usize) -> Vec<usize> {
        (0..self.k)
            .filter(|&j| self.in_sample(j, example))
            .collect()
    }

    pub fn members_out(&self, example: usize) -> Vec<usize> {
        (0..self.k)
            .filter(|&j| !self.in_sample(j, example))
            .collect()
    }

    pub fn training_indices(&self, member: usize) -> Vec<usize> {
        (0..self.n())
            .filter(|&i| self.in_sample(member, i))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.incidence.len() != self.k || self.incidence.iter().any(|r| r.len() != self.k) {
            return Err(Error::FoldInvariant("incidence must be K x K".into()));
        }
        if self.fold.iter().any(|&f| f >= self.k) {
            return Err(Error::FoldInvariant("fold index out of range".into()));
        }
        for (j, row) in self.incidence.iter().enumerate() {
            let c = row.iter().filter(|&&b| b).count();
            if c != self.m {
                return Err(Error::FoldInvariant(format!(
                    "member {j} trains on {c} folds, expected {}",
                    self.m
                )));
            }
        }
        for f in 0..self.k {
            let c = self.incidence.iter().filter(|r| r[f]).count();
            if c == 0 || c == self.k {
                return Err(Error::FoldInvariant(format!(
                    "fold {f} lacks an in-sample or an out-of-sample member"
                )));
            }
        }
        Ok(())
    }
}

/// Shuffles examples into `k` near-equal folds; member `j` trains on folds
/// `j, j+1, ..., j+m-1 (mod k)`.
pub fn make_folds(n: usize, k: usize, m: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 || m == 0 || m >= k {
        return Err(Error::invalid(format!(
            "need K >= 2 and 1 <= m < K (K = {k}, m = {m})"
        )));
    }
    if n < k {
        return Err(Error::invalid(format!(
            "need at least K = {k} examples, got {n}"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng::stream(seed, rng::TAG_FOLDS, 0));
    let mut fold = vec![0; n];
    for (pos, &i) in perm.iter().enumerate() {
        fold[i] = pos % k;
    }
    let incidence = (0..k)
        .map(|j| {
            let mut row = vec![false; k];
            for s in 0..m {
                row[(j + s) % k] = true;
            }
            row
        })
        .collect();
    let f = FoldAssignment {
        k,
        m,
        fold,
        incidence,
    };
    f.validate()?;
    Ok(f)
}

/// Members plus per-epoch predictions `p(y=1|x)` of every member on every
/// example.
#[derive(Clone, Debug)]
pub struct CvEnsemble {
    pub members: Vec<IntrospectiveModel>,
    /// `predictions[member][epoch][example]`
    pub predictions: Vec<Vec<Vec<f64>>>,
    /// Mean out-of-sample `|y - p|` per epoch, pooled over members.
    pub oos_loss: Vec<f64>,
}

impl CvEnsemble {
    pub fn epochs(&self) -> usize {
        self.oos_loss.len()
    }

    /// Predictions of every member at `epoch`, `[member][example]`.
    pub fn snapshot(&self, epoch: usize) -> Vec<Vec<f64>> {
        self.predictions.iter().map(|p| p[epoch].clone()).collect()
    }
}

/// Trains one label-only member per row of the incidence matrix, in parallel.
/// Member `j` uses init and shuffle seeds derived from `(seed, j)`.
pub fn train_cv_ensemble(
    data: &[Sample],
    folds: &FoldAssignment,
    spec: &MlpSpec,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<CvEnsemble> {
    folds.validate()?;
    if folds.n() != data.len() {
        return Err(Error::invalid("fold assignment and data differ in size"));
    }
    let xs: Vec<&[f64]> = data.iter().map(|s| s.x.as_slice()).collect();
    let runs: Vec<Result<(IntrospectiveModel, Vec<Vec<f64>>)>> = (0..folds.k)
        .into_par_iter()
        .map(|j| {
            let train: Vec<Sample> = folds
                .training_indices(j)
                .into_iter()
                .map(|i| data[i].clone())
                .collect();
            let mspec = MlpSpec {
                init_seed: rng::derive_seed(seed, rng::TAG_INIT, j as u64),
                ..spec.clone()
            };
            let mcfg = TrainConfig {
                shuffle_seed: rng::derive_seed(seed, rng::TAG_SHUFFLE, j as u64),
                bias_weight: 0.0,
                ..cfg.clone()
            };
            let mut per_epoch = Vec::with_capacity(cfg.epochs);
            let report = train_with_callback(&train, &mspec, &mcfg, |_, model| {
                per_epoch.push(
                    xs.iter()
                        .map(|x| model.forward(x).expect("checked input").p_y())
                        .collect(),
                );
            })?;
            Ok((report.model, per_epoch))
        })
        .collect();
    let mut members = Vec::with_capacity(folds.k);
    let mut predictions = Vec::with_capacity(folds.k);
    for r in runs {
        let (m, p) = r?;
        members.push(m);
        predictions.push(p);
    }
    let epochs = cfg.epochs;
    let oos_loss = (0..epochs)
        .map(|e| {
            let (mut s, mut c) = (0.0, 0usize);
            for i in 0..data.len() {
                for j in folds.members_out(i) {
                    s += (data[i].y - predictions[j][e][i]).abs();
                    c += 1;
                }
            }
            s / c as f64
        })
        .collect();
    Ok(CvEnsemble {
        members,
        predictions,
        oos_loss,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct EarlyStop {
    pub epoch: usize,
    /// False when no window met the rule and the best window was returned.
    pub stable: bool,
}

/// First epoch whose trailing `window` has mean at most `eps` and spread at
/// most `eps / 2`; otherwise the end of the window with the smallest mean.
pub fn early_stop_epoch(curve: &[f64], window: usize, eps: f64) -> Result<EarlyStop> {
    if window == 0 || curve.len() < window {
        return Err(Error::invalid(format!(
            "curve of length {} is shorter than the window {window}",
            curve.len()
        )));
    }
    for t in window - 1..curve.len() {
        let w = &curve[t + 1 - window..=t];
        let mean = w.iter().sum::<f64>() / window as f64;
        let hi = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = w.iter().cloned().fold(f64::INFINITY, f64::min);
        // Slack absorbs rounding in the window mean.
        let slack = 1e-12 * eps.abs();
        if mean <= eps + slack && hi - lo <= eps / 2.0 + slack {
            return Ok(EarlyStop {
                epoch: t,
                stable: true,
            });
        }
    }
    let epoch = (window - 1..curve.len())
        .map(|t| (t, curve[t + 1 - window..=t].iter().sum::<f64>()))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(t, _)| t)
        .expect("non-empty curve");
    Ok(EarlyStop {
        epoch,
        stable: false,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapEstimates {
    pub gap: Vec<f64>,
    pub naive_error: Vec<f64>,
    pub stop_epoch: usize,
}

/// Gap and naive error from one prediction snapshot `[member][example]`.
pub fn gap_from_predictions(
    preds: &[Vec<f64>],
    folds: &FoldAssignment,
    y: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    folds.validate()?;
    if preds.len() != folds.k || preds.iter().any(|p| p.len() != folds.n()) || y.len() != folds.n()
    {
        return Err(Error::invalid(
            "prediction snapshot does not match the fold assignment",
        ));
    }
    let mut gap = Vec::with_capacity(y.len());
    let mut naive = Vec::with_capacity(y.len());
    for i in 0..y.len() {
        let ins = folds.members_in(i);
        let outs = folds.members_out(i);
        if ins.is_empty() || outs.is_empty() {
            return Err(Error::FoldInvariant(format!(
                "example {i} needs in-sample and out-of-sample members"
            )));
        }
        let f_in = ins.iter().map(|&j| preds[j][i]).sum::<f64>() / ins.len() as f64;
        gap.push(
            outs.iter()
                .map(|&j| (f_in - preds[j][i]).abs())
                .sum::<f64>()
                / outs.len() as f64,
        );
        naive.push(ins.iter().map(|&j| (y[i] - preds[j][i]).abs()).sum::<f64>() / ins.len() as f64);
    }
    Ok((gap, naive))
}

/// Estimates at the early-stop epoch of the pooled out-of-sample curve
/// (window 5, threshold 0.1).
pub fn gap_estimate(
    ensemble: &CvEnsemble,
    folds: &FoldAssignment,
    data: &[Sample],
) -> Result<GapEstimates> {
    let stop = early_stop_epoch(&ensemble.oos_loss, 5.min(ensemble.epochs()), 0.1)?;
    gap_estimate_at(ensemble, folds, data, stop.epoch)
}

pub fn gap_estimate_at(
    ensemble: &CvEnsemble,
    folds: &FoldAssignment,
    data: &[Sample],
    epoch: usize,
) -> Result<GapEstimates> {
    if epoch >= ensemble.epochs() {
        return Err(Error::invalid(format!("epoch {epoch} was not recorded")));
    }
    let y: Vec<f64> = data.iter().map(|s| s.y).collect();
    let (gap, naive_error) = gap_from_predictions(&ensemble.snapshot(epoch), folds, &y)?;
    Ok(GapEstimates {
        gap,
        naive_error,
        stop_epoch: epoch,
    })
}

/// True where the midrank empirical CDF of the score exceeds `q`.
pub fn rank_threshold_labels(scores: &[f64], q: f64) -> Result<Vec<bool>> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::invalid("q must lie in (0, 1)"));
    }
    Ok(empirical_cdf(scores).into_iter().map(|f| f > q).collect())
}
