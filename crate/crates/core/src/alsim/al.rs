use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::Dataset2D;
use super::frontier::{evaluate, Evaluation};
use super::signals::{acquisition_scores, EnsembleOutputs, Signal};
use crate::error::{Error, Result};
use crate::learner::{
    fit_variance, train_erm, train_introspective, IntrospectiveModel, MlpSpec, TrainConfig,
    MAX_REFERENCES,
};
use crate::rng;
use crate::selfplay::{gap_estimate, make_folds, train_cv_ensemble};

/// Where the bias-head targets of the labeled set come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnderrepSource {
    /// True minority membership.
    Identity,
    /// Self-play generalization gap (soft targets).
    Gap,
    /// Naive in-sample error (soft targets).
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ALConfig {
    pub initial_labeled: usize,
    pub rounds: usize,
    pub batch_per_round: usize,
    pub signal: Signal,
    pub underrep_source: UnderrepSource,
    /// Train the bias head alongside the label head.
    pub introspective: bool,
    pub ensemble_size: usize,
    pub seed: u64,
    pub spec: MlpSpec,
    pub train: TrainConfig,
    /// RBF length scale on embeddings; `None` uses the median pairwise
    /// distance of the reference embeddings.
    #[serde(default)]
    pub bandwidth: Option<f64>,
    pub jitter: f64,
    /// Folds and splits per member for the self-play stage.
    pub cv_folds: usize,
    pub cv_splits: usize,
}

impl ALConfig {
    /// Five rounds of 50 acquisitions from 200 initial labels on the 2-D task.
    pub fn desk_default(signal: Signal, introspective: bool, seed: u64) -> Self {
        Self {
            initial_labeled: 200,
            rounds: 5,
            batch_per_round: 50,
            signal,
            underrep_source: UnderrepSource::Identity,
            introspective,
            ensemble_size: 5,
            seed,
            spec: MlpSpec {
                input_dim: 2,
                hidden_dims: vec![32],
                embed_dim: 16,
                activation: crate::learner::Activation::Tanh,
                init_seed: 0,
            },
            train: TrainConfig {
                learning_rate: 0.01,
                epochs: 150,
                batch_size: 32,
                shuffle_seed: 0,
                l2: 1e-4,
                momentum: 0.9,
                bias_weight: 1.0,
            },
            bandwidth: None,
            jitter: 1e-6,
            cv_folds: 5,
            cv_splits: 1,
        }
    }

    fn validate(&self, pool: usize) -> Result<()> {
        if self.initial_labeled == 0 || self.rounds == 0 || self.batch_per_round == 0 {
            return Err(Error::invalid(
                "initial_labeled, rounds and batch_per_round must be positive",
            ));
        }
        if self.initial_labeled > pool {
            return Err(Error::invalid("initial_labeled exceeds the pool size"));
        }
        if self.ensemble_size == 0 {
            return Err(Error::invalid("ensemble_size must be at least 1"));
        }
        if self.signal == Signal::Diversity && self.ensemble_size < 2 {
            return Err(Error::invalid(
                "diversity needs at least two ensemble members",
            ));
        }
        if !(self.jitter > 0.0) {
            return Err(Error::invalid("jitter must be positive"));
        }
        self.spec.validate()?;
        self.train.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundMetrics {
    pub round: usize,
    /// Labeled-set size after this round's acquisition.
    pub labeled_size: usize,
    /// Minority examples acquired so far (initial labels excluded) over all
    /// minority examples in the pool.
    pub tail_rate: f64,
    /// Test metrics of the ensemble trained at the start of the round.
    pub acc: f64,
    pub worst_group_acc: f64,
    pub combined: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ALResult {
    pub rounds: Vec<RoundMetrics>,
    /// Pool indices acquired in each round, in acquisition order.
    pub acquired: Vec<Vec<usize>>,
    /// Final labeled set, initial labels first.
    pub labeled: Vec<usize>,
    /// Minority share of the pool covered by the initial labels.
    pub initial_tail_rate: f64,
    /// Bias-head targets of `labeled` from the configured source.
    pub b_labels: Vec<f64>,
    /// True when the pool ran out before the last round.
    pub exhausted: bool,
}

fn tail_rate(pool: &Dataset2D, labeled: &[usize]) -> f64 {
    let total = pool.minority_count();
    if total == 0 {
        return 0.0;
    }
    labeled.iter().filter(|&&i| pool.minority[i]).count() as f64 / total as f64
}

fn underrep_targets(
    pool: &Dataset2D,
    labeled: &[usize],
    cfg: &ALConfig,
    round: usize,
) -> Result<Vec<f64>> {
    match cfg.underrep_source {
        UnderrepSource::Identity => Ok(labeled
            .iter()
            .map(|&i| pool.minority[i] as u8 as f64)
            .collect()),
        UnderrepSource::Gap | UnderrepSource::Error => {
            let data = pool.samples(labeled, &vec![0.0; labeled.len()]);
            let folds = make_folds(
                labeled.len(),
                cfg.cv_folds,
                cfg.cv_splits,
                rng::derive_seed(cfg.seed, rng::TAG_FOLDS, round as u64),
            )?;
            let ens = train_cv_ensemble(
                &data,
                &folds,
                &cfg.spec,
                &cfg.train,
                rng::derive_seed(cfg.seed, rng::TAG_MEMBER, 1 << 32 | round as u64),
            )?;
            let est = gap_estimate(&ens, &folds, &data)?;
            Ok(if cfg.underrep_source == UnderrepSource::Gap {
                est.gap
            } else {
                est.naive_error
            })
        }
    }
}

fn train_ensemble(
    pool: &Dataset2D,
    labeled: &[usize],
    b: &[f64],
    cfg: &ALConfig,
    round: usize,
) -> Result<Vec<IntrospectiveModel>> {
    let data = pool.samples(labeled, b);
    (0..cfg.ensemble_size)
        .into_par_iter()
        .map(|k| {
            let tag = (round * cfg.ensemble_size + k) as u64;
            let spec = MlpSpec {
                init_seed: rng::derive_seed(cfg.seed, rng::TAG_INIT, tag),
                ..cfg.spec.clone()
            };
            let train = TrainConfig {
                shuffle_seed: rng::derive_seed(cfg.seed, rng::TAG_SHUFFLE, tag),
                ..cfg.train.clone()
            };
            let report = if cfg.introspective {
                train_introspective(&data, &spec, &train)?
            } else {
                train_erm(&data, &spec, &train)?
            };
            Ok(report.model)
        })
        .collect()
}

/// Median pairwise embedding distance over the strided references.
fn median_bandwidth(model: &IntrospectiveModel, xs: &[Vec<f64>]) -> Result<f64> {
    let stride = xs.len().div_ceil(MAX_REFERENCES);
    let h: Vec<Vec<f64>> = xs
        .iter()
        .step_by(stride)
        .map(|x| model.embed(x))
        .collect::<Result<_>>()?;
    let mut d = Vec::with_capacity(h.len() * h.len() / 2);
    for i in 0..h.len() {
        for j in i + 1..h.len() {
            d.push(
                h[i].iter()
                    .zip(&h[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt(),
            );
        }
    }
    d.sort_by(|a, b| a.total_cmp(b));
    let med = d.get(d.len() / 2).copied().unwrap_or(1.0);
    Ok(if med > 0.0 { med } else { 1.0 })
}

fn ensemble_outputs(
    members: &[IntrospectiveModel],
    pool: &Dataset2D,
    labeled: &[usize],
    candidates: &[usize],
    cfg: &ALConfig,
) -> Result<EnsembleOutputs> {
    let xs: Vec<Vec<f64>> = candidates.iter().map(|&i| pool.x[i].clone()).collect();
    let train_x: Vec<Vec<f64>> = labeled.iter().map(|&i| pool.x[i].clone()).collect();
    let per: Vec<Result<(Vec<f64>, Vec<f64>, Vec<f64>)>> = members
        .par_iter()
        .map(|m| {
            let pr = m.predict(&xs)?;
            let v = if cfg.signal == Signal::Variance {
                let bw = match cfg.bandwidth {
                    Some(b) => b,
                    None => median_bandwidth(m, &train_x)?,
                };
                fit_variance(m, &train_x, bw, cfg.jitter)?.variances(&xs)?
            } else {
                Vec::new()
            };
            Ok((
                pr.iter().map(|p| p.0).collect(),
                pr.iter().map(|p| p.1).collect(),
                v,
            ))
        })
        .collect();
    let mut out = EnsembleOutputs::default();
    for r in per {
        let (py, pb, v) = r?;
        out.p_y.push(py);
        out.p_b.push(pb);
        out.v.push(v);
    }
    Ok(out)
}

/// Runs the acquisition loop on `pool`, evaluating each round's ensemble on
/// `test`.
pub fn run_al_loop(pool: &Dataset2D, test: &Dataset2D, cfg: &ALConfig) -> Result<ALResult> {
    cfg.validate(pool.len())?;
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(&mut rng::stream(cfg.seed, rng::TAG_ACQUIRE, u64::MAX));
    let mut labeled: Vec<usize> = order[..cfg.initial_labeled].to_vec();
    labeled.sort_unstable();
    let mut in_labeled = vec![false; pool.len()];
    labeled.iter().for_each(|&i| in_labeled[i] = true);
    let initial_tail_rate = tail_rate(pool, &labeled);

    let mut rounds = Vec::with_capacity(cfg.rounds);
    let mut acquired = Vec::with_capacity(cfg.rounds);
    let mut exhausted = false;
    for round in 0..cfg.rounds {
        let candidates: Vec<usize> = (0..pool.len()).filter(|&i| !in_labeled[i]).collect();
        if candidates.is_empty() {
            exhausted = true;
            break;
        }
        let b = underrep_targets(pool, &labeled, cfg, round)?;
        let members = train_ensemble(pool, &labeled, &b, cfg, round)?;
        let Evaluation { acc, wga, combined } = evaluate(&members, test)?;

        let take = cfg.batch_per_round.min(candidates.len());
        let picks: Vec<usize> = match cfg.signal {
            Signal::Random => {
                let mut c = candidates.clone();
                c.shuffle(&mut rng::stream(cfg.seed, rng::TAG_ACQUIRE, round as u64));
                c.truncate(take);
                c
            }
            _ => {
                let scores: Vec<f64> = if cfg.signal == Signal::Oracle {
                    candidates
                        .iter()
                        .map(|&i| pool.minority[i] as u8 as f64)
                        .collect()
                } else {
                    let out = ensemble_outputs(&members, pool, &labeled, &candidates, cfg)?;
                    acquisition_scores(cfg.signal, &out)?
                };
                let mut idx: Vec<usize> = (0..candidates.len()).collect();
                idx.sort_by(|&a, &b| {
                    scores[b]
                        .total_cmp(&scores[a])
                        .then(candidates[a].cmp(&candidates[b]))
                });
                idx.truncate(take);
                idx.into_iter().map(|k| candidates[k]).collect()
            }
        };
        for &i in &picks {
            in_labeled[i] = true;
        }
        labeled.extend(&picks);
        if take < cfg.batch_per_round {
            exhausted = true;
        }
        rounds.push(RoundMetrics {
            round,
            labeled_size: labeled.len(),
            tail_rate: tail_rate(pool, &labeled[cfg.initial_labeled..]),
            acc,
            worst_group_acc: wga,
            combined,
        });
        acquired.push(picks);
        if exhausted {
            break;
        }
    }
    let b_labels = underrep_targets(pool, &labeled, cfg, cfg.rounds)?;
    Ok(ALResult {
        rounds,
        acquired,
        labeled,
        initial_tail_rate,
        b_labels,
        exhausted,
    })
}
