use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::bce_logit;
use super::mlp::{IntrospectiveModel, MlpSpec};
use crate::error::{Error, Result};
use crate::rng;

/// One training example. `b` may be a soft target in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: f64,
    pub b: f64,
    pub weight: f64,
}

impl Sample {
    pub fn new(x: Vec<f64>, y: f64, b: f64) -> Self {
        Self {
            x,
            y,
            b,
            weight: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub shuffle_seed: u64,
    /// Penalty `l2/2 · ‖W‖²` on weights (biases excluded).
    #[serde(default)]
    pub l2: f64,
    /// 0 for plain SGD.
    #[serde(default)]
    pub momentum: f64,
    /// Weight of the bias-head cross-entropy.
    #[serde(default = "one")]
    pub bias_weight: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 50,
            batch_size: 32,
            shuffle_seed: 0,
            l2: 1e-4,
            momentum: 0.9,
            bias_weight: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch_size must be at least 1"));
        }
        if !(self.l2 >= 0.0 && self.bias_weight >= 0.0) {
            return Err(Error::invalid("l2 and bias_weight must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub model: IntrospectiveModel,
    pub initial_loss: f64,
    /// Full-data training loss after each epoch.
    pub history: Vec<f64>,
}

fn check_data(model: &IntrospectiveModel, data: &[Sample]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("training data is empty"));
    }
    for s in data {
        model.check_input(&s.x)?;
        if !(0.0..=1.0).contains(&s.y) || !(0.0..=1.0).contains(&s.b) {
            return Err(Error::invalid("targets y and b must lie in [0, 1]"));
        }
        if !(s.weight.is_finite() && s.weight >= 0.0) {
            return Err(Error::invalid("sample weights must be non-negative"));
        }
    }
    let mean_w = data.iter().map(|s| s.weight).sum::<f64>() / data.len() as f64;
    if mean_w <= 0.0 {
        return Err(Error::invalid("sample weights are all zero"));
    }
    Ok(mean_w)
}

fn penalty(model: &IntrospectiveModel, l2: f64) -> f64 {
    if l2 == 0.0 {
        return 0.0;
    }
    let p = model.params();
    let m = model.l2_mask();
    0.5 * l2
        * p.iter()
            .zip(&m)
            .filter(|(_, &k)| k)
            .map(|(v, _)| v * v)
            .sum::<f64>()
}

fn loss_with_mean(
    model: &IntrospectiveModel,
    data: &[Sample],
    cfg: &TrainConfig,
    mean_w: f64,
) -> f64 {
    let sum: f64 = data
        .iter()
        .map(|s| {
            let f = model.forward(&s.x).expect("checked input");
            s.weight / mean_w
                * (bce_logit(s.y, f.logit_y) + cfg.bias_weight * bce_logit(s.b, f.logit_b))
        })
        .sum();
    sum / data.len() as f64 + penalty(model, cfg.l2)
}

/// Mean weighted two-head cross-entropy plus the l2 penalty. Weights are
/// normalized by their mean over `data`.
pub fn training_loss(
    model: &IntrospectiveModel,
    data: &[Sample],
    cfg: &TrainConfig,
) -> Result<f64> {
    let mean_w = check_data(model, data)?;
    Ok(loss_with_mean(model, data, cfg, mean_w))
}

fn grad_with_mean(
    model: &IntrospectiveModel,
    batch: &[&Sample],
    cfg: &TrainConfig,
    mean_w: f64,
    grad: &mut [f64],
) {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let scale = 1.0 / (batch.len() as f64 * mean_w);
    for s in batch {
        let w = s.weight * scale;
        model.accumulate_grad(&s.x, s.y, s.b, w, w * cfg.bias_weight, grad);
    }
    if cfg.l2 > 0.0 {
        for ((g, p), k) in grad.iter_mut().zip(model.params()).zip(model.l2_mask()) {
            if k {
                *g += cfg.l2 * p;
            }
        }
    }
}

/// Gradient of [`training_loss`] in the layout of `IntrospectiveModel::params`.
pub fn training_gradient(
    model: &IntrospectiveModel,
    data: &[Sample],
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    let mean_w = check_data(model, data)?;
    let mut g = vec![0.0; model.num_params()];
    let refs: Vec<&Sample> = data.iter().collect();
    grad_with_mean(model, &refs, cfg, mean_w, &mut g);
    Ok(g)
}

/// Mini-batch SGD; `on_epoch(epoch, model)` runs after every epoch.
pub fn train_with_callback(
    data: &[Sample],
    spec: &MlpSpec,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, &IntrospectiveModel),
) -> Result<TrainReport> {
    cfg.validate()?;
    let mut model = IntrospectiveModel::new(spec.clone())?;
    let mean_w = check_data(&model, data)?;
    let initial_loss = loss_with_mean(&model, data, cfg, mean_w);
    let mut r = rng::stream(cfg.shuffle_seed, rng::TAG_SHUFFLE, 0);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut params = model.params();
    let mut velocity = vec![0.0; params.len()];
    let mut grad = vec![0.0; params.len()];
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut r);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &data[i]).collect();
            // self-normalized within the batch so heavy weights cannot blow up a step
            let batch_mean = batch.iter().map(|s| s.weight).sum::<f64>() / batch.len() as f64;
            if batch_mean == 0.0 {
                continue;
            }
            grad_with_mean(&model, &batch, cfg, batch_mean, &mut grad);
            for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                *v = cfg.momentum * *v + g;
                *p -= cfg.learning_rate * *v;
            }
            model.set_params(&params)?;
        }
        let loss = loss_with_mean(&model, data, cfg, mean_w);
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch, loss });
        }
        history.push(loss);
        on_epoch(epoch, &model);
    }
    Ok(TrainReport {
        model,
        initial_loss,
        history,
    })
}

/// Trains both heads on `L(y, f_y) + bias_weight · L(b, f_b)`.
pub fn train_introspective(
    data: &[Sample],
    spec: &MlpSpec,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    train_with_callback(data, spec, cfg, |_, _| {})
}

/// Trains on the label loss only; the bias head sees no data term.
pub fn train_erm(data: &[Sample], spec: &MlpSpec, cfg: &TrainConfig) -> Result<TrainReport> {
    let cfg = TrainConfig {
        bias_weight: 0.0,
        ..cfg.clone()
    };
    train_with_callback(data, spec, &cfg, |_, _| {})
}

/// Fraction of samples whose label-head prediction matches `y >= 0.5`.
pub fn label_accuracy(model: &IntrospectiveModel, data: &[Sample]) -> f64 {
    let hits = data
        .iter()
        .filter(|s| {
            let f = model.forward(&s.x).expect("checked input");
            (f.logit_y > 0.0) == (s.y >= 0.5)
        })
        .count();
    hits as f64 / data.len() as f64
}
