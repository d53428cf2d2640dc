use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::sigmoid;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation and the output.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::invalid(format!("unknown activation {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub embed_dim: usize,
    pub activation: Activation,
    pub init_seed: u64,
}

impl MlpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.embed_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::invalid("all layer widths must be at least 1"));
        }
        Ok(())
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(&self.hidden_dims);
        w.push(self.embed_dim);
        w
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub(crate) struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntrospectiveModel {
    pub spec: MlpSpec,
    pub(crate) layers: Vec<Dense>,
    pub beta_y: Vec<f64>,
    pub b_y: f64,
    pub beta_b: Vec<f64>,
    pub b_b: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Forward {
    pub logit_y: f64,
    pub logit_b: f64,
    pub embedding: Vec<f64>,
}

impl Forward {
    pub fn p_y(&self) -> f64 {
        sigmoid(self.logit_y)
    }

    pub fn p_b(&self) -> f64 {
        sigmoid(self.logit_b)
    }
}

/// Pre-activations and activations of every layer for one input.
pub(crate) struct Trace {
    pub z: Vec<Vec<f64>>,
    pub a: Vec<Vec<f64>>,
}

impl IntrospectiveModel {
    /// Gaussian init scaled by `1/sqrt(fan_in)` (times `sqrt 2` for relu);
    /// biases start at zero.
    pub fn new(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let mut r = rng::stream(spec.init_seed, rng::TAG_INIT, 0);
        let gain = if spec.activation == Activation::Relu {
            2f64.sqrt()
        } else {
            1.0
        };
        let widths = spec.widths();
        let layers = widths
            .windows(2)
            .map(|io| {
                let s = gain / (io[0] as f64).sqrt();
                Dense {
                    inputs: io[0],
                    outputs: io[1],
                    w: (0..io[0] * io[1])
                        .map(|_| {
                            s * {
                                let e: f64 = StandardNormal.sample(&mut r);
                                e
                            }
                        })
                        .collect(),
                    b: vec![0.0; io[1]],
                }
            })
            .collect();
        let s = 1.0 / (spec.embed_dim as f64).sqrt();
        let head = |r: &mut rng::Rng| -> Vec<f64> {
            (0..spec.embed_dim)
                .map(|_| {
                    s * {
                        let e: f64 = StandardNormal.sample(r);
                        e
                    }
                })
                .collect()
        };
        let beta_y = head(&mut r);
        let beta_b = head(&mut r);
        Ok(Self {
            spec,
            layers,
            beta_y,
            b_y: 0.0,
            beta_b,
            b_b: 0.0,
        })
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.w.len() + l.b.len())
            .sum::<usize>()
            + 2 * self.spec.embed_dim
            + 2
    }

    /// Parameters in a fixed order: each layer's weights then biases, then
    /// `β_y`, `b_y`, `β_b`, `b_b`.
    pub fn params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            v.extend(&l.w);
            v.extend(&l.b);
        }
        v.extend(&self.beta_y);
        v.push(self.b_y);
        v.extend(&self.beta_b);
        v.push(self.b_b);
        v
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.num_params() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                p.len()
            )));
        }
        let mut i = 0;
        let mut take = |dst: &mut [f64]| {
            dst.copy_from_slice(&p[i..i + dst.len()]);
            i += dst.len();
        };
        for l in &mut self.layers {
            take(&mut l.w);
            take(&mut l.b);
        }
        take(&mut self.beta_y);
        let mut one = [0.0];
        take(&mut one);
        self.b_y = one[0];
        take(&mut self.beta_b);
        take(&mut one);
        self.b_b = one[0];
        Ok(())
    }

    pub(crate) fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.spec.input_dim {
            return Err(Error::invalid(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.spec.input_dim
            )));
        }
        Ok(())
    }

    pub(crate) fn trace(&self, x: &[f64]) -> Trace {
        let act = self.spec.activation;
        let mut z = Vec::with_capacity(self.layers.len());
        let mut a: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        a.push(x.to_vec());
        for l in &self.layers {
            let input = a.last().expect("input layer");
            let zi: Vec<f64> = (0..l.outputs)
                .map(|o| {
                    let row = &l.w[o * l.inputs..(o + 1) * l.inputs];
                    row.iter().zip(input).map(|(w, v)| w * v).sum::<f64>() + l.b[o]
                })
                .collect();
            a.push(zi.iter().map(|&v| act.apply(v)).collect());
            z.push(zi);
        }
        Trace { z, a }
    }

    pub fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.trace(x).a.pop().expect("embedding layer"))
    }

    pub fn forward(&self, x: &[f64]) -> Result<Forward> {
        let h = self.embed(x)?;
        Ok(Forward {
            logit_y: dot(&self.beta_y, &h) + self.b_y,
            logit_b: dot(&self.beta_b, &h) + self.b_b,
            embedding: h,
        })
    }

    /// `(p(y=1|x), p(b=1|x))` for each row.
    pub fn predict(&self, xs: &[Vec<f64>]) -> Result<Vec<(f64, f64)>> {
        xs.iter()
            .map(|x| self.forward(x).map(|f| (f.p_y(), f.p_b())))
            .collect()
    }

    /// Accumulates `scale ·` the gradient of `wy·BCE(y, f_y) + wb·BCE(b, f_b)`
    /// at `x` into `grad` (same layout as [`Self::params`]).
    pub(crate) fn accumulate_grad(
        &self,
        x: &[f64],
        y: f64,
        b: f64,
        wy: f64,
        wb: f64,
        grad: &mut [f64],
    ) {
        let act = self.spec.activation;
        let t = self.trace(x);
        let h = t.a.last().expect("embedding layer");
        let gy = wy * (sigmoid(dot(&self.beta_y, h) + self.b_y) - y);
        let gb = wb * (sigmoid(dot(&self.beta_b, h) + self.b_b) - b);

        let head = grad.len() - (2 * self.spec.embed_dim + 2);
        let e = self.spec.embed_dim;
        for j in 0..e {
            grad[head + j] += gy * h[j];
            grad[head + e + 1 + j] += gb * h[j];
        }
        grad[head + e] += gy;
        grad[head + 2 * e + 1] += gb;

        // dL/dh, then back through the layers.
        let mut delta: Vec<f64> = (0..e)
            .map(|j| gy * self.beta_y[j] + gb * self.beta_b[j])
            .collect();
        let mut offset = head;
        for (li, l) in self.layers.iter().enumerate().rev() {
            offset -= l.w.len() + l.b.len();
            let z = &t.z[li];
            let out = &t.a[li + 1];
            let input = &t.a[li];
            for o in 0..l.outputs {
                delta[o] *= act.derivative(z[o], out[o]);
            }
            let (gw, gb_) = grad[offset..offset + l.w.len() + l.b.len()].split_at_mut(l.w.len());
            for o in 0..l.outputs {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &mut gw[o * l.inputs..(o + 1) * l.inputs];
                for (g, v) in row.iter_mut().zip(input) {
                    *g += d * v;
                }
                gb_[o] += d;
            }
            if li > 0 {
                let mut next = vec![0.0; l.inputs];
                for o in 0..l.outputs {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    let row = &l.w[o * l.inputs..(o + 1) * l.inputs];
                    for (nx, w) in next.iter_mut().zip(row) {
                        *nx += d * w;
                    }
                }
                delta = next;
            }
        }
    }

    /// Mask selecting the entries of [`Self::params`] that carry the l2 penalty
    /// (weights, not biases).
    pub(crate) fn l2_mask(&self) -> Vec<bool> {
        let mut m = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            m.extend(std::iter::repeat_n(true, l.w.len()));
            m.extend(std::iter::repeat_n(false, l.b.len()));
        }
        m.extend(std::iter::repeat_n(true, self.spec.embed_dim));
        m.push(false);
        m.extend(std::iter::repeat_n(true, self.spec.embed_dim));
        m.push(false);
        m
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        m.spec.validate()?;
        let widths = m.spec.widths();
        let shapes_ok = m.layers.len() + 1 == widths.len()
            && m.layers.iter().zip(widths.windows(2)).all(|(l, io)| {
                l.inputs == io[0]
                    && l.outputs == io[1]
                    && l.w.len() == io[0] * io[1]
                    && l.b.len() == io[1]
            })
            && m.beta_y.len() == m.spec.embed_dim
            && m.beta_b.len() == m.spec.embed_dim;
        if !shapes_ok {
            return Err(Error::invalid("model JSON has inconsistent layer shapes"));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `(‖h(x₁) - h(x₂)‖, |f_b(x₁) - f_b(x₂)| / ‖β_b‖)`; the first never falls
/// below the second.
pub fn bias_awareness_gap(
    model: &IntrospectiveModel,
    x1: &[f64],
    x2: &[f64],
) -> Result<(f64, f64)> {
    let nb = dot(&model.beta_b, &model.beta_b).sqrt();
    if nb == 0.0 {
        return Err(Error::invalid("bias head weights are all zero"));
    }
    let f1 = model.forward(x1)?;
    let f2 = model.forward(x2)?;
    let dist = f1
        .embedding
        .iter()
        .zip(&f2.embedding)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok((dist, (f1.logit_b - f2.logit_b).abs() / nb))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(act: Activation, hidden: Vec<usize>) -> MlpSpec {
        MlpSpec {
            input_dim: 3,
            hidden_dims: hidden,
            embed_dim: 4,
            activation: act,
            init_seed: 9,
        }
    }

    #[test]
    fn zero_weights_give_bias_logits() {
        let mut m = IntrospectiveModel::new(spec(Activation::Tanh, vec![5])).unwrap();
        let mut p = vec![0.0; m.num_params()];
        let n = p.len();
        p[n - 1] = -0.7;
        p[n - 2 - m.spec.embed_dim] = 1.3;
        m.set_params(&p).unwrap();
        let f = m.forward(&[1.0, -2.0, 3.0]).unwrap();
        assert_eq!(f.logit_y, 1.3);
        assert_eq!(f.logit_b, -0.7);
    }

    #[test]
    fn identity_net_is_linear() {
        let mut m = IntrospectiveModel::new(MlpSpec {
            input_dim: 2,
            hidden_dims: vec![],
            embed_dim: 2,
            activation: Activation::Identity,
            init_seed: 0,
        })
        .unwrap();
        m.layers[0].w = vec![1.0, 0.0, 0.0, 1.0];
        m.beta_y = vec![0.5, -2.0];
        m.b_y = 0.25;
        let f = m.forward(&[3.0, 1.0]).unwrap();
        assert_eq!(f.logit_y, 0.5 * 3.0 - 2.0 + 0.25);
        assert_eq!(f.embedding, vec![3.0, 1.0]);
    }

    #[test]
    fn param_roundtrip_and_json() {
        let m = IntrospectiveModel::new(spec(Activation::Relu, vec![6, 5])).unwrap();
        let mut m2 = m.clone();
        m2.set_params(&m.params()).unwrap();
        assert_eq!(m, m2);
        let back = IntrospectiveModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        assert!(m2.set_params(&[0.0]).is_err());
        assert!(m.forward(&[1.0]).is_err());
    }

    #[test]
    fn gap_identity_on_same_point() {
        let m = IntrospectiveModel::new(spec(Activation::Tanh, vec![4])).unwrap();
        let (d, lb) = bias_awareness_gap(&m, &[0.1, 0.2, 0.3], &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!((d, lb), (0.0, 0.0));
        let mut z = m.clone();
        z.beta_b = vec![0.0; 4];
        assert!(bias_awareness_gap(&z, &[0.0; 3], &[1.0; 3]).is_err());
    }

    #[test]
    fn seeded_init_is_deterministic() {
        let a = IntrospectiveModel::new(spec(Activation::Relu, vec![8])).unwrap();
        let b = IntrospectiveModel::new(spec(Activation::Relu, vec![8])).unwrap();
        assert_eq!(a.params(), b.params());
    }
}
