use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::Sample;
use crate::rng;

/// Groups are indexed `2·y + minority`.
pub const N_GROUPS: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub mean: [f64; 2],
    /// Symmetric positive semi-definite.
    pub cov: [[f64; 2]; 2],
    pub count: usize,
    pub y: u8,
    pub minority: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec2D {
    pub clusters: Vec<Cluster>,
    pub seed: u64,
    /// Probability of flipping each observed label.
    #[serde(default)]
    pub label_flip: f64,
}

/// Two majority clusters on the anti-diagonal, each with a tight minority
/// cluster of the opposite class further out along the same line.
pub fn default_spec(minority_per_class: usize, seed: u64) -> SyntheticSpec2D {
    let iso = |s: f64| [[s * s, 0.0], [0.0, s * s]];
    let c = |mean, s, count, y, minority| Cluster {
        mean,
        cov: iso(s),
        count,
        y,
        minority,
    };
    SyntheticSpec2D {
        clusters: vec![
            c([-2.0, 2.0], 0.6, 2450, 0, false),
            c([2.0, -2.0], 0.6, 2450, 1, false),
            c([4.0, -4.0], 0.3, minority_per_class, 0, true),
            c([-4.0, 4.0], 0.3, minority_per_class, 1, true),
        ],
        seed,
        label_flip: 0.0,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Dataset2D {
    pub x: Vec<Vec<f64>>,
    /// Observed labels (after flips).
    pub y: Vec<u8>,
    pub y_true: Vec<u8>,
    pub group: Vec<usize>,
    pub minority: Vec<bool>,
}

impl Dataset2D {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Identity underrepresentation labels `b = I(minority)`.
    pub fn identity_b(&self) -> Vec<f64> {
        self.minority.iter().map(|&m| m as u8 as f64).collect()
    }

    /// Training samples for `idx` with the given `b` targets (aligned to `idx`).
    pub fn samples(&self, idx: &[usize], b: &[f64]) -> Vec<Sample> {
        idx.iter()
            .zip(b)
            .map(|(&i, &bi)| Sample::new(self.x[i].clone(), self.y[i] as f64, bi))
            .collect()
    }

    pub fn minority_count(&self) -> usize {
        self.minority.iter().filter(|&&m| m).count()
    }
}

/// `L` with `L Lᵀ = cov` for a 2x2 PSD matrix.
fn factor(cov: &[[f64; 2]; 2]) -> Result<[[f64; 2]; 2]> {
    let [[a, b], [b2, c]] = *cov;
    let finite = [a, b, b2, c].iter().all(|v| v.is_finite());
    let tol = 1e-12 * (a.abs() + c.abs()).max(1.0);
    if !finite || (b - b2).abs() > tol {
        return Err(Error::invalid("covariance must be finite and symmetric"));
    }
    if a < -tol || c < -tol || a * c - b * b < -tol {
        return Err(Error::invalid("covariance must be positive semi-definite"));
    }
    let (a, c) = (a.max(0.0), c.max(0.0));
    if a == 0.0 {
        if b.abs() > tol {
            return Err(Error::invalid("covariance must be positive semi-definite"));
        }
        return Ok([[0.0, 0.0], [0.0, c.sqrt()]]);
    }
    let l11 = a.sqrt();
    let l21 = b / l11;
    Ok([[l11, 0.0], [l21, (c - l21 * l21).max(0.0).sqrt()]])
}

fn validate(spec: &SyntheticSpec2D) -> Result<Vec<[[f64; 2]; 2]>> {
    if spec.clusters.is_empty() {
        return Err(Error::invalid("at least one cluster is required"));
    }
    if !(0.0..=0.5).contains(&spec.label_flip) {
        return Err(Error::invalid("label_flip must lie in [0, 0.5]"));
    }
    spec.clusters
        .iter()
        .map(|c| {
            if c.count == 0 {
                return Err(Error::invalid("cluster counts must be at least 1"));
            }
            if c.y > 1 {
                return Err(Error::invalid("labels must be 0 or 1"));
            }
            if !c.mean.iter().all(|m| m.is_finite()) {
                return Err(Error::invalid("cluster means must be finite"));
            }
            factor(&c.cov)
        })
        .collect()
}

fn draw_point(r: &mut rng::Rng, c: &Cluster, l: &[[f64; 2]; 2]) -> Vec<f64> {
    let z0: f64 = StandardNormal.sample(r);
    let z1: f64 = StandardNormal.sample(r);
    vec![
        c.mean[0] + l[0][0] * z0,
        c.mean[1] + l[1][0] * z0 + l[1][1] * z1,
    ]
}

fn flip_labels(y: &[u8], rate: f64, seed: u64) -> Vec<u8> {
    if rate == 0.0 {
        return y.to_vec();
    }
    let mut r = rng::stream(seed, rng::TAG_FLIP, 0);
    y.iter()
        .map(|&v| if r.random::<f64>() < rate { 1 - v } else { v })
        .collect()
}

/// Exactly `count` points per cluster, clusters in order.
pub fn gen_2d(spec: &SyntheticSpec2D) -> Result<Dataset2D> {
    let factors = validate(spec)?;
    let total: usize = spec.clusters.iter().map(|c| c.count).sum();
    let mut d = Dataset2D {
        x: Vec::with_capacity(total),
        y: Vec::with_capacity(total),
        y_true: Vec::with_capacity(total),
        group: Vec::with_capacity(total),
        minority: Vec::with_capacity(total),
    };
    for (ci, (c, l)) in spec.clusters.iter().zip(&factors).enumerate() {
        let mut r = rng::stream(spec.seed, rng::TAG_DATA, ci as u64);
        for _ in 0..c.count {
            d.x.push(draw_point(&mut r, c, l));
            d.y_true.push(c.y);
            d.group.push(2 * c.y as usize + c.minority as usize);
            d.minority.push(c.minority);
        }
    }
    d.y = flip_labels(&d.y_true, spec.label_flip, spec.seed);
    Ok(d)
}

/// `total` i.i.d. points from the mixture with weights proportional to the
/// cluster counts. Labels are not flipped.
pub fn sample_mixture(spec: &SyntheticSpec2D, total: usize, seed: u64) -> Result<Dataset2D> {
    let factors = validate(spec)?;
    let weights: Vec<f64> = spec.clusters.iter().map(|c| c.count as f64).collect();
    let pick = rand_distr::weighted::WeightedIndex::new(&weights)
        .map_err(|e| Error::invalid(format!("cluster weights: {e}")))?;
    let mut r = rng::stream(seed, rng::TAG_DATA, u64::MAX);
    let mut d = Dataset2D {
        x: Vec::with_capacity(total),
        y: Vec::with_capacity(total),
        y_true: Vec::with_capacity(total),
        group: Vec::with_capacity(total),
        minority: Vec::with_capacity(total),
    };
    for _ in 0..total {
        let ci = pick.sample(&mut r);
        let c = &spec.clusters[ci];
        d.x.push(draw_point(&mut r, c, &factors[ci]));
        d.y_true.push(c.y);
        d.group.push(2 * c.y as usize + c.minority as usize);
        d.minority.push(c.minority);
    }
    d.y = d.y_true.clone();
    Ok(d)
}
