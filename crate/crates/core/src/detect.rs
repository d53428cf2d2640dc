//! Precision of flagging the minority group by loss rank, as a lower bound and
//! by simulation.
//!
//! Majority losses follow `dist0`, minority losses `dist1`. The detector
//! flags an example when the pooled empirical CDF of its loss exceeds `q`.

use rand::Rng as _;
use rand_distr::{Distribution, LogNormal, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, LogNormal as LogNormalCdf, Normal as NormalCdf};

use crate::error::{Error, Result};
use crate::metrics::empirical_cdf;
use crate::rng;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum LossDist {
    Gaussian {
        mean: f64,
        std: f64,
    },
    /// `exp(N(mu, sigma²))`
    LogNormal {
        mu: f64,
        sigma: f64,
    },
}

impl LossDist {
    fn validate(&self) -> Result<()> {
        let (a, b) = match *self {
            LossDist::Gaussian { mean, std } => (mean, std),
            LossDist::LogNormal { mu, sigma } => (mu, sigma),
        };
        if !(a.is_finite() && b.is_finite() && b > 0.0) {
            return Err(Error::invalid(
                "loss distribution needs finite location and positive scale",
            ));
        }
        if !(self.mean().is_finite() && self.std().is_finite()) {
            return Err(Error::invalid(
                "loss distribution must have finite variance",
            ));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match *self {
            LossDist::Gaussian { mean, .. } => mean,
            LossDist::LogNormal { mu, sigma } => (mu + sigma * sigma / 2.0).exp(),
        }
    }

    pub fn std(&self) -> f64 {
        match *self {
            LossDist::Gaussian { std, .. } => std,
            LossDist::LogNormal { mu, sigma } => {
                let s2 = sigma * sigma;
                ((s2.exp() - 1.0) * (2.0 * mu + s2).exp()).sqrt()
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            LossDist::Gaussian { mean, std } => {
                NormalCdf::new(mean, std).expect("validated").cdf(x)
            }
            LossDist::LogNormal { mu, sigma } => {
                LogNormalCdf::new(mu, sigma).expect("validated").cdf(x)
            }
        }
    }

    fn sampler(&self) -> Sampler {
        match *self {
            LossDist::Gaussian { mean, std } => {
                Sampler::N(Normal::new(mean, std).expect("validated"))
            }
            LossDist::LogNormal { mu, sigma } => {
                Sampler::L(LogNormal::new(mu, sigma).expect("validated"))
            }
        }
    }
}

enum Sampler {
    N(Normal<f64>),
    L(LogNormal<f64>),
}

impl Sampler {
    fn draw(&self, r: &mut rng::Rng) -> f64 {
        match self {
            Sampler::N(d) => d.sample(r),
            Sampler::L(d) => d.sample(r),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupLossModel {
    pub dist0: LossDist,
    pub dist1: LossDist,
    /// Majority prevalence.
    pub gamma0: f64,
}

impl GroupLossModel {
    pub fn new(dist0: LossDist, dist1: LossDist, gamma0: f64) -> Result<Self> {
        let m = Self {
            dist0,
            dist1,
            gamma0,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        self.dist0.validate()?;
        self.dist1.validate()?;
        if !(self.gamma0 > 0.0 && self.gamma0 < 1.0) {
            return Err(Error::invalid("gamma0 must lie in (0, 1)"));
        }
        if self.d() <= 0.0 {
            return Err(Error::invalid("minority losses must have the larger mean"));
        }
        Ok(())
    }

    /// `E[l₁] - E[l₀]`
    pub fn d(&self) -> f64 {
        self.dist1.mean() - self.dist0.mean()
    }

    /// `F₀(μ₀)`
    pub fn f0_mu0(&self) -> f64 {
        self.dist0.cdf(self.dist0.mean())
    }

    /// Upper end of the admissible `q` range, `d² / (d² + σ₀² + σ₁²)`.
    pub fn q_edge(&self) -> f64 {
        let d2 = self.d().powi(2);
        d2 / (d2 + self.dist0.std().powi(2) + self.dist1.std().powi(2))
    }
}

/// `(1-γ₀)² + γ₀(1-γ₀)/(1-q) · z²/(z²+1)` with `z` supplied.
pub fn precision_bound_from_z<T: Scalar>(z: T, gamma0: T, q: T) -> T {
    let one = T::one();
    let g1 = one - gamma0;
    let z2 = z * z;
    let frac = if z2.is_infinite() {
        one
    } else {
        z2 / (z2 + one)
    };
    g1 * g1 + gamma0 * g1 / (one - q) * frac
}

/// Lower bound on the precision from the moments of `F₀(l₁)`.
pub fn precision_lower_bound<T: Scalar>(mean_f0l1: T, var_f0l1: T, gamma0: T, q: T) -> Result<T> {
    if !(gamma0 > T::zero() && gamma0 < T::one()) {
        return Err(Error::invalid("gamma0 must lie in (0, 1)"));
    }
    if !(var_f0l1 >= T::zero()) {
        return Err(Error::invalid("variance must be non-negative"));
    }
    if !(q > T::zero() && q < mean_f0l1 && q < T::one()) {
        return Err(Error::BoundInapplicable(format!(
            "q = {q} must lie in (0, E[F0(l1)] = {mean_f0l1})"
        )));
    }
    let z = if var_f0l1 == T::zero() {
        T::infinity()
    } else {
        (mean_f0l1 - q) / var_f0l1.sqrt()
    };
    Ok(precision_bound_from_z(z, gamma0, q))
}

/// `(2/F₀(μ₀)) · √((σ₁²+d²)/σ₁²) · (d²/(d²+σ₀²+σ₁²) - q)`
pub fn z_lower_bound<T: Scalar>(d: T, sigma0: T, sigma1: T, f0_mu0: T, q: T) -> Result<T> {
    if !(d > T::zero() && sigma0 > T::zero() && sigma1 > T::zero()) {
        return Err(Error::invalid("d, sigma0 and sigma1 must be positive"));
    }
    if !(f0_mu0 > T::zero() && f0_mu0 <= T::one()) {
        return Err(Error::invalid("F0(mu0) must lie in (0, 1]"));
    }
    let d2 = d * d;
    let s1 = sigma1 * sigma1;
    let edge = d2 / (d2 + sigma0 * sigma0 + s1);
    if !(q > T::zero() && q <= edge) {
        return Err(Error::BoundInapplicable(format!(
            "q = {q} must lie in (0, {edge}]"
        )));
    }
    Ok(T::lit(2.0) / f0_mu0 * ((s1 + d2) / s1).sqrt() * (edge - q))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub q: f64,
    pub d: f64,
    pub sigma0: f64,
    pub sigma1: f64,
    #[serde(rename = "F0_mu0")]
    pub f0_mu0: f64,
    pub z_lower: f64,
    pub precision_lower: f64,
    pub q_valid_range: (f64, f64),
}

/// Chains the `z` bound into the precision bound for `model` at `q`.
pub fn bound_report(model: &GroupLossModel, q: f64) -> Result<BoundReport> {
    model.validate()?;
    let (d, s0, s1, f0) = (
        model.d(),
        model.dist0.std(),
        model.dist1.std(),
        model.f0_mu0(),
    );
    let z = z_lower_bound(d, s0, s1, f0, q)?;
    Ok(BoundReport {
        q,
        d,
        sigma0: s0,
        sigma1: s1,
        f0_mu0: f0,
        z_lower: z,
        precision_lower: precision_bound_from_z(z, model.gamma0, q),
        q_valid_range: (0.0, model.q_edge()),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

const CHUNK: usize = 4096;

/// `(is_minority, loss)` pairs, generated in fixed-size chunks with their own
/// streams.
fn draw_losses(model: &GroupLossModel, samples: usize, seed: u64) -> Vec<(bool, f64)> {
    let chunks = samples.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut r = rng::stream(seed, rng::TAG_DATA, c as u64);
            let s0 = model.dist0.sampler();
            let s1 = model.dist1.sampler();
            let len = CHUNK.min(samples - c * CHUNK);
            (0..len)
                .map(|_| {
                    let minority = r.random::<f64>() >= model.gamma0;
                    let l = if minority {
                        s1.draw(&mut r)
                    } else {
                        s0.draw(&mut r)
                    };
                    (minority, l)
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Fraction of flagged examples (`F(l) > q`) that come from the minority.
pub fn empirical_precision(
    model: &GroupLossModel,
    q: f64,
    samples: usize,
    seed: u64,
) -> Result<Estimate> {
    model.validate()?;
    if samples < 10_000 {
        return Err(Error::invalid(format!(
            "need at least 10000 samples, got {samples}"
        )));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::invalid("q must lie in (0, 1)"));
    }
    let draws = draw_losses(model, samples, seed);
    let losses: Vec<f64> = draws.iter().map(|d| d.1).collect();
    let f = empirical_cdf(&losses);
    let (mut flagged, mut hits) = (0usize, 0usize);
    for (d, &fi) in draws.iter().zip(&f) {
        if fi > q {
            flagged += 1;
            hits += d.0 as usize;
        }
    }
    if flagged == 0 {
        return Err(Error::UndefinedPrecision);
    }
    let p = hits as f64 / flagged as f64;
    Ok(Estimate {
        value: p,
        se: (p * (1.0 - p) / flagged as f64).sqrt(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct F0l1Moments {
    pub mean: f64,
    pub variance: f64,
    /// `Φ(d / √(σ₀² + σ₁²))` when both losses are Gaussian.
    pub closed_form_mean: Option<f64>,
}

/// Moments of `F₀(l₁)` with `l₁` drawn from the minority distribution.
pub fn moments_f0l1(model: &GroupLossModel, samples: usize, seed: u64) -> Result<F0l1Moments> {
    model.validate()?;
    if samples < 10_000 {
        return Err(Error::invalid(format!(
            "need at least 10000 samples, got {samples}"
        )));
    }
    let chunks = samples.div_ceil(CHUNK);
    let vals: Vec<f64> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut r = rng::stream(seed, rng::TAG_MC, c as u64);
            let s1 = model.dist1.sampler();
            let len = CHUNK.min(samples - c * CHUNK);
            (0..len)
                .map(|_| model.dist0.cdf(s1.draw(&mut r)))
                .collect::<Vec<_>>()
        })
        .collect();
    let m = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / m;
    let variance = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    let closed_form_mean = match (model.dist0, model.dist1) {
        (LossDist::Gaussian { std: s0, .. }, LossDist::Gaussian { std: s1, .. }) => {
            let z = model.d() / (s0 * s0 + s1 * s1).sqrt();
            Some(NormalCdf::new(0.0, 1.0).expect("standard normal").cdf(z))
        }
        _ => None,
    };
    Ok(F0l1Moments {
        mean,
        variance,
        closed_form_mean,
    })
}
