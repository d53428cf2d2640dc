//! Noise, bias and variance of per-group ridge estimates under a one-hot
//! (orthogonal) design, in closed form and by simulation.
//!
//! Each observation in group `g` is `y = θ_g + σ_g ε`. The ridge estimate of a
//! group's effect is `β̂_g = Σ_i y_i / (n_g + λ)`. Squared error against a fresh
//! draw from the group splits into `σ_g²`, `(λ θ_g)² / (n_g + λ)²` and
//! `σ_g² n_g / (n_g + λ)²`.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgeOrthogonalProblem<T> {
    pub theta: Vec<T>,
    /// One entry for homogeneous noise, otherwise one per group.
    pub sigma: Vec<T>,
    pub group_sizes: Vec<u64>,
    pub ridge: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Decomposition<T> {
    pub noise: T,
    pub bias: T,
    pub variance: T,
}

impl<T: Scalar> Decomposition<T> {
    pub fn total(&self) -> T {
        self.noise + self.bias + self.variance
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MonteCarloDecomposition {
    pub estimate: Decomposition<f64>,
    /// Jackknife standard errors of each component.
    pub se: Decomposition<f64>,
    /// Mean squared error against the fresh draw, and its standard error.
    pub total: f64,
    pub se_total: f64,
}

impl<T: Scalar> RidgeOrthogonalProblem<T> {
    pub fn new(theta: Vec<T>, sigma: Vec<T>, group_sizes: Vec<u64>, ridge: T) -> Result<Self> {
        let p = Self {
            theta,
            sigma,
            group_sizes,
            ridge,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.theta.len();
        if g == 0 {
            return Err(Error::invalid("at least one group is required"));
        }
        if self.group_sizes.len() != g {
            return Err(Error::invalid("group_sizes and theta differ in length"));
        }
        if self.sigma.len() != 1 && self.sigma.len() != g {
            return Err(Error::invalid(
                "sigma must have length 1 or one entry per group",
            ));
        }
        if self.theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("theta must be finite"));
        }
        if self
            .sigma
            .iter()
            .any(|s| !(s.is_finite() && *s > T::zero()))
        {
            return Err(Error::invalid("sigma entries must be positive"));
        }
        if self.group_sizes.contains(&0) {
            return Err(Error::invalid("group sizes must be at least 1"));
        }
        if !(self.ridge.is_finite() && self.ridge >= T::zero()) {
            return Err(Error::invalid("ridge must be non-negative"));
        }
        Ok(())
    }

    pub fn groups(&self) -> usize {
        self.theta.len()
    }

    pub fn sigma_of(&self, g: usize) -> T {
        if self.sigma.len() == 1 {
            self.sigma[0]
        } else {
            self.sigma[g]
        }
    }

    fn check_group(&self, g: usize) -> Result<()> {
        self.validate()?;
        if g >= self.groups() {
            return Err(Error::invalid(format!(
                "group {g} out of range for {} groups",
                self.groups()
            )));
        }
        Ok(())
    }
}

pub fn closed_form<T: Scalar>(
    problem: &RidgeOrthogonalProblem<T>,
    g: usize,
) -> Result<Decomposition<T>> {
    problem.check_group(g)?;
    let s2 = problem.sigma_of(g).powi(2);
    let ng = T::lit(problem.group_sizes[g] as f64);
    let lam = problem.ridge;
    let den = (ng + lam).powi(2);
    Ok(Decomposition {
        noise: s2,
        bias: (lam * problem.theta[g]).powi(2) / den,
        variance: s2 * ng / den,
    })
}

/// Jackknife standard error of `stat` over samples summarized by running sums.
fn jackknife_se(loo: impl Iterator<Item = f64>, m: usize) -> f64 {
    let vals: Vec<f64> = loo.collect();
    let mean = vals.iter().sum::<f64>() / m as f64;
    let ss: f64 = vals.iter().map(|v| (v - mean).powi(2)).sum();
    ((m as f64 - 1.0) / m as f64 * ss).sqrt()
}

/// Simulates `trials` datasets for group `g`, each with one extra draw used as
/// the test point.
pub fn monte_carlo(
    problem: &RidgeOrthogonalProblem<f64>,
    g: usize,
    trials: usize,
    seed: u64,
) -> Result<MonteCarloDecomposition> {
    problem.check_group(g)?;
    if trials < 1000 {
        return Err(Error::invalid(format!(
            "need at least 1000 trials, got {trials}"
        )));
    }
    let theta = problem.theta[g];
    let sigma = problem.sigma_of(g);
    let ng = problem.group_sizes[g];
    let den = ng as f64 + problem.ridge;
    let draws: Vec<(f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut r = rng::stream(seed, rng::TAG_MC, ((g as u64) << 40) | t as u64);
            let mut sum = 0.0;
            for _ in 0..ng {
                let e: f64 = StandardNormal.sample(&mut r);
                sum += theta + sigma * e;
            }
            let e: f64 = StandardNormal.sample(&mut r);
            (sum / den, (sigma * e).powi(2))
        })
        .collect();

    let m = trials as f64;
    let s1: f64 = draws.iter().map(|d| d.0).sum();
    let s2: f64 = draws.iter().map(|d| d.0 * d.0).sum();
    let sn: f64 = draws.iter().map(|d| d.1).sum();
    let sn2: f64 = draws.iter().map(|d| d.1 * d.1).sum();

    let bias_of = |s1: f64, k: f64| (theta - s1 / k).powi(2);
    let var_of = |s1: f64, s2: f64, k: f64| (s2 - s1 * s1 / k) / (k - 1.0);

    let noise = sn / m;
    let bias = bias_of(s1, m);
    let variance = var_of(s1, s2, m);

    let se_noise = ((sn2 / m - noise * noise) / (m - 1.0)).max(0.0).sqrt();
    let se_bias = jackknife_se(draws.iter().map(|d| bias_of(s1 - d.0, m - 1.0)), trials);
    let se_var = jackknife_se(
        draws
            .iter()
            .map(|d| var_of(s1 - d.0, s2 - d.0 * d.0, m - 1.0)),
        trials,
    );

    // Squared error against the test draw: (θ + σε - β̂)^2 expands to noise +
    // (θ - β̂)^2 + a cross term with zero mean.
    let err: Vec<f64> = draws.iter().map(|d| d.1 + (theta - d.0).powi(2)).collect();
    let total = err.iter().sum::<f64>() / m;
    let se_total = (err.iter().map(|e| (e - total).powi(2)).sum::<f64>() / (m - 1.0) / m).sqrt();
    Ok(MonteCarloDecomposition {
        estimate: Decomposition {
            noise,
            bias,
            variance,
        },
        se: Decomposition {
            noise: se_noise,
            bias: se_bias,
            variance: se_var,
        },
        total,
        se_total,
    })
}

/// First-order change in the signed bias `λθ_g/(n_g+λ)` when the group's
/// share moves from `gamma_star` to `gamma_g`:
/// `λ θ_g (γ* - γ) / (n γ* γ)`.
pub fn excess_bias<T: Scalar>(
    problem: &RidgeOrthogonalProblem<T>,
    g: usize,
    gamma_g: T,
    gamma_star: T,
    n: T,
) -> Result<T> {
    problem.check_group(g)?;
    let unit = |x: T| x > T::zero() && x < T::one();
    if !unit(gamma_g) || !unit(gamma_star) {
        return Err(Error::invalid("group shares must lie in (0, 1)"));
    }
    if !(n.is_finite() && n * gamma_g >= T::one()) {
        return Err(Error::invalid("n * gamma_g must be at least 1"));
    }
    Ok(problem.ridge * problem.theta[g] * (gamma_star - gamma_g) / (n * gamma_star * gamma_g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn one(theta: f64, sigma: f64, n: u64, lam: f64) -> RidgeOrthogonalProblem<f64> {
        RidgeOrthogonalProblem::new(vec![theta], vec![sigma], vec![n], lam).unwrap()
    }

    #[test]
    fn plug_in_example() {
        let d = closed_form(&one(2.0, 1.0, 10, 5.0), 0).unwrap();
        assert_relative_eq!(d.noise, 1.0);
        assert_relative_eq!(d.bias, 100.0 / 225.0, epsilon = 1e-15);
        assert_relative_eq!(d.variance, 10.0 / 225.0, epsilon = 1e-15);
    }

    #[test]
    fn unregularized_limit() {
        let d = closed_form(&one(3.0, 2.0, 8, 0.0), 0).unwrap();
        assert_eq!(d.bias, 0.0);
        assert_relative_eq!(d.variance, 4.0 / 8.0);
    }

    #[test]
    fn large_group_limit() {
        let d = closed_form(&one(3.0, 2.0, 10_000_000, 5.0), 0).unwrap();
        assert!(d.bias < 1e-11 && d.variance < 1e-6);
    }

    #[test]
    fn heterogeneous_noise_is_per_group() {
        let p =
            RidgeOrthogonalProblem::new(vec![1.0, 1.0], vec![0.5, 2.0], vec![5, 5], 1.0).unwrap();
        assert_relative_eq!(closed_form(&p, 0).unwrap().noise, 0.25);
        assert_relative_eq!(closed_form(&p, 1).unwrap().noise, 4.0);
        let mc = monte_carlo(&p, 1, 4000, 3).unwrap();
        assert!((mc.estimate.noise - 4.0).abs() < 4.0 * mc.se.noise);
        assert!(closed_form(&p, 2).is_err());
    }

    #[test]
    fn monte_carlo_matches_example() {
        let p = one(2.0, 1.0, 10, 5.0);
        let cf = closed_form(&p, 0).unwrap();
        let mc = monte_carlo(&p, 0, 10_000, 11).unwrap();
        for (a, b, se) in [
            (cf.noise, mc.estimate.noise, mc.se.noise),
            (cf.bias, mc.estimate.bias, mc.se.bias),
            (cf.variance, mc.estimate.variance, mc.se.variance),
            (cf.total(), mc.total, mc.se_total),
        ] {
            assert!((a - b).abs() <= 3.0 * se, "{a} vs {b} ± {se}");
        }
    }

    #[test]
    fn zero_effect_has_no_bias() {
        let mc = monte_carlo(&one(0.0, 1.0, 10, 5.0), 0, 5000, 1).unwrap();
        assert!(mc.estimate.bias < 1e-3);
    }

    #[test]
    fn monte_carlo_is_reproducible_and_validated() {
        let p = one(1.0, 1.0, 4, 2.0);
        assert_eq!(
            monte_carlo(&p, 0, 1000, 5).unwrap(),
            monte_carlo(&p, 0, 1000, 5).unwrap()
        );
        assert!(monte_carlo(&p, 0, 999, 5).is_err());
    }

    #[test]
    fn bias_up_variance_down_in_ridge() {
        let grid: Vec<f64> = (0..20).map(|i| i as f64 * 0.5).collect();
        let ds: Vec<_> = grid
            .iter()
            .map(|&l| closed_form(&one(1.5, 1.0, 12, l), 0).unwrap())
            .collect();
        for w in ds.windows(2) {
            assert!(w[1].bias > w[0].bias);
            assert!(w[1].variance < w[0].variance);
        }
    }

    #[test]
    fn excess_bias_first_order() {
        let p = one(2.0, 1.0, 1, 5.0);
        let n = 1e4;
        assert_eq!(excess_bias(&p, 0, 0.3, 0.3, n).unwrap(), 0.0);
        let (gam, star) = (0.1, 0.3);
        let approx_v = excess_bias(&p, 0, gam, star, n).unwrap();
        assert!(approx_v > 0.0);
        let signed = |share: f64| {
            let q = one(2.0, 1.0, (share * n).round() as u64, 5.0);
            closed_form(&q, 0).unwrap().bias.sqrt()
        };
        let exact = signed(gam) - signed(star);
        assert!(
            ((approx_v - exact) / exact).abs() <= 0.1,
            "{approx_v} vs {exact}"
        );
        assert!(excess_bias(&p, 0, 0.0, 0.3, n).is_err());
    }
}
