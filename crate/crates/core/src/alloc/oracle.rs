//! Numeric minimizer of the frontier risk over the simplex, independent of the
//! closed-form solvers. Used to cross-check them.

use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng;
use crate::scaling::{
    check_laws, frontier_risk_unchecked, Allocation, GroupDistribution, GroupScalingLaw,
    TradeoffWeight,
};

/// Lower bound on every coordinate during the search.
const EPS: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct OracleConfig {
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
    /// Run the 1e-3 grid scan (only honoured for at most three groups).
    pub grid_scan: bool,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            restarts: 50,
            max_iter: 400,
            seed: 0,
            grid_scan: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OracleResult {
    pub allocation: Allocation<f64>,
    pub risk: f64,
    /// Risk of the best point of the grid scan, when it ran.
    pub grid_risk: Option<f64>,
    /// False when the result is worse than the grid scan by more than the
    /// tolerance, or the refinement hit its iteration cap.
    pub converged: bool,
    pub warning: Option<String>,
}

struct Problem<'a> {
    laws: &'a [GroupScalingLaw<f64>],
    gamma: &'a [f64],
    n: f64,
    w: TradeoffWeight<f64>,
}

impl Problem<'_> {
    fn risk(&self, a: &[f64]) -> f64 {
        frontier_risk_unchecked(self.laws, self.gamma, a, self.n, self.w)
    }

    /// Gradient of the objective with the max replaced by a soft maximum at
    /// temperature `mu`.
    fn smooth_grad(&self, a: &[f64], mu: f64, out: &mut [f64]) {
        let r: Vec<f64> = self
            .laws
            .iter()
            .zip(a)
            .map(|(l, &x)| l.risk_unchecked(x * self.n, self.n))
            .collect();
        let rmax = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = r.iter().map(|&x| ((x - rmax) / mu).exp()).collect();
        let z: f64 = e.iter().sum();
        for g in 0..a.len() {
            let l = &self.laws[g];
            let dr = -l.p * l.c * (a[g] * self.n).powf(-l.p) / a[g];
            out[g] = (self.w.omega_acc * self.gamma[g] + self.w.omega_fair * e[g] / z) * dr;
        }
    }
}

/// Euclidean projection onto `{x : x_i >= eps, sum x = 1}`.
pub(crate) fn project_simplex(y: &[f64], eps: f64) -> Vec<f64> {
    let k = y.len();
    let mass = 1.0 - eps * k as f64;
    let mut s: Vec<f64> = y.iter().map(|v| v - eps).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut shift = 0.0;
    for (i, v) in s.iter().enumerate() {
        cum += v;
        let t = (cum - mass) / (i + 1) as f64;
        if v - t > 0.0 {
            shift = t;
        }
    }
    let x: Vec<f64> = y.iter().map(|v| (v - eps - shift).max(0.0) + eps).collect();
    // Huge steps lose digits in the shift; renormalize the result.
    let s: f64 = x.iter().sum();
    x.into_iter().map(|v| v / s).collect()
}

fn random_start(seed: u64, restart: usize, k: usize) -> Vec<f64> {
    if restart == 0 {
        return vec![1.0 / k as f64; k];
    }
    let mut r = rng::stream(seed, rng::TAG_ORACLE, restart as u64);
    let e: Vec<f64> = (0..k).map(|_| -(1.0 - r.random::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    project_simplex(&e.iter().map(|x| x / s).collect::<Vec<_>>(), EPS)
}

fn pgd(prob: &Problem, mut x: Vec<f64>, max_iter: usize) -> Vec<f64> {
    let k = x.len();
    let scale = prob.risk(&x).abs().max(1e-12);
    let mut mu = 1e-2 * scale;
    let mut g = vec![0.0; k];
    let mut g2 = vec![0.0; k];
    for _ in 0..max_iter {
        prob.smooth_grad(&x, mu, &mut g);
        // Local Lipschitz estimate from a finite difference along the gradient.
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gn == 0.0 || !gn.is_finite() {
            break;
        }
        let h = 1e-6 * x.iter().cloned().fold(f64::INFINITY, f64::min).max(EPS);
        let probe = project_simplex(
            &x.iter()
                .zip(&g)
                .map(|(a, d)| a - h * d / gn)
                .collect::<Vec<_>>(),
            EPS,
        );
        let dist = probe
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        prob.smooth_grad(&probe, mu, &mut g2);
        let dg = g2
            .iter()
            .zip(&g)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let mut lip = if dist > 0.0 {
            (dg / dist).max(1e-12)
        } else {
            gn
        };
        let f0 = prob.risk(&x);
        let mut moved = false;
        for _ in 0..60 {
            let cand = project_simplex(
                &x.iter()
                    .zip(&g)
                    .map(|(a, d)| a - d / lip)
                    .collect::<Vec<_>>(),
                EPS,
            );
            if prob.risk(&cand) <= f0 {
                moved = cand != x;
                x = cand;
                break;
            }
            lip *= 2.0;
        }
        mu = (mu * 0.97).max(1e-12 * scale);
        if !moved && mu <= 1e-12 * scale {
            break;
        }
    }
    x
}

/// Zooming pattern search on a local lattice spanned by `e_i - e_last`.
fn refine(prob: &Problem, mut x: Vec<f64>) -> (Vec<f64>, bool) {
    let k = x.len();
    if k == 1 {
        return (x, true);
    }
    let (radius, mut h): (i64, f64) = if k <= 3 { (10, 1e-2) } else { (2, 5e-2) };
    let dims = k - 1;
    let side = (2 * radius + 1) as usize;
    let points = side.pow(dims as u32);
    let mut fx = prob.risk(&x);
    let mut budget = 20_000usize;
    let mut cand = vec![0.0; k];
    while h > 1e-12 {
        if budget == 0 {
            return (x, false);
        }
        budget -= 1;
        let mut best: Option<(f64, Vec<f64>)> = None;
        for idx in 0..points {
            let mut rem = idx;
            let mut last = x[k - 1];
            let mut ok = true;
            for (i, c) in cand.iter_mut().enumerate().take(dims) {
                let step = (rem % side) as i64 - radius;
                rem /= side;
                *c = x[i] + step as f64 * h;
                last -= step as f64 * h;
                if *c < EPS {
                    ok = false;
                }
            }
            cand[k - 1] = last;
            if !ok || last < EPS {
                continue;
            }
            let f = prob.risk(&cand);
            if f < fx && best.as_ref().is_none_or(|(bf, _)| f < *bf) {
                best = Some((f, cand.clone()));
            }
        }
        match best {
            Some((f, c)) => {
                fx = f;
                x = c;
            }
            None => h /= 4.0,
        }
    }
    (x, true)
}

fn grid_scan(prob: &Problem) -> Option<(f64, Vec<f64>)> {
    let k = prob.gamma.len();
    let steps = 1000usize;
    let h = 1.0 / steps as f64;
    match k {
        1 => Some((prob.risk(&[1.0]), vec![1.0])),
        2 => (1..steps)
            .map(|i| {
                let a = vec![i as f64 * h, 1.0 - i as f64 * h];
                (prob.risk(&a), a)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0)),
        3 => (1..steps)
            .into_par_iter()
            .filter_map(|i| {
                (1..steps - i)
                    .map(|j| {
                        let a = vec![i as f64 * h, j as f64 * h, 1.0 - (i + j) as f64 * h];
                        (prob.risk(&a), a)
                    })
                    .min_by(|a, b| a.0.total_cmp(&b.0))
            })
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1[0].total_cmp(&b.1[0]))),
        _ => None,
    }
}

/// Minimizes `ω_acc · population + ω_fair · worst-group` risk over allocations.
pub fn oracle_minimize_frontier(
    laws: &[GroupScalingLaw<f64>],
    gamma: &GroupDistribution<f64>,
    n: f64,
    w: TradeoffWeight<f64>,
    tolerance: f64,
) -> Result<OracleResult> {
    oracle_minimize_frontier_with(laws, gamma, n, w, tolerance, &OracleConfig::default())
}

pub fn oracle_minimize_frontier_with(
    laws: &[GroupScalingLaw<f64>],
    gamma: &GroupDistribution<f64>,
    n: f64,
    w: TradeoffWeight<f64>,
    tolerance: f64,
    cfg: &OracleConfig,
) -> Result<OracleResult> {
    check_laws(laws)?;
    let k = laws.len();
    if gamma.len() != k {
        return Err(Error::invalid("gamma and laws differ in length"));
    }
    if k > 6 {
        return Err(Error::invalid(format!(
            "oracle supports at most 6 groups, got {k}"
        )));
    }
    if !(n.is_finite() && n > 0.0) {
        return Err(Error::invalid("n must be positive"));
    }
    if cfg.restarts == 0 {
        return Err(Error::invalid("oracle needs at least one restart"));
    }
    let prob = Problem {
        laws,
        gamma: gamma.as_slice(),
        n,
        w,
    };
    let grid = if cfg.grid_scan {
        grid_scan(&prob)
    } else {
        None
    };

    let mut runs: Vec<(usize, f64, Vec<f64>, bool)> = (0..cfg.restarts)
        .into_par_iter()
        .map(|i| {
            let x = pgd(&prob, random_start(cfg.seed, i, k), cfg.max_iter);
            let (x, ok) = refine(&prob, x);
            (i, prob.risk(&x), x, ok)
        })
        .collect();
    if let Some((_, g)) = &grid {
        let (x, ok) = refine(&prob, g.clone());
        runs.push((cfg.restarts, prob.risk(&x), x, ok));
    }
    let (_, risk, x, ok) = runs
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .expect("at least one run");

    let grid_risk = grid.map(|(r, _)| r);
    let mut warning = None;
    let mut converged = ok;
    if !ok {
        warning = Some("local refinement reached its iteration cap".to_string());
    }
    if let Some(gr) = grid_risk {
        if risk > gr + tolerance {
            converged = false;
            warning = Some(format!(
                "oracle risk {risk} exceeds grid-scan risk {gr} by more than {tolerance}"
            ));
        }
    }
    Ok(OracleResult {
        allocation: Allocation::new(x)?,
        risk,
        grid_risk,
        converged,
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_laws_give_uniform() {
        let l = GroupScalingLaw::new(1.5, 0.8, 0.2, 1.0, 0.05).unwrap();
        let laws = vec![l.clone(), l.clone(), l];
        let g = GroupDistribution::uniform(3).unwrap();
        for om in [0.0, 0.5, 1.0] {
            let w = TradeoffWeight::from_omega(om).unwrap();
            let r = oracle_minimize_frontier(&laws, &g, 100.0, w, 1e-9).unwrap();
            assert!(r.converged, "{:?}", r.warning);
            for a in r.allocation.as_slice() {
                assert!((a - 1.0 / 3.0).abs() < 1e-6, "{a}");
            }
        }
    }

    #[test]
    fn two_group_population_optimum() {
        // min 0.5/(an) + 0.5·4/((1-a)n): a = 1/3.
        let laws = vec![
            GroupScalingLaw::power(1.0, 1.0).unwrap(),
            GroupScalingLaw::power(4.0, 1.0).unwrap(),
        ];
        let g = GroupDistribution::uniform(2).unwrap();
        let w = TradeoffWeight::from_omega(1.0).unwrap();
        let r = oracle_minimize_frontier(&laws, &g, 10.0, w, 1e-9).unwrap();
        assert!((r.allocation.as_slice()[0] - 1.0 / 3.0).abs() < 1e-7);
    }

    #[test]
    fn worst_case_equalizes_risks() {
        let laws = vec![
            GroupScalingLaw::power(1.0, 1.0).unwrap(),
            GroupScalingLaw::power(4.0, 1.0).unwrap(),
        ];
        let g = GroupDistribution::uniform(2).unwrap();
        let w = TradeoffWeight::from_omega(0.0).unwrap();
        let r = oracle_minimize_frontier(&laws, &g, 10.0, w, 1e-9).unwrap();
        assert!((r.allocation.as_slice()[0] - 0.2).abs() < 1e-7);
    }

    #[test]
    fn five_groups_run_without_grid() {
        let laws: Vec<_> = (1..=5)
            .map(|c| GroupScalingLaw::power(c as f64, 0.5).unwrap())
            .collect();
        let g = GroupDistribution::uniform(5).unwrap();
        let w = TradeoffWeight::from_omega(1.0).unwrap();
        let r = oracle_minimize_frontier(&laws, &g, 100.0, w, 1e-9).unwrap();
        assert!(r.grid_risk.is_none());
        // α ∝ c^(1/(p+1)) = c^(2/3)
        let z: f64 = (1..=5).map(|c| (c as f64).powf(2.0 / 3.0)).sum();
        for (i, a) in r.allocation.as_slice().iter().enumerate() {
            let want = ((i + 1) as f64).powf(2.0 / 3.0) / z;
            assert!((a - want).abs() < 1e-5, "{i}: {a} vs {want}");
        }
    }

    #[test]
    fn rejects_too_many_groups() {
        let laws = vec![GroupScalingLaw::power(1.0, 1.0).unwrap(); 7];
        let g = GroupDistribution::uniform(7).unwrap();
        let w = TradeoffWeight::from_omega(1.0).unwrap();
        assert!(oracle_minimize_frontier(&laws, &g, 10.0, w, 1e-6).is_err());
    }

    proptest! {
        #[test]
        fn projection_lands_on_floored_simplex(y in prop::collection::vec(-3.0f64..3.0, 1..7)) {
            let x = project_simplex(&y, 1e-6);
            let s: f64 = x.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(x.iter().all(|v| *v >= 1e-6 - 1e-15));
            // Projecting a feasible point is the identity.
            let again = project_simplex(&x, 1e-6);
            for (a, b) in x.iter().zip(&again) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
