use grouprisk::alloc::*;
use grouprisk::scaling::{
    frontier_risk, Allocation, GroupDistribution, GroupScalingLaw, TradeoffWeight,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Instance {
    laws: Vec<GroupScalingLaw<f64>>,
    gamma: GroupDistribution<f64>,
    n: f64,
}

fn simplex(r: &mut ChaCha8Rng, k: usize, lo: f64) -> Vec<f64> {
    let v: Vec<f64> = (0..k).map(|_| r.random_range(lo..1.0)).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

fn instance(seed: u64, k: usize, shared_nuisance: bool) -> Instance {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let p = r.random_range(0.3..1.5);
    let (tau, q, delta) = (
        r.random_range(0.0..1.0),
        r.random_range(0.2..1.0),
        r.random_range(0.0..0.2),
    );
    let laws = (0..k)
        .map(|_| {
            let c = r.random_range(0.2..5.0);
            if shared_nuisance {
                GroupScalingLaw::new(c, p, tau, q, delta).unwrap()
            } else {
                GroupScalingLaw::new(
                    c,
                    p,
                    r.random_range(0.0..1.0),
                    r.random_range(0.2..1.0),
                    r.random_range(0.0..0.2),
                )
                .unwrap()
            }
        })
        .collect();
    Instance {
        laws,
        gamma: GroupDistribution::new(simplex(&mut r, k, 0.05)).unwrap(),
        n: 10f64.powf(r.random_range(2.0..4.0)),
    }
}

#[test]
fn weighted_matches_oracle_on_random_instances() {
    for s in 0..5 {
        let inst = instance(100 + s, 3, false);
        let w = WeightedRiskWeights::new(inst.gamma.as_slice().to_vec()).unwrap();
        let a = weighted_allocation_shared_p(&inst.laws, &w).unwrap();
        let om = TradeoffWeight::from_omega(1.0).unwrap();
        let o = oracle_minimize_frontier(&inst.laws, &inst.gamma, inst.n, om, 1e-9).unwrap();
        assert!(a.sup_distance(&o.allocation) < 1e-4, "seed {s}");
    }
}

#[test]
fn general_p_matches_oracle() {
    let laws = vec![
        GroupScalingLaw::power(1.0, 0.5).unwrap(),
        GroupScalingLaw::power(2.0, 1.0).unwrap(),
    ];
    let w = WeightedRiskWeights::new(vec![0.3, 0.7]).unwrap();
    let a = weighted_allocation_general_p(&laws, &w, 100.0).unwrap();
    let g = GroupDistribution::new(vec![0.3, 0.7]).unwrap();
    let om = TradeoffWeight::from_omega(1.0).unwrap();
    let o = oracle_minimize_frontier(&laws, &g, 100.0, om, 1e-9).unwrap();
    assert!(a.sup_distance(&o.allocation) < 1e-4);
}

#[test]
fn worst_case_two_group_saddle() {
    // max over v of Σ v_g risk_g equals max_g risk_g; compare with the v-grid
    // minimax computed from the inner weighted optimum.
    let laws = vec![
        GroupScalingLaw::new(1.0, 1.0, 0.0, 1.0, 0.0).unwrap(),
        GroupScalingLaw::new(1.0, 1.0, 0.0, 1.0, 0.2).unwrap(),
    ];
    let n = 100.0;
    let sol = worstcase_allocation_shared_p(&laws, n).unwrap();
    let mut best = f64::NEG_INFINITY;
    for i in 1..10_000 {
        let v = i as f64 / 10_000.0;
        let w = WeightedRiskWeights::new(vec![v, 1.0 - v]).unwrap();
        let a = weighted_allocation_shared_p(&laws, &w).unwrap();
        let val = v * laws[0].risk_unchecked(a.as_slice()[0] * n, n)
            + (1.0 - v) * laws[1].risk_unchecked(a.as_slice()[1] * n, n);
        best = best.max(val);
    }
    assert!((best - sol.risk).abs() < 1e-3, "{best} vs {}", sol.risk);
}

#[test]
fn frontier_matches_oracle() {
    for s in 0..6 {
        let inst = instance(200 + s, 3, true);
        let om = 0.1 + 0.15 * s as f64;
        let sol = frontier_allocation(&inst.laws, &inst.gamma, inst.n, om).unwrap();
        let w = TradeoffWeight::from_omega(om).unwrap();
        let o = oracle_minimize_frontier(&inst.laws, &inst.gamma, inst.n, w, 1e-9).unwrap();
        assert!(sol.alpha.sup_distance(&o.allocation) < 1e-3, "seed {s}");
        assert!(sol.risk <= o.risk + 1e-9);
        assert!(sol.kkt.sum_theta_gamma < 1e-10);
        assert!(sol.kkt.theta_below_omega <= 0.0);
        assert!(sol.kkt.argmax_gap < 1e-8);
    }
}

#[test]
fn sufficient_set_is_inside_frontier_set() {
    for s in 0..20 {
        let inst = instance(300 + s, 4, true);
        let om = 0.1 + 0.04 * s as f64;
        let w = TradeoffWeight::from_omega(om).unwrap();
        let sol = frontier_allocation(&inst.laws, &inst.gamma, inst.n, om).unwrap();
        let suff = sufficient_underrep(&inst.laws, &inst.gamma, w, inst.n, &[1.0; 4]).unwrap();
        for g in suff {
            assert!(
                sol.underrep_set.contains(&g),
                "seed {s}: {g} not in {:?}",
                sol.underrep_set
            );
        }
    }
}

#[test]
fn threshold_selection_reproduces_set() {
    let mut checked = 0;
    for s in 0..20 {
        let inst = instance(400 + s, 4, true);
        let om = 0.2 + 0.03 * s as f64;
        let sol = frontier_allocation(&inst.laws, &inst.gamma, inst.n, om).unwrap();
        if sol.underrep_set.is_empty() {
            continue;
        }
        let w = TradeoffWeight::from_omega(om).unwrap();
        let t = selection_threshold(&inst.laws, &inst.gamma, &sol.underrep_set, w, inst.n).unwrap();
        let mut picked: Vec<usize> = (0..4)
            .filter(|&g| {
                let ng = inst.gamma.as_slice()[g] * inst.n;
                inst.laws[g].risk_unchecked(ng, inst.n) > t
            })
            .collect();
        let mut b = sol.underrep_set.clone();
        picked.sort();
        b.sort();
        assert_eq!(picked, b, "seed {s}");
        checked += 1;
    }
    assert!(checked >= 10);
}

#[test]
fn frontier_risk_is_reported_consistently() {
    let inst = instance(7, 3, true);
    let sol = frontier_allocation(&inst.laws, &inst.gamma, inst.n, 0.4).unwrap();
    let w = TradeoffWeight::from_omega(0.4).unwrap();
    let r = frontier_risk(&inst.laws, &inst.gamma, &sol.alpha, inst.n, w).unwrap();
    assert_eq!(r, sol.risk);
}

fn permute<T: Clone>(v: &[T], perm: &[usize]) -> Vec<T> {
    perm.iter().map(|&i| v[i].clone()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solvers_are_permutation_equivariant(seed in 0u64..10_000, om in 0.0f64..1.0,
                                           perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle()) {
        let inst = instance(seed, 4, true);
        let pl = permute(&inst.laws, &perm);
        let pg = GroupDistribution::new(permute(inst.gamma.as_slice(), &perm)).unwrap();

        let a = frontier_allocation(&inst.laws, &inst.gamma, inst.n, om).unwrap();
        let b = frontier_allocation(&pl, &pg, inst.n, om).unwrap();
        let a_perm = Allocation::new(permute(a.alpha.as_slice(), &perm)).unwrap();
        prop_assert!(a_perm.sup_distance(&b.alpha) < 1e-12);

        let wa = worstcase_allocation_shared_all(&inst.laws).unwrap();
        let wb = worstcase_allocation_shared_all(&pl).unwrap();
        prop_assert!(Allocation::new(permute(wa.as_slice(), &perm)).unwrap().sup_distance(&wb) < 1e-12);

        let hetero = instance(seed, 4, false);
        let hl = permute(&hetero.laws, &perm);
        let sa = worstcase_allocation_shared_p(&hetero.laws, hetero.n).unwrap();
        let sb = worstcase_allocation_shared_p(&hl, hetero.n).unwrap();
        prop_assert!(Allocation::new(permute(sa.alpha.as_slice(), &perm)).unwrap().sup_distance(&sb.alpha) < 1e-9);
    }

    #[test]
    fn allocations_are_interior(seed in 0u64..10_000, om in 0.0f64..1.0) {
        let inst = instance(seed, 3, false);
        let w = WeightedRiskWeights::new(inst.gamma.as_slice().to_vec()).unwrap();
        let outs = vec![
            weighted_allocation_shared_p(&inst.laws, &w).unwrap(),
            weighted_allocation_general_p(&inst.laws, &w, inst.n).unwrap(),
            worstcase_allocation_shared_p(&inst.laws, inst.n).unwrap().alpha,
            frontier_allocation(&inst.laws, &inst.gamma, inst.n, om).unwrap().alpha,
        ];
        for a in outs {
            let s: f64 = a.as_slice().iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-10);
            prop_assert!(a.as_slice().iter().all(|&x| x > 0.0 && x < 1.0));
        }
    }

    #[test]
    fn frontier_invariants(seed in 0u64..10_000, om in 0.0f64..1.0) {
        let inst = instance(seed, 5, true);
        let sol = frontier_allocation(&inst.laws, &inst.gamma, inst.n, om).unwrap();
        prop_assert!(sol.kkt.sum_theta_gamma <= 1e-10);
        prop_assert!(sol.theta.iter().all(|&t| t >= om));
        for (g, &t) in sol.theta.iter().enumerate() {
            prop_assert_eq!(t > om, sol.underrep_set.contains(&g));
        }
        // Prefix of the ascending key order.
        let mut order: Vec<usize> = (0..5).collect();
        order.sort_by(|&a, &b| sol.sort_key[a].total_cmp(&sol.sort_key[b]));
        let k = sol.underrep_set.len();
        let mut head: Vec<usize> = order[..k].to_vec();
        let mut set = sol.underrep_set.clone();
        head.sort();
        set.sort();
        prop_assert_eq!(head, set);
        prop_assert!(sol.kkt.argmax_gap <= 1e-8);
    }

    #[test]
    fn worst_case_residual_small(seed in 0u64..10_000) {
        let inst = instance(seed, 3, false);
        let sol = worstcase_allocation_shared_p(&inst.laws, inst.n).unwrap();
        prop_assert!(sol.residual <= 1e-8);
        let vs: f64 = sol.v.iter().sum();
        prop_assert!((vs - 1.0).abs() <= 1e-10);
        prop_assert!(sol.l.iter().all(|&x| x > 0.0));
    }
}
