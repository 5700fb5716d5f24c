use proptest::prelude::*;

use secmec::channel::generate;
use secmec::harness::{parse_config, ScenarioConfig};
use secmec::lp::{find_feasible, LinearFeasibilityProblem, LpOutcome};
use secmec::model::{check_feasibility, metrics, objective, secrecy_rate_subcarrier};
use secmec::optimizer::closed_form::{optimal_power, project_capacity, ScoreInputs};
use secmec::optimizer::{solve_scheme, Scheme};

fn scenario(k: usize, m: usize, n: usize, s: f64, t: f64, e: f64, seed: u64) -> ScenarioConfig {
    parse_config(&format!(
        r#"{{"K": {k}, "M": {m}, "N": {n}, "s_bits": {s}, "T_max_s": {t}, "E_J": {e},
            "seed_range": "{seed}..{}", "solver": {{"split_rule": "max_offload"}}}}"#,
        seed + 1
    ))
    .unwrap()
}

proptest! {
    #[test]
    fn clipped_rate_is_nonnegative_and_monotone(
        p in 0.0..2.0f64, dp in 0.0..1.0f64, h in 1e2..1e8f64, g in 1e2..1e8f64, eps in 0.0..1e3f64,
    ) {
        let r1 = secrecy_rate_subcarrier(p, h, g, eps, 12.5e3, true).unwrap();
        let r2 = secrecy_rate_subcarrier(p + dp, h, g, eps, 12.5e3, true).unwrap();
        prop_assert!(r1 >= 0.0);
        if h > g + eps {
            prop_assert!(r2 >= r1);
        } else {
            prop_assert_eq!(r2, 0.0);
        }
    }

    #[test]
    fn stationary_power_is_nonnegative(
        h in 1e2..1e8f64, ratio in 0.0..2.0f64, psi in 0.0..2.0f64, theta in 1e-3..1e3f64,
    ) {
        let inputs = ScoreInputs {
            h_tilde: h,
            g: h * ratio + 1e-9,
            bandwidth_hz: 12.5e3,
            psi,
            gamma: 1e-6,
            theta,
            s_bits: 1e4,
            lambda: 0.5,
            phi: 1e5,
        };
        let p = optimal_power(&inputs).unwrap();
        prop_assert!(p >= 0.0 && p.is_finite());
        if inputs.g >= h {
            prop_assert_eq!(p, 0.0);
        }
    }

    #[test]
    fn capacity_projection(shares in prop::collection::vec(0.0..10.0f64, 1..6), cap in 0.1..20.0f64) {
        let mut out = shares.clone();
        project_capacity(&mut out, cap);
        let total: f64 = out.iter().sum();
        prop_assert!(total <= cap * (1.0 + 1e-12));
        if shares.iter().sum::<f64>() <= cap {
            prop_assert_eq!(&out, &shares);
        }
        for (a, b) in out.iter().zip(&shares) {
            prop_assert!(*a <= *b);
        }
    }

    #[test]
    fn channels_are_reproducible(k in 1usize..4, m in 1usize..4, n in 1usize..8, seed in 0u64..1000) {
        let s = scenario(k, m, n.max(k), 1e4, 0.2, 0.1, seed);
        let a = generate(&s.channel, &s.system, seed).unwrap();
        let b = generate(&s.channel, &s.system, seed).unwrap();
        prop_assert_eq!(&a, &b);
        for kk in 0..k {
            for nn in 0..s.system.subcarriers {
                prop_assert!(a.g_worst(kk, nn) >= a.g_bar[kk][nn]);
                prop_assert!(a.h_tilde[kk][nn].iter().all(|h| *h > 0.0));
            }
        }
    }

    #[test]
    fn lp_points_satisfy_rows(
        rows in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -0.5..0.5f64), 1..6),
    ) {
        let mut lp = LinearFeasibilityProblem::new(3);
        lp.upper = vec![1.0; 3];
        for (a, b, c, rhs) in rows {
            lp.push_le(vec![a, b, c], rhs);
        }
        if let LpOutcome::Feasible(x) = find_feasible(&lp).unwrap() {
            prop_assert!(lp.max_violation(&x) <= 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn solved_allocations_are_consistent(
        k in 1usize..4, m in 1usize..4, extra in 0usize..5, s in 5e3..2e4f64, t in 0.1..0.4f64,
        e in 0.05..0.5f64, seed in 0u64..10_000,
    ) {
        let sc = scenario(k, m, k + extra, s, t, e, seed);
        let ch = generate(&sc.channel, &sc.system, seed).unwrap();
        for scheme in Scheme::ALL {
            let Ok(sol) = solve_scheme(&sc.system, &ch, &sc.solver, scheme) else { continue };
            let a = &sol.allocation;
            let report = check_feasibility(&sc.system, &ch, a, 1e-6);
            prop_assert!(report.is_feasible(), "{scheme}: {:?}", report.violations);
            prop_assert_eq!(sol.metrics.sum_secrecy_rate_bps, objective(&sc.system, &ch, a));
            prop_assert_eq!(&sol.metrics, &metrics(&sc.system, &ch, a));
            for kk in 0..k {
                let total = a.offload_sum(kk);
                prop_assert!(a.offload[kk].iter().all(|l| *l >= 0.0));
                prop_assert!(total <= 1.0 + 1e-9);
                if scheme == Scheme::FO {
                    prop_assert!((total - 1.0).abs() <= 1e-6, "FO offloads {total}");
                }
            }
            prop_assert!((0.0..=1.0).contains(&sol.metrics.local_computing_ratio));
        }
    }
}
