//! The two reference schemes.
//!
//! Both run the same loop as the proposed solver with one block changed:
//! EPA splits each user's power evenly over its subcarriers, FO fixes
//! `Σ_m λ_k^m = 1` and drops local computing.

use crate::channel::ChannelState;
use crate::error::Result;
use crate::model::SystemConfig;
use crate::optimizer::{solve_scheme, Scheme, Solution, SolverConfig};

/// Equal power allocation.
pub fn solve_epa(config: &SystemConfig, channels: &ChannelState, solver: &SolverConfig) -> Result<Solution> {
    solve_scheme(config, channels, solver, Scheme::EPA)
}

/// Full offloading.
pub fn solve_fo(config: &SystemConfig, channels: &ChannelState, solver: &SolverConfig) -> Result<Solution> {
    solve_scheme(config, channels, solver, Scheme::FO)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::model::{check_feasibility, local_energy, TaskSpec};
    use crate::optimizer::solve;

    fn config(k: usize, m: usize, n: usize) -> SystemConfig {
        let task = TaskSpec {
            s_bits: 2e4,
            c_cycles_per_bit: 1000.0,
            t_max_s: 0.5,
            e_budget_j: 0.5,
            p_max_w: 1.0,
            p_circuit_w: 5e-4,
            f_local_hz: 5e7,
            eta: 1e-24,
        };
        SystemConfig {
            users: k,
            servers: m,
            subcarriers: n,
            bandwidth_hz: 1e4,
            noise_w: 1e-13,
            mec_cycles_per_bit: vec![1000.0; m],
            mec_capacity_hz: vec![1e9; m],
            tasks: vec![task; k],
        }
    }

    fn channels(k: usize, m: usize, n: usize, seed: u64) -> ChannelState {
        // Small deterministic spread without pulling in the channel generator.
        let mut h = vec![vec![vec![0.0; m]; n]; k];
        let mut g = vec![vec![0.0; n]; k];
        let mut v = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = || {
            v = v.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (v >> 11) as f64 / (1u64 << 53) as f64
        };
        for kk in 0..k {
            for nn in 0..n {
                for mm in 0..m {
                    h[kk][nn][mm] = 20.0 + 80.0 * next();
                }
                g[kk][nn] = 0.5 + 10.0 * next();
            }
        }
        ChannelState { h_tilde: h, g_bar: g, eps: 0.5, noise_w: 1e-13 }
    }

    #[test]
    fn epa_splits_power_evenly() {
        let cfg = config(1, 1, 4);
        let ch = channels(1, 1, 4, 3);
        let sol = solve_epa(&cfg, &ch, &SolverConfig::default()).unwrap();
        let used: Vec<f64> = sol.allocation.power[0].iter().copied().filter(|p| *p > 0.0).collect();
        assert!(!used.is_empty());
        for p in &used {
            assert!(*p <= 0.25 + 1e-12 || used.len() < 4);
            assert!((p - used[0]).abs() <= 1e-12 * used[0]);
        }
        assert!(check_feasibility(&cfg, &ch, &sol.allocation, 1e-6).is_feasible());
    }

    #[test]
    fn fo_has_no_local_work() {
        let cfg = config(2, 2, 6);
        let ch = channels(2, 2, 6, 5);
        let sol = solve_fo(&cfg, &ch, &SolverConfig::default()).unwrap();
        assert_eq!(sol.metrics.local_computing_ratio, 0.0);
        for (k, task) in cfg.tasks.iter().enumerate() {
            let ls = sol.allocation.offload_sum(k);
            assert_eq!(local_energy(task, ls, sol.allocation.f_local[k]), 0.0);
        }
        assert!(check_feasibility(&cfg, &ch, &sol.allocation, 1e-6).is_feasible());
    }

    #[test]
    fn fo_infeasible_without_server_capacity() {
        let mut cfg = config(1, 1, 4);
        // 2e7 cycles cannot run in 0.5 s on 1e7 cycles/s, but locally they can.
        cfg.mec_capacity_hz = vec![1e7];
        let ch = channels(1, 1, 4, 7);
        assert!(matches!(solve_fo(&cfg, &ch, &SolverConfig::default()), Err(Error::Infeasible(_))));
        assert!(solve(&cfg, &ch, &SolverConfig::default()).is_ok());
    }

    #[test]
    fn proposed_dominates_baselines_on_heterogeneous_channels() {
        let cfg = config(2, 1, 8);
        for seed in 0..4 {
            let ch = channels(2, 1, 8, seed);
            let s = SolverConfig::default();
            let pa = solve(&cfg, &ch, &s).unwrap().metrics.sum_secrecy_rate_bps;
            let epa = solve_epa(&cfg, &ch, &s).unwrap().metrics.sum_secrecy_rate_bps;
            assert!(pa >= epa * (1.0 - 1e-9), "seed {seed}: {pa} < {epa}");
            if let Ok(fo) = solve_fo(&cfg, &ch, &s) {
                let fo = fo.metrics.sum_secrecy_rate_bps;
                assert!(pa >= fo * (1.0 - 1e-9), "seed {seed}: {pa} < {fo}");
            }
        }
    }
}
