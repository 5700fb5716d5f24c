//! Config ingestion, the cycle-budget pre-check, Monte-Carlo sweeps with CSV
//! output, and oracle verification.

mod config;
mod sweep;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::channel::{generate, ChannelState};
use crate::error::Result;
use crate::model::{check_feasibility, SystemConfig};
use crate::optimizer::{solve, Solution, SolverConfig};
use crate::oracle::{brute_force, GridSpec};

pub use config::{
    from_value, load_config, parse_config, parse_seed_range, ScenarioConfig, DEFAULTS_DOC,
    DEFAULT_EPS_REL, DEFAULT_E_BUDGET_J,
};
pub use sweep::{
    load_sweep, parse_sweep, run_jobs, run_scenario, run_sweep, spot_check, summarize, worker_count,
    write_rows, write_summary, Axis, RowStatus, RunRow, SummaryRow, SweepOptions, SweepSpec,
    CSV_COLUMNS, SUMMARY_COLUMNS, WORKERS_ENV,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserPrecheck {
    pub user: usize,
    pub required_cycles: f64,
    /// `T·(F_k + Σ_m F_m)`: every resource the user could reach alone.
    pub reachable_cycles: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecheckReport {
    /// `Σ_k c_k·s_k/T_k` (cycles/s).
    pub required_rate: f64,
    /// `Σ_k F_k + Σ_m F_m` (cycles/s).
    pub available_rate: f64,
    pub users: Vec<UserPrecheck>,
    pub pass: bool,
}

/// Necessary condition for any allocation to meet every deadline: the work
/// rate the tasks need fits into all CPUs together, and each task fits into
/// its own CPU plus every server.
pub fn precheck(system: &SystemConfig) -> PrecheckReport {
    let servers: f64 = system.mec_capacity_hz.iter().sum();
    let required_rate: f64 = system.tasks.iter().map(|t| t.cycles() / t.t_max_s).sum();
    let available_rate: f64 = system.tasks.iter().map(|t| t.f_local_hz).sum::<f64>() + servers;
    let users: Vec<UserPrecheck> = system
        .tasks
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let reachable = t.t_max_s * (t.f_local_hz + servers);
            UserPrecheck {
                user: k,
                required_cycles: t.cycles(),
                reachable_cycles: reachable,
                pass: t.cycles() <= reachable,
            }
        })
        .collect();
    let pass = required_rate <= available_rate && users.iter().all(|u| u.pass);
    PrecheckReport { required_rate, available_rate, users, pass }
}

impl fmt::Display for PrecheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} cycle budget: required {:.4e} cycles/s, available {:.4e} cycles/s (margin {:+.2}%)",
            if self.required_rate <= self.available_rate { "PASS" } else { "FAIL" },
            self.required_rate,
            self.available_rate,
            100.0 * (self.available_rate - self.required_rate) / self.required_rate,
        )?;
        for u in &self.users {
            writeln!(
                f,
                "{} user {}: required {:.4e} cycles, reachable {:.4e} cycles",
                if u.pass { "PASS" } else { "FAIL" },
                u.user,
                u.required_cycles,
                u.reachable_cycles
            )?;
        }
        write!(f, "{}", if self.pass { "PASS" } else { "FAIL" })
    }
}

/// Grid used by `verify` unless overridden.
pub const VERIFY_GRID: GridSpec = GridSpec {
    p_levels: 64,
    lambda_levels: 51,
    f_levels: 32,
};

/// Fraction of the oracle optimum the solver must reach.
pub const VERIFY_RATIO: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyCase {
    pub seed: u64,
    pub solver_bps: f64,
    pub oracle_bps: f64,
    pub solver_feasible: bool,
    pub max_violation: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub cases: Vec<VerifyCase>,
    pub pass: bool,
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.cases {
            writeln!(
                f,
                "{} seed {}: solver {:.6e} bps, oracle {:.6e} bps, ratio {:.4}, feasible {} (max violation {:.2e})",
                if c.pass { "PASS" } else { "FAIL" },
                c.seed,
                c.solver_bps + 0.0,
                c.oracle_bps + 0.0,
                ratio(c.solver_bps, c.oracle_bps),
                c.solver_feasible,
                c.max_violation
            )?;
        }
        write!(f, "{}", if self.pass { "PASS" } else { "FAIL" })
    }
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        if a >= 0.0 { 1.0 } else { 0.0 }
    } else {
        a / b
    }
}

/// Solver against oracle on every seed of a tiny scenario.
pub fn verify(scenario: &ScenarioConfig, grid: &GridSpec) -> Result<VerifyReport> {
    verify_with(scenario, grid, solve)
}

/// [`verify`] with a substitute solver.
pub fn verify_with(
    scenario: &ScenarioConfig,
    grid: &GridSpec,
    solver_fn: impl Fn(&SystemConfig, &ChannelState, &SolverConfig) -> Result<Solution>,
) -> Result<VerifyReport> {
    scenario.validate()?;
    let system = &scenario.system;
    let mut cases = Vec::new();
    for &seed in &scenario.seeds {
        let channels = generate(&scenario.channel, system, seed)?;
        let oracle = brute_force(system, &channels, grid)?;
        let (solver_bps, report) = match solver_fn(system, &channels, &scenario.solver) {
            Ok(sol) => (
                sol.metrics.sum_secrecy_rate_bps,
                check_feasibility(system, &channels, &sol.allocation, scenario.solver.tol_rel),
            ),
            Err(_) => (f64::NAN, Default::default()),
        };
        let solver_feasible = solver_bps.is_finite() && report.is_feasible();
        let pass = solver_feasible && solver_bps >= VERIFY_RATIO * oracle.objective;
        cases.push(VerifyCase {
            seed,
            solver_bps,
            oracle_bps: oracle.objective,
            solver_feasible,
            max_violation: report.max_relative(),
            pass,
        });
    }
    let pass = cases.iter().all(|c| c.pass);
    Ok(VerifyReport { cases, pass })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_defaults_fail_precheck() {
        let s = parse_config("{}").unwrap();
        let r = precheck(&s.system);
        assert!(!r.pass);
        // 5 users × 9.9e8 cycles in 0.2 s against 6.8e9 cycles/s.
        assert!((r.required_rate - 5.0 * 9.9e8 / 0.2).abs() < 1.0);
        assert!((r.available_rate - 6.8e9).abs() < 1.0);
        assert!(r.to_string().starts_with("FAIL"));
    }

    #[test]
    fn scaled_task_passes() {
        let s = parse_config(r#"{"s_bits": 1e5, "T_max_s": 0.5}"#).unwrap();
        assert!(precheck(&s.system).pass);
        let s = parse_config(r#"{"K": 1, "s_bits": 1, "c_cycles_per_bit": 1}"#).unwrap();
        assert!(precheck(&s.system).pass);
    }
}
