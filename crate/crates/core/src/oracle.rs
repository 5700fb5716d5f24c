//! Brute-force grid search over subcarriers, powers, offload fractions and
//! CPU frequencies on tiny instances.
//!
//! The clipped objective depends on subcarriers and powers only, so
//! candidates `(X, p)` are ranked by objective first and the grid of λ is
//! searched in that order; the first feasible candidate is optimal. For given
//! `(X, p, λ)` the smallest grid frequencies that meet the deadlines dominate
//! every larger choice (less energy, less server load), so frequencies are
//! not enumerated jointly.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelState;
use crate::error::{Error, Result};
use crate::model::{check_feasibility, objective, rate_unchecked, Allocation, Pair, SystemConfig};

/// Largest `K·M` accepted.
pub const MAX_PAIRS: usize = 2;
/// Largest `N` accepted.
pub const MAX_SUBCARRIERS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Points in `[0, p_max]`, both ends included.
    pub p_levels: usize,
    /// Points in `[0, 1]`.
    pub lambda_levels: usize,
    /// Points in `[0, F]`.
    pub f_levels: usize,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("p_levels", self.p_levels),
            ("lambda_levels", self.lambda_levels),
            ("f_levels", self.f_levels),
        ] {
            if v < 2 {
                return Err(Error::config(format!("grid.{name}"), "must be >= 2"));
            }
        }
        Ok(())
    }

    /// Halves every grid step; the old grid is a subset of the new one.
    pub fn refined(&self) -> GridSpec {
        GridSpec {
            p_levels: 2 * self.p_levels - 1,
            lambda_levels: 2 * self.lambda_levels - 1,
            f_levels: 2 * self.f_levels - 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    /// Best feasible clipped objective.
    pub objective: f64,
    pub allocation: Allocation,
    /// `(X, p)` candidates whose λ grid was searched.
    pub candidates_searched: u64,
}

fn level(i: usize, levels: usize, top: f64) -> f64 {
    if i + 1 == levels {
        top
    } else {
        top * i as f64 / (levels - 1) as f64
    }
}

/// Smallest grid index whose value satisfies `ok`, assuming `ok` is monotone.
fn smallest_index(levels: usize, top: f64, ok: impl Fn(f64) -> bool) -> Option<usize> {
    if !ok(top) {
        return None;
    }
    let (mut lo, mut hi) = (0usize, levels - 1);
    if ok(level(0, levels, top)) {
        return Some(0);
    }
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if ok(level(mid, levels, top)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

struct Candidate {
    objective: f64,
    assignment: Vec<Option<Pair>>,
    power: Vec<Vec<f64>>,
}

pub fn brute_force(config: &SystemConfig, channels: &ChannelState, grid: &GridSpec) -> Result<OracleResult> {
    brute_force_with_tol(config, channels, grid, 1e-6)
}

/// [`brute_force`] with an explicit feasibility tolerance.
pub fn brute_force_with_tol(
    config: &SystemConfig,
    channels: &ChannelState,
    grid: &GridSpec,
    tol_rel: f64,
) -> Result<OracleResult> {
    config.validate()?;
    channels.check_dims(config)?;
    grid.validate()?;
    let (kk, mm, nn) = (config.users, config.servers, config.subcarriers);
    if kk * mm > MAX_PAIRS || nn > MAX_SUBCARRIERS {
        return Err(Error::Budget(format!(
            "oracle accepts K·M <= {MAX_PAIRS} and N <= {MAX_SUBCARRIERS}, got K·M = {} and N = {nn}",
            kk * mm
        )));
    }

    let mut candidates = enumerate_candidates(config, channels, grid);
    // Stable: equal objectives keep enumeration order.
    candidates.sort_by(|a, b| b.objective.total_cmp(&a.objective));

    let mut searched = 0u64;
    for cand in &candidates {
        searched += 1;
        if let Some(alloc) = search_offload(config, channels, grid, cand, tol_rel) {
            return Ok(OracleResult {
                objective: cand.objective,
                allocation: alloc,
                candidates_searched: searched,
            });
        }
    }
    Err(Error::Infeasible("no grid point satisfies every constraint".into()))
}

fn enumerate_candidates(config: &SystemConfig, channels: &ChannelState, grid: &GridSpec) -> Vec<Candidate> {
    let (kk, mm, nn) = (config.users, config.servers, config.subcarriers);
    let pairs: Vec<Option<Pair>> = std::iter::once(None)
        .chain((0..kk).flat_map(|k| (0..mm).map(move |m| Some((k, m)))))
        .collect();
    let choices = pairs.len();
    let mut out = Vec::new();
    let mut assignment = vec![0usize; nn];
    loop {
        let x: Vec<Option<Pair>> = assignment.iter().map(|&i| pairs[i]).collect();
        let assigned: Vec<usize> = (0..nn).filter(|&n| x[n].is_some()).collect();
        let mut p_idx = vec![0usize; assigned.len()];
        loop {
            let mut power = vec![vec![0.0; nn]; kk];
            for (j, &n) in assigned.iter().enumerate() {
                let (k, _) = x[n].unwrap();
                power[k][n] = level(p_idx[j], grid.p_levels, config.tasks[k].p_max_w);
            }
            let within_budget = (0..kk).all(|k| {
                let total: f64 = power[k].iter().sum();
                total <= config.tasks[k].p_max_w * (1.0 + 1e-12)
            });
            if within_budget {
                let mut a = Allocation::empty(config);
                a.subcarriers = x.clone();
                a.power = power.clone();
                out.push(Candidate {
                    objective: objective(config, channels, &a),
                    assignment: x.clone(),
                    power,
                });
            }
            if !advance(&mut p_idx, grid.p_levels) {
                break;
            }
        }
        if !advance(&mut assignment, choices) {
            break;
        }
    }
    out
}

/// Odometer increment; `false` once every digit has wrapped.
fn advance(digits: &mut [usize], base: usize) -> bool {
    for d in digits.iter_mut() {
        *d += 1;
        if *d < base {
            return true;
        }
        *d = 0;
    }
    false
}

fn search_offload(
    config: &SystemConfig,
    channels: &ChannelState,
    grid: &GridSpec,
    cand: &Candidate,
    tol_rel: f64,
) -> Option<Allocation> {
    let (kk, mm) = (config.users, config.servers);
    let mut rate = vec![vec![0.0; mm]; kk];
    let mut ppow = vec![vec![0.0; mm]; kk];
    for (n, slot) in cand.assignment.iter().enumerate() {
        if let Some((k, m)) = *slot {
            let p = cand.power[k][n];
            rate[k][m] += rate_unchecked(
                p,
                channels.h_tilde[k][n][m],
                channels.g_worst(k, n),
                config.bandwidth_hz,
                false,
            );
            ppow[k][m] += p + config.tasks[k].p_circuit_w;
        }
    }
    let vars = kk * mm;
    let mut idx = vec![0usize; vars];
    let slack = 1.0 + tol_rel;
    loop {
        let lambda: Vec<Vec<f64>> = (0..kk)
            .map(|k| (0..mm).map(|m| level(idx[k * mm + m], grid.lambda_levels, 1.0)).collect())
            .collect();
        if let Some(alloc) = try_offload(config, grid, &rate, &ppow, &lambda, slack) {
            let mut alloc = alloc;
            alloc.subcarriers = cand.assignment.clone();
            alloc.power = cand.power.clone();
            if check_feasibility(config, channels, &alloc, tol_rel).is_feasible() {
                return Some(alloc);
            }
        }
        if !advance(&mut idx, grid.lambda_levels) {
            return None;
        }
    }
}

/// Picks the smallest grid frequencies for `λ` and screens energy and
/// capacity. Subcarriers and powers are filled in by the caller.
fn try_offload(
    config: &SystemConfig,
    grid: &GridSpec,
    rate: &[Vec<f64>],
    ppow: &[Vec<f64>],
    lambda: &[Vec<f64>],
    slack: f64,
) -> Option<Allocation> {
    let (kk, mm) = (config.users, config.servers);
    let mut alloc = Allocation::empty(config);
    for (k, task) in config.tasks.iter().enumerate() {
        let lsum: f64 = lambda[k].iter().sum();
        if lsum > 1.0 + 1e-12 {
            return None;
        }
        let u = (1.0 - lsum).max(0.0);
        let t = task.t_max_s * slack;
        let f_l = if u > 0.0 {
            let idx = smallest_index(grid.f_levels, task.f_local_hz, |f| f > 0.0 && task.cycles() * u / f <= t)?;
            level(idx, grid.f_levels, task.f_local_hz)
        } else {
            0.0
        };
        let mut energy = task.eta * task.cycles() * u * f_l * f_l;
        for m in 0..mm {
            let l = lambda[k][m];
            alloc.phi[k][m] = rate[k][m];
            if l == 0.0 {
                continue;
            }
            if !(rate[k][m] > 0.0) {
                return None;
            }
            let tx = task.s_bits * l / rate[k][m];
            let cap = config.mec_capacity_hz[m];
            let cm = config.mec_cycles_per_bit[m] * task.s_bits * l;
            let idx = smallest_index(grid.f_levels, cap, |f| f > 0.0 && tx + cm / f <= t)?;
            alloc.f_mec[k][m] = level(idx, grid.f_levels, cap);
            energy += tx * ppow[k][m];
        }
        if energy > task.e_budget_j * slack {
            return None;
        }
        alloc.f_local[k] = f_l;
        alloc.offload[k] = lambda[k].clone();
    }
    for m in 0..mm {
        let used: f64 = (0..kk).map(|k| alloc.f_mec[k][m]).sum();
        if used > config.mec_capacity_hz[m] * slack {
            return None;
        }
    }
    Some(alloc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TaskSpec;

    fn tiny(h: f64, g: f64) -> (SystemConfig, ChannelState) {
        let task = TaskSpec {
            s_bits: 1e3,
            c_cycles_per_bit: 100.0,
            t_max_s: 1.0,
            e_budget_j: 10.0,
            p_max_w: 1.0,
            p_circuit_w: 1e-3,
            f_local_hz: 1e6,
            eta: 1e-24,
        };
        let config = SystemConfig {
            users: 1,
            servers: 1,
            subcarriers: 1,
            bandwidth_hz: 1e3,
            noise_w: 1e-13,
            mec_cycles_per_bit: vec![100.0],
            mec_capacity_hz: vec![1e7],
            tasks: vec![task],
        };
        let ch = ChannelState {
            h_tilde: vec![vec![vec![h]]],
            g_bar: vec![vec![g]],
            eps: 0.0,
            noise_w: 1e-13,
        };
        (config, ch)
    }

    const GRID: GridSpec = GridSpec {
        p_levels: 8,
        lambda_levels: 5,
        f_levels: 6,
    };

    #[test]
    fn zero_channels_give_zero() {
        let (cfg, ch) = tiny(0.0, 0.0);
        let out = brute_force(&cfg, &ch, &GRID).unwrap();
        assert_eq!(out.objective, 0.0);
        assert!(out.allocation.power[0].iter().all(|p| *p == 0.0));
    }

    #[test]
    fn loose_constraints_use_full_power() {
        let (cfg, ch) = tiny(100.0, 1.0);
        let out = brute_force(&cfg, &ch, &GRID).unwrap();
        assert_eq!(out.allocation.power[0][0], 1.0);
        assert!(check_feasibility(&cfg, &ch, &out.allocation, 1e-6).is_feasible());
    }

    #[test]
    fn budget_guard() {
        let (mut cfg, mut ch) = tiny(1.0, 0.0);
        cfg.subcarriers = 4;
        ch.h_tilde = vec![vec![vec![1.0]; 4]];
        ch.g_bar = vec![vec![0.0; 4]];
        assert!(matches!(brute_force(&cfg, &ch, &GRID), Err(Error::Budget(_))));
    }

    #[test]
    fn grid_levels_hit_both_ends() {
        assert_eq!(level(0, 7, 3.3), 0.0);
        assert_eq!(level(6, 7, 3.3), 3.3);
        let g = GRID.refined();
        for i in 0..GRID.p_levels {
            assert_eq!(level(i, GRID.p_levels, 1.0), level(2 * i, g.p_levels, 1.0));
        }
    }

    #[test]
    fn smallest_index_is_monotone_search() {
        let idx = smallest_index(11, 10.0, |f| f >= 3.5).unwrap();
        assert_eq!(idx, 4);
        assert_eq!(smallest_index(11, 10.0, |f| f >= 0.0), Some(0));
        assert_eq!(smallest_index(11, 10.0, |f| f > 10.0), None);
    }
}
