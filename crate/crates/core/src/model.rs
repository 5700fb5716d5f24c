//! System model: task and network parameters, the primal decision, and the
//! closed-form rate, latency and energy expressions.
//!
//! Every quantity is SI (bits, cycles, seconds, joules, watts, hertz). Channel
//! gains enter as channel-power-to-noise ratios (1/W).

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::channel::ChannelState;
use crate::error::{Error, Result};

/// Per-user task and device parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub s_bits: f64,
    pub c_cycles_per_bit: f64,
    pub t_max_s: f64,
    pub e_budget_j: f64,
    pub p_max_w: f64,
    pub p_circuit_w: f64,
    pub f_local_hz: f64,
    /// Energy-efficiency coefficient of the local processor (J·s²/cycle³).
    pub eta: f64,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        let strictly_positive = [
            ("s_bits", self.s_bits),
            ("c_cycles_per_bit", self.c_cycles_per_bit),
            ("t_max_s", self.t_max_s),
            ("p_circuit_w", self.p_circuit_w),
            ("f_local_hz", self.f_local_hz),
            ("eta", self.eta),
        ];
        for (name, v) in strictly_positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(name, format!("must be finite and > 0, got {v}")));
            }
        }
        for (name, v) in [("e_budget_j", self.e_budget_j), ("p_max_w", self.p_max_w)] {
            if !(v >= 0.0) || v.is_nan() {
                return Err(Error::config(name, format!("must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Total local cycles if the whole task ran on the device.
    pub fn cycles(&self) -> f64 {
        self.c_cycles_per_bit * self.s_bits
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub users: usize,
    pub servers: usize,
    pub subcarriers: usize,
    pub bandwidth_hz: f64,
    pub noise_w: f64,
    pub mec_cycles_per_bit: Vec<f64>,
    pub mec_capacity_hz: Vec<f64>,
    pub tasks: Vec<TaskSpec>,
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.users == 0 {
            return Err(Error::config("K", "must be >= 1"));
        }
        if self.servers == 0 {
            return Err(Error::config("M", "must be >= 1"));
        }
        if self.subcarriers == 0 {
            return Err(Error::config("N", "must be >= 1"));
        }
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite()) {
            return Err(Error::config("B_Hz", "must be > 0"));
        }
        if !(self.noise_w > 0.0 && self.noise_w.is_finite()) {
            return Err(Error::config("sigma2_W", "must be > 0"));
        }
        if self.mec_cycles_per_bit.len() != self.servers {
            return Err(Error::config("c_mec_cycles_per_bit", "length must equal M"));
        }
        if self.mec_capacity_hz.len() != self.servers {
            return Err(Error::config("F_mec_Hz", "length must equal M"));
        }
        for (m, (&c, &f)) in self
            .mec_cycles_per_bit
            .iter()
            .zip(&self.mec_capacity_hz)
            .enumerate()
        {
            if !(c > 0.0) {
                return Err(Error::config(format!("c_mec_cycles_per_bit[{m}]"), "must be > 0"));
            }
            if !(f > 0.0) {
                return Err(Error::config(format!("F_mec_Hz[{m}]"), "must be > 0"));
            }
        }
        if self.tasks.len() != self.users {
            return Err(Error::config("tasks", "length must equal K"));
        }
        for (k, t) in self.tasks.iter().enumerate() {
            t.validate().map_err(|e| match e {
                Error::Config { path, msg } => Error::config(format!("tasks[{k}].{path}"), msg),
                other => other,
            })?;
        }
        Ok(())
    }
}

/// A (user, server) pair carried by one subcarrier.
pub type Pair = (usize, usize);

/// The full primal decision.
///
/// Indexing: `power[k][n]`, `offload[k][m]`, `f_mec[k][m]`, `phi[k][m]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub subcarriers: Vec<Option<Pair>>,
    pub power: Vec<Vec<f64>>,
    pub offload: Vec<Vec<f64>>,
    pub f_local: Vec<f64>,
    pub f_mec: Vec<Vec<f64>>,
    pub phi: Vec<Vec<f64>>,
}

impl Allocation {
    /// All-zero allocation with every subcarrier unassigned.
    pub fn empty(config: &SystemConfig) -> Self {
        let (k, m, n) = (config.users, config.servers, config.subcarriers);
        Allocation {
            subcarriers: vec![None; n],
            power: vec![vec![0.0; n]; k],
            offload: vec![vec![0.0; m]; k],
            f_local: vec![0.0; k],
            f_mec: vec![vec![0.0; m]; k],
            phi: vec![vec![0.0; m]; k],
        }
    }

    pub fn offload_sum(&self, k: usize) -> f64 {
        self.offload[k].iter().sum()
    }

    pub fn carries(&self, n: usize, k: usize, m: usize) -> bool {
        self.subcarriers[n] == Some((k, m))
    }

    /// Subcarriers assigned to `(k, m)`.
    pub fn pair_subcarriers(&self, k: usize, m: usize) -> impl Iterator<Item = usize> + '_ {
        self.subcarriers
            .iter()
            .enumerate()
            .filter(move |(_, x)| **x == Some((k, m)))
            .map(|(n, _)| n)
    }

    /// Transmit power user `k` radiates over its assigned subcarriers.
    pub fn user_power(&self, k: usize) -> f64 {
        self.subcarriers
            .iter()
            .enumerate()
            .filter(|(_, x)| matches!(x, Some((u, _)) if *u == k))
            .map(|(n, _)| self.power[k][n])
            .sum()
    }

    pub fn check_dims(&self, config: &SystemConfig) -> Result<()> {
        let (k, m, n) = (config.users, config.servers, config.subcarriers);
        let ok = self.subcarriers.len() == n
            && self.power.len() == k
            && self.power.iter().all(|r| r.len() == n)
            && self.offload.len() == k
            && self.offload.iter().all(|r| r.len() == m)
            && self.f_local.len() == k
            && self.f_mec.len() == k
            && self.f_mec.iter().all(|r| r.len() == m)
            && self.phi.len() == k
            && self.phi.iter().all(|r| r.len() == m)
            && self
                .subcarriers
                .iter()
                .flatten()
                .all(|&(u, s)| u < k && s < m);
        if ok {
            Ok(())
        } else {
            Err(Error::domain("allocation dimensions do not match the system config"))
        }
    }
}

/// Per-solve summary metrics. Rates here are always clipped at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub sum_secrecy_rate_bps: f64,
    pub per_user_rate_bps: Vec<f64>,
    pub local_computing_ratio: f64,
    pub per_user_energy_j: Vec<f64>,
    pub per_user_latency_s: Vec<f64>,
}

impl Metrics {
    pub fn mean_latency_s(&self) -> f64 {
        mean(&self.per_user_latency_s)
    }

    pub fn mean_energy_j(&self) -> f64 {
        mean(&self.per_user_energy_j)
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Worst-case secrecy rate on one subcarrier,
/// `B·[log2(1+p·h̃) − log2(1+p·(ḡ+ε))]`, optionally clipped at zero.
pub fn secrecy_rate_subcarrier(
    p: f64,
    h_tilde: f64,
    g_bar: f64,
    eps: f64,
    bandwidth_hz: f64,
    clipped: bool,
) -> Result<f64> {
    if !(p >= 0.0) {
        return Err(Error::domain(format!("transmit power must be >= 0, got {p}")));
    }
    if !(bandwidth_hz > 0.0) {
        return Err(Error::domain(format!("bandwidth must be > 0, got {bandwidth_hz}")));
    }
    Ok(rate_unchecked(p, h_tilde, g_bar + eps, bandwidth_hz, clipped))
}

/// Rate with the worst-case eavesdropper ratio `g` already formed.
#[inline]
pub(crate) fn rate_unchecked(p: f64, h: f64, g: f64, bandwidth_hz: f64, clipped: bool) -> f64 {
    // ln_1p keeps precision at low SNR.
    let r = bandwidth_hz * ((p * h).ln_1p() - (p * g).ln_1p()) / std::f64::consts::LN_2;
    if clipped {
        r.max(0.0)
    } else {
        r
    }
}

pub fn local_latency(task: &TaskSpec, lambda_sum: f64, f_local: f64) -> Result<f64> {
    check_lambda_sum(lambda_sum)?;
    let residual = 1.0 - lambda_sum;
    if residual <= 0.0 {
        return Ok(0.0);
    }
    if !(f_local > 0.0) {
        return Err(Error::domain(
            "local frequency is zero while local workload remains",
        ));
    }
    Ok(task.c_cycles_per_bit * residual * task.s_bits / f_local)
}

pub fn offload_latency(
    s_bits: f64,
    lambda_km: f64,
    rate_bps: f64,
    c_mec: f64,
    f_mec: f64,
) -> Result<f64> {
    if !(lambda_km >= 0.0) {
        return Err(Error::domain(format!("offload fraction must be >= 0, got {lambda_km}")));
    }
    if lambda_km == 0.0 {
        return Ok(0.0);
    }
    if !(rate_bps > 0.0) {
        return Err(Error::domain("offloading over a pair with zero secrecy rate"));
    }
    if !(f_mec > 0.0) {
        return Err(Error::domain("offloading to a server share of zero cycles/s"));
    }
    let bits = s_bits * lambda_km;
    Ok(bits / rate_bps + c_mec * bits / f_mec)
}

pub fn local_energy(task: &TaskSpec, lambda_sum: f64, f_local: f64) -> f64 {
    let residual = (1.0 - lambda_sum).max(0.0);
    task.eta * task.c_cycles_per_bit * residual * task.s_bits * f_local * f_local
}

/// Transmission energy `Σ_m (s·λ_m / r_m)·P_m` where `P_m` is the radiated plus
/// circuit power summed over the subcarriers of pair `m`.
pub fn offload_energy_from_rates(
    s_bits: f64,
    lambdas: &[f64],
    rates_bps: &[f64],
    pair_power_w: &[f64],
) -> Result<f64> {
    let mut total = 0.0;
    for ((&lambda, &rate), &power) in lambdas.iter().zip(rates_bps).zip(pair_power_w) {
        if lambda == 0.0 {
            continue;
        }
        if !(rate > 0.0) {
            return Err(Error::domain("offload fraction > 0 on a pair with zero rate"));
        }
        total += s_bits * lambda / rate * power;
    }
    Ok(total)
}

/// Worst-case achieved rate of pair `(k, m)`: `Σ_n x·r̄` (unclipped) or with
/// per-subcarrier clipping.
pub fn pair_rate(
    config: &SystemConfig,
    channels: &ChannelState,
    alloc: &Allocation,
    k: usize,
    m: usize,
    clipped: bool,
) -> f64 {
    alloc
        .pair_subcarriers(k, m)
        .map(|n| {
            rate_unchecked(
                alloc.power[k][n],
                channels.h_tilde[k][n][m],
                channels.g_worst(k, n),
                config.bandwidth_hz,
                clipped,
            )
        })
        .sum()
}

/// `Σ_n x·(p + p̄)` for pair `(k, m)`.
pub fn pair_power(config: &SystemConfig, alloc: &Allocation, k: usize, m: usize) -> f64 {
    let circuit = config.tasks[k].p_circuit_w;
    alloc
        .pair_subcarriers(k, m)
        .map(|n| alloc.power[k][n] + circuit)
        .sum()
}

pub fn offload_energy(
    config: &SystemConfig,
    channels: &ChannelState,
    alloc: &Allocation,
    k: usize,
) -> Result<f64> {
    let m_count = config.servers;
    let rates: Vec<f64> = (0..m_count)
        .map(|m| pair_rate(config, channels, alloc, k, m, false))
        .collect();
    let powers: Vec<f64> = (0..m_count).map(|m| pair_power(config, alloc, k, m)).collect();
    offload_energy_from_rates(config.tasks[k].s_bits, &alloc.offload[k], &rates, &powers)
}

fn check_lambda_sum(lambda_sum: f64) -> Result<()> {
    if !(-1e-12..=1.0 + 1e-12).contains(&lambda_sum) {
        return Err(Error::domain(format!(
            "offload fraction sum must lie in [0, 1], got {lambda_sum}"
        )));
    }
    Ok(())
}

/// Clipped objective `Σ x·[r̄]^+` over all assigned subcarriers.
pub fn objective(config: &SystemConfig, channels: &ChannelState, alloc: &Allocation) -> f64 {
    (0..config.users)
        .map(|k| {
            (0..config.servers)
                .map(|m| pair_rate(config, channels, alloc, k, m, true))
                .sum::<f64>()
        })
        .sum()
}

/// Total latency of user `k`: `max{t^l, max_m t^off}`. Infinite when a
/// component is undefined (offloading over a zero-rate pair, say).
pub fn user_latency(
    config: &SystemConfig,
    channels: &ChannelState,
    alloc: &Allocation,
    k: usize,
) -> f64 {
    let task = &config.tasks[k];
    let lsum = alloc.offload_sum(k).clamp(0.0, 1.0);
    let mut worst = local_latency(task, lsum, alloc.f_local[k]).unwrap_or(f64::INFINITY);
    for m in 0..config.servers {
        let rate = pair_rate(config, channels, alloc, k, m, false);
        let t = offload_latency(
            task.s_bits,
            alloc.offload[k][m],
            rate,
            config.mec_cycles_per_bit[m],
            alloc.f_mec[k][m],
        )
        .unwrap_or(f64::INFINITY);
        worst = worst.max(t);
    }
    worst
}

pub fn user_energy(
    config: &SystemConfig,
    channels: &ChannelState,
    alloc: &Allocation,
    k: usize,
) -> f64 {
    let task = &config.tasks[k];
    let lsum = alloc.offload_sum(k).clamp(0.0, 1.0);
    local_energy(task, lsum, alloc.f_local[k])
        + offload_energy(config, channels, alloc, k).unwrap_or(f64::INFINITY)
}

pub fn metrics(config: &SystemConfig, channels: &ChannelState, alloc: &Allocation) -> Metrics {
    let per_user_rate_bps: Vec<f64> = (0..config.users)
        .map(|k| {
            (0..config.servers)
                .map(|m| pair_rate(config, channels, alloc, k, m, true))
                .sum()
        })
        .collect();
    let lcr = (0..config.users)
        .map(|k| (1.0 - alloc.offload_sum(k)).clamp(0.0, 1.0))
        .sum::<f64>()
        / config.users as f64;
    Metrics {
        sum_secrecy_rate_bps: per_user_rate_bps.iter().sum(),
        per_user_rate_bps,
        local_computing_ratio: lcr,
        per_user_energy_j: (0..config.users)
            .map(|k| user_energy(config, channels, alloc, k))
            .collect(),
        per_user_latency_s: (0..config.users)
            .map(|k| user_latency(config, channels, alloc, k))
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Constraint {
    Latency,
    Energy,
    OffloadBounds,
    OffloadSimplex,
    PowerNonneg,
    PowerBudget,
    SubcarrierExclusive,
    MecNonneg,
    MecCapacity,
    LocalFrequency,
    PhiPositive,
    PhiRate,
    Dimensions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: Constraint,
    /// User, server or subcarrier index the row belongs to.
    pub index: Vec<usize>,
    /// Excess relative to the row's natural scale.
    pub relative: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}{:?}: relative excess {:.3e}", self.constraint, self.index, self.relative)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn max_relative(&self) -> f64 {
        self.violations.iter().map(|v| v.relative).fold(0.0, f64::max)
    }
}

/// Evaluates every constraint row of the problem and reports those exceeded by
/// more than `tol_rel` of their scale.
///
/// Latency and energy use the achieved worst-case rate `Σ x·r̄`; `Φ` is checked
/// separately against that rate. Pairs with `λ = 0` impose no latency and
/// their `Φ` is not required to be positive.
pub fn check_feasibility(
    config: &SystemConfig,
    channels: &ChannelState,
    alloc: &Allocation,
    tol_rel: f64,
) -> FeasibilityReport {
    let mut report = FeasibilityReport::default();
    if alloc.check_dims(config).is_err() {
        report.violations.push(Violation {
            constraint: Constraint::Dimensions,
            index: vec![],
            relative: f64::INFINITY,
        });
        return report;
    }
    let mut push = |constraint, index: Vec<usize>, excess: f64, scale: f64| {
        let rel = if excess.is_nan() { f64::INFINITY } else { excess / scale.abs().max(1e-300) };
        if rel > tol_rel {
            report.violations.push(Violation { constraint, index, relative: rel });
        }
    };

    for (k, task) in config.tasks.iter().enumerate() {
        push(
            Constraint::Latency,
            vec![k],
            user_latency(config, channels, alloc, k) - task.t_max_s,
            task.t_max_s,
        );
        let e_scale = task.e_budget_j.max(1e-12);
        push(
            Constraint::Energy,
            vec![k],
            user_energy(config, channels, alloc, k) - task.e_budget_j,
            e_scale,
        );
        for m in 0..config.servers {
            let l = alloc.offload[k][m];
            push(Constraint::OffloadBounds, vec![k, m], -l, 1.0);
            push(Constraint::OffloadBounds, vec![k, m], l - 1.0, 1.0);
        }
        let lsum = alloc.offload_sum(k);
        push(Constraint::OffloadSimplex, vec![k], lsum - 1.0, 1.0);
        push(Constraint::OffloadSimplex, vec![k], -lsum, 1.0);

        let p_scale = task.p_max_w.max(1e-12);
        for n in 0..config.subcarriers {
            push(Constraint::PowerNonneg, vec![k, n], -alloc.power[k][n], p_scale);
        }
        push(
            Constraint::PowerBudget,
            vec![k],
            alloc.user_power(k) - task.p_max_w,
            p_scale,
        );
        push(Constraint::LocalFrequency, vec![k], -alloc.f_local[k], task.f_local_hz);
        push(
            Constraint::LocalFrequency,
            vec![k],
            alloc.f_local[k] - task.f_local_hz,
            task.f_local_hz,
        );
        for m in 0..config.servers {
            let rate = pair_rate(config, channels, alloc, k, m, false);
            let phi = alloc.phi[k][m];
            let rate_scale = config.bandwidth_hz;
            if alloc.offload[k][m] > 0.0 {
                // Φ > 0 is strict; any non-positive value on an active pair fails.
                if !(phi > 0.0) {
                    push(Constraint::PhiPositive, vec![k, m], f64::NAN, 1.0);
                }
                push(Constraint::PhiRate, vec![k, m], phi - rate, rate.abs().max(rate_scale));
            }
        }
    }

    // Exclusivity is structural in `Option<Pair>`; what can still go wrong is
    // a user holding positive power on a subcarrier owned by someone else.
    for n in 0..config.subcarriers {
        let radiating: Vec<usize> = (0..config.users)
            .filter(|&k| alloc.power[k][n] > 0.0)
            .collect();
        let owner = alloc.subcarriers[n].map(|(k, _)| k);
        let intruders = radiating.iter().filter(|&&k| Some(k) != owner).count();
        let users_on_n = radiating.len().max(owner.is_some() as usize);
        if intruders > 0 && users_on_n > 1 {
            push(Constraint::SubcarrierExclusive, vec![n], (users_on_n - 1) as f64, 1.0);
        }
    }

    for m in 0..config.servers {
        let cap = config.mec_capacity_hz[m];
        for k in 0..config.users {
            push(Constraint::MecNonneg, vec![k, m], -alloc.f_mec[k][m], cap);
        }
        let used: f64 = (0..config.users).map(|k| alloc.f_mec[k][m]).sum();
        push(Constraint::MecCapacity, vec![m], used - cap, cap);
    }
    report
}
