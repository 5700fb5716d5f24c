//! Lagrange multipliers, the Lagrangian of the auxiliary-variable problem,
//! constraint residuals and the projected subgradient step.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelState;
use crate::error::{Error, Result};
use crate::model::{local_energy, pair_power, pair_rate, rate_unchecked, Allocation, SystemConfig};

/// One multiplier per constraint row. Indexing mirrors [`Allocation`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    /// Local latency, per user.
    pub alpha: Vec<f64>,
    /// Offload latency, per pair.
    pub beta: Vec<Vec<f64>>,
    /// Energy, per user.
    pub gamma: Vec<f64>,
    /// Power budget, per user.
    pub theta: Vec<f64>,
    /// Server capacity, per server.
    pub mu: Vec<f64>,
    /// `Φ ≤ achieved rate`, per pair.
    pub psi: Vec<Vec<f64>>,
    /// Local frequency cap, per user.
    pub varphi: Vec<f64>,
}

impl DualState {
    pub fn zeros(users: usize, servers: usize) -> Self {
        DualState {
            alpha: vec![0.0; users],
            beta: vec![vec![0.0; servers]; users],
            gamma: vec![0.0; users],
            theta: vec![0.0; users],
            mu: vec![0.0; servers],
            psi: vec![vec![0.0; servers]; users],
            varphi: vec![0.0; users],
        }
    }

    fn entries(&self) -> impl Iterator<Item = &f64> {
        self.alpha
            .iter()
            .chain(self.beta.iter().flatten())
            .chain(&self.gamma)
            .chain(&self.theta)
            .chain(&self.mu)
            .chain(self.psi.iter().flatten())
            .chain(&self.varphi)
    }

    fn entries_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.alpha
            .iter_mut()
            .chain(self.beta.iter_mut().flatten())
            .chain(self.gamma.iter_mut())
            .chain(self.theta.iter_mut())
            .chain(self.mu.iter_mut())
            .chain(self.psi.iter_mut().flatten())
            .chain(self.varphi.iter_mut())
    }

    pub fn is_nonnegative(&self) -> bool {
        self.entries().all(|v| *v >= 0.0)
    }

    pub fn len(&self) -> usize {
        self.entries().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.entries().copied().collect()
    }
}

/// Constraint residuals `g(W)` (feasible when every entry is ≤ 0), laid out
/// like [`DualState`].
pub type Residuals = DualState;

/// `0·∞ = 0` for multiplier-times-residual products.
#[inline]
fn weighted(mult: f64, residual: f64) -> f64 {
    if mult == 0.0 {
        0.0
    } else {
        mult * residual
    }
}

fn local_time(config: &SystemConfig, alloc: &Allocation, k: usize) -> f64 {
    let task = &config.tasks[k];
    let u = (1.0 - alloc.offload_sum(k)).max(0.0);
    if u == 0.0 {
        0.0
    } else if alloc.f_local[k] > 0.0 {
        task.cycles() * u / alloc.f_local[k]
    } else {
        f64::INFINITY
    }
}

/// `s·λ/φ + c_m·s·λ/f − T` on the auxiliary-variable form. An inactive pair
/// has no offload-latency row, so its residual is 0.
fn offload_time_residual(config: &SystemConfig, alloc: &Allocation, k: usize, m: usize) -> Result<f64> {
    let task = &config.tasks[k];
    let lambda = alloc.offload[k][m];
    if lambda <= 0.0 {
        return Ok(0.0);
    }
    let phi = alloc.phi[k][m];
    if !(phi > 0.0) {
        return Err(Error::domain(format!("phi[{k}][{m}] must be > 0 on an active pair")));
    }
    let bits = task.s_bits * lambda;
    let compute = if alloc.f_mec[k][m] > 0.0 {
        config.mec_cycles_per_bit[m] * bits / alloc.f_mec[k][m]
    } else {
        f64::INFINITY
    };
    Ok(bits / phi + compute - task.t_max_s)
}

/// `E^l + Σ_m (s·λ/φ)·Σ_n x·p̃ − E`.
fn energy_residual(config: &SystemConfig, alloc: &Allocation, k: usize) -> Result<f64> {
    let task = &config.tasks[k];
    let u_sum = alloc.offload_sum(k).clamp(0.0, 1.0);
    let mut e = local_energy(task, u_sum, alloc.f_local[k]);
    for m in 0..config.servers {
        let lambda = alloc.offload[k][m];
        if lambda <= 0.0 {
            continue;
        }
        let phi = alloc.phi[k][m];
        if !(phi > 0.0) {
            return Err(Error::domain(format!("phi[{k}][{m}] must be > 0 on an active pair")));
        }
        e += task.s_bits * lambda / phi * pair_power(config, alloc, k, m);
    }
    Ok(e - task.e_budget_j)
}

/// Residual of every multiplied constraint at `alloc`.
pub fn subgradients(
    config: &SystemConfig,
    channels: &ChannelState,
    alloc: &Allocation,
) -> Result<Residuals> {
    let (kk, mm) = (config.users, config.servers);
    let mut r = DualState::zeros(kk, mm);
    for (k, task) in config.tasks.iter().enumerate() {
        r.alpha[k] = local_time(config, alloc, k) - task.t_max_s;
        for m in 0..mm {
            r.beta[k][m] = offload_time_residual(config, alloc, k, m)?;
            r.psi[k][m] = alloc.phi[k][m] - pair_rate(config, channels, alloc, k, m, false);
        }
        r.gamma[k] = energy_residual(config, alloc, k)?;
        r.theta[k] = alloc.user_power(k) - task.p_max_w;
        r.varphi[k] = alloc.f_local[k] - task.f_local_hz;
    }
    for m in 0..mm {
        r.mu[m] = (0..kk).map(|k| alloc.f_mec[k][m]).sum::<f64>() - config.mec_capacity_hz[m];
    }
    Ok(r)
}

/// The Lagrangian of the auxiliary-variable problem:
///
/// ```text
/// Σ_k Σ_n Σ_m x·[(1+ψ)·r̄ − γ·s·λ·(p+p̄)/φ − θ·p]
///   − Σ_k Σ_m [β·(s·λ/φ + c_m·s·λ/f − T) + μ_m·f + ψ·φ] + Σ_m μ_m·F_m
///   − Σ_k [α·(t^l − T) + γ·(E^l − E) − θ·p_max + ϕ·(f^l − F)]
/// ```
pub fn lagrangian_value(
    config: &SystemConfig,
    channels: &ChannelState,
    alloc: &Allocation,
    duals: &DualState,
) -> Result<f64> {
    let mut total = 0.0;
    for (n, slot) in alloc.subcarriers.iter().enumerate() {
        let Some((k, m)) = *slot else { continue };
        let task = &config.tasks[k];
        let p = alloc.power[k][n];
        let rate = rate_unchecked(
            p,
            channels.h_tilde[k][n][m],
            channels.g_worst(k, n),
            config.bandwidth_hz,
            false,
        );
        let lambda = alloc.offload[k][m];
        let energy_term = if lambda > 0.0 && duals.gamma[k] != 0.0 {
            let phi = alloc.phi[k][m];
            if !(phi > 0.0) {
                return Err(Error::domain(format!("phi[{k}][{m}] must be > 0 on an active pair")));
            }
            duals.gamma[k] * task.s_bits * lambda * (p + task.p_circuit_w) / phi
        } else {
            0.0
        };
        total += (1.0 + duals.psi[k][m]) * rate - energy_term - duals.theta[k] * p;
    }
    for (k, task) in config.tasks.iter().enumerate() {
        for m in 0..config.servers {
            total -= weighted(duals.beta[k][m], offload_time_residual(config, alloc, k, m)?);
            total -= duals.mu[m] * alloc.f_mec[k][m];
            total -= duals.psi[k][m] * alloc.phi[k][m];
        }
        let u_sum = alloc.offload_sum(k).clamp(0.0, 1.0);
        total -= weighted(duals.alpha[k], local_time(config, alloc, k) - task.t_max_s);
        total -= duals.gamma[k]
            * (local_energy(task, u_sum, alloc.f_local[k]) - task.e_budget_j);
        total += duals.theta[k] * task.p_max_w;
        total -= duals.varphi[k] * (alloc.f_local[k] - task.f_local_hz);
    }
    for m in 0..config.servers {
        total += duals.mu[m] * config.mec_capacity_hz[m];
    }
    Ok(total)
}

/// Natural scale of each constraint family; residuals are divided by these
/// before a step so that one step length is meaningful across units.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualScales {
    pub latency: Vec<f64>,
    pub energy: Vec<f64>,
    pub power: Vec<f64>,
    pub capacity: Vec<f64>,
    pub rate: f64,
    pub frequency: Vec<f64>,
    /// Objective scale (bits/s) that converts normalized multipliers back.
    pub objective: f64,
}

impl ResidualScales {
    pub fn new(config: &SystemConfig) -> Self {
        let objective = config.bandwidth_hz * config.subcarriers as f64;
        ResidualScales {
            latency: config.tasks.iter().map(|t| t.t_max_s).collect(),
            energy: config.tasks.iter().map(|t| t.e_budget_j.max(1e-12)).collect(),
            power: config.tasks.iter().map(|t| t.p_max_w.max(1e-12)).collect(),
            capacity: config.mec_capacity_hz.clone(),
            rate: objective,
            frequency: config.tasks.iter().map(|t| t.f_local_hz).collect(),
            objective,
        }
    }
}

/// Largest normalized residual step taken in one update.
const RESIDUAL_CLIP: f64 = 10.0;

/// Projected subgradient step `mult ← max(mult + step·residual, 0)`.
pub fn update_multipliers(duals: &DualState, residuals: &Residuals, step: f64) -> DualState {
    let mut out = duals.clone();
    for (v, r) in out.entries_mut().zip(residuals.entries()) {
        let next = *v + step * r;
        if !next.is_nan() {
            *v = next.max(0.0);
        }
    }
    out
}

/// The step the solver takes: each residual is divided by its family's
/// scale `C` and clipped to `RESIDUAL_CLIP`, and the multiplier moves by
/// `step·R/C` times that, `R` being the objective scale.
pub fn update_multipliers_scaled(
    duals: &DualState,
    residuals: &Residuals,
    step: f64,
    scales: &ResidualScales,
) -> DualState {
    let r_obj = scales.objective;
    let mv = |mult: f64, res: f64, c: f64| -> f64 {
        let normalized = (res / c).min(RESIDUAL_CLIP);
        let next = mult + step * r_obj / c * normalized;
        if next.is_nan() {
            mult
        } else {
            next.max(0.0)
        }
    };
    let mut out = duals.clone();
    for k in 0..duals.alpha.len() {
        let t = scales.latency[k];
        out.alpha[k] = mv(duals.alpha[k], residuals.alpha[k], t);
        for m in 0..duals.mu.len() {
            out.beta[k][m] = mv(duals.beta[k][m], residuals.beta[k][m], t);
            out.psi[k][m] = mv(duals.psi[k][m], residuals.psi[k][m], scales.rate);
        }
        out.gamma[k] = mv(duals.gamma[k], residuals.gamma[k], scales.energy[k]);
        out.theta[k] = mv(duals.theta[k], residuals.theta[k], scales.power[k]);
        out.varphi[k] = mv(duals.varphi[k], residuals.varphi[k], scales.frequency[k]);
    }
    for m in 0..duals.mu.len() {
        out.mu[m] = mv(duals.mu[m], residuals.mu[m], scales.capacity[m]);
    }
    out
}

/// Raises `μ` and `ψ` to their floors.
pub fn apply_floors(duals: &mut DualState, mu_floor: f64, psi_floor: f64) {
    for v in duals.mu.iter_mut() {
        *v = v.max(mu_floor);
    }
    for v in duals.psi.iter_mut().flatten() {
        *v = v.max(psi_floor);
    }
}

/// Relative change between two multiplier vectors, each entry measured in
/// its family's natural unit.
pub fn relative_change(a: &DualState, b: &DualState) -> f64 {
    let num: f64 = a
        .entries()
        .zip(b.entries())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let den: f64 = a.entries().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    num / den
}

impl DualState {
    /// Applies `f` to every entry.
    pub fn map_in_place(&mut self, mut f: impl FnMut(&mut f64)) {
        for v in self.entries_mut() {
            f(v);
        }
    }
}
