//! The three nested loops: offload split (outer), multipliers (middle) and
//! primal block ascent (inner).

use std::f64::consts::LN_2;

use crate::channel::ChannelState;
use crate::error::{Error, Result};
use crate::lp::{build_p1, solve_p1, OffloadMode};
use crate::model::{
    check_feasibility, metrics, objective, pair_power, pair_rate, Allocation, Pair, SystemConfig,
};

use super::closed_form::{
    optimal_mec_frequency_raw, optimal_phi_raw, optimal_power_limit, optimal_user_frequency,
    project_capacity, update_phi, LocalCubic, RootOptions, ScoreInputs,
};
use super::dual::{
    lagrangian_value, relative_change, subgradients, update_multipliers_scaled, DualState,
    ResidualScales,
};
use super::recovery::{complete, water_fill};
use super::{ConvergenceTrace, PowerRule, Scheme, Solution, SolverConfig, TraceRow};

/// Lower end of `Φ` on an active pair (bits/s).
const PHI_FLOOR: f64 = 1e-9;

/// Winner of one subcarrier's argmax.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubcarrierChoice {
    pub pair: Option<Pair>,
    pub power: f64,
    pub score: f64,
}

/// Linear price per watt on pair `(k, m)`: `θ + γ·s·λ/φ`.
fn power_price(config: &SystemConfig, duals: &DualState, k: usize, lambda: f64, phi: f64) -> f64 {
    let mut price = duals.theta[k];
    if lambda > 0.0 && duals.gamma[k] > 0.0 {
        price += if phi > 0.0 {
            duals.gamma[k] * config.tasks[k].s_bits * lambda / phi
        } else {
            f64::INFINITY
        };
    }
    price
}

/// Assigns every subcarrier to the pair with the largest per-subcarrier
/// Lagrangian term, each pair scored at its own power: the stationary power
/// under [`PowerRule::Optimal`], `equal_power[k]` under [`PowerRule::Equal`].
/// Ties go to the smallest `(k, m)`.
pub fn allocate_subcarriers(
    config: &SystemConfig,
    channels: &ChannelState,
    duals: &DualState,
    lambda: &[Vec<f64>],
    phi: &[Vec<f64>],
    rule: PowerRule,
    equal_power: &[f64],
) -> Vec<SubcarrierChoice> {
    let b = config.bandwidth_hz;
    (0..config.subcarriers)
        .map(|n| {
            let mut best = SubcarrierChoice {
                pair: None,
                power: 0.0,
                score: f64::NEG_INFINITY,
            };
            for k in 0..config.users {
                let g = channels.g_worst(k, n);
                let p_max = config.tasks[k].p_max_w;
                for m in 0..config.servers {
                    let h = channels.h_tilde[k][n][m];
                    let price = power_price(config, duals, k, lambda[k][m], phi[k][m]);
                    let p = match rule {
                        PowerRule::Equal => equal_power[k],
                        PowerRule::Optimal => optimal_power_at(h, g, b, duals.psi[k][m], price, p_max),
                    };
                    let rate = crate::model::rate_unchecked(p, h, g, b, false);
                    let cost = if p > 0.0 { price * p } else { 0.0 };
                    let score = (1.0 + duals.psi[k][m]) * rate - cost;
                    if score > best.score {
                        best = SubcarrierChoice {
                            pair: Some((k, m)),
                            power: p,
                            score,
                        };
                    }
                }
            }
            best
        })
        .collect()
}

/// Stationary power for a linear price, restricted to `[0, p_max]`.
fn optimal_power_at(h: f64, g: f64, b: f64, psi: f64, price: f64, p_max: f64) -> f64 {
    if h <= g {
        return 0.0;
    }
    if !(price > 0.0) {
        return p_max;
    }
    if price.is_infinite() {
        return 0.0;
    }
    let inputs = ScoreInputs {
        h_tilde: h,
        g,
        bandwidth_hz: b,
        psi,
        gamma: 0.0,
        theta: price,
        s_bits: 0.0,
        lambda: 0.0,
        phi: 1.0,
    };
    optimal_power_limit(&inputs).map_or(0.0, |p| p.min(p_max))
}

struct Context<'a> {
    config: &'a SystemConfig,
    channels: &'a ChannelState,
    solver: &'a SolverConfig,
    rule: PowerRule,
    mode: OffloadMode,
    root: RootOptions,
}

impl Context<'_> {
    /// Subcarriers and power, then the per-user budget. Returns each user's
    /// power before the budget rescale, which drives the `θ` residual.
    fn power_block(&self, w: &mut Allocation, duals: &DualState) -> Vec<f64> {
        let config = self.config;
        let (kk, nn) = (config.users, config.subcarriers);
        let equal: Vec<f64> = (0..kk)
            .map(|k| {
                let held = w.subcarriers.iter().filter(|s| matches!(s, Some((u, _)) if *u == k)).count();
                let share = if held > 0 { held } else { nn.div_ceil(kk) };
                config.tasks[k].p_max_w / share.max(1) as f64
            })
            .collect();
        let choices =
            allocate_subcarriers(config, self.channels, duals, &w.offload, &w.phi, self.rule, &equal);
        w.power = vec![vec![0.0; nn]; kk];
        for (n, c) in choices.iter().enumerate() {
            w.subcarriers[n] = c.pair;
            if let Some((k, _)) = c.pair {
                w.power[k][n] = c.power;
            }
        }
        if self.rule == PowerRule::Equal {
            for k in 0..kk {
                let held = w.subcarriers.iter().filter(|s| matches!(s, Some((u, _)) if *u == k)).count();
                if held == 0 {
                    continue;
                }
                let level = config.tasks[k].p_max_w / held as f64;
                for n in 0..nn {
                    if matches!(w.subcarriers[n], Some((u, _)) if u == k) {
                        w.power[k][n] = level;
                    }
                }
            }
        }
        let mut raw = vec![0.0; kk];
        for k in 0..kk {
            let total = w.user_power(k);
            raw[k] = total;
            let p_max = config.tasks[k].p_max_w;
            if total > p_max && total > 0.0 {
                let s = p_max / total;
                w.power[k].iter_mut().for_each(|p| *p *= s);
            }
        }
        raw
    }

    fn server_block(&self, w: &mut Allocation, duals: &DualState) {
        let config = self.config;
        for m in 0..config.servers {
            let mut shares: Vec<f64> = (0..config.users)
                .map(|k| {
                    optimal_mec_frequency_raw(
                        duals.beta[k][m],
                        config.tasks[k].s_bits,
                        w.offload[k][m],
                        config.mec_cycles_per_bit[m],
                        duals.mu[m],
                        self.solver.mu_floor,
                    )
                })
                .collect();
            project_capacity(&mut shares, config.mec_capacity_hz[m]);
            for (k, f) in shares.into_iter().enumerate() {
                w.f_mec[k][m] = f;
            }
        }
    }

    fn local_block(&self, w: &mut Allocation, duals: &DualState) -> Result<()> {
        for (k, task) in self.config.tasks.iter().enumerate() {
            if self.mode == OffloadMode::Full {
                w.f_local[k] = 0.0;
                continue;
            }
            let cubic = LocalCubic {
                alpha: duals.alpha[k],
                gamma: duals.gamma[k],
                varphi: duals.varphi[k],
                eta: task.eta,
                c_cycles_per_bit: task.c_cycles_per_bit,
                s_bits: task.s_bits,
                residual_fraction: (1.0 - w.offload_sum(k)).max(0.0),
            };
            w.f_local[k] = optimal_user_frequency(&cubic, task.f_local_hz, &self.root)?;
        }
        Ok(())
    }

    fn phi_block(&self, w: &mut Allocation, duals: &DualState) {
        let config = self.config;
        for (k, task) in config.tasks.iter().enumerate() {
            for m in 0..config.servers {
                let rate = pair_rate(config, self.channels, w, k, m, false);
                let lambda = w.offload[k][m];
                let raw = optimal_phi_raw(
                    duals.beta[k][m],
                    duals.gamma[k],
                    task.s_bits,
                    lambda,
                    pair_power(config, w, k, m),
                    duals.psi[k][m],
                    self.solver.psi_floor,
                );
                w.phi[k][m] = update_phi(raw, lambda, rate, PHI_FLOOR);
            }
        }
    }

    /// Block ascent on the Lagrangian with λ fixed.
    fn inner(&self, w: &mut Allocation, duals: &DualState) -> Result<(f64, Vec<f64>)> {
        let mut prev = f64::NAN;
        let mut raw_power = vec![0.0; self.config.users];
        let mut value = f64::NAN;
        for _ in 0..self.solver.inner_max {
            raw_power = self.power_block(w, duals);
            self.server_block(w, duals);
            self.local_block(w, duals)?;
            self.phi_block(w, duals);
            value = lagrangian_value(self.config, self.channels, w, duals)?;
            if (value - prev).abs() < self.solver.eps1 * value.abs().max(1.0) {
                break;
            }
            prev = value;
        }
        Ok((value, raw_power))
    }

    fn complete(&self, x: &[Option<Pair>], power: &[Vec<f64>]) -> Option<Allocation> {
        complete(
            self.config,
            self.channels,
            x,
            power,
            self.mode,
            self.rule,
            self.solver.split_rule,
            self.solver.tol_rel,
        )
    }
}

/// Round-robin subcarriers, each on its user's strongest server, at power
/// `p_max/N`.
fn initial_choice(config: &SystemConfig, channels: &ChannelState) -> (Vec<Option<Pair>>, Vec<Vec<f64>>) {
    let (kk, nn) = (config.users, config.subcarriers);
    let mut x = vec![None; nn];
    let mut q = vec![vec![0.0; nn]; kk];
    for n in 0..nn {
        let k = n % kk;
        let row = &channels.h_tilde[k][n];
        let m = (0..config.servers).fold(0, |best, m| if row[m] > row[best] { m } else { best });
        x[n] = Some((k, m));
        q[k][n] = config.tasks[k].p_max_w / nn as f64;
    }
    (x, q)
}

fn initial_duals(config: &SystemConfig, scales: &ResidualScales, solver: &SolverConfig) -> DualState {
    let (kk, mm, nn) = (config.users, config.servers, config.subcarriers);
    let mut d = DualState::zeros(kk, mm);
    let per_user = (nn as f64 / kk as f64).max(1.0);
    for (k, task) in config.tasks.iter().enumerate() {
        // Water level that spreads `p_max` over a fair share of subcarriers.
        d.theta[k] = config.bandwidth_hz * per_user / (LN_2 * task.p_max_w.max(1e-12));
        d.alpha[k] = 1e-3 * scales.objective / task.t_max_s;
        for m in 0..mm {
            d.beta[k][m] = 1e-3 * scales.objective / task.t_max_s;
            d.psi[k][m] = solver.psi_floor;
        }
    }
    for m in 0..mm {
        d.mu[m] = solver.mu_floor;
    }
    d
}

fn floor_and_mask(duals: &mut DualState, solver: &SolverConfig, mode: OffloadMode) {
    super::dual::apply_floors(duals, solver.mu_floor, solver.psi_floor);
    if mode == OffloadMode::Full {
        duals.alpha.iter_mut().for_each(|v| *v = 0.0);
        duals.varphi.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Proposed scheme: optimal power with partial offloading.
pub fn solve(config: &SystemConfig, channels: &ChannelState, solver: &SolverConfig) -> Result<Solution> {
    solve_scheme(config, channels, solver, Scheme::PA)
}

/// Runs the solver for any of the three schemes.
pub fn solve_scheme(
    config: &SystemConfig,
    channels: &ChannelState,
    solver: &SolverConfig,
    scheme: Scheme,
) -> Result<Solution> {
    config.validate()?;
    channels.check_dims(config)?;
    solver.validate()?;
    let ctx = Context {
        config,
        channels,
        solver,
        rule: scheme.power_rule(),
        mode: scheme.offload_mode(),
        root: RootOptions {
            tol: solver.secant_tol,
            max_iter: solver.secant_max_iter,
        },
    };
    let scales = ResidualScales::new(config);
    let (kk, nn) = (config.users, config.subcarriers);

    let (x0, q0) = initial_choice(config, channels);
    let mut best: Option<Allocation> = ctx
        .complete(&x0, &q0)
        .or_else(|| ctx.complete(&vec![None; nn], &vec![vec![0.0; nn]; kk]));
    let mut best_obj = best.as_ref().map_or(f64::NEG_INFINITY, |a| objective(config, channels, a));

    let mut working = match &best {
        Some(a) => a.clone(),
        None => {
            let mut a = Allocation::empty(config);
            a.subcarriers = x0;
            a.power = q0;
            a
        }
    };
    let mut duals = initial_duals(config, &scales, solver);
    floor_and_mask(&mut duals, solver, ctx.mode);

    let mut trace = ConvergenceTrace::default();
    let z_max = if scheme == Scheme::EPA && solver.epa_one_shot { 1 } else { solver.z_max };
    let mut prev_outer = f64::NAN;
    let mut t_global = 0usize;
    for z in 1..=z_max {
        trace.outer_iterations = z;
        // Offload split for the current rates.
        let basis = best.as_ref().unwrap_or(&working);
        if let Some(lambda) = solve_p1(&build_p1(config, channels, basis, ctx.mode), solver.split_rule)?
            .point()
        {
            for k in 0..kk {
                for m in 0..config.servers {
                    working.offload[k][m] = lambda[k * config.servers + m].clamp(0.0, 1.0);
                }
            }
        }

        for t in 1..=solver.dual_max {
            t_global += 1;
            let (value, raw_power) = ctx.inner(&mut working, &duals)?;

            let upper = objective(config, channels, &working);
            if upper > best_obj {
                let mut candidates = vec![ctx.complete(&working.subcarriers, &working.power)];
                if ctx.rule == PowerRule::Optimal {
                    let filled = water_fill(config, channels, &working.subcarriers);
                    candidates.push(ctx.complete(&working.subcarriers, &filled));
                }
                for a in candidates.into_iter().flatten() {
                    let obj = objective(config, channels, &a);
                    if obj > best_obj {
                        best_obj = obj;
                        best = Some(a);
                    }
                }
            }
            let at_best = match &best {
                Some(a) => lagrangian_value(config, channels, a, &duals)?,
                None => f64::NEG_INFINITY,
            };
            trace.rows.push(TraceRow {
                outer: z,
                iter: t_global,
                dual_value: value.max(at_best),
                best_primal_bps: if best.is_some() { best_obj } else { f64::NAN },
                max_violation: check_feasibility(config, channels, &working, 0.0).max_relative(),
            });

            let mut residuals = subgradients(config, channels, &working)?;
            for k in 0..kk {
                residuals.theta[k] = raw_power[k] - config.tasks[k].p_max_w;
            }
            let mut next = update_multipliers_scaled(&duals, &residuals, solver.step(t), &scales);
            floor_and_mask(&mut next, solver, ctx.mode);
            let change = relative_change(&duals, &next);
            duals = next;
            if change < solver.eps1 {
                break;
            }
        }

        let outer_value = if best.is_some() { best_obj } else { -1.0 };
        if (outer_value - prev_outer).abs() <= solver.eps1 * outer_value.abs().max(1.0) {
            trace.converged = true;
            break;
        }
        prev_outer = outer_value;
    }

    match best {
        Some(allocation) => {
            let metrics = metrics(config, channels, &allocation);
            Ok(Solution { allocation, metrics, trace })
        }
        None => Err(Error::Infeasible(format!(
            "{} found no allocation meeting every constraint",
            scheme.name()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TaskSpec;

    fn duals(k: usize, m: usize) -> DualState {
        let mut d = DualState::zeros(k, m);
        d.theta = vec![1.0; k];
        d
    }

    fn config(k: usize, m: usize, n: usize) -> SystemConfig {
        let task = TaskSpec {
            s_bits: 1e4,
            c_cycles_per_bit: 1000.0,
            t_max_s: 1.0,
            e_budget_j: 10.0,
            p_max_w: 1.0,
            p_circuit_w: 1e-3,
            f_local_hz: 1e8,
            eta: 1e-24,
        };
        SystemConfig {
            users: k,
            servers: m,
            subcarriers: n,
            bandwidth_hz: 1.0,
            noise_w: 1e-13,
            mec_cycles_per_bit: vec![1000.0; m],
            mec_capacity_hz: vec![1e9; m],
            tasks: vec![task; k],
        }
    }

    fn flat_channels(k: usize, m: usize, n: usize, h: f64, g: f64) -> ChannelState {
        ChannelState {
            h_tilde: vec![vec![vec![h; m]; n]; k],
            g_bar: vec![vec![g; n]; k],
            eps: 0.0,
            noise_w: 1e-13,
        }
    }

    #[test]
    fn single_candidate_takes_everything() {
        let cfg = config(1, 1, 4);
        let ch = flat_channels(1, 1, 4, 3.0, 1.0);
        let out = allocate_subcarriers(
            &cfg,
            &ch,
            &duals(1, 1),
            &[vec![0.5]],
            &[vec![1.0]],
            PowerRule::Optimal,
            &[0.25],
        );
        assert!(out.iter().all(|c| c.pair == Some((0, 0))));
    }

    #[test]
    fn symmetric_tie_goes_to_smallest_pair() {
        let cfg = config(2, 2, 3);
        let ch = flat_channels(2, 2, 3, 3.0, 1.0);
        let out = allocate_subcarriers(
            &cfg,
            &ch,
            &duals(2, 2),
            &[vec![0.5, 0.5], vec![0.5, 0.5]],
            &[vec![1.0, 1.0], vec![1.0, 1.0]],
            PowerRule::Optimal,
            &[0.3, 0.3],
        );
        assert!(out.iter().all(|c| c.pair == Some((0, 0))));
    }

    #[test]
    fn stronger_score_wins() {
        let cfg = config(2, 1, 1);
        let mut ch = flat_channels(2, 1, 1, 3.0, 1.0);
        ch.h_tilde[1][0][0] = 9.0;
        let out = allocate_subcarriers(
            &cfg,
            &ch,
            &duals(2, 1),
            &[vec![0.5], vec![0.5]],
            &[vec![1.0], vec![1.0]],
            PowerRule::Optimal,
            &[0.3, 0.3],
        );
        assert_eq!(out[0].pair, Some((1, 0)));
    }

    #[test]
    fn equal_rule_uses_given_level() {
        let cfg = config(1, 1, 2);
        let ch = flat_channels(1, 1, 2, 3.0, 1.0);
        let out = allocate_subcarriers(
            &cfg,
            &ch,
            &duals(1, 1),
            &[vec![0.5]],
            &[vec![1.0]],
            PowerRule::Equal,
            &[0.4],
        );
        assert!(out.iter().all(|c| c.power == 0.4));
    }

    #[test]
    fn power_is_positive_exactly_where_legitimate_channel_wins() {
        let mut cfg = config(1, 1, 6);
        cfg.tasks[0].e_budget_j = 1e9;
        cfg.tasks[0].p_max_w = 10.0;
        let mut ch = flat_channels(1, 1, 6, 4.0, 1.0);
        for n in [1, 3, 5] {
            ch.g_bar[0][n] = 5.0;
        }
        let sol = solve(&cfg, &ch, &SolverConfig::default()).unwrap();
        let a = &sol.allocation;
        for n in 0..6 {
            let wins = ch.h_tilde[0][n][0] > ch.g_worst(0, n);
            assert_eq!(a.power[0][n] > 0.0, wins, "subcarrier {n}");
        }
        assert!(check_feasibility(&cfg, &ch, a, 1e-6).is_feasible());
    }

    #[test]
    fn impossible_deadline_is_infeasible() {
        let mut cfg = config(1, 1, 2);
        cfg.bandwidth_hz = 1e4;
        cfg.tasks[0].t_max_s = 1e-5;
        let ch = flat_channels(1, 1, 2, 1e3, 1.0);
        assert!(matches!(
            solve(&cfg, &ch, &SolverConfig::default()),
            Err(Error::Infeasible(_))
        ));
    }
}
