//! Primal completion: turns a subcarrier/power choice into a feasible
//! allocation, or reports that none was found.
//!
//! With subcarriers and powers fixed, pair rates `r` and powers `P` are fixed
//! too. The CPU frequencies can then be eliminated: the local one is set to
//! the smallest value meeting the deadline, `c·s·u/T`, and each server share
//! to the smallest value meeting its pair's deadline,
//! `c_m·s·λ/(T − s·λ/r)`. What is left is a convex feasibility problem in λ:
//!
//! ```text
//! energy_k:  η·(c·s·u)³/T² + Σ_m s·λ_m·P_m/r_m ≤ E
//! capacity_m: Σ_k c_m·s·λ_k/(T − s·λ_k/r_k) ≤ F_m
//! ```
//!
//! plus box and simplex rows. It is solved as a phase-one problem on the
//! max-normalized violation `t` with a log-barrier Newton method; the
//! barrier duality gap certifies infeasibility when `t` cannot reach 0.

use std::f64::consts::LN_2;

use crate::channel::ChannelState;
use nalgebra::{DMatrix, DVector};

use crate::lp::{OffloadMode, SplitRule};
use crate::model::{check_feasibility, rate_unchecked, Allocation, Pair, SystemConfig};

use super::closed_form::{optimal_power_limit, ScoreInputs};
use super::PowerRule;

const BARRIER_ROUNDS: usize = 40;
const BARRIER_GROWTH: f64 = 10.0;
const NEWTON_MAX_ITER: usize = 80;
/// Duality gap at which the offload maximization stops.
const OFFLOAD_GAP: f64 = 1e-9;
/// Normalized violation accepted as zero.
const ACCEPT: f64 = 1e-10;
/// Keeps each pair strictly inside its transmission-time domain.
const DOMAIN_MARGIN: f64 = 1e-6;
const MAX_BACKOFF: usize = 8;
const BACKOFF: f64 = 0.5;

/// Fixed per-pair data of a subcarrier/power choice.
struct PairData {
    rate: Vec<Vec<f64>>,
    power: Vec<Vec<f64>>,
}

/// Drops subcarriers that carry no positive worst-case rate, clears power
/// that is not on an owned subcarrier, and fits each user into its budget.
/// Under [`PowerRule::Equal`] each user's power is re-split evenly over the
/// subcarriers it keeps.
pub(crate) fn clean(
    config: &SystemConfig,
    channels: &ChannelState,
    subcarriers: &[Option<Pair>],
    power: &[Vec<f64>],
    rule: PowerRule,
) -> (Vec<Option<Pair>>, Vec<Vec<f64>>) {
    let (kk, nn) = (config.users, config.subcarriers);
    let mut x = subcarriers.to_vec();
    let mut q = vec![vec![0.0; nn]; kk];
    for n in 0..nn {
        if let Some((k, m)) = x[n] {
            let p = power[k][n];
            let r = rate_unchecked(
                p,
                channels.h_tilde[k][n][m],
                channels.g_worst(k, n),
                config.bandwidth_hz,
                false,
            );
            if p > 0.0 && r > 0.0 {
                q[k][n] = p;
            } else {
                x[n] = None;
            }
        }
    }
    for k in 0..kk {
        let p_max = config.tasks[k].p_max_w;
        let total: f64 = q[k].iter().sum();
        let count = x.iter().filter(|s| matches!(s, Some((u, _)) if *u == k)).count();
        if count == 0 {
            continue;
        }
        match rule {
            PowerRule::Optimal => {
                if total > p_max {
                    let s = p_max / total;
                    q[k].iter_mut().for_each(|p| *p *= s);
                }
            }
            PowerRule::Equal => {
                let level = total.min(p_max) / count as f64;
                for n in 0..nn {
                    if q[k][n] > 0.0 {
                        q[k][n] = level;
                    }
                }
            }
        }
    }
    (x, q)
}

fn pair_data(
    config: &SystemConfig,
    channels: &ChannelState,
    x: &[Option<Pair>],
    q: &[Vec<f64>],
) -> PairData {
    let (kk, mm) = (config.users, config.servers);
    let mut rate = vec![vec![0.0; mm]; kk];
    let mut power = vec![vec![0.0; mm]; kk];
    for (n, slot) in x.iter().enumerate() {
        if let Some((k, m)) = *slot {
            rate[k][m] += rate_unchecked(
                q[k][n],
                channels.h_tilde[k][n][m],
                channels.g_worst(k, n),
                config.bandwidth_hz,
                false,
            );
            power[k][m] += q[k][n] + config.tasks[k].p_circuit_w;
        }
    }
    PairData { rate, power }
}

/// Offload variables: one per pair with a positive rate.
struct Problem<'a> {
    config: &'a SystemConfig,
    data: &'a PairData,
    mode: OffloadMode,
    vars: Vec<Pair>,
    /// Strict upper end of each variable: the transmission-time domain,
    /// shrunk by [`DOMAIN_MARGIN`].
    upper: Vec<f64>,
    user_vars: Vec<Vec<usize>>,
    /// Partial mode: least offload fraction the local CPU leaves over.
    min_offload: Vec<f64>,
}

#[derive(Clone, Copy)]
enum Row {
    Energy(usize),
    Capacity(usize),
    MinOffload(usize),
}

/// Normalized row value `g`, its gradient and its Hessian (over λ).
struct RowEval {
    value: f64,
    grad: Vec<f64>,
    hess: Vec<(usize, usize, f64)>,
}

impl<'a> Problem<'a> {
    fn new(config: &'a SystemConfig, data: &'a PairData, mode: OffloadMode) -> Self {
        let mut vars = Vec::new();
        let mut upper = Vec::new();
        let mut user_vars = vec![Vec::new(); config.users];
        for (k, task) in config.tasks.iter().enumerate() {
            for m in 0..config.servers {
                let r = data.rate[k][m];
                if r > 0.0 {
                    user_vars[k].push(vars.len());
                    vars.push((k, m));
                    upper.push(r * task.t_max_s / task.s_bits * (1.0 - DOMAIN_MARGIN));
                }
            }
        }
        let min_offload = config
            .tasks
            .iter()
            .map(|t| match mode {
                OffloadMode::Partial => (1.0 - t.t_max_s * t.f_local_hz / t.cycles()).max(0.0),
                OffloadMode::Full => 1.0,
            })
            .collect();
        Problem { config, data, mode, vars, upper, user_vars, min_offload }
    }

    fn local_coef(&self, k: usize) -> f64 {
        let task = &self.config.tasks[k];
        match self.mode {
            OffloadMode::Partial => {
                let cs = task.cycles();
                task.eta * cs * cs * cs / (task.t_max_s * task.t_max_s)
            }
            OffloadMode::Full => 0.0,
        }
    }

    fn user_sum(&self, k: usize, lambda: &[f64]) -> f64 {
        self.user_vars[k].iter().map(|&j| lambda[j]).sum()
    }

    /// Whether some row fails for every λ.
    fn hopeless(&self) -> bool {
        for (k, task) in self.config.tasks.iter().enumerate() {
            let reach: f64 = self.user_vars[k].iter().map(|&j| self.upper[j]).sum();
            match self.mode {
                OffloadMode::Full => {
                    if reach <= 1.0 {
                        return true;
                    }
                }
                OffloadMode::Partial => {
                    if self.min_offload[k] > 0.0 && self.min_offload[k] >= reach.min(1.0) {
                        return true;
                    }
                    if self.user_vars[k].is_empty() && self.local_coef(k) > task.e_budget_j {
                        return true;
                    }
                }
            }
        }
        false
    }

    fn rows(&self) -> Vec<Row> {
        let mut rows = Vec::new();
        for k in 0..self.config.users {
            if !self.user_vars[k].is_empty() {
                rows.push(Row::Energy(k));
                if self.mode == OffloadMode::Partial && self.min_offload[k] > 0.0 {
                    rows.push(Row::MinOffload(k));
                }
            }
        }
        for m in 0..self.config.servers {
            if self.vars.iter().any(|&(_, mm)| mm == m) {
                rows.push(Row::Capacity(m));
            }
        }
        rows
    }

    fn eval(&self, row: Row, lambda: &[f64]) -> RowEval {
        let n = self.vars.len();
        let mut grad = vec![0.0; n];
        let mut hess = Vec::new();
        let value = match row {
            Row::Energy(k) => {
                let task = &self.config.tasks[k];
                let scale = task.e_budget_j.max(1e-12);
                let a = self.local_coef(k);
                let u = (1.0 - self.user_sum(k, lambda)).max(0.0);
                let mut e = a * u * u * u;
                for &j in &self.user_vars[k] {
                    let m = self.vars[j].1;
                    let per_unit = task.s_bits * self.data.power[k][m] / self.data.rate[k][m];
                    e += per_unit * lambda[j];
                    grad[j] = (per_unit - 3.0 * a * u * u) / scale;
                }
                if a > 0.0 {
                    let h = 6.0 * a * u / scale;
                    for &i in &self.user_vars[k] {
                        for &j in &self.user_vars[k] {
                            hess.push((i, j, h));
                        }
                    }
                }
                e / scale - 1.0
            }
            Row::Capacity(m) => {
                let cap = self.config.mec_capacity_hz[m];
                let c_m = self.config.mec_cycles_per_bit[m];
                let mut used = 0.0;
                for (j, &(k, mm)) in self.vars.iter().enumerate() {
                    if mm != m {
                        continue;
                    }
                    let task = &self.config.tasks[k];
                    let (s, t, r) = (task.s_bits, task.t_max_s, self.data.rate[k][m]);
                    let d = t - s * lambda[j] / r;
                    used += c_m * s * lambda[j] / d;
                    grad[j] = c_m * s * t / (d * d) / cap;
                    hess.push((j, j, 2.0 * c_m * s * t * (s / r) / (d * d * d) / cap));
                }
                used / cap - 1.0
            }
            Row::MinOffload(k) => {
                for &j in &self.user_vars[k] {
                    grad[j] = -1.0;
                }
                self.min_offload[k] - self.user_sum(k, lambda)
            }
        };
        RowEval { value, grad, hess }
    }

    /// Strict bounds kept by the barrier itself: `0 < λ < upper` and, under
    /// partial offloading, `Σλ < 1`. Returns `None` outside.
    fn hard_slacks(&self, lambda: &[f64]) -> Option<Vec<(f64, Vec<(usize, f64)>)>> {
        let mut out = Vec::new();
        for (j, &l) in lambda.iter().enumerate() {
            if !(l > 0.0 && l < self.upper[j]) {
                return None;
            }
            out.push((l, vec![(j, 1.0)]));
            out.push((self.upper[j] - l, vec![(j, -1.0)]));
        }
        if self.mode == OffloadMode::Partial {
            for k in 0..self.config.users {
                if self.user_vars[k].is_empty() {
                    continue;
                }
                let slack = 1.0 - self.user_sum(k, lambda);
                if !(slack > 0.0) {
                    return None;
                }
                out.push((slack, self.user_vars[k].iter().map(|&j| (j, -1.0)).collect()));
            }
        }
        Some(out)
    }

    fn start(&self) -> Vec<f64> {
        let mut lambda = vec![0.0; self.vars.len()];
        for vars in &self.user_vars {
            let reach: f64 = vars.iter().map(|&j| self.upper[j]).sum();
            for &j in vars {
                lambda[j] = match self.mode {
                    OffloadMode::Full => self.upper[j] / reach,
                    OffloadMode::Partial => 0.5 * self.upper[j].min(1.0 / vars.len() as f64),
                };
            }
        }
        lambda
    }

    /// Barrier function. With `t` given (phase one) it is
    /// `w·t − Σ ln(t − g) − Σ ln(hard)`; without, `−w·Σλ − Σ ln(−g) − Σ ln(hard)`.
    /// `None` outside the domain.
    fn barrier(&self, rows: &[Row], lambda: &[f64], t: Option<f64>, w: f64) -> Option<f64> {
        let hard = self.hard_slacks(lambda)?;
        let mut f = match t {
            Some(t) => w * t,
            None => -w * lambda.iter().sum::<f64>(),
        };
        let level = t.unwrap_or(0.0);
        for &row in rows {
            let gap = level - self.eval(row, lambda).value;
            if !(gap > 0.0) {
                return None;
            }
            f -= gap.ln();
        }
        for (h, _) in hard {
            f -= h.ln();
        }
        Some(f)
    }

    fn blame(&self, rows: &[Row], lambda: &[f64]) -> Vec<bool> {
        let mut out = vec![false; self.config.users];
        for &row in rows {
            if self.eval(row, lambda).value <= ACCEPT {
                continue;
            }
            match row {
                Row::Energy(k) => out[k] = true,
                Row::Capacity(m) => {
                    for (j, &(k, mm)) in self.vars.iter().enumerate() {
                        if mm == m && lambda[j] > 0.0 {
                            out[k] = true;
                        }
                    }
                }
                Row::MinOffload(_) => {}
            }
        }
        out
    }

    fn worst(&self, rows: &[Row], lambda: &[f64]) -> f64 {
        rows.iter().map(|&r| self.eval(r, lambda).value).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Newton direction for [`Problem::barrier`] with the full-offload sums
    /// held fixed. The step covers `(λ, t)` in phase one and `λ` otherwise.
    /// Returns the step and the squared Newton decrement.
    fn newton(&self, rows: &[Row], lambda: &[f64], t: Option<f64>, w: f64) -> Option<(Vec<f64>, f64)> {
        let n = self.vars.len();
        let dim = if t.is_some() { n + 1 } else { n };
        let mut grad = DVector::<f64>::zeros(dim);
        let mut hess = DMatrix::<f64>::zeros(dim, dim);
        match t {
            Some(_) => grad[n] = w,
            None => grad.iter_mut().for_each(|g| *g = -w),
        }
        let level = t.unwrap_or(0.0);
        for &row in rows {
            let ev = self.eval(row, lambda);
            let inv = 1.0 / (level - ev.value);
            // The row is g(λ) − t ≤ 0 in phase one and g(λ) ≤ 0 after.
            let mut a = ev.grad.clone();
            if t.is_some() {
                a.push(-1.0);
            }
            for i in 0..dim {
                grad[i] += a[i] * inv;
                for j in 0..dim {
                    hess[(i, j)] += a[i] * a[j] * inv * inv;
                }
            }
            for (i, j, h) in ev.hess {
                hess[(i, j)] += h * inv;
            }
        }
        for (h, coeffs) in self.hard_slacks(lambda)? {
            let inv = 1.0 / h;
            for &(i, ci) in &coeffs {
                grad[i] -= ci * inv;
                for &(j, cj) in &coeffs {
                    hess[(i, j)] += ci * cj * inv * inv;
                }
            }
        }
        let eq: Vec<&Vec<usize>> = match self.mode {
            OffloadMode::Full => self.user_vars.iter().filter(|v| !v.is_empty()).collect(),
            OffloadMode::Partial => Vec::new(),
        };
        let size = dim + eq.len();
        let mut kkt = DMatrix::<f64>::zeros(size, size);
        kkt.view_mut((0, 0), (dim, dim)).copy_from(&hess);
        for (r, vars) in eq.iter().enumerate() {
            for &j in vars.iter() {
                kkt[(dim + r, j)] = 1.0;
                kkt[(j, dim + r)] = 1.0;
            }
        }
        let mut rhs = DVector::<f64>::zeros(size);
        for i in 0..dim {
            rhs[i] = -grad[i];
        }
        let sol = kkt.clone().lu().solve(&rhs).or_else(|| {
            let scale = hess.diagonal().amax().max(1.0);
            for i in 0..dim {
                kkt[(i, i)] += 1e-12 * scale;
            }
            kkt.lu().solve(&rhs)
        })?;
        let step: Vec<f64> = sol.iter().take(dim).copied().collect();
        let decrement = -step.iter().zip(grad.iter()).map(|(s, g)| s * g).sum::<f64>();
        Some((step, decrement))
    }

    /// Damped Newton iterations on the barrier at weight `w`. `stop` is
    /// checked after every accepted step.
    fn center(
        &self,
        rows: &[Row],
        lambda: &mut Vec<f64>,
        t: &mut Option<f64>,
        w: f64,
        stop: &dyn Fn(&[f64]) -> bool,
    ) -> bool {
        let n = self.vars.len();
        for _ in 0..NEWTON_MAX_ITER {
            let Some((step, decrement)) = self.newton(rows, lambda, *t, w) else {
                return false;
            };
            if decrement / 2.0 < 1e-10 {
                return false;
            }
            let f0 = self.barrier(rows, lambda, *t, w).unwrap_or(f64::INFINITY);
            let mut size = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let cand: Vec<f64> = (0..n).map(|i| lambda[i] + size * step[i]).collect();
                let ct = t.map(|t| t + size * step[n]);
                if let Some(f) = self.barrier(rows, &cand, ct, w) {
                    if f <= f0 - 0.25 * size * decrement {
                        *lambda = cand;
                        *t = ct;
                        moved = true;
                        break;
                    }
                }
                size *= 0.5;
            }
            if !moved {
                return false;
            }
            if stop(lambda) {
                return true;
            }
        }
        false
    }
}

enum SplitOutcome {
    Feasible(Vec<Vec<f64>>),
    /// Users implicated in the rows still violated at the last iterate.
    Infeasible(Vec<bool>),
    /// Lowering power cannot help.
    Hopeless,
}

/// Phase-one log-barrier method on `min t  s.t.  g_i(λ) ≤ t`. Stops as soon
/// as every row holds, or once the duality gap proves `t* > 0`. Under
/// [`SplitRule::MaxOffload`] a second barrier phase then maximizes `Σλ`.
fn split(problem: &Problem, rule: SplitRule) -> SplitOutcome {
    if problem.hopeless() {
        return SplitOutcome::Hopeless;
    }
    let rows = problem.rows();
    let mut lambda = problem.start();
    if problem.vars.is_empty() {
        return SplitOutcome::Feasible(problem.to_matrix(&lambda));
    }
    let terms = (rows.len() + problem.hard_slacks(&lambda).map_or(0, |h| h.len())) as f64;
    let strict = |l: &[f64]| problem.worst(&rows, l) <= -ACCEPT;
    if !strict(&lambda) {
        let mut t = Some(problem.worst(&rows, &lambda) + 1.0);
        let mut w = 1.0;
        let mut found = false;
        for _ in 0..BARRIER_ROUNDS {
            if problem.center(&rows, &mut lambda, &mut t, w, &strict) {
                found = true;
                break;
            }
            let gap = terms / w;
            if t.unwrap_or(0.0) - gap > 0.0 {
                return SplitOutcome::Infeasible(problem.blame(&rows, &lambda));
            }
            if gap < ACCEPT {
                break;
            }
            w *= BARRIER_GROWTH;
        }
        if !found {
            return if problem.worst(&rows, &lambda) <= ACCEPT {
                SplitOutcome::Feasible(problem.to_matrix(&lambda))
            } else {
                SplitOutcome::Infeasible(problem.blame(&rows, &lambda))
            };
        }
    }
    if rule == SplitRule::MaxOffload && problem.mode == OffloadMode::Partial {
        let mut t = None;
        let mut w = 1.0;
        while terms / w > OFFLOAD_GAP {
            problem.center(&rows, &mut lambda, &mut t, w, &|_| false);
            w *= BARRIER_GROWTH;
        }
    }
    SplitOutcome::Feasible(problem.to_matrix(&lambda))
}

impl Problem<'_> {
    fn to_matrix(&self, lambda: &[f64]) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.config.servers]; self.config.users];
        for (j, &(k, m)) in self.vars.iter().enumerate() {
            out[k][m] = if lambda[j] > 1e-14 { lambda[j] } else { 0.0 };
        }
        for row in out.iter_mut() {
            normalize_simplex(row, self.mode);
        }
        out
    }
}

/// Makes `Σλ` land exactly on 1 under full offloading and never above 1.
fn normalize_simplex(row: &mut [f64], mode: OffloadMode) {
    let total: f64 = row.iter().sum();
    let target_one = mode == OffloadMode::Full || total > 1.0;
    if !target_one || total <= 0.0 {
        return;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
    for _ in 0..4 {
        let s: f64 = row.iter().sum();
        if s == 1.0 {
            break;
        }
        let (imax, _) = row
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
        row[imax] += 1.0 - s;
    }
}

fn assemble(
    config: &SystemConfig,
    x: &[Option<Pair>],
    q: &[Vec<f64>],
    data: &PairData,
    lambda: Vec<Vec<f64>>,
    mode: OffloadMode,
) -> Allocation {
    let (kk, mm) = (config.users, config.servers);
    let mut alloc = Allocation::empty(config);
    alloc.subcarriers = x.to_vec();
    alloc.power = q.to_vec();
    alloc.offload = lambda;
    for (k, task) in config.tasks.iter().enumerate() {
        let u = 1.0 - alloc.offload_sum(k);
        alloc.f_local[k] = match mode {
            OffloadMode::Full => 0.0,
            OffloadMode::Partial if u > 0.0 => (task.cycles() * u / task.t_max_s).min(task.f_local_hz),
            OffloadMode::Partial => 0.0,
        };
        for m in 0..mm {
            alloc.phi[k][m] = data.rate[k][m];
        }
    }
    for m in 0..mm {
        let c_m = config.mec_cycles_per_bit[m];
        let mut need = vec![0.0; kk];
        for (k, task) in config.tasks.iter().enumerate() {
            let l = alloc.offload[k][m];
            if l > 0.0 {
                let (s, t) = (task.s_bits, task.t_max_s);
                need[k] = c_m * s * l / (t - s * l / data.rate[k][m]);
            }
        }
        let total: f64 = need.iter().sum();
        let spare = (config.mec_capacity_hz[m] - total).max(0.0);
        for k in 0..kk {
            alloc.f_mec[k][m] = if total > 0.0 { need[k] + spare * need[k] / total } else { 0.0 };
        }
    }
    alloc
}

/// Per-user water-filling of the full power budget over the subcarriers the
/// user holds, for the unclipped worst-case rate.
pub(crate) fn water_fill(
    config: &SystemConfig,
    channels: &ChannelState,
    subcarriers: &[Option<Pair>],
) -> Vec<Vec<f64>> {
    let b = config.bandwidth_hz;
    let mut q = vec![vec![0.0; config.subcarriers]; config.users];
    for (k, task) in config.tasks.iter().enumerate() {
        let links: Vec<(usize, f64, f64)> = subcarriers
            .iter()
            .enumerate()
            .filter_map(|(n, s)| match s {
                Some((u, m)) if *u == k => {
                    let (h, g) = (channels.h_tilde[k][n][*m], channels.g_worst(k, n));
                    (h > g).then_some((n, h, g))
                }
                _ => None,
            })
            .collect();
        if links.is_empty() || !(task.p_max_w > 0.0) {
            continue;
        }
        let level = |theta: f64| -> Vec<f64> {
            links
                .iter()
                .map(|&(_, h, g)| {
                    let inputs = ScoreInputs {
                        h_tilde: h,
                        g,
                        bandwidth_hz: b,
                        psi: 0.0,
                        gamma: 0.0,
                        theta,
                        s_bits: 0.0,
                        lambda: 0.0,
                        phi: 1.0,
                    };
                    optimal_power_limit(&inputs).unwrap_or(0.0)
                })
                .collect()
        };
        // Slope of the rate at p = 0 bounds the price from above.
        let mut hi = links.iter().map(|&(_, h, g)| b * (h - g) / LN_2).fold(0.0, f64::max);
        let mut lo = hi;
        while level(lo).iter().sum::<f64>() < task.p_max_w && lo > 1e-300 {
            lo *= 0.5;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if level(mid).iter().sum::<f64>() > task.p_max_w {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        let p = level(hi);
        for (&(n, _, _), v) in links.iter().zip(p) {
            q[k][n] = v;
        }
    }
    q
}

/// Completes `(subcarriers, power)` into a feasible allocation. Users whose
/// energy row cannot be met have their powers halved, a few times at most.
pub(crate) fn complete(
    config: &SystemConfig,
    channels: &ChannelState,
    subcarriers: &[Option<Pair>],
    power: &[Vec<f64>],
    mode: OffloadMode,
    rule: PowerRule,
    split_rule: SplitRule,
    tol_rel: f64,
) -> Option<Allocation> {
    let (x, q0) = clean(config, channels, subcarriers, power, rule);
    let mut scale = vec![1.0; config.users];
    for _ in 0..=MAX_BACKOFF {
        let q: Vec<Vec<f64>> = q0
            .iter()
            .zip(&scale)
            .map(|(row, s)| row.iter().map(|p| p * s).collect())
            .collect();
        let data = pair_data(config, channels, &x, &q);
        match split(&Problem::new(config, &data, mode), split_rule) {
            SplitOutcome::Feasible(lambda) => {
                let alloc = assemble(config, &x, &q, &data, lambda, mode);
                if check_feasibility(config, channels, &alloc, tol_rel).is_feasible() {
                    return Some(alloc);
                }
                return None;
            }
            SplitOutcome::Hopeless => return None,
            SplitOutcome::Infeasible(blamed) => {
                if !blamed.iter().any(|b| *b) {
                    return None;
                }
                for (s, b) in scale.iter_mut().zip(blamed) {
                    if b {
                        *s *= BACKOFF;
                    }
                }
            }
        }
    }
    None
}
