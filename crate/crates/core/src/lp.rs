//! Dense two-phase simplex for the small linear feasibility problems that pick
//! the offload split.
//!
//! Phase 1 minimizes the sum of artificial variables. Dantzig pricing is used
//! until `bland_after` pivots, then Bland's rule takes over to rule out
//! cycling. An optional phase 2 maximizes a linear objective over the feasible
//! set.

use crate::channel::ChannelState;
use crate::error::{Error, Result};
use crate::model::{pair_power, pair_rate, Allocation, SystemConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearFeasibilityProblem {
    pub n_vars: usize,
    /// Rows of `A_ub·x ≤ b_ub`.
    pub a_ub: Vec<Vec<f64>>,
    pub b_ub: Vec<f64>,
    /// Rows of `A_eq·x = b_eq`.
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
    pub lower: Vec<f64>,
    /// `f64::INFINITY` for unbounded above.
    pub upper: Vec<f64>,
}

impl LinearFeasibilityProblem {
    pub fn new(n_vars: usize) -> Self {
        LinearFeasibilityProblem {
            n_vars,
            a_ub: Vec::new(),
            b_ub: Vec::new(),
            a_eq: Vec::new(),
            b_eq: Vec::new(),
            lower: vec![0.0; n_vars],
            upper: vec![f64::INFINITY; n_vars],
        }
    }

    pub fn push_le(&mut self, row: Vec<f64>, rhs: f64) {
        self.a_ub.push(row);
        self.b_ub.push(rhs);
    }

    pub fn push_eq(&mut self, row: Vec<f64>, rhs: f64) {
        self.a_eq.push(row);
        self.b_eq.push(rhs);
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_vars;
        let rows_ok = self.a_ub.iter().chain(&self.a_eq).all(|r| r.len() == n)
            && self.a_ub.len() == self.b_ub.len()
            && self.a_eq.len() == self.b_eq.len()
            && self.lower.len() == n
            && self.upper.len() == n;
        if !rows_ok {
            return Err(Error::domain("LP dimensions are inconsistent"));
        }
        let finite = self
            .a_ub
            .iter()
            .chain(&self.a_eq)
            .flatten()
            .chain(&self.b_ub)
            .chain(&self.b_eq)
            .chain(&self.lower)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::domain("LP data must be finite (upper bounds may be +inf)"));
        }
        if self.lower.iter().zip(&self.upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::domain("LP box bounds need lower <= upper"));
        }
        Ok(())
    }

    /// Largest absolute residual of `x` over all rows and bounds.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let dot = |row: &[f64]| row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        let mut worst = 0.0f64;
        for (row, &b) in self.a_ub.iter().zip(&self.b_ub) {
            worst = worst.max(dot(row) - b);
        }
        for (row, &b) in self.a_eq.iter().zip(&self.b_eq) {
            worst = worst.max((dot(row) - b).abs());
        }
        for ((&xi, &l), &u) in x.iter().zip(&self.lower).zip(&self.upper) {
            worst = worst.max(l - xi).max(xi - u);
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Feasible(Vec<f64>),
    /// Phase-1 optimum, i.e. the minimal total artificial residual.
    Infeasible { residual: f64 },
}

impl LpOutcome {
    pub fn point(&self) -> Option<&[f64]> {
        match self {
            LpOutcome::Feasible(x) => Some(x),
            LpOutcome::Infeasible { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    pub tol: f64,
    pub bland_after: usize,
    pub max_pivots: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            tol: 1e-9,
            bland_after: 200,
            max_pivots: 20_000,
        }
    }
}

/// Returns the phase-1 vertex, or `Infeasible` when the phase-1 optimum
/// exceeds the tolerance.
pub fn find_feasible(lp: &LinearFeasibilityProblem) -> Result<LpOutcome> {
    solve(lp, None, &SimplexOptions::default())
}

/// Like [`find_feasible`], then maximizes `objective·x` over the feasible set.
pub fn find_feasible_max(lp: &LinearFeasibilityProblem, objective: &[f64]) -> Result<LpOutcome> {
    solve(lp, Some(objective), &SimplexOptions::default())
}

pub fn solve(
    lp: &LinearFeasibilityProblem,
    objective: Option<&[f64]>,
    opts: &SimplexOptions,
) -> Result<LpOutcome> {
    lp.validate()?;
    if let Some(c) = objective {
        if c.len() != lp.n_vars {
            return Err(Error::domain("objective length must equal n_vars"));
        }
    }
    let n = lp.n_vars;

    // Shift to y = x − lower ≥ 0; finite upper bounds become rows.
    let shift = |row: &[f64], b: f64| b - row.iter().zip(&lp.lower).map(|(a, l)| a * l).sum::<f64>();
    let mut le_rows: Vec<(Vec<f64>, f64)> = lp
        .a_ub
        .iter()
        .zip(&lp.b_ub)
        .map(|(r, &b)| (r.clone(), shift(r, b)))
        .collect();
    for j in 0..n {
        if lp.upper[j].is_finite() {
            let mut r = vec![0.0; n];
            r[j] = 1.0;
            le_rows.push((r, lp.upper[j] - lp.lower[j]));
        }
    }
    let eq_rows: Vec<(Vec<f64>, f64)> = lp
        .a_eq
        .iter()
        .zip(&lp.b_eq)
        .map(|(r, &b)| (r.clone(), shift(r, b)))
        .collect();

    let n_slack = le_rows.len();
    let n_art = le_rows.iter().filter(|(_, b)| *b < 0.0).count() + eq_rows.len();
    let ncols = n + n_slack + n_art;
    let m = le_rows.len() + eq_rows.len();

    let mut tab = Tableau {
        rows: Vec::with_capacity(m),
        basis: Vec::with_capacity(m),
        ncols,
        pivots: 0,
        opts: *opts,
    };
    let mut art = n + n_slack;
    for (i, (row, b)) in le_rows.iter().enumerate() {
        let mut t = vec![0.0; ncols + 1];
        let sign = if *b < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[j] = sign * row[j];
        }
        t[n + i] = sign;
        t[ncols] = sign * b;
        if *b < 0.0 {
            t[art] = 1.0;
            tab.basis.push(art);
            art += 1;
        } else {
            tab.basis.push(n + i);
        }
        tab.rows.push(t);
    }
    for (row, b) in &eq_rows {
        let mut t = vec![0.0; ncols + 1];
        let sign = if *b < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[j] = sign * row[j];
        }
        t[ncols] = sign * b;
        t[art] = 1.0;
        tab.basis.push(art);
        art += 1;
        tab.rows.push(t);
    }
    let first_art = n + n_slack;

    // Phase 1.
    let mut cost = vec![0.0; ncols];
    for c in cost.iter_mut().skip(first_art) {
        *c = 1.0;
    }
    let allowed_all = vec![true; ncols];
    let mut obj = tab.reduced_costs(&cost);
    tab.optimize(&mut obj, &allowed_all)?;
    let residual = -obj[ncols];
    if residual > opts.tol {
        return Ok(LpOutcome::Infeasible { residual });
    }

    // Drive zero-valued artificials out of the basis where possible.
    for i in 0..m {
        if tab.basis[i] >= first_art {
            if let Some(j) = (0..first_art).find(|&j| tab.rows[i][j].abs() > 1e-9) {
                tab.pivot(i, j, &mut obj);
            }
        }
    }

    if let Some(c) = objective {
        let mut cost2 = vec![0.0; ncols];
        for j in 0..n {
            cost2[j] = -c[j];
        }
        let allowed: Vec<bool> = (0..ncols).map(|j| j < first_art).collect();
        let mut obj2 = tab.reduced_costs(&cost2);
        if tab.optimize(&mut obj2, &allowed)? == Status::Unbounded {
            return Err(Error::domain("LP objective is unbounded over the feasible set"));
        }
    }

    let mut y = vec![0.0; n];
    for (i, &b) in tab.basis.iter().enumerate() {
        if b < n {
            y[b] = tab.rows[i][ncols];
        }
    }
    let x: Vec<f64> = y
        .iter()
        .zip(lp.lower.iter().zip(&lp.upper))
        .map(|(yi, (l, u))| (l + yi.max(0.0)).min(*u))
        .collect();
    Ok(LpOutcome::Feasible(x))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Optimal,
    Unbounded,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    ncols: usize,
    pivots: usize,
    opts: SimplexOptions,
}

impl Tableau {
    /// Objective row `[d_0 … d_{ncols−1}, −z]` for `min cost·y` at the
    /// current basis.
    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut obj = vec![0.0; self.ncols + 1];
        obj[..self.ncols].copy_from_slice(cost);
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            let cb = cost[b];
            if cb != 0.0 {
                for (o, t) in obj.iter_mut().zip(row) {
                    *o -= cb * t;
                }
            }
        }
        obj
    }

    fn pivot(&mut self, r: usize, c: usize, obj: &mut [f64]) {
        let pv = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= pv;
        }
        let prow = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(&prow) {
                    *v -= f * p;
                }
                row[c] = 0.0;
            }
        }
        let f = obj[c];
        if f != 0.0 {
            for (v, p) in obj.iter_mut().zip(&prow) {
                *v -= f * p;
            }
            obj[c] = 0.0;
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    fn optimize(&mut self, obj: &mut [f64], allowed: &[bool]) -> Result<Status> {
        let tol = self.opts.tol;
        loop {
            if self.pivots >= self.opts.max_pivots {
                return Err(Error::IterationLimit(format!(
                    "simplex exceeded {} pivots",
                    self.opts.max_pivots
                )));
            }
            let bland = self.pivots >= self.opts.bland_after;
            let mut enter = None;
            let mut best = -tol;
            for j in 0..self.ncols {
                if !allowed[j] || obj[j] >= -tol {
                    continue;
                }
                if bland {
                    enter = Some(j);
                    break;
                }
                if obj[j] < best {
                    best = obj[j];
                    enter = Some(j);
                }
            }
            let Some(c) = enter else {
                return Ok(Status::Optimal);
            };
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                let a = row[c];
                if a > tol {
                    let ratio = row[self.ncols].max(0.0) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-12
                                || (ratio <= lr + 1e-12 && self.basis[i] < self.basis[li])
                            {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, c, obj),
                None => return Ok(Status::Unbounded),
            }
        }
    }
}

/// How the offload problem is constrained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OffloadMode {
    /// `Σ_m λ_k^m ≤ 1`.
    #[default]
    Partial,
    /// `Σ_m λ_k^m = 1` with no local computing.
    Full,
}

/// Which feasible offload split to return.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRule {
    /// The phase-1 vertex as found.
    #[default]
    Vertex,
    /// Post-optimize the total offloaded fraction `Σ λ`.
    MaxOffload,
}

/// Variable index of `λ_k^m`.
pub fn lambda_index(servers: usize, k: usize, m: usize) -> usize {
    k * servers + m
}

/// Builds the offload-ratio feasibility LP for fixed subcarriers, powers and
/// CPU frequencies. Rows are normalized by their budgets (`T_k`, `E_k`).
///
/// Latency: `c s (1 − Σλ)/f^l ≤ T` and `λ_m (s/r_m + c_m s/f_m) ≤ T`.
/// Energy: `η c s f² (1 − Σλ) + Σ_m λ_m s P_m / r_m ≤ E`.
/// Pairs with zero achieved rate or zero server share get `λ = 0`.
pub fn build_p1(
    config: &SystemConfig,
    channels: &ChannelState,
    alloc: &Allocation,
    mode: OffloadMode,
) -> LinearFeasibilityProblem {
    let (kk, mm) = (config.users, config.servers);
    let mut lp = LinearFeasibilityProblem::new(kk * mm);
    lp.upper = vec![1.0; kk * mm];
    for (k, task) in config.tasks.iter().enumerate() {
        let idx = |m: usize| lambda_index(mm, k, m);
        let rates: Vec<f64> = (0..mm)
            .map(|m| pair_rate(config, channels, alloc, k, m, false))
            .collect();
        let powers: Vec<f64> = (0..mm).map(|m| pair_power(config, alloc, k, m)).collect();
        for m in 0..mm {
            if !(rates[m] > 0.0) || !(alloc.f_mec[k][m] > 0.0) {
                lp.upper[idx(m)] = 0.0;
            }
        }

        let mut sum_row = vec![0.0; kk * mm];
        for m in 0..mm {
            sum_row[idx(m)] = 1.0;
        }
        match mode {
            OffloadMode::Partial => lp.push_le(sum_row.clone(), 1.0),
            OffloadMode::Full => lp.push_eq(sum_row.clone(), 1.0),
        }

        // Local latency.
        let f_l = alloc.f_local[k];
        if mode == OffloadMode::Partial {
            if f_l > 0.0 {
                let a = task.cycles() / (f_l * task.t_max_s);
                lp.push_le(sum_row.iter().map(|v| -a * v).collect(), 1.0 - a);
            } else {
                lp.push_le(sum_row.iter().map(|v| -v).collect(), -1.0);
            }
        }

        // Offload latency per active pair.
        for m in 0..mm {
            if lp.upper[idx(m)] == 0.0 {
                continue;
            }
            let per_unit = task.s_bits / rates[m]
                + config.mec_cycles_per_bit[m] * task.s_bits / alloc.f_mec[k][m];
            let mut row = vec![0.0; kk * mm];
            row[idx(m)] = per_unit / task.t_max_s;
            lp.push_le(row, 1.0);
        }

        // Energy.
        let scale = if task.e_budget_j > 0.0 { task.e_budget_j } else { 1.0 };
        let local_full = match mode {
            OffloadMode::Partial => task.eta * task.cycles() * f_l * f_l,
            OffloadMode::Full => 0.0,
        };
        let mut row = vec![0.0; kk * mm];
        for m in 0..mm {
            if lp.upper[idx(m)] == 0.0 {
                continue;
            }
            row[idx(m)] = (task.s_bits * powers[m] / rates[m] - local_full) / scale;
        }
        lp.push_le(row, (task.e_budget_j - local_full) / scale);
    }
    lp
}

/// Solves a P1 instance under the given split rule.
pub fn solve_p1(lp: &LinearFeasibilityProblem, rule: SplitRule) -> Result<LpOutcome> {
    match rule {
        SplitRule::Vertex => find_feasible(lp),
        SplitRule::MaxOffload => find_feasible_max(lp, &vec![1.0; lp.n_vars]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_var(rows: &[(f64, f64)]) -> LinearFeasibilityProblem {
        let mut lp = LinearFeasibilityProblem::new(1);
        lp.lower = vec![-10.0];
        lp.upper = vec![10.0];
        for &(a, b) in rows {
            lp.push_le(vec![a], b);
        }
        lp
    }

    #[test]
    fn interval_feasible() {
        let lp = one_var(&[(1.0, 1.0), (-1.0, 0.0)]);
        let x = find_feasible(&lp).unwrap();
        let x = x.point().unwrap();
        assert!(lp.max_violation(x) <= 1e-9);
        assert!((0.0..=1.0).contains(&x[0]));
    }

    #[test]
    fn contradictory_rows() {
        let lp = one_var(&[(1.0, -1.0), (-1.0, 0.0)]);
        assert!(matches!(find_feasible(&lp).unwrap(), LpOutcome::Infeasible { .. }));
    }

    #[test]
    fn bad_bounds_rejected() {
        let mut lp = LinearFeasibilityProblem::new(1);
        lp.lower = vec![1.0];
        lp.upper = vec![0.0];
        assert!(find_feasible(&lp).is_err());
    }

    #[test]
    fn equality_and_objective() {
        // x + y = 1, x ≤ 0.7, maximize x.
        let mut lp = LinearFeasibilityProblem::new(2);
        lp.upper = vec![1.0, 1.0];
        lp.push_eq(vec![1.0, 1.0], 1.0);
        lp.push_le(vec![1.0, 0.0], 0.7);
        let out = find_feasible_max(&lp, &[1.0, 0.0]).unwrap();
        let x = out.point().unwrap();
        assert!((x[0] - 0.7).abs() < 1e-12 && (x[1] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn degenerate_problem_terminates() {
        // Classic cycling-prone structure; any feasible answer is fine.
        let mut lp = LinearFeasibilityProblem::new(4);
        lp.push_le(vec![0.5, -5.5, -2.5, 9.0], 0.0);
        lp.push_le(vec![0.5, -1.5, -0.5, 1.0], 0.0);
        lp.push_le(vec![1.0, 0.0, 0.0, 0.0], 1.0);
        let out = find_feasible_max(&lp, &[10.0, -57.0, -9.0, -24.0]).unwrap();
        let x = out.point().unwrap();
        assert!(lp.max_violation(x) <= 1e-9);
        assert!((x[0] - 1.0).abs() < 1e-9);
    }
}
