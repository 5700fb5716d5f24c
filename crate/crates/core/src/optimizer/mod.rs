//! Lagrangian dual decomposition with closed-form primal block updates.

pub mod closed_form;
pub mod dual;
mod recovery;
mod solve;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::SplitRule;
use crate::model::{Allocation, Metrics};

pub use dual::{
    lagrangian_value, subgradients, update_multipliers, update_multipliers_scaled, DualState,
    ResidualScales, Residuals,
};
pub use solve::{allocate_subcarriers, solve, solve_scheme, SubcarrierChoice};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    Constant,
    /// `step0/√t`.
    #[default]
    Diminishing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub z_max: usize,
    pub inner_max: usize,
    pub dual_max: usize,
    pub eps1: f64,
    pub step0: f64,
    pub step_rule: StepRule,
    pub mu_floor: f64,
    pub psi_floor: f64,
    pub secant_tol: f64,
    pub secant_max_iter: usize,
    pub tol_rel: f64,
    pub split_rule: SplitRule,
    /// EPA: solve once at the initial offload split instead of running the
    /// full loop.
    pub epa_one_shot: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            z_max: 100,
            inner_max: 50,
            dual_max: 40,
            eps1: 1e-6,
            step0: 0.1,
            step_rule: StepRule::Diminishing,
            mu_floor: 1e-12,
            psi_floor: 1e-12,
            secant_tol: 1e-10,
            secant_max_iter: 200,
            tol_rel: 1e-6,
            split_rule: SplitRule::Vertex,
            epa_one_shot: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("solver.z_max", self.z_max),
            ("solver.inner_max", self.inner_max),
            ("solver.dual_max", self.dual_max),
            ("solver.secant_max_iter", self.secant_max_iter),
        ];
        for (path, v) in counts {
            if v == 0 {
                return Err(Error::config(path, "must be >= 1"));
            }
        }
        let reals = [
            ("solver.eps1", self.eps1),
            ("solver.step0", self.step0),
            ("solver.mu_floor", self.mu_floor),
            ("solver.psi_floor", self.psi_floor),
            ("solver.secant_tol", self.secant_tol),
            ("solver.tol_rel", self.tol_rel),
        ];
        for (path, v) in reals {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(path, "must be finite and > 0"));
            }
        }
        Ok(())
    }

    pub(crate) fn step(&self, t: usize) -> f64 {
        match self.step_rule {
            StepRule::Constant => self.step0,
            StepRule::Diminishing => self.step0 / (t.max(1) as f64).sqrt(),
        }
    }
}

/// How transmit power is chosen on assigned subcarriers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PowerRule {
    /// Stationary power of the per-subcarrier Lagrangian term.
    Optimal,
    /// A user's power split evenly over its subcarriers.
    Equal,
}

/// The three compared schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    /// Proposed: optimal power, partial offloading.
    PA,
    /// Equal power allocation.
    EPA,
    /// Full offloading.
    FO,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::PA, Scheme::EPA, Scheme::FO];

    pub fn power_rule(self) -> PowerRule {
        match self {
            Scheme::EPA => PowerRule::Equal,
            _ => PowerRule::Optimal,
        }
    }

    pub fn offload_mode(self) -> crate::lp::OffloadMode {
        match self {
            Scheme::FO => crate::lp::OffloadMode::Full,
            _ => crate::lp::OffloadMode::Partial,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::PA => "PA",
            Scheme::EPA => "EPA",
            Scheme::FO => "FO",
        }
    }

    pub fn parse(s: &str) -> Option<Scheme> {
        match s {
            "PA" => Some(Scheme::PA),
            "EPA" => Some(Scheme::EPA),
            "FO" => Some(Scheme::FO),
            _ => None,
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One middle-loop iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub outer: usize,
    pub iter: usize,
    /// Lagrangian at the best primal point of this iterate's block ascent.
    pub dual_value: f64,
    /// Best feasible clipped objective so far; NaN before the first one.
    pub best_primal_bps: f64,
    /// Largest relative constraint excess of the block-ascent iterate.
    pub max_violation: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub rows: Vec<TraceRow>,
    /// `false` when a loop cap stopped the solve.
    pub converged: bool,
    pub outer_iterations: usize,
}

impl ConvergenceTrace {
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .quote_style(csv::QuoteStyle::Never)
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(["outer", "iter", "dual_value", "best_primal_bps", "max_violation"])?;
        for r in &self.rows {
            w.write_record([
                r.outer.to_string(),
                r.iter.to_string(),
                r.dual_value.to_string(),
                r.best_primal_bps.to_string(),
                r.max_violation.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub allocation: Allocation,
    pub metrics: Metrics,
    pub trace: ConvergenceTrace,
}
