//! Secure partial offloading for multi-server mobile edge computing.
//!
//! Jointly picks OFDMA subcarriers, transmit powers, offload fractions and CPU
//! frequencies to maximize the worst-case secrecy offloading rate of `K`
//! users served by `M` edge servers under latency, energy, power and capacity
//! limits, by Lagrangian dual decomposition with closed-form block updates.
//!
//! - [`model`]: parameters, the decision, rate/latency/energy, feasibility
//! - [`channel`]: seeded Rayleigh × pathloss channel draws
//! - [`lp`]: phase-1 simplex and the offload-split LP
//! - [`optimizer`]: the dual decomposition solver
//! - [`baselines`]: equal power (EPA) and full offloading (FO)
//! - [`oracle`]: brute-force grid search on tiny instances
//! - [`harness`]: config files, sweeps, CSV output

pub mod baselines;
pub mod channel;
pub mod error;
pub mod harness;
pub mod lp;
pub mod model;
pub mod optimizer;
pub mod oracle;

pub use error::{Error, Result};
