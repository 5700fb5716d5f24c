//! Channel realizations: distance pathloss times unit-mean exponential fading
//! power (Rayleigh amplitude), expressed as channel-power-to-noise ratios.
//!
//! Random streams come from ChaCha8 (`rand_chacha` 0.3). Every link owns its own
//! stream, selected with `set_stream`, so the draws of a link do not depend on
//! how many other users, servers or subcarriers exist. A uniform variate is the
//! top 53 bits of one `u64` scaled by 2^-53; fading power is `-ln(1 - u)`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SystemConfig;

pub const RNG_ALGORITHM: &str = "chacha8/rand_chacha-0.3/stream-per-link";

/// Distances drawn when not listed explicitly (meters).
pub const DEFAULT_DISTANCE_RANGE_M: (f64, f64) = (50.0, 55.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FadingMode {
    #[default]
    Rayleigh,
    Unit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub beta0: f64,
    pub d0_m: f64,
    pub pathloss_exp: f64,
    /// CSI uncertainty bound on the eavesdropper ratio (1/W).
    pub eps: f64,
    /// `[K][M]`; drawn from [`DEFAULT_DISTANCE_RANGE_M`] when `None`.
    pub dist_user_mec_m: Option<Vec<Vec<f64>>>,
    /// `[K]`; drawn from [`DEFAULT_DISTANCE_RANGE_M`] when `None`.
    pub dist_user_eve_m: Option<Vec<f64>>,
    pub fading: FadingMode,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            beta0: 1e-3,
            d0_m: 1.0,
            pathloss_exp: 2.1,
            eps: 0.0,
            dist_user_mec_m: None,
            dist_user_eve_m: None,
            fading: FadingMode::Rayleigh,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta0 > 0.0) {
            return Err(Error::config("channel.beta0", "must be > 0"));
        }
        if !(self.d0_m > 0.0) {
            return Err(Error::config("channel.d0_m", "must be > 0"));
        }
        if !(self.pathloss_exp > 0.0) {
            return Err(Error::config("channel.pathloss_exp", "must be > 0"));
        }
        if !(self.eps >= 0.0) {
            return Err(Error::config("channel.eps", "must be >= 0"));
        }
        Ok(())
    }

    /// Average gain `β0·(d/d0)^(−α)`.
    pub fn pathloss(&self, d_m: f64) -> Result<f64> {
        if !(d_m >= self.d0_m) {
            return Err(Error::domain(format!(
                "distance {d_m} m is below the reference distance {} m",
                self.d0_m
            )));
        }
        Ok(self.beta0 * (d_m / self.d0_m).powf(-self.pathloss_exp))
    }
}

/// Worst-case-ready channel state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelState {
    /// `[K][N][M]` legitimate ratios (1/W).
    pub h_tilde: Vec<Vec<Vec<f64>>>,
    /// `[K][N]` estimated eavesdropper ratios (1/W).
    pub g_bar: Vec<Vec<f64>>,
    pub eps: f64,
    pub noise_w: f64,
}

impl ChannelState {
    /// Worst-case eavesdropper ratio `ḡ + ε`.
    #[inline]
    pub fn g_worst(&self, k: usize, n: usize) -> f64 {
        self.g_bar[k][n] + self.eps
    }

    pub fn check_dims(&self, system: &SystemConfig) -> Result<()> {
        let ok = self.h_tilde.len() == system.users
            && self.h_tilde.iter().all(|rows| {
                rows.len() == system.subcarriers
                    && rows.iter().all(|r| r.len() == system.servers)
            })
            && self.g_bar.len() == system.users
            && self.g_bar.iter().all(|r| r.len() == system.subcarriers);
        if !ok {
            return Err(Error::domain("channel state dimensions do not match the system"));
        }
        let gains_ok = self.h_tilde.iter().flatten().flatten().all(|v| v.is_finite() && *v >= 0.0)
            && self.g_bar.iter().flatten().all(|v| v.is_finite() && *v >= 0.0)
            && self.eps >= 0.0;
        if !gains_ok {
            return Err(Error::domain("channel gains must be finite and >= 0"));
        }
        Ok(())
    }

    /// Restricts the state to the first `servers` servers.
    pub fn truncate_servers(&self, servers: usize) -> ChannelState {
        let mut out = self.clone();
        for rows in &mut out.h_tilde {
            for r in rows {
                r.truncate(servers);
            }
        }
        out
    }
}

// Stream identifiers. Each link class gets a disjoint range so adding servers
// or users never shifts the draws of existing links.
const CLASS_FADING_MEC: u64 = 1;
const CLASS_FADING_EVE: u64 = 2;
const CLASS_DIST_MEC: u64 = 3;
const CLASS_DIST_EVE: u64 = 4;

fn stream_id(class: u64, k: usize, m: usize) -> u64 {
    (class << 56) | ((k as u64 & 0x0fff_ffff) << 28) | (m as u64 & 0x0fff_ffff)
}

fn link_rng(seed: u64, class: u64, k: usize, m: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(class, k, m));
    rng
}

/// Uniform on [0, 1) from the top 53 bits of one word.
pub fn uniform01(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Unit-mean exponential variate by inversion.
pub fn exp1(rng: &mut impl RngCore) -> f64 {
    -(1.0 - uniform01(rng)).ln()
}

fn draw_distance(seed: u64, class: u64, k: usize, m: usize) -> f64 {
    let mut rng = link_rng(seed, class, k, m);
    let (lo, hi) = DEFAULT_DISTANCE_RANGE_M;
    lo + (hi - lo) * uniform01(&mut rng)
}

pub fn generate(config: &ChannelConfig, system: &SystemConfig, seed: u64) -> Result<ChannelState> {
    config.validate()?;
    let (kk, mm, nn) = (system.users, system.servers, system.subcarriers);
    let sigma2 = system.noise_w;

    let dist_mec = |k: usize, m: usize| -> Result<f64> {
        match &config.dist_user_mec_m {
            Some(d) => d
                .get(k)
                .and_then(|r| r.get(m))
                .copied()
                .ok_or_else(|| Error::config("channel.dist_user_mec_m", "must be K x M")),
            None => Ok(draw_distance(seed, CLASS_DIST_MEC, k, m)),
        }
    };
    let dist_eve = |k: usize| -> Result<f64> {
        match &config.dist_user_eve_m {
            Some(d) => d
                .get(k)
                .copied()
                .ok_or_else(|| Error::config("channel.dist_user_eve_m", "must have K entries")),
            None => Ok(draw_distance(seed, CLASS_DIST_EVE, k, 0)),
        }
    };

    let mut h_tilde = vec![vec![vec![0.0; mm]; nn]; kk];
    let mut g_bar = vec![vec![0.0; nn]; kk];
    for k in 0..kk {
        for m in 0..mm {
            let avg = config.pathloss(dist_mec(k, m)?)?;
            let mut rng = link_rng(seed, CLASS_FADING_MEC, k, m);
            for row in h_tilde[k].iter_mut() {
                let fade = match config.fading {
                    FadingMode::Rayleigh => exp1(&mut rng),
                    FadingMode::Unit => 1.0,
                };
                row[m] = avg * fade / sigma2;
            }
        }
        let avg = config.pathloss(dist_eve(k)?)?;
        let mut rng = link_rng(seed, CLASS_FADING_EVE, k, 0);
        for g in g_bar[k].iter_mut() {
            let fade = match config.fading {
                FadingMode::Rayleigh => exp1(&mut rng),
                FadingMode::Unit => 1.0,
            };
            *g = avg * fade / sigma2;
        }
    }
    Ok(ChannelState {
        h_tilde,
        g_bar,
        eps: config.eps,
        noise_w: sigma2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TaskSpec;

    fn system(k: usize, m: usize, n: usize) -> SystemConfig {
        let task = TaskSpec {
            s_bits: 1e4,
            c_cycles_per_bit: 1100.0,
            t_max_s: 0.5,
            e_budget_j: 1.0,
            p_max_w: 1.0,
            p_circuit_w: 5e-4,
            f_local_hz: 7e8,
            eta: 1e-24,
        };
        SystemConfig {
            users: k,
            servers: m,
            subcarriers: n,
            bandwidth_hz: 12.5e3,
            noise_w: 1e-13,
            mec_cycles_per_bit: vec![1100.0; m],
            mec_capacity_hz: vec![1.1e9; m],
            tasks: vec![task; k],
        }
    }

    #[test]
    fn unit_mode_reference_distance() {
        let sys = system(1, 1, 2);
        let cfg = ChannelConfig {
            fading: FadingMode::Unit,
            dist_user_mec_m: Some(vec![vec![1.0]]),
            dist_user_eve_m: Some(vec![10.0]),
            ..Default::default()
        };
        let st = generate(&cfg, &sys, 7).unwrap();
        assert!((st.h_tilde[0][0][0] * sys.noise_w - 1e-3).abs() < 1e-18);
        let g = st.g_bar[0][1] * sys.noise_w;
        assert!((g - 7.943282347242822e-6).abs() < 1e-15, "{g}");
    }

    #[test]
    fn distance_below_reference_rejected() {
        let sys = system(1, 1, 1);
        let cfg = ChannelConfig {
            dist_user_mec_m: Some(vec![vec![0.5]]),
            ..Default::default()
        };
        assert!(generate(&cfg, &sys, 0).is_err());
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let sys = system(3, 2, 8);
        let cfg = ChannelConfig::default();
        let a = generate(&cfg, &sys, 11).unwrap();
        let b = generate(&cfg, &sys, 11).unwrap();
        let c = generate(&cfg, &sys, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn links_are_nested_in_server_count() {
        let cfg = ChannelConfig::default();
        let small = generate(&cfg, &system(2, 2, 4), 5).unwrap();
        let big = generate(&cfg, &system(2, 3, 4), 5).unwrap();
        assert_eq!(big.truncate_servers(2), small);
    }

    #[test]
    fn fading_has_unit_mean() {
        let mut rng = link_rng(99, CLASS_FADING_MEC, 0, 0);
        let n = 200_000;
        let mean = (0..n).map(|_| exp1(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "{mean}");
    }

    #[test]
    fn pathloss_strictly_decreasing() {
        let cfg = ChannelConfig::default();
        let mut prev = f64::INFINITY;
        for i in 0..200 {
            let g = cfg.pathloss(1.0 + i as f64 * 0.37).unwrap();
            assert!(g < prev);
            prev = g;
        }
    }
}
