//! Scenario files.
//!
//! A scenario is a JSON object. Every key is optional; absent keys take the
//! defaults listed in [`DEFAULTS_DOC`]. Physical quantities carry their unit
//! as a key suffix (`p_max_mW`, `B_kHz`, `F_mec_GHz`, ...) and are converted
//! to SI on load. Unknown keys and unknown suffixes are errors.

use std::path::Path;

use serde_json::{Map, Value};

use crate::channel::{ChannelConfig, FadingMode, RNG_ALGORITHM};
use crate::error::{Error, Result};
use crate::model::{SystemConfig, TaskSpec};
use crate::optimizer::{Scheme, SolverConfig};

/// Human-readable default list, printed by the CLI.
pub const DEFAULTS_DOC: &str = "\
K=5 N=64 M=3 B=12.5 kHz noise=1e-10 mW eta=1e-24 c=1100 c_mec=1100 \
F_local=0.7 GHz F_mec=1.1 GHz p_circuit=10^-0.3 mW p_max=1000 mW T_max=0.2 s \
s=9e5 bits E=100 J eps_rel=0.1 seeds=0..50 schemes=PA,EPA,FO";

/// Default energy budget (J). Not a published figure.
pub const DEFAULT_E_BUDGET_J: f64 = 100.0;
/// Default `ε` relative to the mean eavesdropper ratio at the middle of the
/// default distance range.
pub const DEFAULT_EPS_REL: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub system: SystemConfig,
    pub channel: ChannelConfig,
    pub solver: SolverConfig,
    pub seeds: Vec<u64>,
    pub schemes: Vec<Scheme>,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.channel.validate()?;
        self.solver.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "must not be empty"));
        }
        if self.schemes.is_empty() {
            return Err(Error::config("schemes", "must not be empty"));
        }
        Ok(())
    }

    /// Same scenario with `M` replaced, keeping per-server values of the
    /// first server for any new ones.
    pub fn with_servers(&self, servers: usize) -> Result<ScenarioConfig> {
        if servers == 0 {
            return Err(Error::config("M", "must be >= 1"));
        }
        let mut out = self.clone();
        let sys = &mut out.system;
        let c0 = sys.mec_cycles_per_bit[0];
        let f0 = sys.mec_capacity_hz[0];
        sys.mec_cycles_per_bit.resize(servers, c0);
        sys.mec_capacity_hz.resize(servers, f0);
        sys.servers = servers;
        if let Some(d) = &mut out.channel.dist_user_mec_m {
            for row in d.iter_mut() {
                if row.len() < servers {
                    return Err(Error::config("channel.dist_user_mec_m", "needs a column per server"));
                }
                row.truncate(servers);
            }
        }
        Ok(out)
    }
}

struct Quantity {
    base: &'static str,
    units: &'static [(&'static str, f64)],
}

const QUANTITIES: &[Quantity] = &[
    Quantity { base: "B", units: &[("Hz", 1.0), ("kHz", 1e3), ("MHz", 1e6)] },
    Quantity { base: "noise", units: &[("W", 1.0), ("mW", 1e-3)] },
    Quantity { base: "F_local", units: &[("Hz", 1.0), ("MHz", 1e6), ("GHz", 1e9)] },
    Quantity { base: "F_mec", units: &[("Hz", 1.0), ("MHz", 1e6), ("GHz", 1e9)] },
    Quantity { base: "p_circuit", units: &[("W", 1.0), ("mW", 1e-3)] },
    Quantity { base: "p_max", units: &[("W", 1.0), ("mW", 1e-3)] },
    Quantity { base: "T_max", units: &[("s", 1.0), ("ms", 1e-3)] },
    Quantity { base: "E", units: &[("J", 1.0), ("mJ", 1e-3)] },
];

const PLAIN_KEYS: &[&str] = &[
    "name",
    "note",
    "K",
    "N",
    "M",
    "eta",
    "c_cycles_per_bit",
    "c_mec_cycles_per_bit",
    "s_bits",
    "channel",
    "solver",
    "seeds",
    "seed_range",
    "schemes",
    "rng",
];

/// A unit-carrying value: scalar, or one entry per user/server.
#[derive(Debug, Clone)]
enum Scalars {
    One(f64),
    Many(Vec<f64>),
}

impl Scalars {
    fn expand(&self, len: usize, path: &str) -> Result<Vec<f64>> {
        match self {
            Scalars::One(v) => Ok(vec![*v; len]),
            Scalars::Many(v) if v.len() == len => Ok(v.clone()),
            Scalars::Many(v) => Err(Error::config(path, format!("expected {len} entries, got {}", v.len()))),
        }
    }

    fn scaled(self, f: f64) -> Scalars {
        match self {
            Scalars::One(v) => Scalars::One(v * f),
            Scalars::Many(v) => Scalars::Many(v.into_iter().map(|x| x * f).collect()),
        }
    }
}

fn number(v: &Value, path: &str) -> Result<f64> {
    v.as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::config(path, "expected a finite number"))
}

fn scalars(v: &Value, path: &str) -> Result<Scalars> {
    match v {
        Value::Array(items) => Ok(Scalars::Many(
            items
                .iter()
                .enumerate()
                .map(|(i, x)| number(x, &format!("{path}[{i}]")))
                .collect::<Result<_>>()?,
        )),
        other => Ok(Scalars::One(number(other, path)?)),
    }
}

fn count(v: &Value, path: &str) -> Result<usize> {
    let n = v.as_u64().ok_or_else(|| Error::config(path, "expected a positive integer"))?;
    if n == 0 {
        return Err(Error::config(path, "must be >= 1"));
    }
    usize::try_from(n).map_err(|_| Error::config(path, "too large"))
}

/// Collects unit-suffixed keys into SI values.
fn split_units(obj: &Map<String, Value>) -> Result<Vec<(&'static str, Scalars, String)>> {
    let mut found: Vec<(&'static str, Scalars, String)> = Vec::new();
    for (key, value) in obj {
        if PLAIN_KEYS.contains(&key.as_str()) {
            continue;
        }
        let quantity = QUANTITIES
            .iter()
            .find(|q| key.len() > q.base.len() + 1 && key.starts_with(q.base) && key.as_bytes()[q.base.len()] == b'_');
        let Some(q) = quantity else {
            return Err(Error::config(key.as_str(), "unknown key"));
        };
        let unit = &key[q.base.len() + 1..];
        let Some(&(_, factor)) = q.units.iter().find(|(u, _)| *u == unit) else {
            let allowed: Vec<&str> = q.units.iter().map(|(u, _)| *u).collect();
            return Err(Error::config(
                key.as_str(),
                format!("unknown unit suffix `{unit}` for {}; allowed: {}", q.base, allowed.join(", ")),
            ));
        };
        if let Some((_, _, prev)) = found.iter().find(|(b, _, _)| *b == q.base) {
            return Err(Error::config(key.as_str(), format!("{} is also given as `{prev}`", q.base)));
        }
        found.push((q.base, scalars(value, key)?.scaled(factor), key.clone()));
    }
    Ok(found)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path.as_ref())?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let value: Value = serde_json::from_str(text)?;
    from_value(&value)
}

pub fn from_value(value: &Value) -> Result<ScenarioConfig> {
    let obj = value
        .as_object()
        .ok_or_else(|| Error::config("$", "scenario must be a JSON object"))?;
    let units = split_units(obj)?;
    let get_unit = |base: &str| units.iter().find(|(b, _, _)| *b == base).map(|(_, v, k)| (v.clone(), k.clone()));

    let users = obj.get("K").map(|v| count(v, "K")).transpose()?.unwrap_or(5);
    let subcarriers = obj.get("N").map(|v| count(v, "N")).transpose()?.unwrap_or(64);
    let servers = obj.get("M").map(|v| count(v, "M")).transpose()?.unwrap_or(3);

    let per_user = |base: &str, default: f64| -> Result<Vec<f64>> {
        match get_unit(base) {
            Some((v, key)) => v.expand(users, &key),
            None => Ok(vec![default; users]),
        }
    };
    let per_user_plain = |key: &str, default: f64| -> Result<Vec<f64>> {
        match obj.get(key) {
            Some(v) => scalars(v, key)?.expand(users, key),
            None => Ok(vec![default; users]),
        }
    };
    let scalar_unit = |base: &str, default: f64| -> Result<f64> {
        match get_unit(base) {
            Some((Scalars::One(v), _)) => Ok(v),
            Some((Scalars::Many(_), key)) => Err(Error::config(key, "expected a single number")),
            None => Ok(default),
        }
    };

    let bandwidth_hz = scalar_unit("B", 12.5e3)?;
    let noise_w = scalar_unit("noise", 1e-13)?;
    let f_local = per_user("F_local", 0.7e9)?;
    let p_circuit = per_user("p_circuit", 10f64.powf(-0.3) * 1e-3)?;
    let p_max = per_user("p_max", 1.0)?;
    let t_max = per_user("T_max", 0.2)?;
    let e_budget = per_user("E", DEFAULT_E_BUDGET_J)?;
    let eta = per_user_plain("eta", 1e-24)?;
    let c = per_user_plain("c_cycles_per_bit", 1100.0)?;
    let s = per_user_plain("s_bits", 9e5)?;
    let mec_capacity_hz = match get_unit("F_mec") {
        Some((v, key)) => v.expand(servers, &key)?,
        None => vec![1.1e9; servers],
    };
    let mec_cycles_per_bit = match obj.get("c_mec_cycles_per_bit") {
        Some(v) => scalars(v, "c_mec_cycles_per_bit")?.expand(servers, "c_mec_cycles_per_bit")?,
        None => vec![1100.0; servers],
    };

    let tasks = (0..users)
        .map(|k| TaskSpec {
            s_bits: s[k],
            c_cycles_per_bit: c[k],
            t_max_s: t_max[k],
            e_budget_j: e_budget[k],
            p_max_w: p_max[k],
            p_circuit_w: p_circuit[k],
            f_local_hz: f_local[k],
            eta: eta[k],
        })
        .collect();
    let system = SystemConfig {
        users,
        servers,
        subcarriers,
        bandwidth_hz,
        noise_w,
        mec_cycles_per_bit,
        mec_capacity_hz,
        tasks,
    };

    if let Some(rng) = obj.get("rng") {
        if rng.as_str() != Some(RNG_ALGORITHM) {
            return Err(Error::config("rng", format!("this build generates channels with `{RNG_ALGORITHM}`")));
        }
    }

    let channel = parse_channel(obj.get("channel"), &system)?;
    let solver = match obj.get("solver") {
        Some(v) => serde_json::from_value::<SolverConfig>(v.clone())
            .map_err(|e| Error::config("solver", e.to_string()))?,
        None => SolverConfig::default(),
    };
    let seeds = parse_seeds(obj)?;
    let schemes = match obj.get("schemes") {
        Some(Value::Array(items)) => items
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.as_str()
                    .and_then(Scheme::parse)
                    .ok_or_else(|| Error::config(format!("schemes[{i}]"), "expected one of PA, EPA, FO"))
            })
            .collect::<Result<Vec<_>>>()?,
        Some(_) => return Err(Error::config("schemes", "expected an array")),
        None => Scheme::ALL.to_vec(),
    };
    let scenario = ScenarioConfig { system, channel, solver, seeds, schemes };
    scenario.validate()?;
    Ok(scenario)
}

/// Parses `"A..B"` (half-open) into the seeds `A, A+1, …, B−1`.
pub fn parse_seed_range(text: &str) -> Result<Vec<u64>> {
    let bad = || Error::config("seed_range", format!("expected `A..B` with A < B, got `{text}`"));
    let (a, b) = text.split_once("..").ok_or_else(bad)?;
    let a: u64 = a.trim().parse().map_err(|_| bad())?;
    let b: u64 = b.trim().parse().map_err(|_| bad())?;
    if a >= b {
        return Err(bad());
    }
    Ok((a..b).collect())
}

fn parse_seeds(obj: &Map<String, Value>) -> Result<Vec<u64>> {
    match (obj.get("seeds"), obj.get("seed_range")) {
        (Some(_), Some(_)) => Err(Error::config("seeds", "give either `seeds` or `seed_range`")),
        (Some(Value::Array(items)), None) => items
            .iter()
            .enumerate()
            .map(|(i, v)| v.as_u64().ok_or_else(|| Error::config(format!("seeds[{i}]"), "expected an unsigned integer")))
            .collect(),
        (Some(_), None) => Err(Error::config("seeds", "expected an array")),
        (None, Some(v)) => parse_seed_range(v.as_str().ok_or_else(|| Error::config("seed_range", "expected a string"))?),
        (None, None) => Ok((0..50).collect()),
    }
}

fn parse_channel(value: Option<&Value>, system: &SystemConfig) -> Result<ChannelConfig> {
    let mut cfg = ChannelConfig::default();
    let Some(value) = value else {
        cfg.eps = default_eps(&cfg, system, DEFAULT_EPS_REL)?;
        return Ok(cfg);
    };
    let obj = value
        .as_object()
        .ok_or_else(|| Error::config("channel", "expected an object"))?;
    let mut eps: Option<f64> = None;
    let mut eps_rel: Option<f64> = None;
    for (key, v) in obj {
        let path = format!("channel.{key}");
        match key.as_str() {
            "beta0" => cfg.beta0 = number(v, &path)?,
            "d0_m" => cfg.d0_m = number(v, &path)?,
            "pathloss_exp" => cfg.pathloss_exp = number(v, &path)?,
            "eps" => eps = Some(number(v, &path)?),
            "eps_rel" => eps_rel = Some(number(v, &path)?),
            "fading" => {
                cfg.fading = match v.as_str() {
                    Some("rayleigh") => FadingMode::Rayleigh,
                    Some("unit") => FadingMode::Unit,
                    _ => return Err(Error::config(path, "expected `rayleigh` or `unit`")),
                }
            }
            "dist_user_mec_m" => {
                let rows: Vec<Vec<f64>> = serde_json::from_value(v.clone())
                    .map_err(|e| Error::config(path.as_str(), e.to_string()))?;
                if rows.len() != system.users || rows.iter().any(|r| r.len() < system.servers) {
                    return Err(Error::config(path, "expected K rows of M distances"));
                }
                cfg.dist_user_mec_m = Some(rows);
            }
            "dist_user_eve_m" => {
                let row: Vec<f64> = serde_json::from_value(v.clone())
                    .map_err(|e| Error::config(path.as_str(), e.to_string()))?;
                if row.len() != system.users {
                    return Err(Error::config(path, "expected K distances"));
                }
                cfg.dist_user_eve_m = Some(row);
            }
            _ => return Err(Error::config(path, "unknown key")),
        }
    }
    cfg.eps = match (eps, eps_rel) {
        (Some(_), Some(_)) => return Err(Error::config("channel.eps", "give either `eps` or `eps_rel`")),
        (Some(e), None) => e,
        (None, Some(r)) => default_eps(&cfg, system, r)?,
        (None, None) => default_eps(&cfg, system, DEFAULT_EPS_REL)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// `rel` times the mean eavesdropper ratio at the middle of the default
/// distance range.
fn default_eps(cfg: &ChannelConfig, system: &SystemConfig, rel: f64) -> Result<f64> {
    if !(rel >= 0.0) {
        return Err(Error::config("channel.eps_rel", "must be >= 0"));
    }
    let (lo, hi) = crate::channel::DEFAULT_DISTANCE_RANGE_M;
    Ok(rel * cfg.pathloss(0.5 * (lo + hi))? / system.noise_w)
}
