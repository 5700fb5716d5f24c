//! Monte-Carlo sweeps: one solve per (axis value, seed, scheme), CSV rows in
//! a fixed order regardless of how many workers ran them.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::thread;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::channel::{generate, ChannelConfig};
use crate::error::{Error, Result};
use crate::model::{metrics, Allocation, Metrics, SystemConfig};
use crate::optimizer::{solve_scheme, Scheme};

use super::config::{from_value, ScenarioConfig};

/// Worker-count override; unset or 0 means one worker per core.
pub const WORKERS_ENV: &str = "SECMEC_WORKERS";

pub const CSV_COLUMNS: [&str; 12] = [
    "axis_name",
    "axis_value",
    "seed",
    "scheme",
    "sum_secrecy_rate_bps",
    "local_computing_ratio",
    "mean_latency_s",
    "mean_energy_J",
    "converged",
    "iters",
    "wall_ms",
    "status",
];

pub const SUMMARY_COLUMNS: [&str; 12] = [
    "axis_name",
    "axis_value",
    "scheme",
    "n_seeds",
    "n_feasible",
    "mean_rate_bps",
    "std_rate_bps",
    "mean_lcr",
    "std_lcr",
    "mean_latency_s",
    "mean_energy_J",
    "pa_gain_pct",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    /// Deadline `T_max` (s), applied to every user.
    TMax,
    /// Power budget `p_max` (W), applied to every user.
    PMax,
    /// Number of servers.
    M,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::TMax => "T_max",
            Axis::PMax => "p_max",
            Axis::M => "M",
        }
    }

    fn parse(s: &str) -> Option<Axis> {
        match s {
            "T_max" => Some(Axis::TMax),
            "p_max" => Some(Axis::PMax),
            "M" => Some(Axis::M),
            _ => None,
        }
    }

    /// Accepted unit suffixes and their SI factors.
    fn units(self) -> &'static [(&'static str, f64)] {
        match self {
            Axis::TMax => &[("s", 1.0), ("ms", 1e-3)],
            Axis::PMax => &[("W", 1.0), ("mW", 1e-3)],
            Axis::M => &[("", 1.0)],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: Axis,
    /// SI values.
    pub values: Vec<f64>,
    pub base: ScenarioConfig,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.values.is_empty() {
            return Err(Error::config("values", "must not be empty"));
        }
        let up = self.values.windows(2).all(|w| w[0] < w[1]);
        let down = self.values.windows(2).all(|w| w[0] > w[1]);
        if !(up || down) {
            return Err(Error::config("values", "must be strictly monotone"));
        }
        if self.axis == Axis::M && self.values.iter().any(|v| !(*v >= 1.0 && v.fract() == 0.0)) {
            return Err(Error::config("values", "server counts must be positive integers"));
        }
        if self.values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::config("values", "must be finite and > 0"));
        }
        Ok(())
    }

    /// The scenario at one axis value.
    pub fn scenario_at(&self, value: f64) -> Result<ScenarioConfig> {
        let mut s = match self.axis {
            Axis::M => self.base.with_servers(value as usize)?,
            _ => self.base.clone(),
        };
        for t in &mut s.system.tasks {
            match self.axis {
                Axis::TMax => t.t_max_s = value,
                Axis::PMax => t.p_max_w = value,
                Axis::M => {}
            }
        }
        Ok(s)
    }
}

/// Reads a sweep file: `{"axis": "T_max" | "p_max" | "M", "unit": ...,
/// "values": [...], "base": {scenario} | "base_file": "path"}`. A relative
/// `base_file` is resolved against the sweep file's directory.
pub fn load_sweep(path: impl AsRef<Path>) -> Result<SweepSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_sweep(&text, path.parent())
}

pub fn parse_sweep(text: &str, dir: Option<&Path>) -> Result<SweepSpec> {
    let value: Value = serde_json::from_str(text)?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::config("$", "sweep must be a JSON object"))?;
    for key in obj.keys() {
        if !["name", "note", "axis", "unit", "values", "base", "base_file"].contains(&key.as_str()) {
            return Err(Error::config(key.as_str(), "unknown key"));
        }
    }
    let axis = obj
        .get("axis")
        .and_then(Value::as_str)
        .and_then(Axis::parse)
        .ok_or_else(|| Error::config("axis", "expected one of T_max, p_max, M"))?;
    let unit = obj.get("unit").map(|u| u.as_str().unwrap_or("?")).unwrap_or(axis.units()[0].0);
    let factor = axis
        .units()
        .iter()
        .find(|(u, _)| *u == unit)
        .map(|(_, f)| *f)
        .ok_or_else(|| Error::config("unit", format!("unit `{unit}` not accepted for axis {}", axis.name())))?;
    let values: Vec<f64> = match obj.get("values") {
        Some(Value::Array(items)) => items
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.as_f64()
                    .map(|x| x * factor)
                    .ok_or_else(|| Error::config(format!("values[{i}]"), "expected a number"))
            })
            .collect::<Result<_>>()?,
        _ => return Err(Error::config("values", "expected an array")),
    };
    let base = match (obj.get("base"), obj.get("base_file")) {
        (Some(_), Some(_)) => return Err(Error::config("base", "give either `base` or `base_file`")),
        (Some(v), None) => from_value(v).map_err(|e| prefix("base", e))?,
        (None, Some(Value::String(f))) => {
            let p = match dir {
                Some(d) => d.join(f),
                None => PathBuf::from(f),
            };
            super::config::load_config(&p).map_err(|e| prefix("base_file", e))?
        }
        (None, Some(_)) => return Err(Error::config("base_file", "expected a path string")),
        (None, None) => from_value(&Value::Object(Default::default()))?,
    };
    let spec = SweepSpec { axis, values, base };
    spec.validate()?;
    Ok(spec)
}

fn prefix(head: &str, e: Error) -> Error {
    match e {
        Error::Config { path, msg } => Error::Config { path: format!("{head}.{path}"), msg },
        other => other,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowStatus {
    Ok,
    Infeasible,
    Error,
}

impl RowStatus {
    fn as_str(self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::Infeasible => "infeasible",
            RowStatus::Error => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub axis_name: String,
    pub axis_value: f64,
    pub seed: u64,
    pub scheme: Scheme,
    pub sum_secrecy_rate_bps: f64,
    pub local_computing_ratio: f64,
    pub mean_latency_s: f64,
    pub mean_energy_j: f64,
    pub converged: bool,
    pub iters: usize,
    pub wall_ms: Option<f64>,
    pub status: RowStatus,
    /// Present when allocations are kept for spot checks.
    #[serde(skip)]
    pub allocation: Option<Allocation>,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    /// Fill the `wall_ms` column; leaves it empty otherwise so that output
    /// bytes depend on inputs only.
    pub timing: bool,
    /// Keep each row's allocation.
    pub keep_allocations: bool,
    /// Overrides the scenario's seeds.
    pub seeds: Option<Vec<u64>>,
    /// Force unit fading.
    pub deterministic_fading: bool,
    /// Worker count; `None` reads [`WORKERS_ENV`].
    pub workers: Option<usize>,
}

pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

struct Job {
    axis_name: &'static str,
    axis_value: f64,
    scenario_index: usize,
    seed: u64,
    scheme: Scheme,
}

fn solve_one(scenario: &ScenarioConfig, job: &Job, opts: &SweepOptions) -> RunRow {
    let start = Instant::now();
    let mut row = RunRow {
        axis_name: job.axis_name.to_string(),
        axis_value: job.axis_value,
        seed: job.seed,
        scheme: job.scheme,
        sum_secrecy_rate_bps: f64::NAN,
        local_computing_ratio: f64::NAN,
        mean_latency_s: f64::NAN,
        mean_energy_j: f64::NAN,
        converged: false,
        iters: 0,
        wall_ms: None,
        status: RowStatus::Error,
        allocation: None,
    };
    let result = generate(&scenario.channel, &scenario.system, job.seed)
        .and_then(|ch| solve_scheme(&scenario.system, &ch, &scenario.solver, job.scheme));
    match result {
        Ok(sol) => {
            row.sum_secrecy_rate_bps = sol.metrics.sum_secrecy_rate_bps;
            row.local_computing_ratio = sol.metrics.local_computing_ratio;
            row.mean_latency_s = sol.metrics.mean_latency_s();
            row.mean_energy_j = sol.metrics.mean_energy_j();
            row.converged = sol.trace.converged;
            row.iters = sol.trace.rows.len();
            row.status = RowStatus::Ok;
            if opts.keep_allocations {
                row.allocation = Some(sol.allocation);
            }
        }
        Err(Error::Infeasible(_)) => row.status = RowStatus::Infeasible,
        Err(_) => row.status = RowStatus::Error,
    }
    if opts.timing {
        row.wall_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    }
    row
}

/// Solves every job in input order on a pool of `workers` threads.
pub fn run_jobs(scenarios: &[(&'static str, f64, ScenarioConfig)], opts: &SweepOptions) -> Result<Vec<RunRow>> {
    let mut prepared: Vec<ScenarioConfig> = Vec::with_capacity(scenarios.len());
    let mut jobs = Vec::new();
    for (i, (name, value, scenario)) in scenarios.iter().enumerate() {
        let mut s = scenario.clone();
        if opts.deterministic_fading {
            s.channel.fading = crate::channel::FadingMode::Unit;
        }
        if let Some(seeds) = &opts.seeds {
            s.seeds = seeds.clone();
        }
        s.validate()?;
        for &seed in &s.seeds {
            for &scheme in &s.schemes {
                jobs.push(Job {
                    axis_name: name,
                    axis_value: *value,
                    scenario_index: i,
                    seed,
                    scheme,
                });
            }
        }
        prepared.push(s);
    }
    let workers = opts.workers.unwrap_or_else(worker_count).clamp(1, jobs.len().max(1));
    // Workers pull job indices from a shared counter; rows are put back in
    // input order afterwards, so the worker count never changes the output.
    let next = AtomicUsize::new(0);
    let mut indexed: Vec<(usize, RunRow)> = thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        let Some(job) = jobs.get(i) else { break };
                        done.push((i, solve_one(&prepared[job.scenario_index], job, opts)));
                    }
                    done
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    indexed.sort_by_key(|(i, _)| *i);
    Ok(indexed.into_iter().map(|(_, row)| row).collect())
}

/// All seeds and schemes of one scenario; rows carry axis name `base`.
pub fn run_scenario(scenario: &ScenarioConfig, opts: &SweepOptions) -> Result<Vec<RunRow>> {
    run_jobs(&[("base", 0.0, scenario.clone())], opts)
}

pub fn run_sweep(spec: &SweepSpec, opts: &SweepOptions) -> Result<Vec<RunRow>> {
    spec.validate()?;
    let scenarios = spec
        .values
        .iter()
        .map(|&v| Ok((spec.axis.name(), v, spec.scenario_at(v)?)))
        .collect::<Result<Vec<_>>>()?;
    run_jobs(&scenarios, opts)
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .quote_style(csv::QuoteStyle::Never)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

fn num(v: f64) -> String {
    // Adding zero turns -0 into 0.
    format!("{}", v + 0.0)
}

pub fn write_rows(rows: &[RunRow], out: impl Write) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.axis_name.clone(),
            num(r.axis_value),
            r.seed.to_string(),
            r.scheme.name().to_string(),
            num(r.sum_secrecy_rate_bps),
            num(r.local_computing_ratio),
            num(r.mean_latency_s),
            num(r.mean_energy_j),
            r.converged.to_string(),
            r.iters.to_string(),
            r.wall_ms.map(num).unwrap_or_default(),
            r.status.as_str().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub axis_name: String,
    pub axis_value: f64,
    pub scheme: Scheme,
    pub n_seeds: usize,
    pub n_feasible: usize,
    pub mean_rate_bps: f64,
    pub std_rate_bps: f64,
    pub mean_lcr: f64,
    pub std_lcr: f64,
    pub mean_latency_s: f64,
    pub mean_energy_j: f64,
    /// `100·(PA − scheme)/scheme` over the seeds where both succeeded.
    pub pa_gain_pct: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() == 1 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Means and sample standard deviations over the seeds on which each scheme
/// succeeded, in the order the groups first appear in `rows`.
pub fn summarize(rows: &[RunRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, u64, Scheme)> = Vec::new();
    for r in rows {
        let key = (r.axis_name.clone(), r.axis_value.to_bits(), r.scheme);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.iter()
        .map(|(name, bits, scheme)| {
            let value = f64::from_bits(*bits);
            let group: Vec<&RunRow> = rows
                .iter()
                .filter(|r| &r.axis_name == name && r.axis_value.to_bits() == *bits && r.scheme == *scheme)
                .collect();
            let ok: Vec<&RunRow> = group.iter().copied().filter(|r| r.status == RowStatus::Ok).collect();
            let pick = |f: fn(&RunRow) -> f64| ok.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let (mean_rate, std_rate) = mean_std(&pick(|r| r.sum_secrecy_rate_bps));
            let (mean_lcr, std_lcr) = mean_std(&pick(|r| r.local_computing_ratio));
            let (mean_lat, _) = mean_std(&pick(|r| r.mean_latency_s));
            let (mean_e, _) = mean_std(&pick(|r| r.mean_energy_j));

            let mut pa_sum = 0.0;
            let mut other_sum = 0.0;
            let mut paired = 0;
            for r in &ok {
                let pa = rows.iter().find(|p| {
                    &p.axis_name == name
                        && p.axis_value.to_bits() == *bits
                        && p.seed == r.seed
                        && p.scheme == Scheme::PA
                        && p.status == RowStatus::Ok
                });
                if let Some(pa) = pa {
                    pa_sum += pa.sum_secrecy_rate_bps;
                    other_sum += r.sum_secrecy_rate_bps;
                    paired += 1;
                }
            }
            let pa_gain_pct = if paired > 0 && other_sum > 0.0 {
                100.0 * (pa_sum - other_sum) / other_sum
            } else if paired > 0 && pa_sum == other_sum {
                0.0
            } else {
                f64::NAN
            };
            SummaryRow {
                axis_name: name.clone(),
                axis_value: value,
                scheme: *scheme,
                n_seeds: group.len(),
                n_feasible: ok.len(),
                mean_rate_bps: mean_rate,
                std_rate_bps: std_rate,
                mean_lcr,
                std_lcr,
                mean_latency_s: mean_lat,
                mean_energy_j: mean_e,
                pa_gain_pct,
            }
        })
        .collect()
}

pub fn write_summary(rows: &[SummaryRow], out: impl Write) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(SUMMARY_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.axis_name.clone(),
            num(r.axis_value),
            r.scheme.name().to_string(),
            r.n_seeds.to_string(),
            r.n_feasible.to_string(),
            num(r.mean_rate_bps),
            num(r.std_rate_bps),
            num(r.mean_lcr),
            num(r.std_lcr),
            num(r.mean_latency_s),
            num(r.mean_energy_j),
            num(r.pa_gain_pct),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Recomputes each kept allocation's metrics from its scenario and seed and
/// returns the largest relative difference to the row.
pub fn spot_check(system_at: impl Fn(&RunRow) -> Result<(SystemConfig, ChannelConfig)>, rows: &[RunRow]) -> Result<f64> {
    let mut worst = 0.0f64;
    for r in rows {
        let Some(alloc) = &r.allocation else { continue };
        let (system, channel) = system_at(r)?;
        let ch = generate(&channel, &system, r.seed)?;
        let m: Metrics = metrics(&system, &ch, alloc);
        let pairs = [
            (m.sum_secrecy_rate_bps, r.sum_secrecy_rate_bps),
            (m.local_computing_ratio, r.local_computing_ratio),
            (m.mean_latency_s(), r.mean_latency_s),
            (m.mean_energy_j(), r.mean_energy_j),
        ];
        for (a, b) in pairs {
            let d = (a - b).abs() / a.abs().max(b.abs()).max(1e-300);
            worst = worst.max(if a == b { 0.0 } else { d });
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(value: f64, seed: u64, scheme: Scheme, rate: f64, status: RowStatus) -> RunRow {
        RunRow {
            axis_name: "T_max".into(),
            axis_value: value,
            seed,
            scheme,
            sum_secrecy_rate_bps: rate,
            local_computing_ratio: 0.5,
            mean_latency_s: 0.1,
            mean_energy_j: 1.0,
            converged: true,
            iters: 3,
            wall_ms: None,
            status,
            allocation: None,
        }
    }

    #[test]
    fn csv_header_and_row_shape() {
        let mut buf = Vec::new();
        write_rows(&[row(0.5, 1, Scheme::PA, 1234.5, RowStatus::Ok)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "axis_name,axis_value,seed,scheme,sum_secrecy_rate_bps,local_computing_ratio,mean_latency_s,mean_energy_J,converged,iters,wall_ms,status\n\
             T_max,0.5,1,PA,1234.5,0.5,0.1,1,true,3,,ok\n"
        );
    }

    #[test]
    fn summary_gain_and_infeasible_rows() {
        let rows = vec![
            row(0.5, 0, Scheme::PA, 110.0, RowStatus::Ok),
            row(0.5, 0, Scheme::FO, 100.0, RowStatus::Ok),
            row(0.5, 1, Scheme::PA, 220.0, RowStatus::Ok),
            row(0.5, 1, Scheme::FO, f64::NAN, RowStatus::Infeasible),
        ];
        let s = summarize(&rows);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].pa_gain_pct, 0.0);
        assert_eq!((s[0].n_seeds, s[0].n_feasible), (2, 2));
        assert_eq!(s[0].mean_rate_bps, 165.0);
        assert_eq!((s[1].n_seeds, s[1].n_feasible), (2, 1));
        assert!((s[1].pa_gain_pct - 10.0).abs() < 1e-12);
    }

    #[test]
    fn sweep_values_must_be_monotone() {
        let err = parse_sweep(r#"{"axis": "T_max", "values": [0.2, 0.1, 0.3], "base": {}}"#, None);
        assert!(err.is_err());
        let err = parse_sweep(r#"{"axis": "M", "values": [1, 2.5], "base": {}}"#, None);
        assert!(err.is_err());
        let ok = parse_sweep(r#"{"axis": "p_max", "unit": "mW", "values": [100, 200], "base": {}}"#, None).unwrap();
        assert_eq!(ok.values, vec![0.1, 0.2]);
    }

    #[test]
    fn one_row_per_job() {
        let base = super::super::parse_config(
            r#"{"K": 1, "N": 2, "M": 1, "s_bits": 1e3, "T_max_s": 1, "seeds": [0], "schemes": ["PA"]}"#,
        )
        .unwrap();
        let rows = run_scenario(&base, &SweepOptions { workers: Some(1), ..Default::default() }).unwrap();
        assert_eq!(rows.len(), 1);
        let mut buf = Vec::new();
        write_rows(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 2);
    }
}
