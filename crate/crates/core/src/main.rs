use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use secmec::channel::FadingMode;
use secmec::harness::{
    self, load_config, load_sweep, parse_seed_range, precheck, run_scenario, run_sweep, spot_check,
    summarize, verify, write_rows, write_summary, RunRow, ScenarioConfig, SweepOptions, VERIFY_GRID,
};
use secmec::oracle::GridSpec;
use secmec::Result;

#[derive(Parser)]
#[command(name = "secmec", version, about = "Secrecy offloading rate maximization for multi-server edge computing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve every seed and scheme of one scenario.
    Run {
        config: PathBuf,
        /// Row CSV; stdout when absent. The summary goes next to it.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Sweep one axis of a base scenario.
    Sweep {
        sweep: PathBuf,
        /// Output directory for results.csv and summary.csv.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Cycle-budget check; exits nonzero on FAIL.
    Precheck { config: PathBuf },
    /// Compare the solver with the brute-force oracle on a tiny scenario.
    Verify {
        config: PathBuf,
        #[arg(long, default_value_t = VERIFY_GRID.p_levels)]
        p_levels: usize,
        #[arg(long, default_value_t = VERIFY_GRID.lambda_levels)]
        lambda_levels: usize,
        #[arg(long, default_value_t = VERIFY_GRID.f_levels)]
        f_levels: usize,
        #[arg(long, value_parser = parse_seeds)]
        seed_range: Option<SeedRange>,
    },
    /// Print the default scenario values.
    Defaults,
}

#[derive(Args)]
struct Common {
    /// Solve even when the cycle-budget check fails.
    #[arg(long)]
    allow_infeasible: bool,
    /// Half-open seed range `A..B` replacing the config's seeds.
    #[arg(long, value_parser = parse_seeds)]
    seed_range: Option<SeedRange>,
    /// Unit fading instead of Rayleigh draws.
    #[arg(long)]
    deterministic_fading: bool,
    /// Fill the wall_ms column.
    #[arg(long)]
    timing: bool,
    /// Recompute every row's metrics from its allocation and report the
    /// largest relative difference.
    #[arg(long)]
    spot_check: bool,
}

#[derive(Clone)]
struct SeedRange(Vec<u64>);

fn parse_seeds(s: &str) -> std::result::Result<SeedRange, String> {
    parse_seed_range(s).map(SeedRange).map_err(|e| e.to_string())
}

impl Common {
    fn options(&self) -> SweepOptions {
        SweepOptions {
            timing: self.timing,
            keep_allocations: self.spot_check,
            seeds: self.seed_range.as_ref().map(|r| r.0.clone()),
            deterministic_fading: self.deterministic_fading,
            workers: None,
        }
    }
}

fn gate(scenarios: &[(String, &ScenarioConfig)], allow: bool) -> bool {
    let mut ok = true;
    for (label, s) in scenarios {
        let report = precheck(&s.system);
        if !report.pass {
            eprintln!("precheck {label}:\n{report}");
            ok = false;
        }
    }
    if !ok && allow {
        eprintln!("continuing: --allow-infeasible");
        return true;
    }
    if !ok {
        eprintln!("precheck failed; pass --allow-infeasible to solve anyway");
    }
    ok
}

fn write_csvs(rows: &[RunRow], rows_path: Option<&Path>, summary_path: Option<&Path>) -> Result<()> {
    match rows_path {
        Some(p) => write_rows(rows, BufWriter::new(File::create(p)?))?,
        None => write_rows(rows, io::stdout().lock())?,
    }
    let summary = summarize(rows);
    match summary_path {
        Some(p) => write_summary(&summary, BufWriter::new(File::create(p)?))?,
        None => {
            let mut out = io::stderr().lock();
            writeln!(out)?;
            write_summary(&summary, out)?;
        }
    }
    Ok(())
}

fn with_overrides(s: &ScenarioConfig, common: &Common) -> ScenarioConfig {
    let mut s = s.clone();
    if common.deterministic_fading {
        s.channel.fading = FadingMode::Unit;
    }
    s
}

fn report_spot(worst: f64) -> bool {
    let pass = worst <= 1e-9;
    eprintln!("{} spot check: max relative metric difference {worst:.3e}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { config, out, common } => {
            let scenario = load_config(&config)?;
            if !gate(&[(config.display().to_string(), &scenario)], common.allow_infeasible) {
                return Ok(false);
            }
            let rows = run_scenario(&scenario, &common.options())?;
            let summary_path = out.as_ref().map(|p| p.with_extension("summary.csv"));
            write_csvs(&rows, out.as_deref(), summary_path.as_deref())?;
            if common.spot_check {
                let s = with_overrides(&scenario, &common);
                let worst = spot_check(|_| Ok((s.system.clone(), s.channel.clone())), &rows)?;
                return Ok(report_spot(worst));
            }
            Ok(true)
        }
        Command::Sweep { sweep, out, common } => {
            let spec = load_sweep(&sweep)?;
            let points = spec
                .values
                .iter()
                .map(|&v| Ok((format!("{}={v}", spec.axis.name()), spec.scenario_at(v)?)))
                .collect::<Result<Vec<_>>>()?;
            let labelled: Vec<(String, &ScenarioConfig)> = points.iter().map(|(l, s)| (l.clone(), s)).collect();
            if !gate(&labelled, common.allow_infeasible) {
                return Ok(false);
            }
            let rows = run_sweep(&spec, &common.options())?;
            fs::create_dir_all(&out)?;
            write_csvs(&rows, Some(&out.join("results.csv")), Some(&out.join("summary.csv")))?;
            eprintln!("wrote {} rows to {}", rows.len(), out.join("results.csv").display());
            if common.spot_check {
                let worst = spot_check(
                    |r| {
                        let s = with_overrides(&spec.scenario_at(r.axis_value)?, &common);
                        Ok((s.system, s.channel))
                    },
                    &rows,
                )?;
                return Ok(report_spot(worst));
            }
            Ok(true)
        }
        Command::Precheck { config } => {
            let scenario = load_config(&config)?;
            let report = precheck(&scenario.system);
            println!("{report}");
            Ok(report.pass)
        }
        Command::Verify { config, p_levels, lambda_levels, f_levels, seed_range } => {
            let mut scenario = load_config(&config)?;
            if let Some(seeds) = seed_range {
                scenario.seeds = seeds.0;
            }
            let grid = GridSpec { p_levels, lambda_levels, f_levels };
            let report = verify(&scenario, &grid)?;
            println!("{report}");
            Ok(report.pass)
        }
        Command::Defaults => {
            println!("{}", harness::DEFAULTS_DOC);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
