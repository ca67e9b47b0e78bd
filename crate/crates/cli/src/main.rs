use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rmstab::config::{AnalysisConfig, Strategy};
use rmstab::pipeline::{run_analyze, run_phi_table, run_simulate, run_validate, RunOptions};

/// Thread count for the parallel engines; defaults to all cores.
const THREADS_ENV: &str = "RMSTAB_THREADS";

#[derive(Parser)]
#[command(name = "rmstab", version, about = "Stability of Kalman filtering with random measurement equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute Φ per block and the stability verdict.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Also estimate the growth rate of E Ψ.
        #[arg(long)]
        growth: bool,
    },
    /// Estimate the growth of ‖E Ψ‖ over the simulation horizons.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Check the slope sign against the analytic verdict.
        #[arg(long)]
        compare: bool,
    },
    /// Sweep one parameter and tabulate Φ, margins and verdicts.
    PhiTable {
        #[command(flatten)]
        common: Common,
        /// Parameter declared under `parameters`.
        #[arg(long)]
        param: String,
        /// Grid as `start:stop:step` or a comma list; empty for no rows.
        #[arg(long, default_value = "")]
        grid: String,
    },
    /// Check the model assumptions without computing Φ.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct Common {
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Comma list or `start:stop:step`.
    #[arg(long)]
    horizons: Option<String>,
    /// Comma list of closed_form, exact, monte_carlo, tried in order.
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    eps_margin: Option<f64>,
    /// Parameter override `name=value`; repeatable.
    #[arg(long = "set", value_name = "NAME=VALUE")]
    set: Vec<String>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

impl Common {
    fn options(&self) -> Result<RunOptions> {
        let strategy = match &self.strategy {
            Some(s) => Some(s.split(',').map(|x| x.trim().parse::<Strategy>()).collect::<Result<Vec<_>, _>>()?),
            None => None,
        };
        let horizons = match &self.horizons {
            Some(h) => Some(parse_grid(h)?.into_iter().map(|x| x as usize).collect()),
            None => None,
        };
        let mut parameters = BTreeMap::new();
        for s in &self.set {
            let (k, v) = s.split_once('=').with_context(|| format!("--set expects NAME=VALUE, got '{s}'"))?;
            let v: f64 = v.trim().parse().with_context(|| format!("--set {k}: not a number"))?;
            parameters.insert(k.trim().to_string(), v);
        }
        Ok(RunOptions {
            seed: self.seed,
            trials: self.trials,
            horizons,
            strategy,
            eps_margin: self.eps_margin,
            parameters,
            growth: false,
        })
    }

    fn load(&self) -> Result<(AnalysisConfig, String)> {
        let text = fs::read_to_string(&self.config).with_context(|| format!("cannot read {}", self.config.display()))?;
        let cfg = AnalysisConfig::parse(&text).with_context(|| format!("in {}", self.config.display()))?;
        Ok((cfg, text))
    }

    fn emit(&self, body: &str) -> Result<()> {
        match &self.out {
            Some(path) => write_file(path, body),
            None => {
                let mut stdout = std::io::stdout().lock();
                stdout.write_all(body.as_bytes())?;
                if !body.ends_with('\n') {
                    stdout.write_all(b"\n")?;
                }
                Ok(())
            }
        }
    }
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).with_context(|| format!("cannot write {}", path.display()))
}

/// `a:b:step` (inclusive, with a small slack) or `x,y,z`.
fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(Vec::new());
    }
    if let Some((a, rest)) = s.split_once(':') {
        let (b, step) = rest.split_once(':').context("range grid must be start:stop:step")?;
        let (a, b, step): (f64, f64, f64) = (a.trim().parse()?, b.trim().parse()?, step.trim().parse()?);
        if !(step > 0.0) || b < a {
            bail!("range grid needs step > 0 and stop >= start");
        }
        let n = ((b - a) / step + 1e-9).floor() as usize;
        // Rounded so 0.1:0.4:0.02 prints as 0.34, not 0.33999999999999997.
        return Ok((0..=n).map(|k| ((a + k as f64 * step) * 1e12).round() / 1e12).collect());
    }
    s.split(',').map(|x| x.trim().parse::<f64>().with_context(|| format!("bad grid value '{x}'"))).collect()
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Analyze { common, growth } => {
            let (cfg, text) = common.load()?;
            let opts = RunOptions { growth, ..common.options()? };
            let report = run_analyze(&cfg, &text, &opts)?;
            let body = match common.format.unwrap_or(Format::Json) {
                Format::Json => report.to_json(),
                Format::Csv => report.to_csv(),
            };
            common.emit(&body)?;
            eprintln!("verdict: {:?}", report.stability.verdict);
            Ok(report.exit_code())
        }
        Command::Simulate { common, compare } => {
            let (cfg, text) = common.load()?;
            let out = run_simulate(&cfg, &text, &common.options()?, compare)?;
            let body = match common.format.unwrap_or(Format::Csv) {
                Format::Csv => out.csv.clone(),
                Format::Json => serde_json::to_string_pretty(&out.summary)?,
            };
            common.emit(&body)?;
            eprintln!("{}", out.summary.message);
            Ok(0)
        }
        Command::PhiTable { common, param, grid } => {
            let (cfg, _) = common.load()?;
            let table = run_phi_table(&cfg, &param, &parse_grid(&grid)?, &common.options()?)?;
            let body = match common.format.unwrap_or(Format::Csv) {
                Format::Csv => table.to_csv(),
                Format::Json => serde_json::to_string_pretty(&table)?,
            };
            common.emit(&body)?;
            for (lo, hi) in table.flips() {
                eprintln!("verdict changes between {param} = {lo} and {hi}");
            }
            Ok(0)
        }
        Command::Validate { common } => {
            let (cfg, text) = common.load()?;
            let report = run_validate(&cfg, &text, &common.options()?)?;
            common.emit(&serde_json::to_string_pretty(&report)?)?;
            Ok(if report.is_valid() { 0 } else { 1 })
        }
    }
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.parse().with_context(|| format!("{THREADS_ENV} must be a positive integer"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|_| run(cli));
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
