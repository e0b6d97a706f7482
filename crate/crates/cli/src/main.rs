//! Command-line front end. Exit status: 0 accept/success, 1 reject (or a
//! failed screen for `check`), 2 error.

use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use driftgof::harness::{self, trend_csv};
use driftgof::simulate::format_g17;
use driftgof::{
    load_config, simulate_path, simulate_stationary_path, DiffusionModel, Engine64, EngineOptions,
    FunctionExpr, GofTest64, NullLaw, Path64, StudyConfig,
};

const EXPR_HELP: &str = "\
Expressions are functions of x built from numbers, x, pi, e, the operators
+ - * / ^ (right associative, binds tighter than unary minus) and the
functions exp, log, sqrt, tanh, sin, cos, abs. Examples: \"-x\", \"-x^3\",
\"tanh(x) + 0.5*x\", \"sqrt(1 + x^2)\".";

#[derive(Parser)]
#[command(name = "driftgof", version, about = "Goodness-of-fit test for the drift of an ergodic diffusion", after_help = EXPR_HELP)]
struct Cli {
    /// Master seed (paths, studies); overrides `master_seed` in a config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for Monte Carlo replications.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Study configuration file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an Euler-Maruyama path and write it as `t,x` CSV.
    Simulate(SimulateArgs),
    /// Test an observed path against a null drift.
    Test(TestArgs),
    /// Print critical values of sup|B| on [0,1].
    Calibrate(CalibrateArgs),
    /// Run a level/power study from `--config`.
    Study(StudyArgs),
    /// Mean normalized statistic against the horizon, from `--config`.
    Trend(TrendArgs),
    /// Growth, recurrence and separation screens for a model.
    Check(CheckArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, allow_hyphen_values = true)]
    drift: String,
    #[arg(long, default_value = "1", allow_hyphen_values = true)]
    sigma: String,
    /// Horizon T.
    #[arg(long = "T", alias = "horizon")]
    horizon: f64,
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    /// Fixed start; by default X_0 is drawn from the invariant density.
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<f64>,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TestArgs {
    /// Path CSV with header `t,x`.
    #[arg(long)]
    path: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    s0: String,
    #[arg(long, default_value = "1", allow_hyphen_values = true)]
    sigma: String,
    #[arg(long, default_value_t = 0.05)]
    eps: f64,
    /// Print the CSV header before the result row.
    #[arg(long)]
    header: bool,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Comma-separated significance levels.
    #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.05, 0.1])]
    eps: Vec<f64>,
}

#[derive(Args)]
struct StudyArgs {
    /// Overrides `out_path` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrendArgs {
    /// Comma-separated horizons.
    #[arg(long, value_delimiter = ',', required = true)]
    horizons: Vec<f64>,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, allow_hyphen_values = true)]
    drift: String,
    #[arg(long, default_value = "1", allow_hyphen_values = true)]
    sigma: String,
    /// True drift for the separation (condition C) check, with `--drift` as the null.
    #[arg(long, allow_hyphen_values = true)]
    alternative: Option<String>,
}

type Failure = Box<dyn std::error::Error>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn emit(out: Option<&PathBuf>, text: &str) -> io::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text),
        None => io::stdout().lock().write_all(text.as_bytes()),
    }
}

fn workers(cli: &Cli) -> usize {
    cli.workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1)
}

fn study_config(cli: &Cli) -> Result<StudyConfig, Failure> {
    let path = cli
        .config
        .as_ref()
        .ok_or("this subcommand needs --config <file>")?;
    let mut cfg = load_config(path).map_err(|e| format!("{}: {e}", path.display()))?;
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match &cli.command {
        Command::Simulate(a) => {
            let seed = cli.seed.unwrap_or(0);
            let model = DiffusionModel::<f64>::from_sources(&a.drift, &a.sigma)?;
            let path = match a.x0 {
                Some(x0) => simulate_path(&model, a.horizon, a.dt, x0, seed)?,
                None => {
                    let engine = Engine64::new(model, EngineOptions::default())?;
                    simulate_stationary_path(&engine, a.horizon, a.dt, seed)?
                }
            };
            emit(a.out.as_ref(), &path.to_csv())?;
            Ok(0)
        }
        Command::Test(a) => {
            let file = File::open(&a.path).map_err(|e| format!("{}: {e}", a.path.display()))?;
            let path = Path64::read_csv(BufReader::new(file))?;
            let test = GofTest64::new(
                FunctionExpr::parse(&a.s0)?,
                FunctionExpr::parse(&a.sigma)?,
                EngineOptions::default(),
            )?;
            let r = test.run(&path, a.eps)?;
            let mut out = io::stdout().lock();
            if a.header {
                writeln!(out, "{}", driftgof::TestResult64::CSV_HEADER)?;
            }
            writeln!(out, "{}", r.csv_row())?;
            Ok(u8::from(r.reject))
        }
        Command::Calibrate(a) => {
            let law = NullLaw::<f64>::default();
            let mut s = String::from("eps,critical\n");
            for &eps in &a.eps {
                s.push_str(&format!(
                    "{},{}\n",
                    format_g17(eps),
                    format_g17(law.critical_value(eps)?)
                ));
            }
            emit(None, &s)?;
            Ok(0)
        }
        Command::Study(a) => {
            let mut cfg = study_config(&cli)?;
            if let Some(out) = &a.out {
                cfg.out_path = out.to_string_lossy().into_owned();
            }
            let outcome = harness::run_study(&cfg, workers(&cli))?;
            outcome.write(&cfg)?;
            emit(None, &outcome.result.to_csv())?;
            Ok(0)
        }
        Command::Trend(a) => {
            let cfg = study_config(&cli)?;
            let rows = harness::consistency_trend(&cfg, &a.horizons, workers(&cli))?;
            emit(a.out.as_ref(), &trend_csv(&rows))?;
            Ok(0)
        }
        Command::Check(a) => {
            let report = harness::screen(&a.drift, &a.sigma, a.alternative.as_deref())?;
            emit(None, &report.to_csv())?;
            Ok(if report.ok() { 0 } else { 1 })
        }
    }
}
