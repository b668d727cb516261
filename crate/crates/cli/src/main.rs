use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ou_timing::commands;
use ou_timing::csv_io::{output_path, write_json};
use ou_timing::error::{CliError, CliResult, EXIT_OK};
use ou_timing::verify::{self, Status, VerifyOptions};
use ou_timing::{Overrides, RunConfig};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "ou-timing", version, about = "Optimal entry/exit thresholds for an OU spread")]
struct Cli {
    /// JSON run configuration; defaults are used for anything missing.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Monte Carlo seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Absolute stop-loss level.
    #[arg(long, global = true, conflicts_with = "ell")]
    stop_loss: Option<f64>,
    /// Stop-loss offset below the entry price.
    #[arg(long, global = true)]
    ell: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the OU model to a price file.
    Calibrate {
        #[arg(long)]
        input: PathBuf,
        /// Time between rows, in years.
        #[arg(long)]
        dt: Option<f64>,
        /// Cash in the first leg of a pair.
        #[arg(long)]
        a_cash: Option<f64>,
    },
    /// Solve for the thresholds and sample the value functions.
    Solve,
    /// Liquidation level across stop-loss levels.
    SweepL {
        /// Comma-separated stop-loss levels.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        l_grid: Option<Vec<f64>>,
    },
    /// Monte Carlo value of the policy and sample paths.
    Simulate {
        #[arg(long)]
        x0: Option<f64>,
        #[arg(long)]
        trace_paths: Option<u64>,
        #[arg(long)]
        n_paths: Option<u64>,
    },
    /// Run the invariant checks.
    Verify {
        /// Skip the simulation checks.
        #[arg(long)]
        no_mc: bool,
        /// Move b* by this relative amount before checking.
        #[arg(long, hide = true)]
        perturb_exit: Option<f64>,
    },
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    kind: &'a str,
    exit_code: i32,
    message: String,
}

fn load(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        output_dir: cli.out.clone(),
        seed: cli.seed,
        stop_loss: cli.stop_loss,
        relative_ell: cli.ell,
    })?;
    Ok(cfg)
}

fn print<T: Serialize>(value: &T) {
    // a closed pipe (e.g. `| head`) is not an error
    let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(value).expect("report serializes"));
}

fn run(cli: &Cli) -> CliResult<()> {
    let mut cfg = load(cli)?;
    match &cli.command {
        Command::Calibrate { input, dt, a_cash } => {
            if let Some(dt) = dt {
                cfg.calibration.dt = *dt;
            }
            if let Some(a) = a_cash {
                cfg.calibration.a_cash = *a;
            }
            cfg.validate()?;
            print(&commands::calibrate(&cfg, input)?);
        }
        Command::Solve => print(&commands::solve(&cfg)?),
        Command::SweepL { l_grid } => {
            let rows = commands::sweep_l(&cfg, l_grid.as_deref())?;
            print(&rows);
        }
        Command::Simulate { x0, trace_paths, n_paths } => {
            if x0.is_some() {
                cfg.simulate.x0 = *x0;
            }
            if let Some(n) = trace_paths {
                cfg.simulate.trace_paths = *n;
            }
            if let Some(n) = n_paths {
                cfg.mc.n_paths = *n;
            }
            print(&commands::simulate(&cfg)?);
        }
        Command::Verify { no_mc, perturb_exit } => {
            let opts = VerifyOptions {
                monte_carlo: !no_mc,
                exit_perturbation: *perturb_exit,
            };
            let report = verify::verify(&cfg, &opts)?;
            for c in &report.checks {
                let status = match c.status {
                    Status::Pass => "pass",
                    Status::Fail => "FAIL",
                    Status::Skipped => "skip",
                };
                let measured = c.measured.map_or(String::from("-"), |m| format!("{m:.3e}"));
                let tol = c.tolerance.map_or(String::from("-"), |t| format!("{t:.1e}"));
                let _ = writeln!(
                    std::io::stdout(),
                    "{status:4} {:32} {measured:>10} <= {tol:>8}  {}",
                    c.name,
                    c.detail
                );
            }
            if !report.passed {
                return Err(CliError::Verification { failed: report.failed });
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::from(EXIT_OK as u8),
        Err(e) => {
            let report = ErrorReport {
                kind: e.kind(),
                exit_code: e.exit_code(),
                message: e.to_string(),
            };
            eprintln!("{}", serde_json::to_string(&report).expect("report serializes"));
            let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            if let Ok(path) = output_path(&dir, "error.json") {
                let _ = write_json(&path, &report);
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
