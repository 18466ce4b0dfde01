//! `seuler`: runs, verification suites and noise calibration.
//!
//! Exit codes: 0 success, 1 error or failed check, 2 a run whose stopping
//! rule fired (or whose state became non-finite).

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use stoch_euler::verify::{run_suite, Suite, VerifyOptions};

mod calibrate;
mod manifest;
mod run;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

const EXIT_ERROR: u8 = 1;
const EXIT_STOPPED: u8 = 2;

#[derive(Parser)]
#[command(name = "seuler", version, about = "Stochastic Euler vorticity solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the ensemble described by a manifest.
    Run {
        manifest: PathBuf,
    },
    /// Run a verification suite: operators, stepper, lagrangian, noise or all.
    Verify {
        suite: String,
        /// Random fields in the operator identity checks.
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, hide = true)]
        corrupt_s4: Option<f64>,
    },
    /// Estimate a noise basis from drifter trajectories.
    Calibrate {
        csv: PathBuf,
        config: PathBuf,
        /// Output directory (default: `basis` next to the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Basis directory whose first field is the expected leading mode.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_ERROR) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn dispatch(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Run { manifest } => {
            let o = run::cmd_run(&manifest)?;
            println!(
                "{} member(s) written to {}; {} stopped",
                o.members,
                o.dir.display(),
                o.stopped
            );
            Ok(if o.stopped > 0 { ExitCode::from(EXIT_STOPPED) } else { ExitCode::SUCCESS })
        }
        Command::Verify {
            suite,
            trials,
            corrupt_s4,
        } => {
            let suite: Suite = suite.parse()?;
            let opts = VerifyOptions {
                trials,
                corrupt_s4,
                ..Default::default()
            };
            let started = std::time::Instant::now();
            let checks = run_suite(suite, &opts, &mut |c| println!("{c}"))?;
            let failed = checks.iter().filter(|c| !c.passed()).count();
            println!(
                "{} of {} checks passed in {:.1}s",
                checks.len() - failed,
                checks.len(),
                started.elapsed().as_secs_f64()
            );
            Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(EXIT_ERROR) })
        }
        Command::Calibrate { csv, config, out, truth } => {
            calibrate::cmd_calibrate(&calibrate::CalibrateArgs {
                csv: &csv,
                config: &config,
                out: out.as_deref(),
                truth: truth.as_deref(),
            })?;
            Ok(ExitCode::SUCCESS)
        }
    }
}
