use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use kasner_core::cli::{self, RunConfig, Suite, SweepParam};
use kasner_core::Error;

#[derive(Parser)]
#[command(name = "kasner", version, about = "Linear perturbations of Kasner on the 3-torus: runs, checks, sweeps")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one configuration and write timeseries.csv, identities.json, fits.json, meta.json.
    Run {
        config: PathBuf,
        /// Output directory, overriding the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a configuration and evaluate a pass/fail suite.
    Verify {
        config: PathBuf,
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One run per value of a parameter, plus summary.json.
    Sweep {
        config: PathBuf,
        /// sigma, lambda, kmax or sigma_star.
        #[arg(long)]
        param: String,
        #[arg(long, num_args = 1.., required = true, allow_negative_numbers = true)]
        values: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a minimal configuration.
    Example,
}

fn load(path: &Path, out: &Option<PathBuf>) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(dir) = out {
        cfg.output.dir = dir.clone();
    }
    Ok(cfg)
}

fn init_threads() -> anyhow::Result<()> {
    let Ok(v) = std::env::var(cli::THREADS_ENV) else { return Ok(()) };
    let n: usize = v.parse().with_context(|| format!("{} must be a positive integer, got `{v}`", cli::THREADS_ENV))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn dispatch(args: Args) -> Result<i32, Error> {
    match args.command {
        Command::Run { config, out } => {
            let cfg = load(&config, &out)?;
            let o = cli::run(&cfg)?;
            println!(
                "{} checkpoints from t = {} to t = {:e} in {:.2} s; artifacts in {}",
                o.trajectory.times.len(),
                o.trajectory.t_start(),
                o.trajectory.t_end(),
                o.wall_time_s,
                cfg.output.dir.display()
            );
            Ok(cli::EXIT_OK)
        }
        Command::Verify { config, suite, out } => {
            let suite: Suite = suite.parse()?;
            let cfg = load(&config, &out)?;
            let report = cli::verify(&cfg, suite)?;
            print!("{}", report.summary());
            Ok(if report.passed { cli::EXIT_OK } else { cli::EXIT_CRITERION })
        }
        Command::Sweep { config, param, values, out } => {
            let param: SweepParam = param.parse()?;
            let cfg = load(&config, &out)?;
            let s = cli::sweep(&cfg, param, &values)?;
            for e in &s.entries {
                println!("{} = {}: t_end {:e}, {}", param.name(), e.value, e.t, e.dir.display());
            }
            Ok(cli::EXIT_OK)
        }
        Command::Example => {
            println!("{}", RunConfig::example().to_json());
            Ok(cli::EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(cli::EXIT_CONFIG as u8);
    }
    let code = match dispatch(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            cli::exit_code(&e)
        }
    };
    ExitCode::from(code as u8)
}
