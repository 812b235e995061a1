use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use labelaug_harness::config::parse_override;
use labelaug_harness::descent::cmd_descent;
use labelaug_harness::sweep::{cmd_sweep, SweepSpec};
use labelaug_harness::train::{cmd_train, opt};
use labelaug_harness::verify::{run_verify, VerifyOptions};
use labelaug_harness::{ConfigError, RunConfig, RunError};

const EXIT_RUN: u8 = 1;
const EXIT_VERIFY: u8 = 2;
const EXIT_CONFIG: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "labelaug",
    version,
    about = "Label-augmented GAN objectives: identities, training runs and sweeps"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Flat key=value config file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override one config key; repeatable, applied after --config.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE", value_parser = parse_override)]
    overrides: Vec<(String, String)>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Parallel sweep cells.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the closed-form identities and the autodiff engine.
    Verify {
        /// Random instances per space size.
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [4usize, 8])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        graphs: usize,
    },
    /// Train one configuration and write its artifacts.
    Train,
    /// Run a grid of values x seeds.
    Sweep {
        /// Config key to vary; omit for a seed-only sweep.
        #[arg(long)]
        key: Option<String>,
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        #[arg(long, value_delimiter = ',', default_values_t = [0u64])]
        seeds: Vec<u64>,
    },
    /// Exact gradient descent on a finite space.
    Descent,
}

fn config(g: &Global) -> Result<RunConfig, ConfigError> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply(&g.overrides)?;
    if let Some(out) = &g.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn fail(e: &RunError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let cfg = match config(&cli.global) {
        Ok(c) => c,
        Err(e) => return fail(&e.into()),
    };
    match run(&cli, cfg) {
        Ok(code) => code,
        Err(e) => fail(&e),
    }
}

fn run(cli: &Cli, cfg: RunConfig) -> Result<ExitCode, RunError> {
    match &cli.command {
        Command::Verify { trials, sizes, graphs } => {
            let opts = VerifyOptions {
                sizes: sizes.clone(),
                trials: *trials,
                seed: cfg.seed,
                gradient_graphs: *graphs,
                ..Default::default()
            };
            let report = run_verify(&opts);
            print!("{}", report.table());
            let dir = &cfg.out_dir;
            fs::create_dir_all(dir).map_err(|source| RunError::Io {
                path: dir.clone(),
                source,
            })?;
            let path = dir.join("verify.csv");
            fs::write(&path, report.csv()).map_err(|source| RunError::Io { path, source })?;
            Ok(if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_VERIFY)
            })
        }
        Command::Train => {
            let r = cmd_train(&cfg)?;
            println!(
                "final_mmd={} leaked_mass={} wall_seconds={:.1} out={}",
                opt(r.final_mmd()),
                opt(r.leaked_mass()),
                r.wall_seconds,
                cfg.out_dir.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { key, values, seeds } => {
            let spec = SweepSpec {
                key: key.clone(),
                values: values.clone(),
                seeds: seeds.clone(),
                workers: cli.global.workers,
            };
            let report = cmd_sweep(&cfg, &spec)?;
            print!("{}", report.sweep_csv());
            for c in &report.cells {
                if let Err(e) = &c.outcome {
                    eprintln!("cell {} seed={} failed: {e}", c.value, c.seed);
                }
            }
            Ok(if report.failed() == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_RUN)
            })
        }
        Command::Descent => {
            let (traj, _) = cmd_descent(&cfg)?;
            let last = traj.last();
            println!(
                "steps={} tv_final={} tv_transformed_final={} out={}",
                last.step,
                last.tv,
                last.tv_transformed,
                cfg.out_dir.display()
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}
