use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use ssblow_core::error::Error;
use ssblow_core::fractional::kernel_audit;
use ssblow_core::harness::{self, out_root, RunConfig, SweepConfig};
use ssblow_core::profiles::PROFILE_SCALE;
use ssblow_core::Grid;

#[derive(Parser)]
#[command(name = "ssblow", version, about = "Self-similar blowup toolkit for the a-family of 1D transport models")]
struct Cli {
    /// Output directory for commands without a config (overridden by SSBLOW_OUT).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compute the profile F_a and write its CSV and JSON sidecar.
    Profile {
        #[arg(long, allow_hyphen_values = true)]
        a: f64,
        #[arg(long, default_value_t = 1024)]
        n: usize,
        /// Map scale.
        #[arg(long = "L", default_value_t = PROFILE_SCALE)]
        scale: f64,
    },
    /// Integrate in physical variables.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the modulated self-similar scenario.
    Rescale {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a verification suite (pairs, isometry, coercivity, commutator,
    /// modulation, oracle, kernel, all).
    Verify { suite: String },
    /// Audit the symmetrized kernel bound on random samples.
    Kernel {
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 17)]
        seed: u64,
    },
    /// Run every combination of a `[sweep]` table concurrently.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
}

enum Outcome {
    Ok,
    Failed,
}

fn is_usage(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        matches!(
            c.downcast_ref::<Error>(),
            Some(Error::Config { .. } | Error::Precondition(_) | Error::Parse(_))
        )
    })
}

fn load_config(path: &PathBuf) -> Result<RunConfig> {
    RunConfig::load(path).with_context(|| format!("reading {}", path.display()))
}

fn run(cli: Cli) -> Result<Outcome> {
    let out = out_root(&cli.out);
    match cli.cmd {
        Cmd::Profile { a, n, scale } => {
            let grid = Grid::new(n, scale)?;
            let p = harness::acquire_profile(a, &grid)?;
            fs::create_dir_all(&out)?;
            let csv = out.join(format!("profile_a{a}.csv"));
            fs::write(&csv, p.to_csv())?;
            fs::write(out.join(format!("profile_a{a}.json")), p.sidecar_json())?;
            println!("a = {a}  gamma = {:.10}  residual = {:.3e}", p.gamma, p.residual);
            println!("wrote {}", csv.display());
        }
        Cmd::Simulate { config } => {
            let s = harness::run_physical(&load_config(&config)?)?;
            println!("{}", serde_json::to_string_pretty(&s)?);
        }
        Cmd::Rescale { config } => {
            let s = harness::run_scenario(&load_config(&config)?)?;
            println!("{}", serde_json::to_string_pretty(&s)?);
        }
        Cmd::Verify { suite } => {
            let m = harness::verify_suite(&suite)?;
            for c in &m.checks {
                println!(
                    "{} {:<32} {:>12.4e}  (limit {:.1e})",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.threshold
                );
            }
            fs::create_dir_all(&out)?;
            let path = out.join(format!("verify_{suite}.json"));
            fs::write(&path, m.to_json() + "\n")?;
            println!("{} failures; manifest at {}", m.failures.len(), path.display());
            if !m.passed {
                return Ok(Outcome::Failed);
            }
        }
        Cmd::Kernel { alpha, samples, seed } => match kernel_audit(alpha, samples, seed) {
            Ok(r) => {
                fs::create_dir_all(&out)?;
                fs::write(out.join(format!("kernel_alpha{alpha}.json")), r.to_json() + "\n")?;
                println!("{}", r.to_json());
            }
            Err(e @ Error::BoundViolation { .. }) => {
                eprintln!("kernel audit failed: {e}");
                return Ok(Outcome::Failed);
            }
            Err(e) => return Err(e.into()),
        },
        Cmd::Sweep { config } => {
            let sweep = SweepConfig::load(&config).with_context(|| format!("reading {}", config.display()))?;
            for s in harness::run_sweep(&sweep)? {
                println!(
                    "{:<40} trapped={} T_fit={:?} halted={:?}",
                    s.name, s.trapped, s.t_fit, s.halted
                );
            }
        }
    }
    Ok(Outcome::Ok)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Failed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_usage(&e) { 2 } else { 1 })
        }
    }
}
