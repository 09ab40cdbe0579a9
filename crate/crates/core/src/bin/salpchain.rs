use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand};

use salpchain::emit::{self, Format};
use salpchain::run::{RunArtifacts, Setup};
use salpchain::scenario::{default_scenario, Scenario};
use salpchain::{Error, Result};

const SEED_ENV: &str = "SALPCHAIN_SEED";

/// Thruster-chain simulation, IMU synthesis, observability checks and UKF
/// parameter estimation.
#[derive(Debug, Parser)]
#[command(name = "salpchain", version)]
struct Cli {
    /// Master seed; overrides SALPCHAIN_SEED and the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the truth and synthesize IMU readings.
    Simulate {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Simulate and run the filter, optionally as a Monte Carlo batch.
    Estimate {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        runs: u64,
    },
    /// Evaluate the thruster conditions and observability rank along the
    /// simulated trajectory.
    #[command(group(ArgGroup::new("when").required(true).args(["at", "sweep"])))]
    Observability {
        config: PathBuf,
        /// Single time, s.
        #[arg(long)]
        at: Option<f64>,
        /// Every measurement instant, as CSV on stdout.
        #[arg(long)]
        sweep: bool,
    },
    /// Write the built-in three-link scenario and estimate on it.
    PaperScenario {
        #[arg(long, default_value = "paper-scenario")]
        out: PathBuf,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        runs: u64,
    },
}

fn resolve_seed(cli_seed: Option<u64>, scenario: &mut Scenario) -> Result<()> {
    if let Some(seed) = cli_seed {
        scenario.sim.seed = seed;
        return Ok(());
    }
    if let Ok(text) = std::env::var(SEED_ENV) {
        scenario.sim.seed = text.trim().parse().map_err(|_| Error::Config {
            path: SEED_ENV.into(),
            message: format!("expected an unsigned 64-bit integer, got `{text}`"),
        })?;
    }
    Ok(())
}

fn write_run(dir: &Path, stem: &str, artifacts: &RunArtifacts) -> Result<()> {
    emit::emit(artifacts, Format::Csv, &dir.join(format!("{stem}.csv")))?;
    emit::emit(artifacts, Format::Json, &dir.join(format!("{stem}.json")))
}

fn simulate(scenario: &Scenario, out: &Path) -> Result<()> {
    let setup = Setup::new(scenario)?;
    let artifacts = setup.simulate(scenario.sim.seed)?;
    emit::write_file(&out.join("scenario.json"), &scenario.to_json_pretty())?;
    write_run(out, "trace", &artifacts)?;
    emit::write_file(&out.join("snapshots.csv"), &emit::snapshots_csv(&artifacts))?;
    println!("wrote {} samples to {}", artifacts.truth.len(), out.display());
    Ok(())
}

fn estimate(scenario: &Scenario, out: &Path, runs: usize) -> Result<()> {
    let setup = Setup::new(scenario)?;
    emit::write_file(&out.join("scenario.json"), &scenario.to_json_pretty())?;
    if runs == 1 {
        let artifacts = setup.estimate(scenario.sim.seed)?;
        write_run(out, "trace", &artifacts)?;
        emit::write_file(&out.join("snapshots.csv"), &emit::snapshots_csv(&artifacts))?;
        let last = artifacts.filter.as_ref().and_then(|f| f.last()).expect("filter trace present");
        println!("wrote {} samples to {}", artifacts.truth.len(), out.display());
        println!("final estimate (theta, theta_dot, mass, inertia): {:?}", last.mean);
        return Ok(());
    }
    let mc = setup.monte_carlo(scenario.sim.seed, runs)?;
    for (k, run) in mc.runs.iter().enumerate() {
        write_run(&out.join("runs"), &format!("run_{k:03}"), run)?;
    }
    emit::write_file(&out.join("snapshots.csv"), &emit::snapshots_csv(&mc.runs[0]))?;
    emit::write_file(&out.join("nees.csv"), &emit::nees_csv(&mc.nees))?;
    emit::write_file(&out.join("nees.json"), &emit::to_json(&mc.nees))?;
    println!("wrote {runs} runs to {}", out.display());
    println!(
        "NEES band [{:.4}, {:.4}] (dim {}): {:.1}% of samples inside",
        mc.nees.lower,
        mc.nees.upper,
        mc.nees.dim,
        100.0 * mc.nees.overall_fraction()
    );
    Ok(())
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:.16e}")).collect::<Vec<_>>().join(",")
}

fn observability(scenario: &Scenario, at: Option<f64>) -> Result<()> {
    let setup = Setup::new(scenario)?;
    let mut text = String::new();
    match at {
        Some(t) => {
            let report = setup.observability_at(t)?;
            let _ = writeln!(text, "time={t}");
            let _ = writeln!(text, "observable={}", report.observable);
            let _ = writeln!(text, "rank={}", report.rank);
            let _ = writeln!(text, "cond1={}", join(&report.cond1));
            let _ = writeln!(text, "cond2={}", join(&report.cond2));
        }
        None => {
            let n = scenario.n();
            let links = |p: &str| (1..=n).map(|i| format!("{p}_{i}")).collect::<Vec<_>>().join(",");
            let _ = writeln!(text, "time,rank,observable,{},{}", links("cond1"), links("cond2"));
            let times = scenario.sample_times();
            for (t, state) in times.iter().zip(setup.truth_states()?) {
                let r = setup.observability(*t, &state)?;
                let _ = writeln!(
                    text,
                    "{t:.16e},{},{},{},{}",
                    r.rank,
                    u8::from(r.observable),
                    join(&r.cond1),
                    join(&r.cond2)
                );
            }
        }
    }
    // Ignore a closed pipe.
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, out } => {
            let mut scenario = Scenario::load(&config)?;
            resolve_seed(cli.seed, &mut scenario)?;
            simulate(&scenario, &out)
        }
        Command::Estimate { config, out, runs } => {
            let mut scenario = Scenario::load(&config)?;
            resolve_seed(cli.seed, &mut scenario)?;
            estimate(&scenario, &out, runs as usize)
        }
        Command::Observability { config, at, .. } => {
            let mut scenario = Scenario::load(&config)?;
            resolve_seed(cli.seed, &mut scenario)?;
            observability(&scenario, at)
        }
        Command::PaperScenario { out, runs } => {
            let mut scenario = default_scenario();
            resolve_seed(cli.seed, &mut scenario)?;
            estimate(&scenario, &out, runs as usize)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}
