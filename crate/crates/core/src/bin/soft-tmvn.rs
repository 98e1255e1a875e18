use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use soft_tmvn::experiment::{self, Overrides};
use soft_tmvn::scenarios::{self, ScenarioSpec};

#[derive(Parser)]
#[command(name = "soft-tmvn", version, about = "Soft truncated multivariate normal experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw from a soft or hard target and write draws.csv and report.json.
    Sample(RunArgs),
    /// Compare the soft sampler with a reference on the same problem.
    Compare(RunArgs),
    /// Fit the monotone single-index model on simulated replicates.
    Msim(RunArgs),
    /// Time the structured posterior sampler over an (r, d) grid.
    Bench(RunArgs),
    /// Generate a scenario instance and write it as scenario.json.
    Scenario(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Run seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of replicates; overrides the config.
    #[arg(long)]
    replicates: Option<usize>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            replicates: self.replicates,
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Sample(a) => {
            let report = experiment::cmd_sample(&a.config, &a.out, &a.overrides()).context("sample failed")?;
            for rep in report["replicates"].as_array().into_iter().flatten() {
                println!(
                    "replicate {}: {} draws -> {}",
                    rep["replicate"],
                    rep["summary"]["n_samples"],
                    rep["draws_file"].as_str().unwrap_or_default()
                );
            }
        }
        Command::Compare(a) => {
            let report = experiment::cmd_compare(&a.config, &a.out, &a.overrides()).context("compare failed")?;
            for rep in report["replicates"].as_array().into_iter().flatten() {
                let c = &rep["comparison"];
                println!("replicate {}: D = {}, xi = {}", rep["replicate"], c["D"], c["xi"]);
            }
        }
        Command::Msim(a) => {
            let report = experiment::cmd_msim(&a.config, &a.out, &a.overrides()).context("msim failed")?;
            println!("{:>9} {:>12} {:>10} {:>10} {:>10}", "replicate", "mse", "alpha_ess", "psi_ess", "accept");
            for rep in report["replicates"].as_array().into_iter().flatten() {
                println!(
                    "{:>9} {:>12.3e} {:>10.1} {:>10.1} {:>10.3}",
                    rep["replicate"].as_u64().unwrap_or_default(),
                    rep["mse"].as_f64().unwrap_or(f64::NAN),
                    rep["alpha_ess"].as_f64().unwrap_or(f64::NAN),
                    rep["psi_ess"].as_f64().unwrap_or(f64::NAN),
                    rep["beta_acceptance"].as_f64().unwrap_or(f64::NAN),
                );
            }
        }
        Command::Bench(a) => {
            let result = experiment::cmd_bench(&a.config, &a.out, &a.overrides()).context("bench failed")?;
            println!("{:>6} {:>6} {:>14}", "r", "d", "us/step");
            for row in &result.rows {
                println!("{:>6} {:>6} {:>14.1}", row.r, row.d, row.micros_per_step);
            }
            let show = |s: Option<f64>| s.map_or("n/a".to_string(), |v| format!("{v:.3}"));
            println!("slope in d: {}, slope in r: {}", show(result.slope_d), show(result.slope_r));
        }
        Command::Scenario(a) => dump_scenario(&a.config, &a.out, a.seed)?,
    }
    Ok(())
}

fn dump_scenario(config: &Path, out: &Path, seed: Option<u64>) -> anyhow::Result<()> {
    let mut spec: ScenarioSpec = experiment::load_config(config)?;
    if let Some(s) = seed {
        match &mut spec {
            ScenarioSpec::ProbitGp { seed, .. } | ScenarioSpec::ProbitGauss { seed, .. } => *seed = s,
        }
    }
    let mut doc = scenarios::generate(&spec)?.to_json();
    doc["spec"] = serde_json::to_value(&spec)?;
    let text = serde_json::to_string_pretty(&doc)? + "\n";
    let path = experiment::write_atomic(out, "scenario.json", text.as_bytes())?;
    println!("wrote {}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
