//! `fermikac <experiment> [--config PATH] [--seed S] [--out DIR] [--check]`
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration error, 3 numerical
//! error, 4 failed built-in checks in `--check` mode.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use fermikac_core::{run, Error, Experiment, ExperimentConfig, RunSummary};

#[derive(Debug, Parser)]
#[command(
    name = "fermikac",
    version,
    about = "Fermionic Kac particle system and Uehling-Uhlenbeck solver"
)]
struct Cli {
    /// relax, converge, chaos, hierarchy-check or uu-solve.
    experiment: Experiment,
    /// key = value configuration file; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with code 4 when any built-in check fails.
    #[arg(long)]
    check: bool,
    /// Print only the path of summary.json.
    #[arg(long, short)]
    quiet: bool,
}

fn load(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::parse_as(cli.experiment, &text)?
        }
        None => ExperimentConfig::new(cli.experiment),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Numerical { .. } | Error::Saturation(_) | Error::Admissibility { .. } => 3,
        Error::Io(_) | Error::Json(_) => 1,
    }
}

fn report(cfg: &ExperimentConfig, s: &RunSummary, quiet: bool) {
    let path = cfg.out_dir.join("summary.json");
    if quiet {
        println!("{}", path.display());
        return;
    }
    for (name, value) in &s.metrics {
        println!("{name} = {value:e}");
    }
    for c in &s.checks {
        println!(
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    println!("summary: {}", path.display());
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = load(&cli).and_then(|cfg| run(&cfg).map(|s| (cfg, s)));
    match outcome {
        Ok((cfg, s)) => {
            report(&cfg, &s, cli.quiet);
            if cli.check && !s.all_passed() {
                for c in s.failed() {
                    eprintln!("check failed: {}: {}", c.name, c.detail);
                }
                ExitCode::from(4)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("fermikac: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
