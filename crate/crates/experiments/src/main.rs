use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, ValueEnum};
use nngp_core::KernelFamily;
use nngp_experiments::output::write_outputs;
use nngp_experiments::{run, Experiment, ExperimentConfig, Preset};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    ValidateKernels,
    ApproxStep,
    ApproxHartmann,
    Poisson,
    Burgers,
}

impl From<Command> for Experiment {
    fn from(c: Command) -> Self {
        match c {
            Command::ValidateKernels => Experiment::ValidateKernels,
            Command::ApproxStep => Experiment::ApproxStep,
            Command::ApproxHartmann => Experiment::ApproxHartmann,
            Command::Poisson => Experiment::Poisson,
            Command::Burgers => Experiment::Burgers,
        }
    }
}

/// Runs the NNGP regression and PDE experiments and writes CSV tables plus a
/// JSON run record.
///
/// Settings are resolved as built-in defaults, then the config file, then the
/// preset, then the remaining flags. Exit status: 0 when every check passes,
/// 1 when a check fails, 2 on error.
#[derive(Debug, Parser)]
#[command(name = "nngp-solve", version)]
struct Cli {
    command: Command,
    /// TOML file mirroring the configuration structure.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_preset)]
    preset: Option<Preset>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output root; files go to DIR/<command>/.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Only run variants of this family (se, matern52, arcsin, erf, relu...).
    #[arg(long, value_name = "FAMILY", value_parser = parse_family)]
    kernel: Option<KernelFamily>,
    /// Only run NNGP variants of this depth.
    #[arg(long, value_name = "L")]
    depth: Option<usize>,
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse().map_err(|e: anyhow::Error| e.to_string())
}

fn parse_family(s: &str) -> Result<KernelFamily, String> {
    s.parse().map_err(|e: nngp_core::Error| e.to_string())
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(p) = cli.preset {
        cfg.apply_preset(p);
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if cli.kernel.is_some() {
        cfg.kernel = cli.kernel;
    }
    if cli.depth.is_some() {
        cfg.depth = cli.depth;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = Experiment::from(cli.command);
    let outcome = resolve(&cli).and_then(|cfg| {
        let report = run(command, &cfg)?;
        let written = write_outputs(&cfg.out, &report.record, &report.tables)?;
        Ok((report, written))
    });
    match outcome {
        Ok((report, written)) => {
            let r = &report.record;
            for c in &r.checks {
                let status = match c.passed {
                    Some(true) => "PASS",
                    Some(false) => "FAIL",
                    None => "SKIP",
                };
                println!("{status} {}: {}", c.name, c.detail);
            }
            for (variant, message) in &r.failures {
                println!("FAILED RUN {variant}: {message}");
            }
            for path in &written {
                println!("wrote {}", path.display());
            }
            println!("{} finished in {:.1} s", command.name(), r.elapsed_seconds);
            if r.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
