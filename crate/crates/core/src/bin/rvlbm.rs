use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rvlbm::config::{load_config_file, ExperimentConfig, OutputFormat};
use rvlbm::experiments::{
    cmd_analyze, cmd_convergence, cmd_dispersion, cmd_simulate, cmd_verify, exit_code, write_verification,
    OutputTarget,
};
use rvlbm::Result;

#[derive(Parser)]
#[command(name = "rvlbm", version, about = "Relative-velocity lattice Boltzmann experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `output.dir`.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Overrides `output.format`.
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
    /// Overrides `analysis.order`.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    order: Option<u8>,
}

#[derive(Subcommand)]
enum Command {
    /// Derive the equivalent equation.
    Analyze(Common),
    /// Compare the equivalent equation with the Fourier oracle.
    Dispersion(Common),
    /// Run the scheme and record observables.
    Simulate(Common),
    /// Run every verification section.
    Verify(Common),
    /// Refinement study of the equilibrium and transition residuals.
    Convergence(Common),
}

fn load(common: &Common) -> Result<(ExperimentConfig, OutputTarget)> {
    let mut cfg = load_config_file(&common.config)?;
    if let Some(order) = common.order {
        cfg.analysis.order = order as usize;
    }
    let mut out = OutputTarget::from_config(&cfg);
    if let Some(dir) = &common.output {
        out.dir = dir.clone();
    }
    if let Some(format) = common.format {
        out.format = format;
    }
    Ok((cfg, out))
}

fn verdict(pass: bool) -> ExitCode {
    ExitCode::from(if pass { 0 } else { 1 })
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Analyze(c) => {
            let (cfg, out) = load(&c)?;
            let (report, files) = cmd_analyze(&cfg, &out)?;
            println!("{}", report.text);
            for f in files {
                eprintln!("wrote {}", f.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Dispersion(c) => {
            let (cfg, out) = load(&c)?;
            let (report, files) = cmd_dispersion(&cfg, &out)?;
            println!(
                "dispersion: {} samples, {} failing, max |eigenvalue| {:.6}",
                report.samples.len(),
                report.failures(),
                report.max_eigenvalue_modulus
            );
            for f in files {
                eprintln!("wrote {}", f.display());
            }
            Ok(verdict(report.pass))
        }
        Command::Simulate(c) => {
            let (cfg, out) = load(&c)?;
            let (summary, files) = cmd_simulate(&cfg, &out)?;
            println!(
                "simulate: {} steps on {} cells, relative mass drift {:.3e}",
                summary.steps, summary.cells, summary.relative_mass_drift
            );
            eprintln!("wrote {} files to {}", files.len(), out.dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify(c) => {
            let (cfg, out) = load(&c)?;
            let report = cmd_verify(&cfg)?;
            for (name, pass) in report.sections() {
                println!("{:<20} {}", name, if pass { "PASS" } else { "FAIL" });
            }
            let path = write_verification(&report, &out)?;
            eprintln!("wrote {}", path.display());
            Ok(verdict(report.pass))
        }
        Command::Convergence(c) => {
            let (cfg, out) = load(&c)?;
            let (report, files) = cmd_convergence(&cfg, &out)?;
            for r in &report.rows {
                println!(
                    "N = {:>5}  dt = {:.4e}  equilibrium {:.4e}  transition {:.4e}",
                    r.n, r.dt, r.equilibrium_residual, r.transition_residual
                );
            }
            for f in files {
                eprintln!("wrote {}", f.display());
            }
            Ok(verdict(report.pass))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
