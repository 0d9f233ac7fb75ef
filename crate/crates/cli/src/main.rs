use clap::{Parser, Subcommand};
use nlmd_core::config::RunConfig;
use nlmd_core::pipeline::{self, Manifest, Overrides};
use nlmd_core::Error;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_VALIDATION: u8 = 1;
const EXIT_DIVERGENCE: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_CONFIG: u8 = 4;

#[derive(Debug, Subcommand)]
enum Command {
    /// Check coupling reality and symmetry, kernel causality and Kramers–Kronig consistency.
    Validate(Common),
    /// Export time- and frequency-domain susceptibility kernels.
    Susceptibility(Common),
    /// Iterate the field equation and export fields, spectra and the convergence log.
    Solve(Common),
    /// Compare the bath ODE integration with the convolution solutions.
    Oracle(Common),
    /// Draw one noise realization and export amplitudes and densities.
    Sample(Common),
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Noise and oracle seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, env = "NLMD_THREADS")]
    threads: Option<usize>,
    /// Maximum iteration order; overrides the config.
    #[arg(long = "order-max")]
    order_max: Option<usize>,
}

#[derive(Debug, Parser)]
#[command(name = "nlmd", version, about = "Reciprocal-space field solver for nonlinear magnetodielectric media")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Validate(c)
            | Command::Susceptibility(c)
            | Command::Solve(c)
            | Command::Oracle(c)
            | Command::Sample(c) => c,
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Divergence { .. } => EXIT_DIVERGENCE,
        Error::Io { .. } | Error::Format(_) => EXIT_IO,
        Error::Config(_) | Error::Parameter(_) | Error::Stability { .. } | Error::UnsupportedGrid(_) => EXIT_CONFIG,
        _ => EXIT_VALIDATION,
    }
}

fn run(command: &Command) -> Result<Manifest, Error> {
    let common = command.common();
    let mut cfg = RunConfig::load(&common.config)?;
    Overrides {
        seed: common.seed,
        max_order: common.order_max,
    }
    .apply(&mut cfg);
    cfg.validate()?;
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        nlmd_core::set_threads(n)?;
    }
    let out: &Path = &common.out;
    match command {
        Command::Validate(_) => pipeline::cmd_validate(&cfg, out),
        Command::Susceptibility(_) => pipeline::cmd_susceptibility(&cfg, out),
        Command::Solve(_) => pipeline::cmd_solve(&cfg, out),
        Command::Oracle(_) => pipeline::cmd_oracle(&cfg, out),
        Command::Sample(_) => pipeline::cmd_sample(&cfg, out),
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let out = args.command.common().out.clone();
    match run(&args.command) {
        Ok(m) => {
            for c in &m.checks {
                let status = match (c.tolerance, c.passed) {
                    (None, _) => "info",
                    (_, true) => "pass",
                    (_, false) => "FAIL",
                };
                println!("{status:4} {:<48} {:.3e}", c.name, c.value);
            }
            if let Some(conv) = m.converged {
                println!("converged: {conv} after {} orders", m.orders.unwrap_or(0));
            }
            println!("wrote {} files to {}", m.outputs.len() + 1, out.display());
            if m.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_VALIDATION)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::Divergence { .. }) {
                eprintln!("partial outputs in {}", out.display());
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
