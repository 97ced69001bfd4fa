use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lifschitz_lab::config::{parse_document, Experiment, Overrides, RunConfig};
use lifschitz_lab::{execute, RunError};

#[derive(Parser)]
#[command(
    name = "lifschitz-lab",
    version,
    about = "Lifschitz-tail experiments for fractional alloy Hamiltonians"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lowest eigenvalues on a ball, box or disordered torus, with extrapolation.
    Eig(Common),
    /// Integrated density of states from torus spectra.
    Ids(Common),
    /// Laplace transform of the counting measure from torus spectra.
    LaplaceSpectral(Common),
    /// Laplace transform by Feynman-Kac Monte Carlo (d = 1).
    LaplaceMc(Common),
    /// Lifschitz plateau, Laplace exponent and their cross-check.
    Fit(Common),
    /// Fast invariant suite; exits 3 when a check fails.
    Check(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, env = "LIFSCHITZ_LAB_WORKERS")]
    workers: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    d: Option<usize>,
    /// Ball radius; selects a ball geometry.
    #[arg(long = "ball-r")]
    ball_r: Option<f64>,
    /// Resolution schedule, comma separated.
    #[arg(long = "N", value_delimiter = ',')]
    n: Option<Vec<usize>>,
}

fn load(experiment: Experiment, c: Common) -> Result<RunConfig, RunError> {
    let mut cfg = match &c.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| RunError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            parse_document(&text)?
        }
        None => parse_document("")?,
    };
    cfg.apply(&Overrides {
        experiment: Some(experiment),
        seed: c.seed,
        out: c.out,
        workers: c.workers,
        alpha: c.alpha,
        d: c.d,
        ball_r: c.ball_r,
        n: c.n,
    });
    cfg.resolve()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, common) = match cli.command {
        Command::Eig(c) => (Experiment::Eig, c),
        Command::Ids(c) => (Experiment::Ids, c),
        Command::LaplaceSpectral(c) => (Experiment::LaplaceSpectral, c),
        Command::LaplaceMc(c) => (Experiment::LaplaceMc, c),
        Command::Fit(c) => (Experiment::Fit, c),
        Command::Check(c) => (Experiment::Check, c),
    };
    let result = load(experiment, common).and_then(|cfg| execute(&cfg).map(|r| (cfg, r)));
    match result {
        Ok((cfg, report)) => {
            for o in &report.manifest.outputs {
                println!("{}", cfg.out().join(&o.file).display());
            }
            if report.failed.is_empty() {
                ExitCode::SUCCESS
            } else {
                eprintln!("failed checks: {}", report.failed.join(", "));
                ExitCode::from(3)
            }
        }
        Err(e) => {
            eprintln!("lifschitz-lab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
