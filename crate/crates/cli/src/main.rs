use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use maxreg_core::config::Config;
use maxreg_core::Error;

mod commands;
mod output;

/// Checks the maximal regularity identities of matrix semigroups.
#[derive(Parser, Debug)]
#[command(name = "maxreg", version)]
struct Cli {
    /// TOML config; the shipped default is used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `[output] dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// RNG seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Tolerance applied to every check.
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Run the configured identity checks over the operator zoo.
    Verify,
    /// Estimate quadratic constants and weighted operator norms.
    Constants,
    /// Grid-refinement study of the identity errors.
    Convergence,
    /// Time direct against fast evaluation.
    Bench,
}

pub struct Settings {
    pub config: Config,
    pub out: PathBuf,
    pub jobs: usize,
}

fn settings(cli: &Cli) -> maxreg_core::Result<Settings> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path).map_err(|e| match e {
            Error::Io(io) => Error::Config(format!("{}: {io}", path.display())),
            other => other,
        })?,
        None => Config::default_config(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(tol) = cli.tolerance {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(Error::Config(format!("tolerance must be positive, got {tol}")));
        }
        config.tolerances = config.tolerances.uniform_identity(tol);
    }
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(&config.output.dir));
    let jobs = cli.jobs.unwrap_or(0);
    Ok(Settings { config, out, jobs })
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = settings(&cli).and_then(|s| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(s.jobs)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        pool.install(|| match cli.command {
            Command::Verify => commands::verify(&s),
            Command::Constants => commands::constants(&s),
            Command::Convergence => commands::convergence(&s),
            Command::Bench => commands::bench(&s),
        })
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("maxreg: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
