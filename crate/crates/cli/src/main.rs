use std::path::PathBuf;
use std::process::ExitCode;

use breather_core::commands::{cmd_bands, cmd_solve, cmd_verify};
use breather_core::config::RunConfig;
use breather_core::Error;
use clap::{Parser, Subcommand};

/// Polychromatic TE breathers in layered Kerr media.
#[derive(Parser, Debug)]
#[command(name = "breather", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Band structure and gap certification.
    Bands {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve for a breather and write coefficients, fields and reports.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Restrict to odd multiples of m.
        #[arg(long)]
        sublattice: Option<i64>,
        #[arg(long)]
        allow_uncertified: bool,
    },
    /// Recompute residuals of a stored solution.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        solution: PathBuf,
        /// Also re-solve on n times finer grids and lattices.
        #[arg(long)]
        refine: Option<usize>,
    },
}

fn out_dir(cfg: &RunConfig, out: Option<PathBuf>) -> Result<PathBuf, Error> {
    out.or_else(|| cfg.output.directory.as_ref().map(PathBuf::from))
        .ok_or_else(|| Error::Usage("no output directory: pass --out or set output.directory".into()))
}

fn set_threads() -> Result<(), Error> {
    if let Ok(v) = std::env::var("BREATHER_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::Usage(format!("BREATHER_THREADS must be a positive integer, got '{v}'")))?;
        if n == 0 {
            return Err(Error::Usage("BREATHER_THREADS must be positive".into()));
        }
        // ignore a pool that is already initialized
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn run(cli: Cli) -> Result<i32, Error> {
    set_threads()?;
    let outcome = match cli.command {
        Command::Bands { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let dir = out_dir(&cfg, out)?;
            cmd_bands(&cfg, &dir)?
        }
        Command::Solve { config, out, sublattice, allow_uncertified } => {
            let cfg = RunConfig::load(&config)?;
            let dir = out_dir(&cfg, out)?;
            cmd_solve(&cfg, &dir, sublattice, allow_uncertified)?
        }
        Command::Verify { config, solution, refine } => {
            let cfg = RunConfig::load(&config)?;
            cmd_verify(&cfg, &solution, refine)?.0
        }
    };
    if outcome.exit_code == 0 {
        println!("{}", outcome.message);
    } else {
        eprintln!("{}", outcome.message);
    }
    Ok(outcome.exit_code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
