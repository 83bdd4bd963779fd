//! `curvctl`: curvature sweeps, extremals with conjugate-time detection,
//! flatness reports and self-validation for planar control problems.

mod commands;
mod config;
mod output;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use config::{Config, Format};

pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_REGULARITY: u8 = 3;

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn new(code: u8, message: String) -> Self {
        CliError { code, message }
    }

    pub fn config(message: String) -> Self {
        CliError::new(EXIT_CONFIG, message)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    /// κ and b over the configured grid.
    Curvature,
    /// One extremal with its Jacobi field and conjugate times.
    Extremal,
    /// Flatness verdicts over the grid.
    Flatness,
    /// Identity residuals over the grid; exits 1 if any exceeds its tolerance.
    Validate,
}

#[derive(Debug, Parser)]
#[command(name = "curvctl", version, about = "Control curvature of planar optimal control problems")]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output file (stdout when absent); overrides output.path.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Overrides output.format.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Report failing grid points instead of stopping at the first one.
    #[arg(long)]
    keep_going: bool,
    /// Overrides jet_degree.
    #[arg(long)]
    jet_degree: Option<usize>,
}

fn resolve(args: &Args) -> Result<Config, CliError> {
    let mut cfg = Config::load(&args.config)?;
    if let Some(d) = args.jet_degree {
        cfg.jet_degree = d;
    }
    if let Some(f) = args.format {
        cfg.output.format = f;
    }
    if let Some(p) = &args.output {
        cfg.output.path = Some(p.display().to_string());
    }
    cfg.check()?;
    Ok(cfg)
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::config(format!("cannot write {}: {e}", path.display())))
}

fn run(args: &Args) -> Result<u8, CliError> {
    let cfg = resolve(args)?;
    let built = cfg.problem.build()?;
    let artifact = match args.command {
        Command::Curvature => commands::curvature(&cfg, &built, args.keep_going)?,
        Command::Extremal => commands::extremal(&cfg, &built)?,
        Command::Flatness => commands::flatness(&cfg, &built)?,
        Command::Validate => commands::validate(&cfg, &built)?,
    };
    match &cfg.output.path {
        Some(path) => {
            let path = Path::new(path);
            write_file(path, &artifact.body)?;
            if let Some(summary) = &artifact.summary {
                let mut side = path.as_os_str().to_owned();
                side.push(".summary.json");
                write_file(Path::new(&side), summary)?;
            }
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(artifact.body.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::config(format!("cannot write output: {e}")))?;
            if let Some(summary) = &artifact.summary {
                eprint!("{summary}");
            }
        }
    }
    Ok(artifact.exit)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("curvctl: {e}");
            ExitCode::from(e.code)
        }
    }
}
