use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use cplab::cli::{describe, emit, parse_config, run, OutputFormat, RunConfig};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Command {
    Check,
    Energy,
    Binding,
    Series,
    CpSweep,
    ErrorSweep,
    Convergence,
    IntegralsSelftest,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Check => "check",
            Command::Energy => "energy",
            Command::Binding => "binding",
            Command::Series => "series",
            Command::CpSweep => "cp-sweep",
            Command::ErrorSweep => "error-sweep",
            Command::Convergence => "convergence",
            Command::IntegralsSelftest => "integrals-selftest",
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

/// Two-atom binding energies in a dipole-coupled radiation field.
#[derive(Debug, Parser)]
#[command(name = "cplab", version)]
struct Args {
    /// What to compute.
    #[arg(value_enum)]
    command: Command,
    /// Flat TOML (or JSON) configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output encoding, overriding `output_format` from the config.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

fn load(path: &Option<PathBuf>) -> Result<RunConfig, String> {
    let Some(p) = path else {
        return Ok(RunConfig::default());
    };
    let text =
        std::fs::read_to_string(p).map_err(|e| format!("cannot read {}: {e}", p.display()))?;
    parse_config(&text).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = match load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let report = match run(args.command.name(), &cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    eprint!("{}", describe(&report));
    eprintln!("wall_clock_seconds: {:.3}", report.wall_clock_seconds);
    let format = match args.format {
        Some(Format::Csv) => OutputFormat::Csv,
        Some(Format::Json) => OutputFormat::Json,
        None => cfg.output_format,
    };
    let text = match emit(&report, format) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let out = args
        .out
        .or_else(|| cfg.output_path.as_ref().map(PathBuf::from));
    match out {
        Some(p) => {
            if let Err(e) = std::fs::write(&p, text) {
                eprintln!("error: i/o error on {}: {e}", p.display());
                return ExitCode::from(1);
            }
        }
        None => print!("{text}"),
    }
    ExitCode::from(report.exit_code() as u8)
}
