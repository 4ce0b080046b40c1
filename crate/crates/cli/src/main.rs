mod commands;
mod config;
mod verify;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lorpl2::Error;

use config::{parse_interval, Common, MeasureKind};

const EXIT_CHECK: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug)]
pub struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidInput(_)
            | Error::TableFormat(_)
            | Error::Json(_)
            | Error::Io(_)
            | Error::OnAxis { .. } => EXIT_USAGE,
            _ => EXIT_NUMERICAL,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "lorpl2", version, about = "Orthonormal Laurent polynomials in two real variables")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the moment table of a measure as JSON
    Moments {
        #[command(flatten)]
        common: Common,
    },
    /// Orthonormalize through --levels and write the coefficients as JSON
    Orthonormalize {
        #[command(flatten)]
        common: Common,
    },
    /// Compute the five-term recurrence blocks as JSON
    Recurrence {
        #[command(flatten)]
        common: Common,
        /// Also write per-level residuals at random points as CSV
        #[arg(long)]
        residuals: Option<PathBuf>,
    },
    /// Evaluate the kernel of level --levels directly and in closed form, as CSV
    KernelEval {
        #[command(flatten)]
        common: Common,
        /// Point pairs, one `x1,y1,x2,y2` per line; random pairs when absent
        #[arg(long)]
        pairs: Option<PathBuf>,
        /// Number of random pairs
        #[arg(long)]
        count: Option<usize>,
    },
    /// Tabulate the one-variable coefficients (n, Omega_n, C_n) as CSV
    Univariate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        weight: Option<MeasureKind>,
        #[arg(long, value_parser = parse_interval)]
        interval: Option<[f64; 2]>,
    },
    /// Run the invariant checks; exit status 1 if any fails
    Verify {
        #[command(flatten)]
        common: Common,
        /// Leave out the checks of a module (lattice, moments, ortho,
        /// recurrence, kernels, univariate); repeatable
        #[arg(long)]
        skip: Vec<String>,
    },
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Failure::usage(format!("{}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Failure {
                    code: EXIT_NUMERICAL,
                    message: e.to_string(),
                })
        }
    }
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let common = match &cli.command {
        Command::Moments { common }
        | Command::Orthonormalize { common }
        | Command::Recurrence { common, .. }
        | Command::KernelEval { common, .. }
        | Command::Univariate { common, .. }
        | Command::Verify { common, .. } => common,
    };
    let file = config::load_file(common.config.as_deref())?;
    let cfg = config::RunConfig::resolve(common, &file)?;
    let out = cfg.out.clone();
    let text = match &cli.command {
        Command::Moments { .. } => commands::moments(&cfg)?,
        Command::Orthonormalize { .. } => commands::orthonormalize(&cfg)?,
        Command::Recurrence { residuals, .. } => {
            let residuals = residuals.clone().or(file.residuals.clone());
            let (json, csv) = commands::recurrence(&cfg, residuals.is_some())?;
            if let (Some(path), Some(csv)) = (residuals, csv) {
                emit(Some(&path), &csv)?;
            }
            json
        }
        Command::KernelEval { pairs, count, .. } => commands::kernel_eval(
            &cfg,
            pairs.clone().or(file.pairs.clone()).as_deref(),
            count.or(file.count).unwrap_or(10),
        )?,
        Command::Univariate { weight, interval, .. } => commands::univariate(
            &cfg,
            weight.or(file.weight).unwrap_or(MeasureKind::Lebesgue),
            interval.or(file.interval).unwrap_or([1.0, 2.0]),
        )?,
        Command::Verify { skip, .. } => {
            let skip = if skip.is_empty() {
                file.skip.clone().unwrap_or_default()
            } else {
                skip.clone()
            };
            let report = verify::run(&cfg, &skip)?;
            emit(out.as_ref(), &report.to_csv())?;
            return Ok(if report.passed() { 0 } else { EXIT_CHECK });
        }
    };
    emit(out.as_ref(), &text)?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
