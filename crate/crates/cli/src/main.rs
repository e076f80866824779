//! `posmap` command-line front end.
//!
//! `posmap positivity <file>` decides positivity of the linear map encoded by
//! a bi-quadratic form; `posmap separability <file>` decides whether a
//! Kronecker-subspace matrix is separable. Exit codes: 0 positive/separable,
//! 1 not positive/not separable, 2 inconclusive, 64 malformed input, 70 any
//! other failure.

mod input;
mod output;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use posmap_core::positivity::{self, PositivityOptions, PositivityStatus};
use posmap_core::separability::{self, SeparabilityOptions, SeparabilityStatus};
use posmap_core::{FlatnessTolerances, SdpOptions, SdpProblem};

use crate::input::InputError;

const EXIT_MALFORMED: u8 = 64;
const EXIT_FAILURE: u8 = 70;

#[derive(Parser, Debug)]
#[command(
    name = "posmap",
    version,
    about = "Positivity of linear maps and separability of Kronecker-subspace matrices"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Decide whether the map given by a bi-quadratic form is positive.
    Positivity {
        /// JSON problem file (`-` for standard input).
        input: PathBuf,
        #[command(flatten)]
        flags: CommonFlags,
        /// Sign tolerance applied to the certified minimum.
        #[arg(long, default_value_t = 1e-6)]
        positivity_tol: f64,
    },
    /// Decide whether a matrix of the Kronecker subspace is separable.
    Separability {
        /// JSON problem file (`-` for standard input).
        input: PathBuf,
        #[command(flatten)]
        flags: CommonFlags,
        /// Read only the entries indexed by Omega and ignore the rest of
        /// the matrix instead of rejecting matrices that break the
        /// partial symmetry.
        #[arg(long)]
        omega_entries: bool,
    },
}

#[derive(Args, Debug, Clone)]
struct CommonFlags {
    /// Highest relaxation order tried.
    #[arg(long, default_value_t = 6)]
    max_order: usize,
    /// Singular value threshold for numerical ranks.
    #[arg(long, default_value_t = 1e-6)]
    rank_tol: f64,
    /// Eigenvalue slack for PSD checks.
    #[arg(long, default_value_t = 1e-7)]
    psd_tol: f64,
    /// Residual tolerance for equality checks.
    #[arg(long, default_value_t = 1e-6)]
    eq_tol: f64,
    /// Relative accuracy requested from the SDP solver.
    #[arg(long, default_value_t = 1e-8)]
    solver_tol: f64,
    /// Seed for every randomised step.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write the relaxation of the deciding (or last tried) order in
    /// sparse triplet form.
    #[arg(long, value_name = "PATH")]
    dump_sdp: Option<PathBuf>,
    /// Include wall-clock timings in the report (makes output nondeterministic).
    #[arg(long)]
    timings: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Json,
    Text,
}

impl CommonFlags {
    fn tolerances(&self) -> FlatnessTolerances {
        FlatnessTolerances {
            rank_tol: self.rank_tol,
            psd_tol: self.psd_tol,
            eq_tol: self.eq_tol,
            ..FlatnessTolerances::default()
        }
    }

    fn sdp(&self) -> SdpOptions {
        SdpOptions {
            tol: self.solver_tol,
            ..SdpOptions::default()
        }
    }

    fn validate(&self) -> Result<(), InputError> {
        let positive = [
            ("--rank-tol", self.rank_tol),
            ("--psd-tol", self.psd_tol),
            ("--eq-tol", self.eq_tol),
            ("--solver-tol", self.solver_tol),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(InputError::Malformed(format!("{name} must be a positive number")));
            }
        }
        if self.max_order < positivity::MIN_ORDER {
            return Err(InputError::Malformed(format!(
                "--max-order must be at least {}",
                positivity::MIN_ORDER
            )));
        }
        Ok(())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(EXIT_MALFORMED);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(InputError::Malformed(msg)) => {
            eprintln!("posmap: malformed input: {msg}");
            ExitCode::from(EXIT_MALFORMED)
        }
        Err(InputError::Failure(msg)) => {
            eprintln!("posmap: {msg}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}

fn run(cli: Cli) -> Result<u8, InputError> {
    match cli.command {
        Command::Positivity {
            input,
            flags,
            positivity_tol,
        } => {
            flags.validate()?;
            if !positivity_tol.is_finite() || positivity_tol < 0.0 {
                return Err(InputError::Malformed(
                    "--positivity-tol must be a nonnegative number".into(),
                ));
            }
            let form = input::read_positivity(&read_source(&input)?)?;
            let opts = PositivityOptions {
                k_max: flags.max_order,
                positivity_tol,
                seed: flags.seed,
                tolerances: flags.tolerances(),
                sdp: flags.sdp(),
            };
            let mut report = positivity::check_positivity(&form, &opts).map_err(failure)?;
            if let Some(path) = &flags.dump_sdp {
                let k = report.order_used.unwrap_or(flags.max_order);
                dump(path, &positivity::build_relaxation(&form, k).map_err(failure)?)?;
            }
            if !flags.timings {
                report.timings = Default::default();
            }
            emit(&report, flags.format)?;
            Ok(match report.status {
                PositivityStatus::Positive => 0,
                PositivityStatus::NotPositive => 1,
                PositivityStatus::Inconclusive => 2,
            })
        }
        Command::Separability {
            input,
            flags,
            omega_entries,
        } => {
            flags.validate()?;
            let a = input::read_separability(&read_source(&input)?, omega_entries)?;
            let opts = SeparabilityOptions {
                k_max: flags.max_order,
                seed: flags.seed,
                tolerances: flags.tolerances(),
                sdp: flags.sdp(),
            };
            let mut report = separability::check_separability(&a, &opts).map_err(failure)?;
            if let Some(path) = &flags.dump_sdp {
                let k = report
                    .order_used
                    .unwrap_or_else(|| report.orders.last().map_or(flags.max_order, |o| o.k));
                let objective = separability::random_sos_objective(a.p(), a.q(), flags.seed).map_err(failure)?;
                dump(
                    path,
                    &separability::build_relaxation(&a, &objective, k).map_err(failure)?,
                )?;
            }
            if !flags.timings {
                report.timings = Default::default();
            }
            emit(&report, flags.format)?;
            Ok(match report.status {
                SeparabilityStatus::Separable => 0,
                SeparabilityStatus::NotSeparable => 1,
                SeparabilityStatus::Inconclusive => 2,
            })
        }
    }
}

fn failure(e: posmap_core::Error) -> InputError {
    match e {
        posmap_core::Error::Input(msg) => InputError::Malformed(msg),
        other => InputError::Failure(other.to_string()),
    }
}

fn read_source(path: &Path) -> Result<String, InputError> {
    let res = if path.as_os_str() == "-" {
        io::read_to_string(io::stdin())
    } else {
        std::fs::read_to_string(path)
    };
    res.map_err(|e| InputError::Malformed(format!("cannot read {}: {e}", path.display())))
}

fn dump(path: &Path, prob: &SdpProblem) -> Result<(), InputError> {
    let io_err = |e: io::Error| InputError::Failure(format!("cannot write {}: {e}", path.display()));
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    prob.write_triplets(&mut out).map_err(io_err)?;
    out.flush().map_err(io_err)
}

fn emit<T: serde::Serialize>(report: &T, format: Format) -> Result<(), InputError> {
    let text = match format {
        Format::Json => output::to_json(report),
        Format::Text => output::to_text(report),
    }
    .map_err(|e| InputError::Failure(format!("cannot serialise report: {e}")))?;
    let mut stdout = io::stdout().lock();
    writeln!(stdout, "{text}").map_err(|e| InputError::Failure(e.to_string()))
}
