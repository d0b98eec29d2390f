use bipf::contingency::{run_contingency, ContingencyError, Outage};
use bipf::formulation::{build_registry, ResidualSystem};
use bipf::io::{parse_case, write_contingency, write_results, CaseError, OutputFormat};
use bipf::netmodel::NetworkCase;
use bipf::solver::{flat_start, solve, SolverError, SolverOptions};
use clap::{Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Power flow for hybrid AC and bipolar DC grids.
#[derive(Parser)]
#[command(name = "bipf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a case file for schema and topology errors.
    Validate { case: PathBuf },
    /// Solve the power flow of a case.
    Solve {
        case: PathBuf,
        /// Write results here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        /// Convergence tolerance on the largest residual.
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 50)]
        max_iter: usize,
    },
    /// Solve the base case, apply one outage and report deviations.
    Contingency {
        case: PathBuf,
        /// conv:<id>, dcline:<id>:<pos|neg|neutral> or acline:<id>
        #[arg(long, value_parser = parse_outage)]
        outage: Outage,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Compare the analytic Jacobian with central finite differences.
    CheckJacobian {
        case: PathBuf,
        /// Evaluate at the converged solution instead of the flat start.
        #[arg(long)]
        solved: bool,
        #[arg(long, default_value_t = 1e-6)]
        step: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Table => OutputFormat::Table,
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

fn parse_outage(s: &str) -> Result<Outage, String> {
    s.parse().map_err(|e: ContingencyError| e.to_string())
}

enum Failure {
    Validation(String),
    NonConvergence(String),
    Input(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::NonConvergence(_) => 2,
            Failure::Input(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::NonConvergence(m) | Failure::Input(m) => m,
        }
    }
}

impl From<CaseError> for Failure {
    fn from(e: CaseError) -> Self {
        match e {
            CaseError::Validation(_) => Failure::Validation(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl From<SolverError> for Failure {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::Validation(_) | SolverError::Formulation(_) => Failure::Validation(e.to_string()),
            _ => Failure::NonConvergence(e.to_string()),
        }
    }
}

impl From<ContingencyError> for Failure {
    fn from(e: ContingencyError) -> Self {
        match e {
            ContingencyError::Solver { source, outage } => {
                let inner = Failure::from(source);
                let msg = format!("solving after outage {outage}: {}", inner.message());
                match inner {
                    Failure::Validation(_) => Failure::Validation(msg),
                    _ => Failure::NonConvergence(msg),
                }
            }
            ContingencyError::BadOutage(_) => Failure::Input(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

fn load(path: &Path) -> Result<NetworkCase, Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    Ok(parse_case(&bytes)?)
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::Input(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Validate { case } => {
            let case = load(&case)?;
            let reg = build_registry(&case).map_err(|e| Failure::Validation(e.to_string()))?;
            println!("{}: valid, {} unknowns", case.name, reg.len());
        }
        Command::Solve { case, out, format, tol, max_iter } => {
            let case = load(&case)?;
            let opts = SolverOptions { tol_inf: tol, max_iter, ..SolverOptions::default() };
            let sol = solve(&case, &opts, None)?;
            emit(&write_results(&sol, format.into()), out.as_deref())?;
        }
        Command::Contingency { case, outage, out, format } => {
            let case = load(&case)?;
            let opts = SolverOptions::default();
            let base = solve(&case, &opts, None)?;
            let report = run_contingency(&case, &base, &outage, &opts)?;
            emit(&write_contingency(&report, format.into()), out.as_deref())?;
        }
        Command::CheckJacobian { case, solved, step } => {
            let case = load(&case)?;
            let (reg, x) = if solved {
                let sol = solve(&case, &SolverOptions::default(), None)?;
                (sol.registry, sol.state)
            } else {
                let reg = build_registry(&case).map_err(|e| Failure::Validation(e.to_string()))?;
                let x = flat_start(&case, &reg);
                (reg, x)
            };
            let sys = ResidualSystem::new(&case, reg).map_err(|e| Failure::Validation(e.to_string()))?;
            let check = sys.check_jacobian(&x, step).map_err(|e| Failure::Validation(e.to_string()))?;
            println!("max relative error: {:.3e}", check.max_rel_error);
            println!("worst entry: {} / {}", check.equation, check.variable);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage_error = e.use_stderr();
            let _ = e.print();
            // clap's own code 2 would read as non-convergence.
            return ExitCode::from(if usage_error { 3 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
