use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use varidescent_cli::{
    cmd_check_gradient, cmd_list_problems, cmd_project, cmd_solve, configure_threads, exit_code, parse_config,
    project_grid, CliError, EXIT_GRADIENT_MISMATCH, EXIT_INPUT, EXIT_OK, THREADS_VAR,
};

/// Steepest descent for variational problems on boxes.
#[derive(Debug, Parser)]
#[command(name = "varidescent", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Minimize the functional described by a JSON config.
    Solve { config: PathBuf },
    /// Compare the analytic gradient with finite differences at v = 0.
    CheckGradient { config: PathBuf },
    /// Project a cell-field CSV onto the zero-slab subspace.
    Project {
        field: PathBuf,
        /// Box bounds `a1,b1[,a2,b2...]`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        domain: Vec<f64>,
        /// Cells per axis `N1[,N2...]`.
        #[arg(long, value_delimiter = ',', required = true)]
        cells: Vec<usize>,
        /// Output CSV; defaults to `<field>.projected.csv`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// List the built-in problems.
    ListProblems,
}

fn run(cli: Cli) -> Result<u8, CliError> {
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Solve { config } => {
            let config = parse_config(&config)?;
            let report = cmd_solve(&config, &mut stdout)?;
            Ok(exit_code(report.termination))
        }
        Command::CheckGradient { config } => {
            let config = parse_config(&config)?;
            let check = cmd_check_gradient(&config, &mut stdout)?;
            Ok(if check.passes() {
                EXIT_OK
            } else {
                EXIT_GRADIENT_MISMATCH
            })
        }
        Command::Project {
            field,
            domain,
            cells,
            output,
        } => {
            let grid = project_grid(&domain, &cells)?;
            let output = output.unwrap_or_else(|| field.with_extension("projected.csv"));
            let certificate = cmd_project(&field, &grid, &output, &mut stdout)?;
            Ok(if certificate.passes() { EXIT_OK } else { EXIT_INPUT })
        }
        Command::ListProblems => {
            cmd_list_problems(&mut stdout)?;
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = std::env::var(THREADS_VAR).ok();
    let code = configure_threads(threads.as_deref())
        .and_then(|_| run(cli))
        .unwrap_or_else(|e| {
            eprintln!("error: {e}");
            EXIT_INPUT
        });
    ExitCode::from(code)
}
