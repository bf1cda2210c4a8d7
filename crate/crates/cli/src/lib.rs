//! Command-line front end for `varidescent`: config parsing, run
//! orchestration and output files.

pub mod commands;
pub mod config;
pub mod csv_io;

use std::path::PathBuf;

use thiserror::Error;

use varidescent_core::{OptimizeError, Termination};

pub use commands::{
    check_gradient_with, cmd_check_gradient, cmd_list_problems, cmd_project, cmd_solve, project_grid, GradientCheck,
    GradientCheckRow, CHECK_EPSILONS, CHECK_TOLERANCE,
};
pub use config::{parse_config, parse_config_str, RunConfig};
pub use csv_io::{read_grid_csv, write_grid_csv};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INPUT: u8 = 1;
pub const EXIT_MAX_ITERATIONS: u8 = 2;
pub const EXIT_LINE_SEARCH: u8 = 3;
pub const EXIT_GRADIENT_MISMATCH: u8 = 4;

/// Environment variable capping the worker count.
pub const THREADS_VAR: &str = "VARIDESCENT_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("output stream: {0}")]
    Stream(#[from] std::io::Error),

    #[error("input shape, line {line}: {message}")]
    Shape { line: usize, message: String },

    #[error("invalid argument: {0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] varidescent_core::Error),

    #[error(transparent)]
    Optimize(#[from] OptimizeError),
}

impl CliError {
    pub(crate) fn from_read(source: std::io::Error) -> Self {
        CliError::Stream(source)
    }

    pub(crate) fn io(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> Self + '_ {
        move |source| CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Process exit code for a finished descent run.
pub fn exit_code(termination: Termination) -> u8 {
    match termination {
        Termination::GradientTolerance | Termination::CriticalPointDetected => EXIT_OK,
        Termination::MaxIterations => EXIT_MAX_ITERATIONS,
        Termination::LineSearchFailure => EXIT_LINE_SEARCH,
    }
}

/// Sizes the global worker pool from [`THREADS_VAR`] when it is set.
pub fn configure_threads(value: Option<&str>) -> Result<(), CliError> {
    let Some(value) = value else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_VAR} must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size the worker pool: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(Termination::GradientTolerance), 0);
        assert_eq!(exit_code(Termination::CriticalPointDetected), 0);
        assert_eq!(exit_code(Termination::MaxIterations), 2);
        assert_eq!(exit_code(Termination::LineSearchFailure), 3);
    }

    #[test]
    fn thread_variable_validation() {
        assert!(configure_threads(None).is_ok());
        assert!(matches!(configure_threads(Some("0")), Err(CliError::Usage(_))));
        assert!(matches!(configure_threads(Some("many")), Err(CliError::Usage(_))));
    }
}
