//! The `solve`, `check-gradient`, `project` and `list-problems` commands.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use varidescent_core::descent::{gradient_bundle, mode_projection};
use varidescent_core::oracles::{error_vs_exact, fd_directional_derivative_on};
use varidescent_core::problem::BUILTIN_PROBLEMS;
use varidescent_core::{
    certify_l0, inner_product_l2, minimize_with, project_l0, BoxDomain, DescentReport, DescentRule, Discretization,
    GridFunction, L0Certificate, OptimizeError, Placement, Problem, UniformGrid,
};

use crate::config::RunConfig;
use crate::csv_io::{read_grid_csv, write_grid_csv};
use crate::CliError;

/// Finite-difference steps tried for every direction.
pub const CHECK_EPSILONS: [f64; 3] = [1e-4, 1e-5, 1e-6];
/// Largest accepted best-of-steps relative error.
pub const CHECK_TOLERANCE: f64 = 1e-2;
const CHECK_DIRECTIONS: usize = 3;
const PROJECT_TOLERANCE: f64 = 1e-12;

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(CliError::io(path))
}

fn log_line(record: &varidescent_core::IterationRecord) -> String {
    serde_json::json!({
        "iter": record.iter,
        "F": record.functional,
        "grad_norm": record.grad_norm,
        "step": record.step,
    })
    .to_string()
}

/// Runs the descent, streaming the convergence log and writing the
/// solution CSV. Both files are opened before the first iteration.
pub fn cmd_solve(config: &RunConfig, out: &mut impl Write) -> Result<DescentReport, CliError> {
    let mut solution = create(&config.solution_csv)?;
    let mut log = create(&config.convergence_log)?;
    let rule = match &config.isoperimetric {
        Some(c) => DescentRule::Isoperimetric(c.clone()),
        None => DescentRule::Steepest,
    };

    let mut log_error = None;
    let result = minimize_with(&config.problem, &config.grid, &config.optimizer, None, &rule, |view| {
        if log_error.is_none() {
            if let Err(e) = writeln!(log, "{}", log_line(view.record)) {
                log_error = Some(e);
            }
        }
    });
    let flushed = log.flush();
    if let Some(e) = log_error.or(flushed.err()) {
        return Err(CliError::io(&config.convergence_log)(e));
    }
    let report = match result {
        Ok(report) => report,
        Err(OptimizeError::Setup(e)) => return Err(CliError::Core(e)),
        Err(e) => return Err(CliError::Optimize(e)),
    };

    write_grid_csv(&report.final_u, &mut solution)
        .and_then(|_| solution.flush())
        .map_err(CliError::io(&config.solution_csv))?;

    let last = report
        .iterations
        .last()
        .expect("the trace always holds the starting point");
    writeln!(
        out,
        "problem {} on {:?} cells, boundary mode {}",
        config.problem_name,
        config.grid.cells(),
        config.problem.boundary_mode()
    )?;
    writeln!(
        out,
        "termination {:?} after {} iterations",
        report.termination,
        report.iterations.len() - 1
    )?;
    writeln!(out, "F = {:.12e}, ||G|| = {:.6e}", last.functional, last.grad_norm)?;
    if let Some(exact) = config.problem.exact_solution() {
        let e = error_vs_exact(&report.final_u, exact)?;
        writeln!(out, "error vs exact: max {:.6e}, L2 {:.6e}", e.max_error, e.l2_error)?;
    }
    writeln!(
        out,
        "wrote {} and {}",
        config.solution_csv.display(),
        config.convergence_log.display()
    )?;
    Ok(report)
}

/// One line of the gradient-check table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheckRow {
    pub direction: usize,
    pub eps: f64,
    pub fd: f64,
    pub analytic: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub rows: Vec<GradientCheckRow>,
    /// Smallest relative error over the steps, per direction.
    pub best: Vec<f64>,
    /// The gradient vanishes identically, so errors are taken relative to
    /// the unit direction norm.
    pub degenerate: bool,
}

impl GradientCheck {
    pub fn passes(&self) -> bool {
        self.best.iter().all(|&b| b <= CHECK_TOLERANCE)
    }
}

fn random_direction(problem: &Problem, grid: &UniformGrid, rng: &mut ChaCha8Rng) -> Result<GridFunction, CliError> {
    let d = problem.components();
    let raw = GridFunction::from_fn(grid, Placement::cells(grid.rank()), d, |_, out| {
        for o in out.iter_mut() {
            *o = rng.gen_range(-1.0..1.0);
        }
    })?;
    let h = mode_projection(problem.boundary_mode(), &raw)?;
    let norm = inner_product_l2(&h, &h)?.sqrt();
    Ok(h.scaled(1.0 / norm))
}

/// Compares `<G, h>` with central differences of `F` at `v = 0` along
/// random admissible unit directions, printing the table to `out`.
pub fn check_gradient_with(
    problem: &Problem,
    grid: &UniformGrid,
    seed: u64,
    out: &mut impl Write,
) -> Result<GradientCheck, CliError> {
    let disc = Discretization::new(problem, grid)?;
    let v = GridFunction::zeros(grid, Placement::cells(grid.rank()), problem.components());
    let bundle = gradient_bundle(&disc, &v)?;
    let degenerate = bundle.grad_norm == 0.0;
    if degenerate {
        writeln!(
            out,
            "note: G vanishes identically at v = 0, so F' = 0 in every admissible direction; errors are relative to ||h|| = 1"
        )?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    writeln!(
        out,
        "{:>9} {:>8} {:>24} {:>24} {:>14}",
        "direction", "eps", "fd", "analytic", "relative error"
    )?;
    let mut rows = Vec::new();
    let mut best = Vec::new();
    for direction in 1..=CHECK_DIRECTIONS {
        let h = random_direction(problem, grid, &mut rng)?;
        let analytic = inner_product_l2(&bundle.g, &h)?;
        let mut best_here = f64::INFINITY;
        for eps in CHECK_EPSILONS {
            let fd = fd_directional_derivative_on(&disc, &v, &h, eps)?;
            let diff = (fd - analytic).abs();
            let scale = if degenerate { 1.0 } else { fd.abs().max(analytic.abs()) };
            let relative_error = if diff == 0.0 {
                0.0
            } else if scale > 0.0 {
                diff / scale
            } else {
                f64::INFINITY
            };
            writeln!(
                out,
                "{direction:>9} {eps:>8.0e} {fd:>24.16e} {analytic:>24.16e} {relative_error:>14.3e}"
            )?;
            best_here = best_here.min(relative_error);
            rows.push(GradientCheckRow {
                direction,
                eps,
                fd,
                analytic,
                relative_error,
            });
        }
        best.push(best_here);
    }
    let check = GradientCheck { rows, best, degenerate };
    writeln!(
        out,
        "best relative error per direction {:?} (tolerance {CHECK_TOLERANCE:e}): {}",
        check.best.iter().map(|b| format!("{b:.3e}")).collect::<Vec<_>>(),
        if check.passes() { "PASS" } else { "FAIL" }
    )?;
    Ok(check)
}

/// `check-gradient` on a parsed config.
pub fn cmd_check_gradient(config: &RunConfig, out: &mut impl Write) -> Result<GradientCheck, CliError> {
    if config.isoperimetric.is_some() {
        writeln!(
            out,
            "note: the isoperimetric block is ignored; checking the objective gradient"
        )?;
    }
    check_gradient_with(&config.problem, &config.grid, config.seed, out)
}

/// Builds the grid of `project` from `a1,b1,a2,b2,...` and `N1,N2,...`.
pub fn project_grid(bounds: &[f64], cells: &[usize]) -> Result<UniformGrid, CliError> {
    if bounds.len() != 2 * cells.len() {
        return Err(CliError::Usage(format!(
            "--domain has {} values but --cells has {} entries; expected {}",
            bounds.len(),
            cells.len(),
            2 * cells.len()
        )));
    }
    let lower = bounds.iter().step_by(2).copied().collect();
    let upper = bounds.iter().skip(1).step_by(2).copied().collect();
    Ok(UniformGrid::new(BoxDomain::new(lower, upper)?, cells.to_vec())?)
}

/// Projects a cell field onto `L_0`, writes it to `output` and prints the
/// certificate.
pub fn cmd_project(
    input: &Path,
    grid: &UniformGrid,
    output: &Path,
    out: &mut impl Write,
) -> Result<L0Certificate, CliError> {
    let file = File::open(input).map_err(CliError::io(input))?;
    let v = read_grid_csv(BufReader::new(file), grid, Placement::cells(grid.rank()))?;
    let projected = project_l0(&v)?;
    let certificate = certify_l0(&projected, PROJECT_TOLERANCE)?;
    let mut writer = create(output)?;
    write_grid_csv(&projected, &mut writer)
        .and_then(|_| writer.flush())
        .map_err(CliError::io(output))?;
    writeln!(
        out,
        "max slab residual {:.3e} (tolerance {:.0e}): {}",
        certificate.max_slab_residual,
        certificate.tolerance,
        if certificate.passes() { "PASS" } else { "FAIL" }
    )?;
    writeln!(out, "wrote {}", output.display())?;
    Ok(certificate)
}

pub fn cmd_list_problems(out: &mut impl Write) -> Result<(), CliError> {
    for (name, description) in BUILTIN_PROBLEMS {
        writeln!(out, "{name:<18} {description}")?;
    }
    Ok(())
}
