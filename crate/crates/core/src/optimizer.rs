//! Steepest descent with Armijo backtracking.

use thiserror::Error;

use crate::descent::{gradient_bundle, mode_projection, GradientBundle, IsoperimetricConstraint, IsoperimetricContext};
use crate::error::{Error, Result};
use crate::grid::{inner_product_l2, GridFunction, Placement, UniformGrid};
use crate::ops::certify_l0;
use crate::problem::{BoundaryMode, Discretization, Problem};

/// Iterates are passed through the mode projection this often.
pub const REPROJECT_EVERY: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    /// Stop once `||G||_2` drops to this value.
    pub tol_grad: f64,
    pub armijo_c1: f64,
    pub shrink: f64,
    pub step0: f64,
    pub min_step: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol_grad: 1e-6,
            armijo_c1: 1e-4,
            shrink: 0.5,
            step0: 1.0,
            min_step: 1e-14,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |name: &'static str, x: f64| {
            if x > 0.0 && x < 1.0 {
                Ok(())
            } else {
                Err(Error::InvalidConfig {
                    name,
                    message: format!("must lie in (0, 1), got {x}"),
                })
            }
        };
        open_unit("armijo_c1", self.armijo_c1)?;
        open_unit("shrink", self.shrink)?;
        let positive = |name: &'static str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig {
                    name,
                    message: format!("must be positive and finite, got {x}"),
                })
            }
        };
        positive("step0", self.step0)?;
        positive("min_step", self.min_step)?;
        if !(self.tol_grad >= 0.0 && self.tol_grad.is_finite()) {
            return Err(Error::InvalidConfig {
                name: "tol_grad",
                message: format!("must be non-negative and finite, got {}", self.tol_grad),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Termination {
    GradientTolerance,
    MaxIterations,
    LineSearchFailure,
    CriticalPointDetected,
}

/// One entry of the convergence trace. Entry 0 is the starting point with
/// step 0; every later entry follows an accepted step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub functional: f64,
    pub grad_norm: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentReport {
    pub iterations: Vec<IterationRecord>,
    pub final_v: GridFunction,
    pub final_u: GridFunction,
    pub termination: Termination,
}

/// What an observer of [`minimize_with`] sees after each trace record.
#[derive(Debug, Clone, Copy)]
pub struct IterationView<'a> {
    pub record: &'a IterationRecord,
    pub v: &'a GridFunction,
    pub bundle: &'a GradientBundle,
}

/// Failure of [`minimize`] and friends.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizeError {
    /// Invalid input detected before the first iteration.
    #[error(transparent)]
    Setup(#[from] Error),
    /// An evaluation failed mid-run.
    #[error("descent aborted after {} accepted steps: {error}", partial.iterations.len().saturating_sub(1))]
    Aborted { error: Error, partial: Box<PartialReport> },
}

/// Trace and last accepted iterate of an aborted run.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialReport {
    pub iterations: Vec<IterationRecord>,
    pub last_v: GridFunction,
}

/// Largest `alpha` in `{step0 * shrink^k}` with
/// `phi(alpha) <= f0 + c1 * alpha * slope`. Returns `alpha` and
/// `phi(alpha)`.
pub fn backtrack(
    f0: f64,
    slope: f64,
    config: &OptimizerConfig,
    mut phi: impl FnMut(f64) -> Result<f64>,
) -> Result<(f64, f64)> {
    if slope.is_nan() || slope >= 0.0 {
        return Err(Error::NotDescentDirection { slope });
    }
    let mut alpha = config.step0;
    while alpha >= config.min_step {
        let trial = phi(alpha)?;
        if trial <= f0 + config.armijo_c1 * alpha * slope {
            return Ok((alpha, trial));
        }
        alpha *= config.shrink;
    }
    Err(Error::LineSearchFailure {
        min_step: config.min_step,
    })
}

/// Armijo step along `h = -G / ||G||` from `v`.
pub fn armijo_search(
    disc: &Discretization,
    v: &GridFunction,
    bundle: &GradientBundle,
    config: &OptimizerConfig,
) -> Result<f64> {
    if bundle.grad_norm == 0.0 {
        return Err(Error::CriticalPoint);
    }
    let h = bundle.g.scaled(-1.0 / bundle.grad_norm);
    let slope = inner_product_l2(&bundle.g, &h)?;
    backtrack(bundle.functional_value, slope, config, |alpha| {
        disc.functional(&v.plus_scaled(alpha, &h)?)
    })
    .map(|r| r.0)
}

/// Which gradient drives the iteration.
#[derive(Debug, Clone, PartialEq)]
pub enum DescentRule {
    /// Mode projection of `Q`.
    Steepest,
    /// Projection of `Q_I + lambda Q_J`, tangent to the constraint.
    Isoperimetric(IsoperimetricConstraint),
}

/// Minimizes `F(v) = I(ubar + T v)` over the admissible fields of the
/// problem's boundary mode, from `v0` (zero when absent).
pub fn minimize(
    problem: &Problem,
    grid: &UniformGrid,
    config: &OptimizerConfig,
    v0: Option<&GridFunction>,
) -> std::result::Result<DescentReport, OptimizeError> {
    minimize_with(problem, grid, config, v0, &DescentRule::Steepest, |_| {})
}

/// [`minimize`] with a choice of rule and a callback fired for every trace
/// record as it is produced, together with its iterate and bundle. Under the isoperimetric rule an absent `v0`
/// defaults to the feasible point nearest the origin.
pub fn minimize_with(
    problem: &Problem,
    grid: &UniformGrid,
    config: &OptimizerConfig,
    v0: Option<&GridFunction>,
    rule: &DescentRule,
    mut observer: impl FnMut(IterationView<'_>),
) -> std::result::Result<DescentReport, OptimizeError> {
    config.validate()?;
    let disc = Discretization::new(problem, grid)?;
    let mode = problem.boundary_mode();
    let iso = match rule {
        DescentRule::Steepest => None,
        DescentRule::Isoperimetric(c) => Some(IsoperimetricContext::new(problem, c, grid)?),
    };
    let mut v = match (v0, &iso) {
        (Some(v0), _) => {
            if v0.grid() != grid {
                return Err(Error::GridMismatch.into());
            }
            admissible(mode, v0)?
        }
        (None, Some(ctx)) => ctx.start_point()?,
        (None, None) => GridFunction::zeros(grid, Placement::cells(grid.rank()), problem.components()),
    };
    let bundle_at = |v: &GridFunction| match &iso {
        Some(ctx) => ctx.bundle(v).map(|b| b.bundle),
        None => gradient_bundle(&disc, v),
    };

    let mut iterations = Vec::new();
    let finish = |v: GridFunction, iterations: Vec<IterationRecord>, termination| -> Result<DescentReport> {
        Ok(DescentReport {
            final_u: disc.solution_nodes(&v)?,
            final_v: v,
            iterations,
            termination,
        })
    };
    let abort = |error: Error, v: &GridFunction, iterations: &[IterationRecord]| OptimizeError::Aborted {
        error,
        partial: Box::new(PartialReport {
            iterations: iterations.to_vec(),
            last_v: v.clone(),
        }),
    };

    let mut bundle = bundle_at(&v).map_err(OptimizeError::Setup)?;
    let first = IterationRecord {
        iter: 0,
        functional: bundle.functional_value,
        grad_norm: bundle.grad_norm,
        step: 0.0,
    };
    observer(IterationView {
        record: &first,
        v: &v,
        bundle: &bundle,
    });
    iterations.push(first);

    let mut iter = 0;
    let termination = loop {
        if bundle.grad_norm == 0.0 {
            break Termination::CriticalPointDetected;
        }
        if bundle.grad_norm <= config.tol_grad {
            break Termination::GradientTolerance;
        }
        if iter >= config.max_iters {
            break Termination::MaxIterations;
        }
        let step = match armijo_search(&disc, &v, &bundle, config) {
            Ok(step) => step,
            Err(Error::LineSearchFailure { .. }) => break Termination::LineSearchFailure,
            Err(e) => return Err(abort(e, &v, &iterations)),
        };
        let h = bundle.g.scaled(-1.0 / bundle.grad_norm);
        let mut next = v.plus_scaled(step, &h).map_err(|e| abort(e, &v, &iterations))?;
        iter += 1;
        if iter % REPROJECT_EVERY == 0 {
            next = mode_projection(mode, &next).map_err(|e| abort(e, &v, &iterations))?;
        }
        bundle = bundle_at(&next).map_err(|e| abort(e, &v, &iterations))?;
        v = next;
        let record = IterationRecord {
            iter,
            functional: bundle.functional_value,
            grad_norm: bundle.grad_norm,
            step,
        };
        observer(IterationView {
            record: &record,
            v: &v,
            bundle: &bundle,
        });
        iterations.push(record);
    };
    finish(v, iterations, termination).map_err(OptimizeError::Setup)
}

/// Keeps `v0` when it already satisfies the mode's constraints to `1e-10`,
/// otherwise projects it.
fn admissible(mode: BoundaryMode, v0: &GridFunction) -> Result<GridFunction> {
    v0.require_cells("starting point")?;
    let feasible = match mode {
        BoundaryMode::AllSides => certify_l0(v0, 1e-10)?.passes(),
        _ => crate::descent::mode_constraint_residual(mode, v0)? <= 1e-10,
    };
    if feasible {
        Ok(v0.clone())
    } else {
        mode_projection(mode, v0)
    }
}

/// Solves with the isoperimetric rule.
pub fn minimize_isoperimetric(
    problem: &Problem,
    constraint: &IsoperimetricConstraint,
    grid: &UniformGrid,
    config: &OptimizerConfig,
    v0: Option<&GridFunction>,
) -> std::result::Result<DescentReport, OptimizeError> {
    minimize_with(
        problem,
        grid,
        config,
        v0,
        &DescentRule::Isoperimetric(constraint.clone()),
        |_| {},
    )
}
