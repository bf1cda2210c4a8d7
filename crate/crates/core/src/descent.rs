//! The gradient kernel `Q`, its projections onto the feasible directions,
//! the steepest-descent direction and related diagnostics.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::AnalyticExpr;
use crate::grid::{advance, inner_product_l2, GridFunction, Placement, Stagger};
use crate::ops::{along_axis, anchored_integral_axis, project_l0, slab_axis, Anchor};
use crate::problem::{BoundaryMode, Discretization, LinearLagrangian, Problem};

/// Snapshot of the first-order information at one iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    /// Kernel of the Gateaux derivative before projection.
    pub q: GridFunction,
    /// Gradient: `q` projected onto the feasible directions of `mode`.
    pub g: GridFunction,
    /// `||g||_2`.
    pub grad_norm: f64,
    pub functional_value: f64,
    pub mode: BoundaryMode,
}

/// Kernel `Q` of the Gateaux derivative: `F'[v](h) = <Q, h>` for every cell
/// field `h`. It is the adjoint of the lift applied to `df/du`, plus the
/// adjoints of the lifted partial derivatives applied to `df/dz_i`:
///
/// `Q = R_1 ... R_n f_u + sum_i prod_{l != i} R_l f_{z_i}`
///
/// where `R_l` is the tail integral along axis `l` for the standard lift.
pub fn compute_q_on(disc: &Discretization, v: &GridFunction) -> Result<GridFunction> {
    let (fu, fz) = disc.derivatives(v)?;
    let lift = disc.lift();
    let mut q = lift.adjoint_values(&fu)?;
    for (i, fzi) in fz.iter().enumerate() {
        q.axpy(1.0, &lift.adjoint_gradient(fzi, i)?)?;
    }
    Ok(q)
}

pub fn compute_q(problem: &Problem, v: &GridFunction) -> Result<GridFunction> {
    compute_q_on(&Discretization::new(problem, v.grid())?, v)
}

/// Orthogonal projection onto the directions admissible under `mode`:
/// `L_0` for all sides, the zero `x_1`-slab fields for three sides, and the
/// identity for the two corner variants.
pub fn mode_projection(mode: BoundaryMode, q: &GridFunction) -> Result<GridFunction> {
    match mode {
        BoundaryMode::AllSides => project_l0(q),
        BoundaryMode::ThreeSides2D => {
            mode.check_rank(q.grid().rank())?;
            q.require_cells("gradient kernel")?;
            let slab = slab_axis(q, 0)?;
            q.plus_scaled(-1.0 / q.grid().domain().length(0), &slab)
        }
        BoundaryMode::TwoAdjacent2D | BoundaryMode::AdjacentCorner2D => {
            mode.check_rank(q.grid().rank())?;
            q.require_cells("gradient kernel")?;
            Ok(q.clone())
        }
    }
}

/// Largest violation of the linear constraints defining the admissible
/// directions of `mode`.
pub fn mode_constraint_residual(mode: BoundaryMode, g: &GridFunction) -> Result<f64> {
    g.require_cells("direction")?;
    match mode {
        BoundaryMode::AllSides => {
            let mut worst: f64 = 0.0;
            for axis in 0..g.grid().rank() {
                worst = worst.max(slab_axis(g, axis)?.max_abs());
            }
            Ok(worst)
        }
        BoundaryMode::ThreeSides2D => Ok(slab_axis(g, 0)?.max_abs()),
        BoundaryMode::TwoAdjacent2D | BoundaryMode::AdjacentCorner2D => Ok(0.0),
    }
}

/// `Q`, its mode projection and `F` at `v`, for the discretization's mode.
pub fn gradient_bundle(disc: &Discretization, v: &GridFunction) -> Result<GradientBundle> {
    let mode = disc.problem().boundary_mode();
    let q = compute_q_on(disc, v)?;
    let g = mode_projection(mode, &q)?;
    Ok(GradientBundle {
        grad_norm: inner_product_l2(&g, &g)?.sqrt(),
        functional_value: disc.functional(v)?,
        q,
        g,
        mode,
    })
}

/// `G = Pr_{L_0} Q` for a problem with every side prescribed.
pub fn compute_g(problem: &Problem, v: &GridFunction) -> Result<GradientBundle> {
    let mode = problem.boundary_mode();
    if mode != BoundaryMode::AllSides {
        return Err(Error::UnsupportedMode {
            mode: mode.name(),
            reason: "use boundary_mode_gradient for partial boundaries".into(),
        });
    }
    gradient_bundle(&Discretization::new(problem, v.grid())?, v)
}

/// Gradient for `problem` with its boundary mode replaced by `mode`.
pub fn boundary_mode_gradient(problem: &Problem, v: &GridFunction, mode: BoundaryMode) -> Result<GradientBundle> {
    let problem = problem.clone().with_boundary_mode(mode)?;
    gradient_bundle(&Discretization::new(&problem, v.grid())?, v)
}

/// Unit descent direction `h = -G / ||G||` and its lift under the mode's
/// lift operator.
pub fn steepest_direction(bundle: &GradientBundle) -> Result<(GridFunction, GridFunction)> {
    if bundle.grad_norm == 0.0 {
        return Err(Error::CriticalPoint);
    }
    let h = bundle.g.scaled(-1.0 / bundle.grad_norm);
    let lifted = bundle.mode.lift(h.grid().rank()).apply(&h)?;
    Ok((h, lifted))
}

/// `F'[v](h) = <G, h>` from a fresh bundle at `v`.
pub fn directional_derivative(problem: &Problem, v: &GridFunction, h: &GridFunction) -> Result<f64> {
    let disc = Discretization::new(problem, v.grid())?;
    let g = mode_projection(problem.boundary_mode(), &compute_q_on(&disc, v)?)?;
    inner_product_l2(&g, h)
}

/// Two-dimensional steepest-descent direction written with averages:
///
/// `-Q + (1/|I_1|) int Q dx_1 + (1/|I_2|) int Q dx_2 - (1/|Omega|) int Q`.
///
/// Computed with explicit loops, independently of the projector.
pub fn closed_form_direction_2d(q: &GridFunction) -> Result<GridFunction> {
    q.require_cells("gradient kernel")?;
    if q.grid().rank() != 2 {
        return Err(Error::RankMismatch {
            expected: 2,
            found: q.grid().rank(),
        });
    }
    let cells = q.grid().cells();
    let (n1, n2) = (cells[0], cells[1]);
    let mut data = Vec::with_capacity(q.data().len());
    for comp in 0..q.components() {
        let plane = q.component(comp);
        let at = |i: usize, j: usize| plane[j * n1 + i];
        let row_mean: Vec<f64> = (0..n2)
            .map(|j| (0..n1).map(|i| at(i, j)).sum::<f64>() / n1 as f64)
            .collect();
        let col_mean: Vec<f64> = (0..n1)
            .map(|i| (0..n2).map(|j| at(i, j)).sum::<f64>() / n2 as f64)
            .collect();
        let mean = row_mean.iter().sum::<f64>() / n2 as f64;
        for (j, row) in row_mean.iter().enumerate() {
            for (i, col) in col_mean.iter().enumerate() {
                data.push(-at(i, j) + row + col - mean);
            }
        }
    }
    GridFunction::from_data(q.grid(), q.placement().clone(), q.components(), data)
}

fn cells_to_interior_nodes(f: &GridFunction, axis: usize, difference: bool) -> GridFunction {
    let h = f.grid().spacing()[axis];
    along_axis(f, axis, Stagger::Node, |line, out| {
        let n = line.len();
        out[0] = 0.0;
        out[n] = 0.0;
        for k in 1..n {
            out[k] = if difference {
                (line[k] - line[k - 1]) / h
            } else {
                0.5 * (line[k] + line[k - 1])
            };
        }
    })
}

/// `df/du - sum_i d/dx_i (df/dz_i)` at interior nodes. Boundary nodes hold
/// zero. `u` is taken at the node itself, `z` as the mean over the `2^n`
/// surrounding cells, and the divergence is a centered difference of the
/// cell-valued `df/dz_i`.
pub fn euler_lagrange_residual(problem: &Problem, v: &GridFunction) -> Result<GridFunction> {
    let disc = Discretization::new(problem, v.grid())?;
    let grid = disc.grid();
    let n = grid.rank();
    let d = problem.components();
    let states = disc.states(v)?;
    let (_, fz) = disc.derivatives(v)?;
    let u_nodes = disc.solution_nodes(v)?;

    let to_nodes = |f: &GridFunction, diff_axis: Option<usize>| {
        let mut out = f.clone();
        for axis in 0..n {
            out = cells_to_interior_nodes(&out, axis, diff_axis == Some(axis));
        }
        out
    };
    let z_nodes: Vec<GridFunction> = states.z.iter().map(|z| to_nodes(z, None)).collect();
    let mut divergence = GridFunction::zeros(grid, Placement::nodes(n), d);
    for (i, fzi) in fz.iter().enumerate() {
        divergence.axpy(1.0, &to_nodes(fzi, Some(i)))?;
    }

    let dims = u_nodes.dims();
    let points = u_nodes.points();
    let coords = grid.coordinates(&Placement::nodes(n));
    let lagrangian = problem.lagrangian();
    let mut data = vec![0.0; d * points];
    let (mut u, mut z, mut fu) = (vec![0.0; d], vec![0.0; d * n], vec![0.0; d]);
    let mut index = vec![0usize; n];
    for p in 0..points {
        let interior = index.iter().zip(&dims).all(|(&k, &m)| k > 0 && k + 1 < m);
        if interior {
            for j in 0..d {
                u[j] = u_nodes.component(j)[p];
                for i in 0..n {
                    z[j * n + i] = z_nodes[i].component(j)[p];
                }
            }
            lagrangian.grad_u(&coords[p * n..(p + 1) * n], &u, &z, &mut fu);
            for j in 0..d {
                let r = fu[j] - divergence.component(j)[p];
                if !r.is_finite() {
                    return Err(Error::NonFinite {
                        what: "Euler-Lagrange residual",
                        index: p,
                    });
                }
                data[j * points + p] = r;
            }
        }
        advance(&mut index, &dims);
    }
    GridFunction::from_data(grid, Placement::nodes(n), d, data)
}

/// Largest absolute node value of `u` on the boundary set of `mode`.
pub fn boundary_max(u: &GridFunction, mode: BoundaryMode) -> Result<f64> {
    u.require_nodes("lifted field")?;
    let cells = u.grid().cells().to_vec();
    let dims = u.dims();
    let mut index = vec![0usize; dims.len()];
    let mut worst: f64 = 0.0;
    for p in 0..u.points() {
        if mode.on_boundary(&index, &cells) {
            for c in 0..u.components() {
                worst = worst.max(u.component(c)[p].abs());
            }
        }
        advance(&mut index, &dims);
    }
    Ok(worst)
}

/// A linear integral constraint
/// `J(u) = int g_0 u + g_1 D_1 u + g_2 D_2 u = c` for a scalar field in two
/// dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct IsoperimetricConstraint {
    pub g0: AnalyticExpr,
    pub g1: AnalyticExpr,
    pub g2: AnalyticExpr,
    pub c: f64,
}

/// Gradient bundle for the constrained problem together with the
/// multiplier and the projected constraint kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct IsoperimetricBundle {
    /// `q = Q_I + lambda Q_J` and `g = Pr q`.
    pub bundle: GradientBundle,
    pub lambda: f64,
    /// `Pr Q_J`.
    pub constraint_gradient: GridFunction,
}

/// The constraint bound to a discretized problem. `Q_J` does not depend on
/// the iterate, so it is computed once.
#[derive(Debug, Clone)]
pub struct IsoperimetricContext {
    objective: Discretization,
    constraint: Discretization,
    target: f64,
    constraint_gradient: GridFunction,
    norm2: f64,
}

impl IsoperimetricContext {
    pub fn new(
        problem: &Problem,
        constraint: &IsoperimetricConstraint,
        grid: &crate::grid::UniformGrid,
    ) -> Result<Self> {
        if problem.rank() != 2 || problem.components() != 1 {
            return Err(Error::InvalidProblem(format!(
                "isoperimetric constraints need rank 2 and one component, got rank {} with {} components",
                problem.rank(),
                problem.components()
            )));
        }
        if problem.boundary_mode() != BoundaryMode::AllSides {
            return Err(Error::UnsupportedMode {
                mode: problem.boundary_mode().name(),
                reason: "isoperimetric constraints need every side prescribed".into(),
            });
        }
        for g in [&constraint.g0, &constraint.g1, &constraint.g2] {
            g.check_rank(2)?;
        }
        let linear = LinearLagrangian {
            value_weight: constraint.g0.clone(),
            gradient_weights: vec![constraint.g1.clone(), constraint.g2.clone()],
        };
        let constraint_problem = problem.with_lagrangian(Arc::new(linear))?;
        let constraint_disc = Discretization::new(&constraint_problem, grid)?;
        let zero = GridFunction::zeros(grid, Placement::cells(2), 1);
        let constraint_gradient = project_l0(&compute_q_on(&constraint_disc, &zero)?)?;
        let norm2 = inner_product_l2(&constraint_gradient, &constraint_gradient)?;
        if norm2 == 0.0 {
            return Err(Error::DegenerateConstraint);
        }
        Ok(Self {
            objective: Discretization::new(problem, grid)?,
            constraint: constraint_disc,
            target: constraint.c,
            constraint_gradient,
            norm2,
        })
    }

    pub fn objective(&self) -> &Discretization {
        &self.objective
    }

    /// `Pr Q_J`.
    pub fn constraint_gradient(&self) -> &GridFunction {
        &self.constraint_gradient
    }

    /// `J(ubar + T v)`.
    pub fn value(&self, v: &GridFunction) -> Result<f64> {
        self.constraint.functional(v)
    }

    /// The feasible point `t Pr Q_J` closest to the origin, with `J = c`.
    pub fn start_point(&self) -> Result<GridFunction> {
        let zero = GridFunction::zeros(self.objective.grid(), Placement::cells(2), 1);
        let gap = self.target - self.value(&zero)?;
        Ok(self.constraint_gradient.scaled(gap / self.norm2))
    }

    /// `lambda = -<Pr Q_I, Pr Q_J> / ||Pr Q_J||^2`, `G = Pr (Q_I + lambda Q_J)`.
    pub fn bundle(&self, v: &GridFunction) -> Result<IsoperimetricBundle> {
        let qi = compute_q_on(&self.objective, v)?;
        let pqi = project_l0(&qi)?;
        let lambda = -inner_product_l2(&pqi, &self.constraint_gradient)? / self.norm2;
        let zero = GridFunction::zeros(v.grid(), Placement::cells(2), 1);
        let qj = compute_q_on(&self.constraint, &zero)?;
        let q = qi.plus_scaled(lambda, &qj)?;
        let g = pqi.plus_scaled(lambda, &self.constraint_gradient)?;
        Ok(IsoperimetricBundle {
            bundle: GradientBundle {
                grad_norm: inner_product_l2(&g, &g)?.sqrt(),
                functional_value: self.objective.functional(v)?,
                q,
                g,
                mode: BoundaryMode::AllSides,
            },
            lambda,
            constraint_gradient: self.constraint_gradient.clone(),
        })
    }
}

/// Steepest-descent information for `problem` subject to `constraint`.
pub fn isoperimetric_direction(
    problem: &Problem,
    constraint: &IsoperimetricConstraint,
    v: &GridFunction,
) -> Result<IsoperimetricBundle> {
    IsoperimetricContext::new(problem, constraint, v.grid())?.bundle(v)
}

fn require_rank_two(v: &GridFunction) -> Result<()> {
    v.require_cells("higher-order source")?;
    if v.grid().rank() != 2 {
        return Err(Error::RankMismatch {
            expected: 2,
            found: v.grid().rank(),
        });
    }
    Ok(())
}

/// Trapezoid cumulative integral along a node axis, zero at `a_i`.
fn trapezoid_cumulative(u: &GridFunction, axis: usize) -> GridFunction {
    let h = u.grid().spacing()[axis];
    along_axis(u, axis, Stagger::Node, |line, out| {
        out[0] = 0.0;
        for k in 1..line.len() {
            out[k] = out[k - 1] + 0.5 * h * (line[k - 1] + line[k]);
        }
    })
}

fn double_integral(v: &GridFunction, axis: usize) -> Result<GridFunction> {
    Ok(trapezoid_cumulative(
        &anchored_integral_axis(v, axis, Anchor::Lower)?,
        axis,
    ))
}

/// Four-fold lift `int_{a_1}^{x_1} int_{a_1}^{xi_1} int_{a_2}^{x_2} int_{a_2}^{xi_2} v`
/// on the node grid: a midpoint cumulative followed by a trapezoid
/// cumulative along each axis.
pub fn higher_order_lift(v: &GridFunction) -> Result<GridFunction> {
    require_rank_two(v)?;
    double_integral(&double_integral(v, 0)?, 1)
}

/// Discrete `d/dx_axis` of [`higher_order_lift`]: the source integrated
/// once along `axis` and twice along the other axis.
pub fn higher_order_normal_derivative(v: &GridFunction, axis: usize) -> Result<GridFunction> {
    require_rank_two(v)?;
    if axis >= 2 {
        return Err(Error::AxisOutOfRange { axis, rank: 2 });
    }
    let other = 1 - axis;
    let once = anchored_integral_axis(v, axis, Anchor::Lower)?;
    double_integral(&once, other)
}

/// Boundary residuals of the higher-order lift on one side of the square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SideResidual {
    /// Axis normal to the side.
    pub axis: usize,
    /// `true` for `x_axis = b_axis`.
    pub upper: bool,
    /// Largest `|w|` on the side.
    pub value: f64,
    /// Largest `|dw/dx_axis|` on the side.
    pub normal: f64,
}

/// Value and normal-derivative residuals of the higher-order lift on all
/// four sides, in the order `x_1 = a_1, x_1 = b_1, x_2 = a_2, x_2 = b_2`.
pub fn higher_order_boundary_residuals(v: &GridFunction) -> Result<Vec<SideResidual>> {
    let w = higher_order_lift(v)?;
    let dims = w.dims();
    let mut sides = Vec::with_capacity(4);
    for axis in 0..2 {
        let dn = higher_order_normal_derivative(v, axis)?;
        for upper in [false, true] {
            let k = if upper { dims[axis] - 1 } else { 0 };
            let mut value: f64 = 0.0;
            let mut normal: f64 = 0.0;
            for m in 0..dims[1 - axis] {
                let mut index = [0usize; 2];
                index[axis] = k;
                index[1 - axis] = m;
                for c in 0..w.components() {
                    value = value.max(w.at(&index, c).abs());
                    normal = normal.max(dn.at(&index, c).abs());
                }
            }
            sides.push(SideResidual {
                axis,
                upper,
                value,
                normal,
            });
        }
    }
    Ok(sides)
}
