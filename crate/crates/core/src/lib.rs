//! Steepest descent for multidimensional variational problems on boxes.
//!
//! The unknown is written as `u = ubar + T v`, where `T` integrates once
//! along every axis and `v` ranges over the fields whose line integrals
//! along each axis vanish. In that variable the boundary conditions become
//! linear constraints with a closed-form orthogonal projector, and the
//! steepest-descent direction is the projected kernel of the Gateaux
//! derivative.

pub mod descent;
pub mod error;
pub mod expr;
pub mod grid;
pub mod ops;
pub mod optimizer;
pub mod oracles;
pub mod problem;

pub use descent::{
    boundary_mode_gradient, compute_g, compute_q, directional_derivative, euler_lagrange_residual, higher_order_lift,
    isoperimetric_direction, steepest_direction, GradientBundle, IsoperimetricConstraint,
};
pub use error::{Error, Result};
pub use expr::{parse_expression, AnalyticExpr};
pub use grid::{
    inner_product_l2, sample_expression, BoxDomain, GridFunction, MultiIndex, Placement, Stagger, UniformGrid,
};
pub use ops::{
    certify_l0, cumulative_integral_axis, full_lift, lifted_gradient, m0_norm, mixed_derivative, project_l0,
    reversed_cumulative_axis, slab_integral, L0Certificate,
};
pub use optimizer::{
    minimize, minimize_with, DescentReport, DescentRule, IterationRecord, IterationView, OptimizeError,
    OptimizerConfig, Termination,
};
pub use problem::{builtin_problem, evaluate_functional, BoundaryMode, Discretization, Lagrangian, Problem};
