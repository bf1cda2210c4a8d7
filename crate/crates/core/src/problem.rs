//! Lagrangians, boundary lifts, built-in problems and the discretized
//! functional `F(v) = I(ubar + T v)`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expr::{parse_expression, AnalyticExpr};
use crate::grid::{pairwise_sum, sample_expressions, GridFunction, Placement, UniformGrid, MAX_RANK};
use crate::ops::{Anchor, Lift};

/// Integrand `f(x, u, z)` of the functional `I(u) = int f(x, u, grad u) dx`.
///
/// `u` holds the `d` components; `z` holds the Jacobian with
/// `z[j * n + i] = d u_j / d x_i`. Implementations must be reentrant.
pub trait Lagrangian: Send + Sync {
    fn components(&self) -> usize;

    fn value(&self, x: &[f64], u: &[f64], z: &[f64]) -> f64;

    /// Writes `df/du_j` into `out[j]`.
    fn grad_u(&self, x: &[f64], u: &[f64], z: &[f64], out: &mut [f64]);

    /// Writes `df/dz_{j,i}` into `out[j * n + i]`.
    fn grad_z(&self, x: &[f64], u: &[f64], z: &[f64], out: &mut [f64]);
}

/// `f = |z|^2 / 2`, any number of components.
#[derive(Debug, Clone)]
pub struct Dirichlet {
    pub components: usize,
}

impl Lagrangian for Dirichlet {
    fn components(&self) -> usize {
        self.components
    }

    fn value(&self, _x: &[f64], _u: &[f64], z: &[f64]) -> f64 {
        0.5 * z.iter().map(|t| t * t).sum::<f64>()
    }

    fn grad_u(&self, _x: &[f64], _u: &[f64], _z: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    fn grad_z(&self, _x: &[f64], _u: &[f64], z: &[f64], out: &mut [f64]) {
        out.copy_from_slice(z);
    }
}

/// `f = |z|^2 / 2 - g u`, plus `u^4 / 4` when `quartic` is set.
#[derive(Debug, Clone)]
pub struct Poisson {
    pub load: AnalyticExpr,
    pub quartic: bool,
}

impl Lagrangian for Poisson {
    fn components(&self) -> usize {
        1
    }

    fn value(&self, x: &[f64], u: &[f64], z: &[f64]) -> f64 {
        let quartic = if self.quartic { 0.25 * u[0].powi(4) } else { 0.0 };
        0.5 * z.iter().map(|t| t * t).sum::<f64>() + quartic - self.load.eval(x) * u[0]
    }

    fn grad_u(&self, x: &[f64], u: &[f64], _z: &[f64], out: &mut [f64]) {
        let cubic = if self.quartic { u[0].powi(3) } else { 0.0 };
        out[0] = cubic - self.load.eval(x);
    }

    fn grad_z(&self, _x: &[f64], _u: &[f64], z: &[f64], out: &mut [f64]) {
        out.copy_from_slice(z);
    }
}

/// `f = |z_1|^2 / 2 + |z_2|^2 / 2 + u_1 u_2`.
#[derive(Debug, Clone, Copy)]
pub struct CoupledVector;

impl Lagrangian for CoupledVector {
    fn components(&self) -> usize {
        2
    }

    fn value(&self, _x: &[f64], u: &[f64], z: &[f64]) -> f64 {
        0.5 * z.iter().map(|t| t * t).sum::<f64>() + u[0] * u[1]
    }

    fn grad_u(&self, _x: &[f64], u: &[f64], _z: &[f64], out: &mut [f64]) {
        out[0] = u[1];
        out[1] = u[0];
    }

    fn grad_z(&self, _x: &[f64], _u: &[f64], z: &[f64], out: &mut [f64]) {
        out.copy_from_slice(z);
    }
}

/// `f = g_0 u + sum_i g_i z_i` for a scalar field.
#[derive(Debug, Clone)]
pub struct LinearLagrangian {
    pub value_weight: AnalyticExpr,
    pub gradient_weights: Vec<AnalyticExpr>,
}

impl Lagrangian for LinearLagrangian {
    fn components(&self) -> usize {
        1
    }

    fn value(&self, x: &[f64], u: &[f64], z: &[f64]) -> f64 {
        let mut total = self.value_weight.eval(x) * u[0];
        for (g, zi) in self.gradient_weights.iter().zip(z) {
            total += g.eval(x) * zi;
        }
        total
    }

    fn grad_u(&self, x: &[f64], _u: &[f64], _z: &[f64], out: &mut [f64]) {
        out[0] = self.value_weight.eval(x);
    }

    fn grad_z(&self, x: &[f64], _u: &[f64], _z: &[f64], out: &mut [f64]) {
        for (o, g) in out.iter_mut().zip(&self.gradient_weights) {
            *o = g.eval(x);
        }
    }
}

/// Part of the boundary on which `u` is prescribed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryMode {
    /// Every face.
    AllSides,
    /// Every side except `x_2 = b_2` (two dimensions only).
    ThreeSides2D,
    /// Sides `x_1 = a_1` and `x_2 = a_2` (two dimensions only).
    TwoAdjacent2D,
    /// Sides `x_1 = a_1` and `x_2 = b_2` (two dimensions only).
    AdjacentCorner2D,
}

impl BoundaryMode {
    pub const ALL: [BoundaryMode; 4] = [
        BoundaryMode::AllSides,
        BoundaryMode::ThreeSides2D,
        BoundaryMode::TwoAdjacent2D,
        BoundaryMode::AdjacentCorner2D,
    ];

    /// Config spelling.
    pub fn name(self) -> &'static str {
        match self {
            BoundaryMode::AllSides => "all_sides",
            BoundaryMode::ThreeSides2D => "three_sides",
            BoundaryMode::TwoAdjacent2D => "two_adjacent",
            BoundaryMode::AdjacentCorner2D => "adjacent_corner",
        }
    }

    pub fn check_rank(self, rank: usize) -> Result<()> {
        if self != BoundaryMode::AllSides && rank != 2 {
            return Err(Error::UnsupportedMode {
                mode: self.name(),
                reason: format!("needs rank 2, got {rank}"),
            });
        }
        Ok(())
    }

    /// The lift whose range vanishes on this mode's boundary set.
    pub fn lift(self, rank: usize) -> Lift {
        match self {
            BoundaryMode::AdjacentCorner2D => Lift::new(vec![Anchor::Lower, Anchor::Upper], -1.0),
            _ => Lift::standard(rank),
        }
    }

    /// Whether the node with multi-index `index` lies on the prescribed
    /// boundary set, given the cell counts of the grid.
    pub fn on_boundary(self, index: &[usize], cells: &[usize]) -> bool {
        let low = |i: usize| index[i] == 0;
        let high = |i: usize| index[i] == cells[i];
        match self {
            BoundaryMode::AllSides => (0..index.len()).any(|i| low(i) || high(i)),
            BoundaryMode::ThreeSides2D => low(0) || high(0) || low(1),
            BoundaryMode::TwoAdjacent2D => low(0) || low(1),
            BoundaryMode::AdjacentCorner2D => low(0) || high(1),
        }
    }
}

impl fmt::Display for BoundaryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BoundaryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BoundaryMode::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            let names: Vec<_> = BoundaryMode::ALL.iter().map(|m| m.name()).collect();
            Error::InvalidProblem(format!(
                "unknown boundary mode `{s}`, expected one of {}",
                names.join(", ")
            ))
        })
    }
}

/// A variational problem: Lagrangian, boundary lift, optional exact
/// solution and the boundary mode.
#[derive(Clone)]
pub struct Problem {
    rank: usize,
    lagrangian: Arc<dyn Lagrangian>,
    lift: Vec<AnalyticExpr>,
    lift_gradient: Vec<AnalyticExpr>,
    exact_solution: Option<Vec<AnalyticExpr>>,
    boundary_mode: BoundaryMode,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("rank", &self.rank)
            .field("components", &self.components())
            .field("lift", &self.lift)
            .field("exact_solution", &self.exact_solution)
            .field("boundary_mode", &self.boundary_mode)
            .finish_non_exhaustive()
    }
}

impl Problem {
    /// A problem with zero lift and all sides prescribed.
    pub fn new(rank: usize, lagrangian: Arc<dyn Lagrangian>) -> Result<Self> {
        if rank == 0 || rank > MAX_RANK {
            return Err(Error::InvalidProblem(format!(
                "rank must be in 1..={MAX_RANK}, got {rank}"
            )));
        }
        let d = lagrangian.components();
        if d == 0 {
            return Err(Error::InvalidProblem(
                "a Lagrangian needs at least one component".into(),
            ));
        }
        Ok(Self {
            rank,
            lagrangian,
            lift: vec![AnalyticExpr::constant(0.0); d],
            lift_gradient: vec![AnalyticExpr::constant(0.0); d * rank],
            exact_solution: None,
            boundary_mode: BoundaryMode::AllSides,
        })
    }

    /// Replaces `ubar`. `gradient[j * n + i]` is `d ubar_j / d x_i`. Any
    /// exact solution attached earlier is dropped.
    pub fn with_lift(mut self, values: Vec<AnalyticExpr>, gradient: Vec<AnalyticExpr>) -> Result<Self> {
        let d = self.components();
        if values.len() != d {
            return Err(Error::ComponentMismatch {
                expected: d,
                found: values.len(),
            });
        }
        if gradient.len() != d * self.rank {
            return Err(Error::LengthMismatch {
                expected: d * self.rank,
                found: gradient.len(),
            });
        }
        for e in values.iter().chain(&gradient) {
            e.check_rank(self.rank)?;
        }
        self.lift = values;
        self.lift_gradient = gradient;
        self.exact_solution = None;
        Ok(self)
    }

    pub fn with_exact_solution(mut self, exact: Vec<AnalyticExpr>) -> Result<Self> {
        if exact.len() != self.components() {
            return Err(Error::ComponentMismatch {
                expected: self.components(),
                found: exact.len(),
            });
        }
        for e in &exact {
            e.check_rank(self.rank)?;
        }
        self.exact_solution = Some(exact);
        Ok(self)
    }

    pub fn with_boundary_mode(mut self, mode: BoundaryMode) -> Result<Self> {
        mode.check_rank(self.rank)?;
        self.boundary_mode = mode;
        Ok(self)
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn components(&self) -> usize {
        self.lagrangian.components()
    }

    pub fn lagrangian(&self) -> &dyn Lagrangian {
        self.lagrangian.as_ref()
    }

    pub fn lift(&self) -> &[AnalyticExpr] {
        &self.lift
    }

    pub fn lift_gradient(&self) -> &[AnalyticExpr] {
        &self.lift_gradient
    }

    pub fn exact_solution(&self) -> Option<&[AnalyticExpr]> {
        self.exact_solution.as_deref()
    }

    pub fn boundary_mode(&self) -> BoundaryMode {
        self.boundary_mode
    }

    /// Same lift and mode, different Lagrangian. The exact solution is
    /// dropped.
    pub fn with_lagrangian(&self, lagrangian: Arc<dyn Lagrangian>) -> Result<Self> {
        if lagrangian.components() != self.components() {
            return Err(Error::ComponentMismatch {
                expected: self.components(),
                found: lagrangian.components(),
            });
        }
        Ok(Self {
            lagrangian,
            exact_solution: None,
            ..self.clone()
        })
    }
}

/// Names and one-line descriptions of the built-in problems.
pub const BUILTIN_PROBLEMS: [(&str, &str); 4] = [
    ("dirichlet", "f = |z|^2/2; minimizer with zero lift is u = 0"),
    (
        "poisson",
        "f = |z|^2/2 - g u; default g manufactured from u = prod sin(pi x_i)",
    ),
    (
        "nonlinear_poisson",
        "f = |z|^2/2 + u^4/4 - g u; default g manufactured from u = prod sin(pi x_i)",
    ),
    (
        "coupled_vector",
        "d = 2, f = |z_1|^2/2 + |z_2|^2/2 + u_1 u_2; minimizer with zero lift is 0",
    ),
];

fn sine_product(rank: usize) -> String {
    (1..=rank)
        .map(|i| format!("sin(pi*x{i})"))
        .collect::<Vec<_>>()
        .join("*")
}

/// Builds one of [`BUILTIN_PROBLEMS`]. The only parameter is `g`, the load
/// expression of the Poisson variants. With the default load the attached
/// exact solution is `prod sin(pi x_i)`, exact on the unit box.
pub fn builtin_problem(name: &str, params: &BTreeMap<String, String>, rank: usize) -> Result<Problem> {
    let allowed: &[&str] = match name {
        "poisson" | "nonlinear_poisson" => &["g"],
        "dirichlet" | "coupled_vector" => &[],
        _ => return Err(Error::UnknownProblem(name.to_string())),
    };
    if let Some(key) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(Error::InvalidParameter {
            name: key.clone(),
            message: format!("problem `{name}` does not take this parameter"),
        });
    }
    let zero = || AnalyticExpr::constant(0.0);
    match name {
        "dirichlet" => Problem::new(rank, Arc::new(Dirichlet { components: 1 }))?.with_exact_solution(vec![zero()]),
        "coupled_vector" => Problem::new(rank, Arc::new(CoupledVector))?.with_exact_solution(vec![zero(), zero()]),
        _ => {
            let quartic = name == "nonlinear_poisson";
            let s = sine_product(rank);
            let (load, exact) = match params.get("g") {
                Some(source) => {
                    let load = parse_expression(source, rank).map_err(|e| Error::InvalidParameter {
                        name: "g".into(),
                        message: e.to_string(),
                    })?;
                    (load, None)
                }
                None => {
                    let mut source = format!("{rank}*pi^2*{s}");
                    if quartic {
                        source.push_str(&format!("+({s})^3"));
                    }
                    let exact = parse_expression(&s, rank)?;
                    (parse_expression(&source, rank)?, Some(exact))
                }
            };
            let problem = Problem::new(rank, Arc::new(Poisson { load, quartic }))?;
            match exact {
                Some(e) => problem.with_exact_solution(vec![e]),
                None => Ok(problem),
            }
        }
    }
}

/// Lifted state at every cell center: `u = ubar + lift(v)` and its Jacobian.
#[derive(Debug, Clone)]
pub struct CellStates {
    /// `d` components.
    pub u: GridFunction,
    /// One entry per axis `i`, each with `d` components holding `d u_j / d x_i`.
    pub z: Vec<GridFunction>,
}

/// A problem bound to a grid: the sampled lift and the mode's lift operator.
#[derive(Debug, Clone)]
pub struct Discretization {
    problem: Problem,
    grid: UniformGrid,
    lift: Lift,
    coordinates: Vec<f64>,
    lift_cells: GridFunction,
    lift_nodes: GridFunction,
    lift_gradient: Vec<GridFunction>,
}

impl Discretization {
    pub fn new(problem: &Problem, grid: &UniformGrid) -> Result<Self> {
        if grid.rank() != problem.rank() {
            return Err(Error::RankMismatch {
                expected: problem.rank(),
                found: grid.rank(),
            });
        }
        let n = grid.rank();
        let d = problem.components();
        let cells = Placement::cells(n);
        let lift_cells = sample_expressions(problem.lift(), grid, cells.clone())?;
        let lift_nodes = sample_expressions(problem.lift(), grid, Placement::nodes(n))?;
        let lift_gradient = (0..n)
            .map(|i| {
                let exprs: Vec<AnalyticExpr> = (0..d).map(|j| problem.lift_gradient()[j * n + i].clone()).collect();
                sample_expressions(&exprs, grid, cells.clone())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            problem: problem.clone(),
            grid: grid.clone(),
            lift: problem.boundary_mode().lift(n),
            coordinates: grid.coordinates(&cells),
            lift_cells,
            lift_nodes,
            lift_gradient,
        })
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn lift(&self) -> &Lift {
        &self.lift
    }

    /// `ubar` sampled on the node grid.
    pub fn lift_nodes(&self) -> &GridFunction {
        &self.lift_nodes
    }

    fn check_field(&self, v: &GridFunction) -> Result<()> {
        if v.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        v.require_cells("descent variable")?;
        if v.components() != self.problem.components() {
            return Err(Error::ComponentMismatch {
                expected: self.problem.components(),
                found: v.components(),
            });
        }
        Ok(())
    }

    pub fn states(&self, v: &GridFunction) -> Result<CellStates> {
        self.check_field(v)?;
        let mut u = self.lift.values_at_cells(v)?;
        u.axpy(1.0, &self.lift_cells)?;
        let z = (0..self.grid.rank())
            .map(|i| {
                let mut zi = self.lift.gradient_at_cells(v, i)?;
                zi.axpy(1.0, &self.lift_gradient[i])?;
                Ok(zi)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CellStates { u, z })
    }

    /// Evaluates `f(c, x, u, z)` at every cell in parallel, in cell order.
    pub(crate) fn per_cell<T, F>(&self, states: &CellStates, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&[f64], &[f64], &[f64]) -> T + Sync,
    {
        let n = self.grid.rank();
        let d = self.problem.components();
        (0..self.grid.cell_count())
            .into_par_iter()
            .map_init(
                || (vec![0.0; d], vec![0.0; d * n]),
                |(u, z), c| {
                    for j in 0..d {
                        u[j] = states.u.component(j)[c];
                        for i in 0..n {
                            z[j * n + i] = states.z[i].component(j)[c];
                        }
                    }
                    f(&self.coordinates[c * n..(c + 1) * n], u, z)
                },
            )
            .collect()
    }

    /// `F(v) = sum_c f(x_c, u_c, z_c) * cell volume`.
    pub fn functional(&self, v: &GridFunction) -> Result<f64> {
        let states = self.states(v)?;
        let lagrangian = self.problem.lagrangian();
        let values = self.per_cell(&states, |x, u, z| lagrangian.value(x, u, z));
        if let Some(index) = values.iter().position(|f| !f.is_finite()) {
            return Err(Error::NonFinite {
                what: "Lagrangian value",
                index,
            });
        }
        Ok(pairwise_sum(&values) * self.grid.cell_volume())
    }

    /// `df/du` (d components) and `df/dz_i` (one field per axis, d
    /// components each) at every cell center.
    pub fn derivatives(&self, v: &GridFunction) -> Result<(GridFunction, Vec<GridFunction>)> {
        let states = self.states(v)?;
        let n = self.grid.rank();
        let d = self.problem.components();
        let lagrangian = self.problem.lagrangian();
        let rows = self.per_cell(&states, |x, u, z| {
            let mut row = vec![0.0; d + d * n];
            let (gu, gz) = row.split_at_mut(d);
            lagrangian.grad_u(x, u, z, gu);
            lagrangian.grad_z(x, u, z, gz);
            row
        });
        let count = self.grid.cell_count();
        for (c, row) in rows.iter().enumerate() {
            if let Some(k) = row.iter().position(|t| !t.is_finite()) {
                return Err(Error::NonFinite {
                    what: if k < d {
                        "Lagrangian u-derivative"
                    } else {
                        "Lagrangian z-derivative"
                    },
                    index: c,
                });
            }
        }
        let cells = Placement::cells(n);
        let mut fu = vec![0.0; d * count];
        let mut fz = vec![vec![0.0; d * count]; n];
        for (c, row) in rows.iter().enumerate() {
            for j in 0..d {
                fu[j * count + c] = row[j];
                for (i, plane) in fz.iter_mut().enumerate() {
                    plane[j * count + c] = row[d + j * n + i];
                }
            }
        }
        let fu = GridFunction::from_raw(&self.grid, cells.clone(), d, fu);
        let fz = fz
            .into_iter()
            .map(|data| GridFunction::from_raw(&self.grid, cells.clone(), d, data))
            .collect();
        Ok((fu, fz))
    }

    /// `ubar + lift(v)` on the node grid.
    pub fn solution_nodes(&self, v: &GridFunction) -> Result<GridFunction> {
        self.check_field(v)?;
        let mut u = self.lift.apply(v)?;
        u.axpy(1.0, &self.lift_nodes)?;
        Ok(u)
    }
}

/// `F(v) = I(ubar + T v)` on the grid carried by `v`.
pub fn evaluate_functional(problem: &Problem, v: &GridFunction) -> Result<f64> {
    Discretization::new(problem, v.grid())?.functional(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{inner_product_l2, BoxDomain};
    use crate::ops::{mixed_derivative, project_l0};
    use crate::oracles::refined_quadrature;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn unit(cells: &[usize]) -> UniformGrid {
        UniformGrid::new(BoxDomain::unit(cells.len()).unwrap(), cells.to_vec()).unwrap()
    }

    fn no_params() -> BTreeMap<String, String> {
        BTreeMap::new()
    }

    struct Constant;

    impl Lagrangian for Constant {
        fn components(&self) -> usize {
            1
        }
        fn value(&self, _: &[f64], _: &[f64], _: &[f64]) -> f64 {
            1.0
        }
        fn grad_u(&self, _: &[f64], _: &[f64], _: &[f64], out: &mut [f64]) {
            out.fill(0.0);
        }
        fn grad_z(&self, _: &[f64], _: &[f64], _: &[f64], out: &mut [f64]) {
            out.fill(0.0);
        }
    }

    #[test]
    fn functional_examples() {
        let g = unit(&[8, 8]);
        let zero = GridFunction::zeros(&g, Placement::cells(2), 1);
        let dirichlet = builtin_problem("dirichlet", &no_params(), 2).unwrap();
        assert_eq!(evaluate_functional(&dirichlet, &zero).unwrap(), 0.0);
        let constant = Problem::new(2, Arc::new(Constant)).unwrap();
        assert!((evaluate_functional(&constant, &zero).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn poisson_functional_at_exact_solution_matches_refined_quadrature() {
        let poisson = builtin_problem("poisson", &no_params(), 2).unwrap();
        let g = unit(&[64, 64]);
        let exact = &poisson.exact_solution().unwrap()[0];
        let u = crate::grid::sample_expression(exact, &g, Placement::nodes(2)).unwrap();
        let v = mixed_derivative(&u).unwrap();
        let value = evaluate_functional(&poisson, &v).unwrap();
        // I(s) = int |grad s|^2 / 2 - 2 pi^2 s^2 = -pi^2 / 4
        let reference = refined_quadrature(g.domain(), 512, |x| {
            let (s1, c1) = (PI * x[0]).sin_cos();
            let (s2, c2) = (PI * x[1]).sin_cos();
            let grad2 = PI * PI * (c1 * c1 * s2 * s2 + s1 * s1 * c2 * c2);
            0.5 * grad2 - 2.0 * PI * PI * (s1 * s2).powi(2)
        })
        .unwrap();
        assert!((reference + PI * PI / 4.0).abs() < 1e-5);
        assert!((value - reference).abs() <= 1e-3, "{value} vs {reference}");
    }

    #[test]
    fn builtin_catalogue() {
        for (name, _) in BUILTIN_PROBLEMS {
            for rank in 1..=3 {
                let p = builtin_problem(name, &no_params(), rank).unwrap();
                assert_eq!(p.rank(), rank);
                assert!(p.exact_solution().is_some());
            }
        }
        assert_eq!(
            builtin_problem("heat", &no_params(), 2).unwrap_err(),
            Error::UnknownProblem("heat".into())
        );
        let mut params = no_params();
        params.insert("g".into(), "x1+".into());
        assert!(matches!(
            builtin_problem("poisson", &params, 2),
            Err(Error::InvalidParameter { .. })
        ));
        params.insert("g".into(), "1".into());
        let p = builtin_problem("poisson", &params, 2).unwrap();
        assert!(p.exact_solution().is_none());
        assert!(matches!(
            builtin_problem("dirichlet", &params, 2),
            Err(Error::InvalidParameter { .. })
        ));
        assert_eq!(
            builtin_problem("coupled_vector", &no_params(), 2).unwrap().components(),
            2
        );
    }

    /// `-Laplace(s) + s^3 = g` for the manufactured nonlinear load, checked
    /// with second differences.
    #[test]
    fn manufactured_loads_satisfy_euler_lagrange() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for name in ["poisson", "nonlinear_poisson"] {
            let p = builtin_problem(name, &no_params(), 2).unwrap();
            let exact = &p.exact_solution().unwrap()[0];
            for _ in 0..10 {
                let x = [rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95)];
                let e = 1e-4;
                let mut lap = -4.0 * exact.eval(&x);
                for (dx, dy) in [(e, 0.0), (-e, 0.0), (0.0, e), (0.0, -e)] {
                    lap += exact.eval(&[x[0] + dx, x[1] + dy]);
                }
                lap /= e * e;
                let s = exact.eval(&x);
                let mut fu = [0.0];
                p.lagrangian().grad_u(&x, &[s], &[0.0, 0.0], &mut fu);
                // df/du - div(df/dz) = (s^3 - g) - lap(s) should vanish
                assert!(
                    (fu[0] - lap).abs() < 1e-5 * (1.0 + lap.abs()),
                    "{name}: {} {}",
                    fu[0],
                    lap
                );
            }
        }
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let step = 1e-5;
        let mut lagrangians: Vec<(String, Problem)> = BUILTIN_PROBLEMS
            .iter()
            .map(|(name, _)| (name.to_string(), builtin_problem(name, &no_params(), 2).unwrap()))
            .collect();
        let linear = LinearLagrangian {
            value_weight: parse_expression("1+x1", 2).unwrap(),
            gradient_weights: vec![parse_expression("x2", 2).unwrap(), parse_expression("-1", 2).unwrap()],
        };
        lagrangians.push(("linear".into(), Problem::new(2, Arc::new(linear)).unwrap()));
        for (name, p) in lagrangians {
            let f = p.lagrangian();
            let d = p.components();
            for _ in 0..20 {
                let x: Vec<f64> = (0..2).map(|_| rng.gen_range(0.0..1.0)).collect();
                let u: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let z: Vec<f64> = (0..2 * d).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let mut gu = vec![0.0; d];
                let mut gz = vec![0.0; 2 * d];
                f.grad_u(&x, &u, &z, &mut gu);
                f.grad_z(&x, &u, &z, &mut gz);
                let close = |analytic: f64, fd: f64| (analytic - fd).abs() <= 1e-6 * analytic.abs().max(1.0);
                for j in 0..d {
                    let (mut up, mut dn) = (u.clone(), u.clone());
                    up[j] += step;
                    dn[j] -= step;
                    let fd = (f.value(&x, &up, &z) - f.value(&x, &dn, &z)) / (2.0 * step);
                    assert!(close(gu[j], fd), "{name} du{j}: {} vs {fd}", gu[j]);
                }
                for k in 0..2 * d {
                    let (mut up, mut dn) = (z.clone(), z.clone());
                    up[k] += step;
                    dn[k] -= step;
                    let fd = (f.value(&x, &u, &up) - f.value(&x, &u, &dn)) / (2.0 * step);
                    assert!(close(gz[k], fd), "{name} dz{k}: {} vs {fd}", gz[k]);
                }
            }
        }
    }

    #[test]
    fn functional_is_invariant_under_axis_swap() {
        let p = builtin_problem("nonlinear_poisson", &no_params(), 2).unwrap();
        let g = unit(&[12, 12]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<f64> = (0..144).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v = project_l0(&GridFunction::from_data(&g, Placement::cells(2), 1, data.clone()).unwrap()).unwrap();
        let swapped: Vec<f64> = (0..144).map(|k| v.data()[(k % 12) * 12 + k / 12]).collect();
        let w = GridFunction::from_data(&g, Placement::cells(2), 1, swapped).unwrap();
        let a = evaluate_functional(&p, &v).unwrap();
        let b = evaluate_functional(&p, &w).unwrap();
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{a} {b}");
    }

    #[test]
    fn lift_changes_boundary_values() {
        let g = unit(&[4, 4]);
        let lift = vec![parse_expression("x1+2*x2", 2).unwrap()];
        let grad = vec![parse_expression("1", 2).unwrap(), parse_expression("2", 2).unwrap()];
        let p = builtin_problem("dirichlet", &no_params(), 2)
            .unwrap()
            .with_lift(lift, grad)
            .unwrap();
        assert!(p.exact_solution().is_none());
        let disc = Discretization::new(&p, &g).unwrap();
        let zero = GridFunction::zeros(&g, Placement::cells(2), 1);
        let u = disc.solution_nodes(&zero).unwrap();
        assert_eq!(u.at(&[4, 4], 0), 3.0);
        // |grad ubar|^2 / 2 = 5 / 2 over the unit square
        assert!((disc.functional(&zero).unwrap() - 2.5).abs() < 1e-14);
        let one = GridFunction::constant(&g, Placement::cells(2), 1, 1.0);
        assert!(inner_product_l2(&one, &one).unwrap() > 0.0);
    }

    #[test]
    fn rejects_bad_shapes() {
        let p = builtin_problem("poisson", &no_params(), 2).unwrap();
        assert!(matches!(
            p.clone().with_lift(vec![], vec![]),
            Err(Error::ComponentMismatch { .. })
        ));
        assert!(p.clone().with_boundary_mode(BoundaryMode::ThreeSides2D).is_ok());
        let p3 = builtin_problem("poisson", &no_params(), 3).unwrap();
        assert!(matches!(
            p3.with_boundary_mode(BoundaryMode::TwoAdjacent2D),
            Err(Error::UnsupportedMode { .. })
        ));
        let g = unit(&[4, 4, 4]);
        assert!(matches!(Discretization::new(&p, &g), Err(Error::RankMismatch { .. })));
        let g2 = unit(&[4, 4]);
        let wrong = GridFunction::zeros(&g2, Placement::cells(2), 2);
        assert!(matches!(
            evaluate_functional(&p, &wrong),
            Err(Error::ComponentMismatch { .. })
        ));
        assert_eq!(
            "three_sides".parse::<BoundaryMode>().unwrap(),
            BoundaryMode::ThreeSides2D
        );
        assert!("sideways".parse::<BoundaryMode>().is_err());
    }

    #[test]
    fn non_finite_values_report_the_cell() {
        let g = unit(&[4, 4]);
        let mut params = no_params();
        params.insert("g".into(), "log(x1-0.5)".into());
        let p = builtin_problem("poisson", &params, 2).unwrap();
        let v = GridFunction::zeros(&g, Placement::cells(2), 1);
        assert!(matches!(
            evaluate_functional(&p, &v),
            Err(Error::NonFinite { index: 0, .. })
        ));
    }
}
