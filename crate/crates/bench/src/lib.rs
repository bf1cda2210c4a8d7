//! Fixtures shared by the operator benchmarks.

use varidescent_core::{builtin_problem, BoxDomain, GridFunction, Placement, Problem, UniformGrid};

/// Unit box with `cells` cells per axis.
pub fn unit_grid(rank: usize, cells: usize) -> UniformGrid {
    UniformGrid::new(BoxDomain::unit(rank).expect("valid rank"), vec![cells; rank]).expect("valid cell count")
}

/// A smooth, non-separable cell field with nonzero slab integrals.
pub fn cell_field(grid: &UniformGrid) -> GridFunction {
    GridFunction::from_fn(grid, Placement::cells(grid.rank()), 1, |x, out| {
        let s: f64 = x.iter().enumerate().map(|(i, xi)| (i as f64 + 1.3) * xi).sum();
        out[0] = s.sin() + x.iter().product::<f64>()
    })
    .expect("finite samples")
}

/// The default Poisson problem of the given rank.
pub fn poisson(rank: usize) -> Problem {
    builtin_problem("poisson", &Default::default(), rank).expect("built-in problem")
}
