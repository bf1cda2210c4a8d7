//! Brute-force references: finite differences, a dense least-squares
//! projector, error norms, convergence orders and refined quadrature.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::expr::AnalyticExpr;
use crate::grid::{pairwise_sum, sample_expressions, BoxDomain, GridFunction, Placement, UniformGrid};
use crate::ops::certify_l0;
use crate::problem::{Discretization, Problem};

/// Largest cell count per axis accepted by [`projection_oracle`].
pub const ORACLE_MAX_CELLS_PER_AXIS: usize = 33;

/// Node errors of a discrete solution against an analytic one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorSummary {
    pub l2_error: f64,
    pub max_error: f64,
    /// Largest grid spacing.
    pub h: f64,
}

/// Centered difference `(F(v + eps h) - F(v - eps h)) / (2 eps)`.
pub fn fd_directional_derivative(problem: &Problem, v: &GridFunction, h: &GridFunction, eps: f64) -> Result<f64> {
    fd_directional_derivative_on(&Discretization::new(problem, v.grid())?, v, h, eps)
}

/// [`fd_directional_derivative`] on an existing discretization.
pub fn fd_directional_derivative_on(
    disc: &Discretization,
    v: &GridFunction,
    h: &GridFunction,
    eps: f64,
) -> Result<f64> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "eps".into(),
            message: format!("must be positive, got {eps}"),
        });
    }
    v.check_compatible(h)?;
    let plus = disc.functional(&v.plus_scaled(eps, h)?)?;
    let minus = disc.functional(&v.plus_scaled(-eps, h)?)?;
    Ok((plus - minus) / (2.0 * eps))
}

/// Minimizes `||w - v||` subject to every axis slab integral of `w`
/// vanishing, by a dense pseudo-inverse solve of the normal equations.
/// The constraint rows are redundant (every axis sums to the same total),
/// so eigenvalues below `1e-10` of the largest are discarded.
pub fn projection_oracle(v: &GridFunction) -> Result<GridFunction> {
    v.require_cells("projection oracle input")?;
    let grid = v.grid();
    let cells = grid.cells();
    if let Some(&big) = cells.iter().find(|&&c| c > ORACLE_MAX_CELLS_PER_AXIS) {
        return Err(Error::InvalidParameter {
            name: "cells".into(),
            message: format!("oracle grids are capped at {ORACLE_MAX_CELLS_PER_AXIS} cells per axis, got {big}"),
        });
    }
    let rank = grid.rank();
    let h = grid.spacing();
    let count = grid.cell_count();

    // Row of the constraint for the line through cell `c` along axis `i`.
    let mut offsets = vec![0usize; rank + 1];
    for i in 0..rank {
        offsets[i + 1] = offsets[i] + count / cells[i];
    }
    let rows_of = |c: usize| -> Vec<usize> {
        let mut index = Vec::with_capacity(rank);
        let mut rest = c;
        for &n in cells {
            index.push(rest % n);
            rest /= n;
        }
        (0..rank)
            .map(|i| {
                let mut line = 0;
                for k in (0..rank).rev().filter(|&k| k != i) {
                    line = line * cells[k] + index[k];
                }
                offsets[i] + line
            })
            .collect()
    };
    let rows: Vec<Vec<usize>> = (0..count).map(rows_of).collect();

    let m = offsets[rank];
    let mut normal = DMatrix::<f64>::zeros(m, m);
    for r in &rows {
        for i in 0..rank {
            for k in 0..rank {
                normal[(r[i], r[k])] += h[i] * h[k];
            }
        }
    }
    let eigen = SymmetricEigen::new(normal);
    let largest = eigen.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
    if largest <= 0.0 {
        return Err(Error::SingularSystem);
    }
    let cutoff = 1e-10 * largest;

    let mut out = Vec::with_capacity(v.data().len());
    for comp in 0..v.components() {
        let plane = v.component(comp);
        let mut rhs = DVector::<f64>::zeros(m);
        for (c, r) in rows.iter().enumerate() {
            for i in 0..rank {
                rhs[r[i]] += h[i] * plane[c];
            }
        }
        let coeffs = eigen.eigenvectors.transpose() * &rhs;
        let mut scaled = DVector::<f64>::zeros(m);
        for (k, &lambda) in eigen.eigenvalues.iter().enumerate() {
            if lambda > cutoff {
                scaled[k] = coeffs[k] / lambda;
            }
        }
        let y = &eigen.eigenvectors * scaled;
        for (c, r) in rows.iter().enumerate() {
            let correction: f64 = (0..rank).map(|i| h[i] * y[r[i]]).sum();
            out.push(plane[c] - correction);
        }
    }
    let w = GridFunction::from_data(grid, v.placement().clone(), v.components(), out)?;
    let scale = v.max_abs().max(1.0) * grid.domain().volume().max(1.0);
    if !certify_l0(&w, 1e-9 * scale)?.passes() {
        return Err(Error::SingularSystem);
    }
    Ok(w)
}

/// Trapezoid-weighted L2 and max-norm node errors against `exact`.
pub fn error_vs_exact(u: &GridFunction, exact: &[AnalyticExpr]) -> Result<ErrorSummary> {
    u.require_nodes("discrete solution")?;
    let reference = sample_expressions(exact, u.grid(), u.placement().clone())?;
    let diff = u.sub(&reference)?;
    Ok(ErrorSummary {
        l2_error: diff.norm_l2(),
        max_error: diff.max_abs(),
        h: u.grid().spacing().iter().fold(0.0, |a, &b| a.max(b)),
    })
}

/// Least-squares slope of `log(error)` against `log(h)`.
pub fn convergence_order(levels: &[(f64, f64)]) -> Result<f64> {
    if levels.len() < 3 {
        return Err(Error::InsufficientLevels {
            needed: 3,
            found: levels.len(),
        });
    }
    if let Some(&(h, e)) = levels.iter().find(|(h, e)| !(*h > 0.0 && *e > 0.0)) {
        return Err(Error::InvalidParameter {
            name: "levels".into(),
            message: format!("spacing and error must be positive, got ({h}, {e})"),
        });
    }
    let points: Vec<(f64, f64)> = levels.iter().map(|&(h, e)| (h.ln(), e.ln())).collect();
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter {
            name: "levels".into(),
            message: "all levels share one spacing".into(),
        });
    }
    Ok(sxy / sxx)
}

/// Midpoint rule for `int_domain f` with `per_axis` cells along every axis.
pub fn refined_quadrature(domain: &BoxDomain, per_axis: usize, f: impl Fn(&[f64]) -> f64) -> Result<f64> {
    let grid = UniformGrid::new(domain.clone(), vec![per_axis; domain.rank()])?;
    let rank = domain.rank();
    let values: Vec<f64> = grid
        .coordinates(&Placement::cells(rank))
        .chunks_exact(rank)
        .map(&f)
        .collect();
    Ok(pairwise_sum(&values) * grid.cell_volume())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expression;
    use crate::grid::inner_product_l2;
    use crate::ops::project_l0;
    use crate::problem::{builtin_problem, Lagrangian};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;
    use std::sync::Arc;

    fn random_cells(rng: &mut ChaCha8Rng, g: &UniformGrid) -> GridFunction {
        let data = (0..g.cell_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        GridFunction::from_data(g, Placement::cells(g.rank()), 1, data).unwrap()
    }

    fn unit(cells: &[usize]) -> UniformGrid {
        UniformGrid::new(BoxDomain::unit(cells.len()).unwrap(), cells.to_vec()).unwrap()
    }

    struct Affine;

    impl Lagrangian for Affine {
        fn components(&self) -> usize {
            1
        }
        fn value(&self, _: &[f64], u: &[f64], _: &[f64]) -> f64 {
            u[0]
        }
        fn grad_u(&self, _: &[f64], _: &[f64], _: &[f64], out: &mut [f64]) {
            out[0] = 1.0;
        }
        fn grad_z(&self, _: &[f64], _: &[f64], _: &[f64], out: &mut [f64]) {
            out.fill(0.0);
        }
    }

    #[test]
    fn finite_difference_examples() {
        let g = unit(&[8, 8]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let poisson = builtin_problem("poisson", &BTreeMap::new(), 2).unwrap();
        let v = project_l0(&random_cells(&mut rng, &g)).unwrap();
        let zero = GridFunction::zeros(&g, Placement::cells(2), 1);
        assert_eq!(fd_directional_derivative(&poisson, &v, &zero, 1e-5).unwrap(), 0.0);

        let affine = Problem::new(2, Arc::new(Affine)).unwrap();
        let h = project_l0(&random_cells(&mut rng, &g)).unwrap();
        let a = fd_directional_derivative(&affine, &v, &h, 1e-2).unwrap();
        let b = fd_directional_derivative(&affine, &v, &h, 1e-4).unwrap();
        assert!((a - b).abs() <= 1e-12);
        let minus = fd_directional_derivative(&affine, &v, &h.scaled(-1.0), 1e-2).unwrap();
        assert!((a + minus).abs() <= 1e-12);

        assert!(fd_directional_derivative(&poisson, &v, &h, 0.0).is_err());
    }

    #[test]
    fn projection_oracle_examples() {
        let g = unit(&[9, 9]);
        let one = GridFunction::constant(&g, Placement::cells(2), 1, 1.0);
        assert!(projection_oracle(&one).unwrap().max_abs() <= 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let feasible = project_l0(&random_cells(&mut rng, &g)).unwrap();
        assert!(projection_oracle(&feasible).unwrap().sub(&feasible).unwrap().max_abs() <= 1e-12);
        let v = random_cells(&mut rng, &g);
        let w = projection_oracle(&v).unwrap();
        assert!(w.sub(&project_l0(&v).unwrap()).unwrap().max_abs() <= 1e-10);
        assert!(matches!(
            projection_oracle(&GridFunction::zeros(&unit(&[34]), Placement::cells(1), 1)),
            Err(Error::InvalidParameter { .. })
        ));
    }

    #[test]
    fn projection_oracle_residual_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for cells in [vec![5], vec![4, 7], vec![3, 4, 5]] {
            let rank = cells.len();
            let lower: Vec<f64> = (0..rank).map(|_| rng.gen_range(-1.0..0.0)).collect();
            let upper: Vec<f64> = lower.iter().map(|a| a + rng.gen_range(0.5..2.0)).collect();
            let g = UniformGrid::new(BoxDomain::new(lower, upper).unwrap(), cells).unwrap();
            let v = random_cells(&mut rng, &g);
            let w = projection_oracle(&v).unwrap();
            assert!(certify_l0(&w, 1e-11).unwrap().passes());
            let r = v.sub(&w).unwrap();
            let norm2 = inner_product_l2(&v, &v).unwrap();
            assert!(inner_product_l2(&r, &w).unwrap().abs() <= 1e-10 * norm2);
        }
    }

    #[test]
    fn error_examples() {
        let g = unit(&[8, 8]);
        let exact = vec![parse_expression("sin(pi*x1)*x2", 2).unwrap()];
        let u = sample_expressions(&exact, &g, Placement::nodes(2)).unwrap();
        let e = error_vs_exact(&u, &exact).unwrap();
        assert!(e.l2_error <= 1e-14 && e.max_error <= 1e-14);
        assert_eq!(e.h, 0.125);
        let shifted = u
            .plus_scaled(0.1, &GridFunction::constant(&g, Placement::nodes(2), 1, 1.0))
            .unwrap();
        let e = error_vs_exact(&shifted, &exact).unwrap();
        assert!((e.max_error - 0.1).abs() < 1e-15);
        assert!((e.l2_error - 0.1).abs() < 1e-14);
    }

    #[test]
    fn order_examples() {
        let quadratic: Vec<(f64, f64)> = [0.1, 0.05, 0.025].iter().map(|&h| (h, 3.0 * h * h)).collect();
        assert!((convergence_order(&quadratic).unwrap() - 2.0).abs() <= 1e-12);
        let flat: Vec<(f64, f64)> = [0.1, 0.05, 0.025].iter().map(|&h| (h, 0.7)).collect();
        assert!(convergence_order(&flat).unwrap().abs() <= 1e-12);
        assert_eq!(
            convergence_order(&quadratic[..2]),
            Err(Error::InsufficientLevels { needed: 3, found: 2 })
        );
    }

    #[test]
    fn quadrature_examples() {
        let domain = BoxDomain::new(vec![0.0, 0.0], vec![2.0, 3.0]).unwrap();
        let value = refined_quadrature(&domain, 64, |x| x[0] * x[1]).unwrap();
        assert!((value - 9.0).abs() <= 1e-12);
    }
}
