//! Box domains, staggered grids and sampled fields.
//!
//! The unknown `u` lives on the node grid and the transformed variable `v`
//! lives on cell centers. A [`GridFunction`] carries `d` components stored
//! as contiguous planes, each plane laid out row-major with the `x1` index
//! varying fastest.

use crate::error::{Error, Result};
use crate::expr::AnalyticExpr;

/// Highest spatial rank supported. The projector sums `2^n` slab terms.
pub const MAX_RANK: usize = 4;

/// The open box `(a_1, b_1) x ... x (a_n, b_n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::RankMismatch {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        if lower.is_empty() || lower.len() > MAX_RANK {
            return Err(Error::InvalidDomain(format!(
                "rank {} is outside 1..={MAX_RANK}",
                lower.len()
            )));
        }
        for (i, (a, b)) in lower.iter().zip(&upper).enumerate() {
            if !a.is_finite() || !b.is_finite() || a >= b {
                return Err(Error::InvalidDomain(format!(
                    "axis {i}: need finite a < b, got ({a}, {b})"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The unit cube `(0,1)^n`.
    pub fn unit(rank: usize) -> Result<Self> {
        Self::new(vec![0.0; rank], vec![1.0; rank])
    }

    pub fn rank(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// `b_i - a_i`.
    pub fn length(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn volume(&self) -> f64 {
        (0..self.rank()).map(|i| self.length(i)).product()
    }
}

/// Where a field sits along one axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stagger {
    Node,
    Cell,
}

/// Per-axis stagger of a field. All-`Node` is the node grid, all-`Cell` the
/// cell-center grid; mixed placements show up as intermediates of partial
/// integration.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Placement(Vec<Stagger>);

impl Placement {
    pub fn nodes(rank: usize) -> Self {
        Self(vec![Stagger::Node; rank])
    }

    pub fn cells(rank: usize) -> Self {
        Self(vec![Stagger::Cell; rank])
    }

    pub fn from_axes(axes: Vec<Stagger>) -> Self {
        Self(axes)
    }

    pub fn axis(&self, i: usize) -> Stagger {
        self.0[i]
    }

    pub fn axes(&self) -> &[Stagger] {
        &self.0
    }

    pub fn with_axis(&self, i: usize, stagger: Stagger) -> Self {
        let mut axes = self.0.clone();
        axes[i] = stagger;
        Self(axes)
    }

    pub fn is_nodes(&self) -> bool {
        self.0.iter().all(|s| *s == Stagger::Node)
    }

    pub fn is_cells(&self) -> bool {
        self.0.iter().all(|s| *s == Stagger::Cell)
    }
}

/// Uniform tensor grid over a [`BoxDomain`] with `N_i` cells per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformGrid {
    domain: BoxDomain,
    cells: Vec<usize>,
    spacing: Vec<f64>,
}

impl UniformGrid {
    /// Builds the staggered grid; every axis needs at least two cells.
    pub fn new(domain: BoxDomain, cells: Vec<usize>) -> Result<Self> {
        if cells.len() != domain.rank() {
            return Err(Error::RankMismatch {
                expected: domain.rank(),
                found: cells.len(),
            });
        }
        if let Some((axis, &n)) = cells.iter().enumerate().find(|(_, &n)| n < 2) {
            return Err(Error::InvalidCells { axis, cells: n });
        }
        let spacing = cells
            .iter()
            .enumerate()
            .map(|(i, &n)| domain.length(i) / n as f64)
            .collect();
        Ok(Self { domain, cells, spacing })
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn rank(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn node_count(&self) -> usize {
        self.cells.iter().map(|n| n + 1).product()
    }

    pub fn cell_count(&self) -> usize {
        self.cells.iter().product()
    }

    /// Number of points along each axis for a placement.
    pub fn dims(&self, placement: &Placement) -> Vec<usize> {
        self.cells
            .iter()
            .zip(placement.axes())
            .map(|(&n, s)| match s {
                Stagger::Node => n + 1,
                Stagger::Cell => n,
            })
            .collect()
    }

    pub fn point_count(&self, placement: &Placement) -> usize {
        self.dims(placement).iter().product()
    }

    /// `a_i + k h_i`.
    pub fn node_coord(&self, axis: usize, k: usize) -> f64 {
        if k == self.cells[axis] {
            self.domain.upper[axis]
        } else {
            self.domain.lower[axis] + k as f64 * self.spacing[axis]
        }
    }

    /// `a_i + (k + 1/2) h_i`.
    pub fn cell_coord(&self, axis: usize, k: usize) -> f64 {
        self.domain.lower[axis] + (k as f64 + 0.5) * self.spacing[axis]
    }

    pub fn coord(&self, axis: usize, stagger: Stagger, k: usize) -> f64 {
        match stagger {
            Stagger::Node => self.node_coord(axis, k),
            Stagger::Cell => self.cell_coord(axis, k),
        }
    }

    /// Coordinates of every point of a placement, `rank` values per point,
    /// in storage order.
    pub fn coordinates(&self, placement: &Placement) -> Vec<f64> {
        let dims = self.dims(placement);
        let n = self.rank();
        let count: usize = dims.iter().product();
        let mut out = Vec::with_capacity(count * n);
        let mut index = vec![0usize; n];
        for _ in 0..count {
            for (axis, &k) in index.iter().enumerate() {
                out.push(self.coord(axis, placement.axis(axis), k));
            }
            advance(&mut index, &dims);
        }
        out
    }

    /// Quadrature weights for a placement: midpoint `h` along cell axes,
    /// trapezoid `h/2, h, ..., h, h/2` along node axes.
    pub fn weights(&self, placement: &Placement) -> Vec<f64> {
        let dims = self.dims(placement);
        let per_axis: Vec<Vec<f64>> = (0..self.rank())
            .map(|i| {
                let h = self.spacing[i];
                match placement.axis(i) {
                    Stagger::Cell => vec![h; dims[i]],
                    Stagger::Node => (0..dims[i])
                        .map(|k| if k == 0 || k + 1 == dims[i] { 0.5 * h } else { h })
                        .collect(),
                }
            })
            .collect();
        let count: usize = dims.iter().product();
        let mut out = Vec::with_capacity(count);
        let mut index = vec![0usize; self.rank()];
        for _ in 0..count {
            out.push(index.iter().enumerate().map(|(i, &k)| per_axis[i][k]).product());
            advance(&mut index, &dims);
        }
        out
    }
}

/// Increments a multi-index in storage order (first axis fastest).
pub(crate) fn advance(index: &mut [usize], dims: &[usize]) {
    for (k, &d) in index.iter_mut().zip(dims) {
        *k += 1;
        if *k < d {
            return;
        }
        *k = 0;
    }
}

/// Binary multi-index `alpha` with `alpha_i in {0, 1}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex(Vec<bool>);

impl MultiIndex {
    pub fn new(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    /// The multi-index whose set bits are the bits of `mask`.
    pub fn from_mask(rank: usize, mask: usize) -> Self {
        Self((0..rank).map(|i| mask >> i & 1 == 1).collect())
    }

    /// The unit multi-index selecting one axis.
    pub fn axis(rank: usize, axis: usize) -> Self {
        Self((0..rank).map(|i| i == axis).collect())
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    /// `|alpha|`.
    pub fn order(&self) -> usize {
        self.0.iter().filter(|b| **b).count()
    }

    /// `alpha-bar`, with `alpha + alpha-bar = (1, ..., 1)`.
    pub fn complement(&self) -> Self {
        Self(self.0.iter().map(|b| !b).collect())
    }

    pub fn selected_axes(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i)
    }

    /// All members of `I_k`.
    pub fn all_of_order(rank: usize, k: usize) -> Vec<Self> {
        (0..1usize << rank)
            .filter(|m| m.count_ones() as usize == k)
            .map(|m| Self::from_mask(rank, m))
            .collect()
    }
}

/// A `d`-component real field sampled on a grid placement.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: UniformGrid,
    placement: Placement,
    components: usize,
    data: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(grid: &UniformGrid, placement: Placement, components: usize) -> Self {
        let len = grid.point_count(&placement) * components;
        Self {
            grid: grid.clone(),
            placement,
            components,
            data: vec![0.0; len],
        }
    }

    pub fn constant(grid: &UniformGrid, placement: Placement, components: usize, value: f64) -> Self {
        let mut f = Self::zeros(grid, placement, components);
        f.data.fill(value);
        f
    }

    /// Wraps planar data (component planes back to back). Rejects wrong
    /// lengths and non-finite entries.
    pub fn from_data(grid: &UniformGrid, placement: Placement, components: usize, data: Vec<f64>) -> Result<Self> {
        if placement.axes().len() != grid.rank() {
            return Err(Error::RankMismatch {
                expected: grid.rank(),
                found: placement.axes().len(),
            });
        }
        let expected = grid.point_count(&placement) * components;
        if data.len() != expected || components == 0 {
            return Err(Error::LengthMismatch {
                expected,
                found: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                what: "grid value",
                index,
            });
        }
        Ok(Self {
            grid: grid.clone(),
            placement,
            components,
            data,
        })
    }

    /// Samples `f(x, out)` at every point; `out` has one slot per component.
    pub fn from_fn(
        grid: &UniformGrid,
        placement: Placement,
        components: usize,
        mut f: impl FnMut(&[f64], &mut [f64]),
    ) -> Result<Self> {
        let n = grid.rank();
        let coords = grid.coordinates(&placement);
        let points = coords.len() / n;
        let mut data = vec![0.0; points * components];
        let mut buf = vec![0.0; components];
        for (p, x) in coords.chunks_exact(n).enumerate() {
            f(x, &mut buf);
            for (c, value) in buf.iter().enumerate() {
                data[c * points + p] = *value;
            }
        }
        Self::from_data(grid, placement, components, data)
    }

    pub(crate) fn from_raw(grid: &UniformGrid, placement: Placement, components: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), grid.point_count(&placement) * components);
        Self {
            grid: grid.clone(),
            placement,
            components,
            data,
        }
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn placement(&self) -> &Placement {
        &self.placement
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn dims(&self) -> Vec<usize> {
        self.grid.dims(&self.placement)
    }

    pub fn points(&self) -> usize {
        self.data.len() / self.components
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let p = self.points();
        &self.data[c * p..(c + 1) * p]
    }

    /// Value of component `c` at the point with per-axis index `index`.
    pub fn at(&self, index: &[usize], c: usize) -> f64 {
        let dims = self.dims();
        let mut linear = 0;
        let mut stride = 1;
        for (k, d) in index.iter().zip(&dims) {
            linear += k * stride;
            stride *= d;
        }
        self.component(c)[linear]
    }

    /// Splits off one component as a single-component field.
    pub fn extract_component(&self, c: usize) -> Self {
        Self::from_raw(&self.grid, self.placement.clone(), 1, self.component(c).to_vec())
    }

    /// Stacks single-component fields into one multi-component field.
    pub fn stack(parts: &[GridFunction]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or(Error::ComponentMismatch { expected: 1, found: 0 })?;
        let mut data = Vec::with_capacity(first.data.len() * parts.len());
        for part in parts {
            first.check_compatible(part)?;
            data.extend_from_slice(&part.data);
        }
        let components = parts.iter().map(|p| p.components).sum();
        Ok(Self::from_raw(&first.grid, first.placement.clone(), components, data))
    }

    pub fn check_compatible(&self, other: &GridFunction) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        if self.placement != other.placement {
            return Err(Error::PlacementMismatch(format!(
                "{:?} vs {:?}",
                self.placement.axes(),
                other.placement.axes()
            )));
        }
        if self.components != other.components {
            return Err(Error::ComponentMismatch {
                expected: self.components,
                found: other.components,
            });
        }
        Ok(())
    }

    pub fn require_cells(&self, what: &str) -> Result<()> {
        if self.placement.is_cells() {
            Ok(())
        } else {
            Err(Error::PlacementMismatch(format!("{what} must be cell-centered")))
        }
    }

    pub fn require_nodes(&self, what: &str) -> Result<()> {
        if self.placement.is_nodes() {
            Ok(())
        } else {
            Err(Error::PlacementMismatch(format!("{what} must be node-placed")))
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|x| *x *= a);
        out
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &GridFunction) -> Result<()> {
        self.check_compatible(other)?;
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += a * y;
        }
        Ok(())
    }

    /// `self + a * other` as a new field.
    pub fn plus_scaled(&self, a: f64, other: &GridFunction) -> Result<Self> {
        let mut out = self.clone();
        out.axpy(a, other)?;
        Ok(out)
    }

    pub fn sub(&self, other: &GridFunction) -> Result<Self> {
        self.plus_scaled(-1.0, other)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Discrete `L_2` norm under [`inner_product_l2`].
    pub fn norm_l2(&self) -> f64 {
        inner_product_l2(self, self).map(f64::sqrt).unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|x| *x == 0.0)
    }
}

/// Fixed-order pairwise summation. The split points depend only on the
/// length, so results are reproducible bit for bit.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if values.len() <= BLOCK {
        values.iter().sum()
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}

/// Weighted `L_2` inner product: midpoint rule on cell axes, trapezoid on
/// node axes, summed over components.
pub fn inner_product_l2(f: &GridFunction, g: &GridFunction) -> Result<f64> {
    f.check_compatible(g)?;
    let weights = f.grid.weights(&f.placement);
    let points = weights.len();
    let terms: Vec<f64> = f
        .data
        .iter()
        .zip(&g.data)
        .enumerate()
        .map(|(i, (a, b))| a * b * weights[i % points])
        .collect();
    Ok(pairwise_sum(&terms))
}

/// Samples an expression on a placement as a single-component field.
pub fn sample_expression(expr: &AnalyticExpr, grid: &UniformGrid, placement: Placement) -> Result<GridFunction> {
    expr.check_rank(grid.rank())?;
    GridFunction::from_fn(grid, placement, 1, |x, out| out[0] = expr.eval(x))
}

/// Samples one expression per component.
pub fn sample_expressions(exprs: &[AnalyticExpr], grid: &UniformGrid, placement: Placement) -> Result<GridFunction> {
    for e in exprs {
        e.check_rank(grid.rank())?;
    }
    GridFunction::from_fn(grid, placement, exprs.len(), |x, out| {
        for (o, e) in out.iter_mut().zip(exprs) {
            *o = e.eval(x);
        }
    })
}

/// Applies `kernel` to every line of `data` along `axis`. Input lines have
/// length `dims[axis]`; output lines have length `out_len`, all other axes
/// unchanged. Lines are visited in a fixed order.
pub(crate) fn map_lines(
    data: &[f64],
    dims: &[usize],
    axis: usize,
    out_len: usize,
    mut kernel: impl FnMut(&[f64], &mut [f64]),
) -> Vec<f64> {
    let stride: usize = dims[..axis].iter().product();
    let outer: usize = dims[axis + 1..].iter().product();
    let in_len = dims[axis];
    let mut out = vec![0.0; stride * out_len * outer];
    let mut line_in = vec![0.0; in_len];
    let mut line_out = vec![0.0; out_len];
    for o in 0..outer {
        let in_base = o * in_len * stride;
        let out_base = o * out_len * stride;
        for s in 0..stride {
            for (k, slot) in line_in.iter_mut().enumerate() {
                *slot = data[in_base + s + k * stride];
            }
            kernel(&line_in, &mut line_out);
            for (k, value) in line_out.iter().enumerate() {
                out[out_base + s + k * stride] = *value;
            }
        }
    }
    out
}
