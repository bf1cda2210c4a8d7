//! Integral and differential operators on the staggered grid.
//!
//! Cumulative midpoint sums (cells to nodes) and normalized forward
//! differences (nodes to cells) are exact inverses of each other, so the
//! discrete lift `T` and the mixed derivative `D^(1,...,1)` reproduce the
//! isometric isomorphism between zero-slab fields and lifted functions
//! without discretization error.

use crate::error::{Error, Result};
use crate::grid::{inner_product_l2, map_lines, GridFunction, MultiIndex, Stagger};

/// Which end of an axis a cumulative integral starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Anchor {
    /// `int_{a_i}^{x_i}`
    Lower,
    /// `int_{x_i}^{b_i}`
    Upper,
}

/// Outcome of [`certify_l0`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L0Certificate {
    /// `max_i ||S_i v||_inf`
    pub max_slab_residual: f64,
    pub tolerance: f64,
}

impl L0Certificate {
    pub fn passes(&self) -> bool {
        self.max_slab_residual <= self.tolerance
    }
}

fn check_axis(f: &GridFunction, axis: usize) -> Result<()> {
    let rank = f.grid().rank();
    if axis >= rank {
        Err(Error::AxisOutOfRange { axis, rank })
    } else {
        Ok(())
    }
}

fn require_stagger(f: &GridFunction, axis: usize, stagger: Stagger, op: &str) -> Result<()> {
    check_axis(f, axis)?;
    if f.placement().axis(axis) == stagger {
        Ok(())
    } else {
        Err(Error::PlacementMismatch(format!(
            "{op} needs {stagger:?} placement along axis {axis}"
        )))
    }
}

/// Runs a line kernel over every component, changing the stagger of `axis`.
pub(crate) fn along_axis(
    f: &GridFunction,
    axis: usize,
    out_stagger: Stagger,
    mut kernel: impl FnMut(&[f64], &mut [f64]),
) -> GridFunction {
    let dims = f.dims();
    let placement = f.placement().with_axis(axis, out_stagger);
    let out_len = f.grid().dims(&placement)[axis];
    let mut data = Vec::with_capacity(f.grid().point_count(&placement) * f.components());
    for c in 0..f.components() {
        data.extend(map_lines(f.component(c), &dims, axis, out_len, &mut kernel));
    }
    GridFunction::from_raw(f.grid(), placement, f.components(), data)
}

/// `T_i`: cumulative midpoint integral from `a_i`. Node `k` receives
/// `h_i * sum_{j<k} v_j`; node 0 is exactly zero.
pub fn cumulative_integral_axis(v: &GridFunction, axis: usize) -> Result<GridFunction> {
    anchored_integral_axis(v, axis, Anchor::Lower)
}

/// Cumulative integral from either end of the axis (cells to nodes). With
/// `Anchor::Upper`, node `k` receives `h_i * sum_{j>=k} v_j`.
pub fn anchored_integral_axis(v: &GridFunction, axis: usize, anchor: Anchor) -> Result<GridFunction> {
    require_stagger(v, axis, Stagger::Cell, "cumulative integral")?;
    let h = v.grid().spacing()[axis];
    Ok(along_axis(v, axis, Stagger::Node, |line, out| {
        let n = line.len();
        match anchor {
            Anchor::Lower => {
                let mut sum = 0.0;
                out[0] = 0.0;
                for j in 0..n {
                    sum += line[j];
                    out[j + 1] = h * sum;
                }
            }
            Anchor::Upper => {
                let mut sum = 0.0;
                out[n] = 0.0;
                for j in (0..n).rev() {
                    sum += line[j];
                    out[j] = h * sum;
                }
            }
        }
    }))
}

/// The full lift `T = T_1 o ... o T_n`, applied componentwise.
pub fn full_lift(v: &GridFunction) -> Result<GridFunction> {
    v.require_cells("lift input")?;
    let order: Vec<usize> = (0..v.grid().rank()).collect();
    full_lift_in_order(v, &order)
}

/// The full lift with the axis integrals applied in the given order.
pub fn full_lift_in_order(v: &GridFunction, order: &[usize]) -> Result<GridFunction> {
    v.require_cells("lift input")?;
    let rank = v.grid().rank();
    let mut seen = vec![false; rank];
    for &axis in order {
        if axis >= rank || std::mem::replace(&mut seen[axis], true) {
            return Err(Error::PlacementMismatch(format!(
                "{order:?} is not a permutation of the axes"
            )));
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::PlacementMismatch(format!(
            "{order:?} is not a permutation of the axes"
        )));
    }
    let mut u = v.clone();
    for &axis in order {
        u = cumulative_integral_axis(&u, axis)?;
    }
    Ok(u)
}

/// Tail integral `int_{x_i}^{b_i}` sampled at cell centers:
/// `h_i * (w_c / 2 + sum_{j>c} w_j)`.
pub fn reversed_cumulative_axis(w: &GridFunction, axis: usize) -> Result<GridFunction> {
    half_weight_cumulative(w, axis, Anchor::Upper)
}

/// Cell-to-cell cumulative integral with half weight on the originating
/// cell. `Anchor::Lower` gives `h (sum_{j<c} w_j + w_c / 2)`; `Anchor::Upper`
/// gives the tail version.
pub fn half_weight_cumulative(w: &GridFunction, axis: usize, anchor: Anchor) -> Result<GridFunction> {
    require_stagger(w, axis, Stagger::Cell, "cell cumulative")?;
    let h = w.grid().spacing()[axis];
    Ok(along_axis(w, axis, Stagger::Cell, |line, out| {
        let mut sum = 0.0;
        let mut step = |j: usize| {
            out[j] = h * (sum + 0.5 * line[j]);
            sum += line[j];
        };
        match anchor {
            Anchor::Lower => (0..line.len()).for_each(&mut step),
            Anchor::Upper => (0..line.len()).rev().for_each(&mut step),
        }
    }))
}

/// Node-to-cell average along one axis.
pub fn average_to_cells(u: &GridFunction, axis: usize) -> Result<GridFunction> {
    require_stagger(u, axis, Stagger::Node, "averaging")?;
    Ok(along_axis(u, axis, Stagger::Cell, |line, out| {
        for (c, o) in out.iter_mut().enumerate() {
            *o = 0.5 * (line[c] + line[c + 1]);
        }
    }))
}

/// Node-to-cell forward difference divided by `h_i`.
pub fn forward_difference(u: &GridFunction, axis: usize) -> Result<GridFunction> {
    require_stagger(u, axis, Stagger::Node, "forward difference")?;
    let h = u.grid().spacing()[axis];
    Ok(along_axis(u, axis, Stagger::Cell, |line, out| {
        for (c, o) in out.iter_mut().enumerate() {
            *o = (line[c + 1] - line[c]) / h;
        }
    }))
}

/// Averages every node axis down to cell centers.
pub fn nodes_to_cells(u: &GridFunction) -> Result<GridFunction> {
    let mut out = u.clone();
    for axis in 0..u.grid().rank() {
        if out.placement().axis(axis) == Stagger::Node {
            out = average_to_cells(&out, axis)?;
        }
    }
    Ok(out)
}

/// `S_alpha`: full midpoint integral over every selected axis, stored
/// broadcast (constant along those axes) on the input placement.
pub fn slab_integral(v: &GridFunction, alpha: &MultiIndex) -> Result<GridFunction> {
    if alpha.rank() != v.grid().rank() {
        return Err(Error::RankMismatch {
            expected: v.grid().rank(),
            found: alpha.rank(),
        });
    }
    if alpha.order() == 0 {
        return Err(Error::EmptyMultiIndex);
    }
    let mut out = v.clone();
    for axis in alpha.selected_axes() {
        out = slab_axis(&out, axis)?;
    }
    Ok(out)
}

pub(crate) fn slab_axis(v: &GridFunction, axis: usize) -> Result<GridFunction> {
    require_stagger(v, axis, Stagger::Cell, "slab integral")?;
    let h = v.grid().spacing()[axis];
    Ok(along_axis(v, axis, Stagger::Cell, |line, out| {
        let total = h * line.iter().sum::<f64>();
        out.fill(total);
    }))
}

/// Orthogonal projector onto the zero-slab subspace `L_0`:
///
/// `Pr v = v + sum_{k=1}^{n} sum_{alpha in I_k} (-1)^|alpha| c_alpha S_alpha v`
/// with `c_alpha = prod_i (b_i - a_i)^(-alpha_i)`.
pub fn project_l0(v: &GridFunction) -> Result<GridFunction> {
    v.require_cells("projection input")?;
    let rank = v.grid().rank();
    let domain = v.grid().domain();
    // S_alpha for every subset mask, built from the mask with its highest
    // bit cleared.
    let mut slabs: Vec<Option<GridFunction>> = vec![None; 1 << rank];
    slabs[0] = Some(v.clone());
    let mut out = v.clone();
    for mask in 1usize..1 << rank {
        let top = usize::BITS as usize - 1 - mask.leading_zeros() as usize;
        let prev = slabs[mask & !(1 << top)].as_ref().expect("built in mask order");
        let slab = slab_axis(prev, top)?;
        let alpha = MultiIndex::from_mask(rank, mask);
        let c_alpha: f64 = alpha.selected_axes().map(|i| 1.0 / domain.length(i)).product();
        let sign = if alpha.order() % 2 == 0 { 1.0 } else { -1.0 };
        out.axpy(sign * c_alpha, &slab)?;
        slabs[mask] = Some(slab);
    }
    Ok(out)
}

/// `D^(1,...,1)`: forward difference over every axis, nodes to cells.
pub fn mixed_derivative(u: &GridFunction) -> Result<GridFunction> {
    u.require_nodes("mixed derivative input")?;
    let mut out = u.clone();
    for axis in 0..u.grid().rank() {
        out = forward_difference(&out, axis)?;
    }
    Ok(out)
}

/// Gradient of `T v` at cell centers: for axis `i`, cumulative integrals over
/// every other axis averaged back to centers. Adds `lift_gradient[i]` when
/// given.
pub fn lifted_gradient(v: &GridFunction, lift_gradient: Option<&[GridFunction]>) -> Result<Vec<GridFunction>> {
    v.require_cells("lifted gradient input")?;
    let lift = Lift::standard(v.grid().rank());
    let rank = v.grid().rank();
    if let Some(extra) = lift_gradient {
        if extra.len() != rank {
            return Err(Error::RankMismatch {
                expected: rank,
                found: extra.len(),
            });
        }
    }
    (0..rank)
        .map(|i| {
            let mut z = lift.gradient_at_cells(v, i)?;
            if let Some(extra) = lift_gradient {
                z.axpy(1.0, &extra[i])?;
            }
            Ok(z)
        })
        .collect()
}

/// `||u; M_0^{n,2}|| = ||D^(1,...,1) u||_2`.
pub fn m0_norm(u: &GridFunction) -> Result<f64> {
    let du = mixed_derivative(u)?;
    Ok(inner_product_l2(&du, &du)?.sqrt())
}

/// Checks `S_i v = 0` for every axis up to `tolerance`.
pub fn certify_l0(v: &GridFunction, tolerance: f64) -> Result<L0Certificate> {
    v.require_cells("certified field")?;
    let rank = v.grid().rank();
    let mut worst: f64 = 0.0;
    for axis in 0..rank {
        worst = worst.max(slab_axis(v, axis)?.max_abs());
    }
    Ok(L0Certificate {
        max_slab_residual: worst,
        tolerance,
    })
}

/// A cumulative lift `sign * int ... int v` with a per-axis anchor.
///
/// The standard lift anchors every axis at `a_i`. The adjacent-corner lift
/// in two dimensions, `-int_{a_1}^{x_1} int_{x_2}^{b_2} v`, anchors the
/// second axis at `b_2` and carries a leading minus.
#[derive(Debug, Clone, PartialEq)]
pub struct Lift {
    anchors: Vec<Anchor>,
    sign: f64,
}

impl Lift {
    pub fn standard(rank: usize) -> Self {
        Self {
            anchors: vec![Anchor::Lower; rank],
            sign: 1.0,
        }
    }

    pub fn new(anchors: Vec<Anchor>, sign: f64) -> Self {
        Self { anchors, sign }
    }

    pub fn anchors(&self) -> &[Anchor] {
        &self.anchors
    }

    pub fn sign(&self) -> f64 {
        self.sign
    }

    fn check(&self, v: &GridFunction) -> Result<()> {
        if self.anchors.len() != v.grid().rank() {
            return Err(Error::RankMismatch {
                expected: self.anchors.len(),
                found: v.grid().rank(),
            });
        }
        v.require_cells("lift input")
    }

    /// Lifted field on the node grid.
    pub fn apply(&self, v: &GridFunction) -> Result<GridFunction> {
        self.check(v)?;
        let mut u = v.clone();
        for (axis, &anchor) in self.anchors.iter().enumerate() {
            u = anchored_integral_axis(&u, axis, anchor)?;
        }
        Ok(if self.sign == 1.0 { u } else { u.scaled(self.sign) })
    }

    /// Lifted field averaged from the `2^n` surrounding nodes to each center.
    pub fn values_at_cells(&self, v: &GridFunction) -> Result<GridFunction> {
        nodes_to_cells(&self.apply(v)?)
    }

    /// `d/dx_i` of the lifted field at cell centers.
    pub fn gradient_at_cells(&self, v: &GridFunction, axis: usize) -> Result<GridFunction> {
        self.check(v)?;
        check_axis(v, axis)?;
        let mut z = v.clone();
        for (l, &anchor) in self.anchors.iter().enumerate() {
            if l != axis {
                z = average_to_cells(&anchored_integral_axis(&z, l, anchor)?, l)?;
            }
        }
        let sign = self.gradient_sign(axis);
        Ok(if sign == 1.0 { z } else { z.scaled(sign) })
    }

    fn gradient_sign(&self, axis: usize) -> f64 {
        match self.anchors[axis] {
            Anchor::Lower => self.sign,
            Anchor::Upper => -self.sign,
        }
    }

    /// Adjoint of [`Lift::values_at_cells`] under the cell inner product.
    pub fn adjoint_values(&self, w: &GridFunction) -> Result<GridFunction> {
        self.adjoint_except(w, None)
    }

    /// Adjoint of [`Lift::gradient_at_cells`] for `axis`.
    pub fn adjoint_gradient(&self, w: &GridFunction, axis: usize) -> Result<GridFunction> {
        check_axis(w, axis)?;
        self.adjoint_except(w, Some(axis))
    }

    fn adjoint_except(&self, w: &GridFunction, skip: Option<usize>) -> Result<GridFunction> {
        self.check(w)?;
        let mut out = w.clone();
        for (l, &anchor) in self.anchors.iter().enumerate() {
            if Some(l) == skip {
                continue;
            }
            // integrating from the lower end transposes to a tail integral
            let flipped = match anchor {
                Anchor::Lower => Anchor::Upper,
                Anchor::Upper => Anchor::Lower,
            };
            out = half_weight_cumulative(&out, l, flipped)?;
        }
        let sign = match skip {
            None => self.sign,
            Some(axis) => self.gradient_sign(axis),
        };
        Ok(if sign == 1.0 { out } else { out.scaled(sign) })
    }
}
