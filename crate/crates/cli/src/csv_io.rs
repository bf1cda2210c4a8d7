//! Grid-function CSV files.
//!
//! Header `x1,...,xn,u1,...,ud` for node fields and `x1,...,xn,v1,...,vd`
//! for cell fields; one row per point with `x1` varying fastest. Values use
//! 17 significant digits so a write/read cycle is lossless.

use std::io::{BufRead, Write};

use varidescent_core::{GridFunction, Placement, UniformGrid};

use crate::CliError;

fn value_prefix(placement: &Placement) -> &'static str {
    if placement.is_cells() {
        "v"
    } else {
        "u"
    }
}

fn header(rank: usize, components: usize, prefix: &str) -> String {
    let xs = (1..=rank).map(|i| format!("x{i}"));
    let us = (1..=components).map(|j| format!("{prefix}{j}"));
    xs.chain(us).collect::<Vec<_>>().join(",")
}

/// Writes `f` as CSV.
pub fn write_grid_csv(f: &GridFunction, out: &mut impl Write) -> std::io::Result<()> {
    let grid = f.grid();
    let n = grid.rank();
    let d = f.components();
    writeln!(out, "{}", header(n, d, value_prefix(f.placement())))?;
    let coords = grid.coordinates(f.placement());
    let mut line = String::new();
    for (p, x) in coords.chunks_exact(n).enumerate() {
        line.clear();
        let values = (0..d).map(|c| f.component(c)[p]);
        for (k, value) in x.iter().copied().chain(values).enumerate() {
            if k > 0 {
                line.push(',');
            }
            line.push_str(&format!("{value:.16e}"));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Reads a CSV written by [`write_grid_csv`] for the given grid and
/// placement. The component count comes from the header; coordinates must
/// match the grid points.
pub fn read_grid_csv(input: impl BufRead, grid: &UniformGrid, placement: Placement) -> Result<GridFunction, CliError> {
    let n = grid.rank();
    let mut lines = input
        .lines()
        .enumerate()
        .filter(|(_, l)| !matches!(l, Ok(s) if s.trim().is_empty()));
    let shape = |line: usize, message: String| CliError::Shape {
        line: line + 1,
        message,
    };
    let (_, first) = lines.next().ok_or_else(|| shape(0, "empty file".into()))?;
    let first = first.map_err(CliError::from_read)?;
    let columns: Vec<&str> = first.trim().split(',').map(str::trim).collect();
    if columns.len() <= n {
        return Err(shape(
            0,
            format!("header has {} columns, need more than rank {n}", columns.len()),
        ));
    }
    let d = columns.len() - n;
    let expected = header(n, d, value_prefix(&placement));
    if columns.join(",") != expected {
        return Err(shape(
            0,
            format!("header `{}` does not match `{expected}`", columns.join(",")),
        ));
    }

    let coords = grid.coordinates(&placement);
    let points = coords.len() / n;
    let tolerance: Vec<f64> = grid.spacing().iter().map(|h| 1e-9 * h).collect();
    let mut data = vec![0.0; points * d];
    let mut p = 0;
    for (line_no, line) in lines {
        let line = line.map_err(CliError::from_read)?;
        if p == points {
            return Err(shape(line_no, format!("more than the {points} rows the grid has")));
        }
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != n + d {
            return Err(shape(
                line_no,
                format!("expected {} fields, found {}", n + d, fields.len()),
            ));
        }
        let mut row = Vec::with_capacity(n + d);
        for field in fields {
            row.push(
                field
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| shape(line_no, format!("`{}`: {e}", field.trim())))?,
            );
        }
        for axis in 0..n {
            if (row[axis] - coords[p * n + axis]).abs() > tolerance[axis] {
                return Err(shape(
                    line_no,
                    format!(
                        "x{} = {} but the grid point is {}",
                        axis + 1,
                        row[axis],
                        coords[p * n + axis]
                    ),
                ));
            }
        }
        for c in 0..d {
            data[c * points + p] = row[n + c];
        }
        p += 1;
    }
    if p != points {
        return Err(shape(p + 1, format!("found {p} rows, the grid has {points}")));
    }
    GridFunction::from_data(grid, placement, d, data).map_err(CliError::Core)
}
