//! CSV and JSON-sidecar serialization of curves.
//!
//! Curve files hold one observation per row and one grid value per column.
//! An optional header row carries the grid coordinates as `s=<coord>` cells;
//! a header is recognised by its first cell not parsing as a number. Values
//! are written with 17 significant digits so files round-trip bitwise.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{BasisKind, Curve, Curve2D, Grid};
use crate::error::{Error, Result};

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_cell(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok()
}

/// Parse a header cell: either `name=<coord>` or a bare coordinate.
fn parse_header_cell(cell: &str) -> Option<f64> {
    let cell = cell.trim();
    match cell.split_once('=') {
        Some((_, v)) => parse_cell(v),
        None => parse_cell(cell),
    }
}

fn csv_err(path: &Path, row: usize, message: impl Into<String>) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        row,
        message: message.into(),
    }
}

fn read_records(path: &Path) -> Result<Vec<Vec<String>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::io(
                path,
                std::io::Error::new(std::io::ErrorKind::NotFound, e.to_string()),
            ),
            _ => csv_err(path, 0, e.to_string()),
        })?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, i, e.to_string()))?;
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        rows.push(rec.iter().map(str::to_owned).collect());
    }
    Ok(rows)
}

fn check_header_grid(path: &Path, coords: &[f64], grid: Grid) -> Result<()> {
    for (i, c) in coords.iter().enumerate() {
        if (c - grid.point(i)).abs() > 1e-9 {
            return Err(csv_err(
                path,
                0,
                format!("header coordinate {c} does not match uniform grid point {}", grid.point(i)),
            ));
        }
    }
    Ok(())
}

/// Read curves from `path`. The grid is taken from `grid` when supplied and
/// otherwise inferred from the column count (uniform grid on [0,1]).
pub fn read_curves_csv(path: impl AsRef<Path>, grid: Option<Grid>) -> Result<Vec<Curve>> {
    let path = path.as_ref();
    let rows = read_records(path)?;
    let Some(first) = rows.first() else {
        return Ok(Vec::new());
    };
    let has_header = first.first().is_some_and(|c| parse_cell(c).is_none());
    let ncols = first.len();
    let grid = match grid {
        Some(g) => {
            if g.n_points() != ncols {
                return Err(csv_err(
                    path,
                    0,
                    format!("{ncols} columns but grid has {} points", g.n_points()),
                ));
            }
            g
        }
        None => Grid::new(ncols).map_err(|e| csv_err(path, 0, e.to_string()))?,
    };
    let mut start = 0;
    if has_header {
        let coords = first
            .iter()
            .map(|c| parse_header_cell(c))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| csv_err(path, 0, "header cells must be grid coordinates"))?;
        check_header_grid(path, &coords, grid)?;
        start = 1;
    }
    let mut curves = Vec::with_capacity(rows.len() - start);
    for (row_idx, row) in rows.iter().enumerate().skip(start) {
        if row.len() != ncols {
            return Err(csv_err(
                path,
                row_idx,
                format!("ragged row: {} fields, expected {ncols}", row.len()),
            ));
        }
        let values = row
            .iter()
            .enumerate()
            .map(|(j, c)| {
                parse_cell(c)
                    .ok_or_else(|| csv_err(path, row_idx, format!("column {j}: non-numeric cell {c:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        curves.push(Curve::new(grid, values).map_err(|e| csv_err(path, row_idx, e.to_string()))?);
    }
    Ok(curves)
}

pub fn write_curves_csv(path: impl AsRef<Path>, curves: &[Curve]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
        if let Some(c) = curves.first() {
            let header: Vec<String> = c.grid().points().iter().map(|s| format!("s={}", fmt(*s))).collect();
            writeln!(out, "{}", header.join(","))?;
        }
        for c in curves {
            let line: Vec<String> = c.values().iter().map(|v| fmt(*v)).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        out.flush()
    };
    write(&mut out).map_err(|e| Error::io(path, e))
}

/// Read a single numeric column, skipping an optional non-numeric header.
pub fn read_scalars_csv(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let rows = read_records(path)?;
    let mut out = Vec::with_capacity(rows.len());
    for (row_idx, row) in rows.iter().enumerate() {
        if row.len() != 1 {
            return Err(csv_err(path, row_idx, format!("expected one column, found {}", row.len())));
        }
        match parse_cell(&row[0]) {
            Some(v) if v.is_finite() => out.push(v),
            Some(_) => return Err(csv_err(path, row_idx, "non-finite value")),
            None if row_idx == 0 => {}
            None => return Err(csv_err(path, row_idx, format!("non-numeric cell {:?}", row[0]))),
        }
    }
    Ok(out)
}

pub fn write_scalars_csv(path: impl AsRef<Path>, values: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let mut body = String::from("y\n");
    for v in values {
        body.push_str(&fmt(*v));
        body.push('\n');
    }
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Surfaces: the first row is `s\t,<t coords…>`, every following row starts
/// with its `s` coordinate.
pub fn write_curve2d_csv(path: impl AsRef<Path>, surface: &Curve2D) -> Result<()> {
    let path = path.as_ref();
    let mut body = String::from("s\\t");
    for t in surface.grid_t().points() {
        body.push(',');
        body.push_str(&fmt(t));
    }
    body.push('\n');
    for (i, s) in surface.grid_s().points().iter().enumerate() {
        body.push_str(&fmt(*s));
        for j in 0..surface.grid_t().n_points() {
            body.push(',');
            body.push_str(&fmt(surface.values()[(i, j)]));
        }
        body.push('\n');
    }
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn read_curve2d_csv(path: impl AsRef<Path>) -> Result<Curve2D> {
    let path = path.as_ref();
    let rows = read_records(path)?;
    if rows.len() < 2 {
        return Err(csv_err(path, 0, "surface file needs a header and at least one row"));
    }
    let t_coords = rows[0][1..]
        .iter()
        .map(|c| parse_cell(c))
        .collect::<Option<Vec<f64>>>()
        .ok_or_else(|| csv_err(path, 0, "column header must hold t coordinates"))?;
    let grid_t = Grid::new(t_coords.len()).map_err(|e| csv_err(path, 0, e.to_string()))?;
    check_header_grid(path, &t_coords, grid_t)?;
    let grid_s = Grid::new(rows.len() - 1).map_err(|e| csv_err(path, 1, e.to_string()))?;
    let mut values = DMatrix::zeros(grid_s.n_points(), grid_t.n_points());
    for (i, row) in rows.iter().enumerate().skip(1) {
        if row.len() != t_coords.len() + 1 {
            return Err(csv_err(path, i, format!("ragged row: {} fields", row.len())));
        }
        let s = parse_cell(&row[0]).ok_or_else(|| csv_err(path, i, "row header must be an s coordinate"))?;
        if (s - grid_s.point(i - 1)).abs() > 1e-9 {
            return Err(csv_err(path, i, format!("s coordinate {s} off the uniform grid")));
        }
        for (j, cell) in row[1..].iter().enumerate() {
            values[(i - 1, j)] =
                parse_cell(cell).ok_or_else(|| csv_err(path, i, format!("non-numeric cell {cell:?}")))?;
        }
    }
    Curve2D::new(grid_s, grid_t, values)
}

/// JSON sidecar describing a curve file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveMetadata {
    pub grid_points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis_kind: Option<BasisKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

pub fn write_metadata(path: impl AsRef<Path>, meta: &CurveMetadata) -> Result<()> {
    let path = path.as_ref();
    let body = serde_json::to_string_pretty(meta)?;
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn read_metadata(path: impl AsRef<Path>) -> Result<CurveMetadata> {
    let path = path.as_ref();
    let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&body)?)
}
