use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, DVector};

use super::{BasisKind, BasisSet, Curve, Grid};
use crate::error::{Error, Result};

/// Fourier function `k` (0-based) on [0,1] with period 1:
/// `1, √2 sin(2πt), √2 cos(2πt), √2 sin(4πt), √2 cos(4πt), …`.
fn fourier_fn(k: usize, t: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let freq = k.div_ceil(2) as f64;
    let arg = 2.0 * PI * freq * t;
    if k % 2 == 1 {
        SQRT_2 * arg.sin()
    } else {
        SQRT_2 * arg.cos()
    }
}

fn check_n_basis(n_basis: usize) -> Result<()> {
    if n_basis == 0 || n_basis.is_multiple_of(2) {
        return Err(Error::InvalidInput(format!(
            "Fourier basis size must be odd and positive, got {n_basis}"
        )));
    }
    Ok(())
}

/// Design matrix with entry `(j, k)` equal to Fourier function `k` at `times[j]`.
pub fn fourier_design(times: &[f64], n_basis: usize) -> DMatrix<f64> {
    DMatrix::from_fn(times.len(), n_basis, |j, k| fourier_fn(k, times[j]))
}

pub fn fourier_basis(grid: Grid, n_basis: usize) -> Result<BasisSet> {
    check_n_basis(n_basis)?;
    let functions = (0..n_basis)
        .map(|k| Curve::from_fn(grid, |t| fourier_fn(k, t)))
        .collect::<Result<Vec<_>>>()?;
    let second = (0..n_basis)
        .map(|k| {
            let w = 2.0 * PI * k.div_ceil(2) as f64;
            Curve::from_fn(grid, |t| -w * w * fourier_fn(k, t))
        })
        .collect::<Result<Vec<_>>>()?;
    BasisSet::new(grid, BasisKind::Fourier, functions, Some(second))
}

/// Least-squares projection of raw observations `(times, values)` onto the
/// span of the first `n_basis` Fourier functions, re-evaluated on `grid`.
///
/// `times` must lie in [0,1]. The design must have full column rank, which
/// needs at least `n_basis` distinct time points.
pub fn fourier_project(times: &[f64], values: &[f64], n_basis: usize, grid: Grid) -> Result<Curve> {
    check_n_basis(n_basis)?;
    if times.len() != values.len() {
        return Err(Error::InvalidInput(format!(
            "{} time points but {} values",
            times.len(),
            values.len()
        )));
    }
    if times.len() < n_basis {
        return Err(Error::InvalidInput(format!(
            "{} observations cannot determine {n_basis} Fourier coefficients",
            times.len()
        )));
    }
    if let Some(j) = times
        .iter()
        .zip(values)
        .position(|(t, v)| !t.is_finite() || !v.is_finite() || *t < 0.0 || *t > 1.0)
    {
        return Err(Error::InvalidInput(format!(
            "observation {j} is non-finite or outside [0,1]"
        )));
    }
    let mut distinct = times.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < n_basis {
        return Err(Error::RankDeficient(format!(
            "{} distinct time points for {n_basis} Fourier coefficients",
            distinct.len()
        )));
    }

    let design = fourier_design(times, n_basis);
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= 1e-10 * smax {
        return Err(Error::RankDeficient(format!(
            "Fourier design is numerically rank deficient (condition {:.3e})",
            smax / smin
        )));
    }
    let coeffs = svd
        .solve(&DVector::from_column_slice(values), 0.0)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    let on_grid = fourier_design(&grid.points(), n_basis) * coeffs;
    Curve::new(grid, on_grid.iter().copied().collect())
}
