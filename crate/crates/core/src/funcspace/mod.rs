//! Curves on [0,1] and [0,1]² sampled on a uniform grid.
//!
//! All integrals use the composite trapezoid rule on the grid with both
//! endpoints included, so every L² inner product is a fixed weighted dot
//! product of grid values.

mod fourier;
mod io;

use std::f64::consts::{PI, SQRT_2};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use fourier::{fourier_basis, fourier_design, fourier_project};
pub use io::{
    read_curve2d_csv, read_curves_csv, read_metadata, read_scalars_csv, write_curve2d_csv,
    write_curves_csv, write_metadata, write_scalars_csv, CurveMetadata,
};

/// Smallest grid accepted anywhere in the crate.
pub const MIN_GRID_POINTS: usize = 9;

/// Default number of grid points (endpoints included).
pub const DEFAULT_GRID_POINTS: usize = 101;

/// Uniform grid on [0,1] with both endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    n_points: usize,
}

impl Grid {
    pub fn new(n_points: usize) -> Result<Self> {
        if n_points < MIN_GRID_POINTS {
            return Err(Error::InvalidInput(format!(
                "grid needs at least {MIN_GRID_POINTS} points, got {n_points}"
            )));
        }
        Ok(Grid { n_points })
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.n_points - 1) as f64
    }

    /// Grid coordinate of index `i`; exact at both endpoints.
    pub fn point(&self, i: usize) -> f64 {
        if i + 1 == self.n_points {
            1.0
        } else {
            i as f64 / (self.n_points - 1) as f64
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.point(i)).collect()
    }

    /// Trapezoid weights: h in the interior, h/2 at the two endpoints.
    pub fn weights(&self) -> Vec<f64> {
        let h = self.spacing();
        let mut w = vec![h; self.n_points];
        w[0] = 0.5 * h;
        w[self.n_points - 1] = 0.5 * h;
        w
    }

    /// Trapezoid integral of grid values.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.n_points);
        let n = values.len();
        let interior: f64 = values[1..n - 1].iter().sum();
        self.spacing() * (interior + 0.5 * (values[0] + values[n - 1]))
    }

    /// Trapezoid approximation of the integral of the product of two grid vectors.
    pub fn dot(&self, f: &[f64], g: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.n_points);
        debug_assert_eq!(g.len(), self.n_points);
        let n = f.len();
        let interior: f64 = f[1..n - 1]
            .iter()
            .zip(&g[1..n - 1])
            .map(|(a, b)| a * b)
            .sum();
        self.spacing() * (interior + 0.5 * (f[0] * g[0] + f[n - 1] * g[n - 1]))
    }
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            n_points: DEFAULT_GRID_POINTS,
        }
    }
}

/// A function on [0,1] sampled on a [`Grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    grid: Grid,
    values: Vec<f64>,
}

impl Curve {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(Error::GridMismatch(format!(
                "curve has {} values but grid has {} points",
                values.len(),
                grid.n_points()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite curve value at grid index {i}"
            )));
        }
        Ok(Curve { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.points().into_iter().map(f).collect();
        Curve::new(grid, values)
    }

    pub fn constant(grid: Grid, c: f64) -> Result<Self> {
        Curve::new(grid, vec![c; grid.n_points()])
    }

    pub fn zeros(grid: Grid) -> Self {
        Curve {
            grid,
            values: vec![0.0; grid.n_points()],
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Pointwise `self - other`.
    pub fn sub(&self, other: &Curve) -> Result<Curve> {
        same_grid(self.grid, other.grid)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Curve {
            grid: self.grid,
            values,
        })
    }

    pub fn scale(&self, c: f64) -> Curve {
        Curve {
            grid: self.grid,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    /// Squared L² norm by trapezoid quadrature.
    pub fn norm_sq(&self) -> f64 {
        self.grid.dot(&self.values, &self.values)
    }

    pub fn integral(&self) -> f64 {
        self.grid.integrate(&self.values)
    }
}

/// A function on [0,1]² sampled on the tensor product of two grids.
/// Rows index `s`, columns index `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve2D {
    grid_s: Grid,
    grid_t: Grid,
    values: DMatrix<f64>,
}

impl Curve2D {
    pub fn new(grid_s: Grid, grid_t: Grid, values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() != grid_s.n_points() || values.ncols() != grid_t.n_points() {
            return Err(Error::GridMismatch(format!(
                "surface is {}x{} but grids are {}x{}",
                values.nrows(),
                values.ncols(),
                grid_s.n_points(),
                grid_t.n_points()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite surface value".into()));
        }
        Ok(Curve2D {
            grid_s,
            grid_t,
            values,
        })
    }

    pub fn from_fn(grid_s: Grid, grid_t: Grid, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let values = DMatrix::from_fn(grid_s.n_points(), grid_t.n_points(), |i, j| {
            f(grid_s.point(i), grid_t.point(j))
        });
        Curve2D::new(grid_s, grid_t, values)
    }

    /// `f ⊗ g`, i.e. `(s,t) ↦ f(s) g(t)`.
    pub fn outer(f: &Curve, g: &Curve) -> Self {
        let values = DMatrix::from_fn(f.grid.n_points(), g.grid.n_points(), |i, j| {
            f.values[i] * g.values[j]
        });
        Curve2D {
            grid_s: f.grid,
            grid_t: g.grid,
            values,
        }
    }

    pub fn grid_s(&self) -> Grid {
        self.grid_s
    }

    pub fn grid_t(&self) -> Grid {
        self.grid_t
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn scale(&self, c: f64) -> Curve2D {
        Curve2D {
            grid_s: self.grid_s,
            grid_t: self.grid_t,
            values: &self.values * c,
        }
    }

    pub fn norm_sq(&self) -> f64 {
        inner_l2_2d_unchecked(self, self)
    }

    /// True when the matrix of values is symmetric to a relative tolerance.
    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        if self.grid_s != self.grid_t {
            return false;
        }
        let scale = self.values.amax().max(f64::MIN_POSITIVE);
        let n = self.values.nrows();
        (0..n).all(|i| {
            (0..i).all(|j| (self.values[(i, j)] - self.values[(j, i)]).abs() <= rel_tol * scale)
        })
    }
}

fn same_grid(a: Grid, b: Grid) -> Result<()> {
    if a != b {
        return Err(Error::GridMismatch(format!(
            "{} points vs {} points",
            a.n_points(),
            b.n_points()
        )));
    }
    Ok(())
}

/// Trapezoid approximation of `∫₀¹ f g`.
pub fn inner_l2(f: &Curve, g: &Curve) -> Result<f64> {
    same_grid(f.grid, g.grid)?;
    Ok(f.grid.dot(&f.values, &g.values))
}

/// Tensor-trapezoid approximation of `∫∫ f g`.
pub fn inner_l2_2d(f: &Curve2D, g: &Curve2D) -> Result<f64> {
    same_grid(f.grid_s, g.grid_s)?;
    same_grid(f.grid_t, g.grid_t)?;
    Ok(inner_l2_2d_unchecked(f, g))
}

fn inner_l2_2d_unchecked(f: &Curve2D, g: &Curve2D) -> f64 {
    let ws = f.grid_s.weights();
    let wt = f.grid_t.weights();
    let mut total = 0.0;
    for (j, wj) in wt.iter().enumerate() {
        let col: f64 = ws
            .iter()
            .enumerate()
            .map(|(i, wi)| wi * f.values[(i, j)] * g.values[(i, j)])
            .sum();
        total += wj * col;
    }
    total
}

/// Empirical covariance kernel `(1/n) Σ (Xᵢ(s) − X̄(s))(Xᵢ(t) − X̄(t))`.
///
/// The result is exactly symmetric.
pub fn empirical_covariance(sample: &[Curve]) -> Result<Curve2D> {
    let first = sample.first().ok_or(Error::EmptySample)?;
    let grid = first.grid;
    for c in sample {
        same_grid(grid, c.grid)?;
    }
    let n = sample.len();
    let p = grid.n_points();
    let mut mean = vec![0.0; p];
    for c in sample {
        for (m, v) in mean.iter_mut().zip(&c.values) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let centered = DMatrix::from_fn(n, p, |i, j| sample[i].values[j] - mean[j]);
    let mut cov = centered.tr_mul(&centered) / n as f64;
    for i in 0..p {
        for j in 0..i {
            let avg = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = avg;
            cov[(j, i)] = avg;
        }
    }
    Curve2D::new(grid, grid, cov)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    GalerkinSpline,
    Fourier,
    Cosine,
}

/// A finite family of curves on a common grid.
#[derive(Debug, Clone)]
pub struct BasisSet {
    grid: Grid,
    kind: BasisKind,
    functions: Vec<Curve>,
    second_derivatives: Option<Vec<Curve>>,
}

impl BasisSet {
    pub fn new(
        grid: Grid,
        kind: BasisKind,
        functions: Vec<Curve>,
        second_derivatives: Option<Vec<Curve>>,
    ) -> Result<Self> {
        for f in &functions {
            same_grid(grid, f.grid)?;
        }
        if let Some(d2) = &second_derivatives {
            if d2.len() != functions.len() {
                return Err(Error::InvalidInput(format!(
                    "{} basis functions but {} second derivatives",
                    functions.len(),
                    d2.len()
                )));
            }
            for f in d2 {
                same_grid(grid, f.grid)?;
            }
        }
        Ok(BasisSet {
            grid,
            kind,
            functions,
            second_derivatives,
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn functions(&self) -> &[Curve] {
        &self.functions
    }

    pub fn second_derivatives(&self) -> Option<&[Curve]> {
        self.second_derivatives.as_deref()
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }
}

/// Cosine basis function `η_ℓ` (1-based): `η₁ ≡ 1`, `η_ℓ(t) = √2 cos((ℓ−1)πt)`.
pub fn cosine_fn(ell: usize, t: f64) -> f64 {
    assert!(ell >= 1, "cosine basis is 1-based");
    if ell == 1 {
        1.0
    } else {
        SQRT_2 * ((ell - 1) as f64 * PI * t).cos()
    }
}

/// The first `count` cosine basis functions with their second derivatives.
pub fn cosine_basis(grid: Grid, count: usize) -> BasisSet {
    let functions = (1..=count)
        .map(|ell| Curve::from_fn(grid, |t| cosine_fn(ell, t)).expect("finite"))
        .collect();
    let second = (1..=count)
        .map(|ell| {
            let w = (ell - 1) as f64 * PI;
            Curve::from_fn(grid, |t| -w * w * cosine_fn(ell, t)).expect("finite")
        })
        .collect();
    BasisSet {
        grid,
        kind: BasisKind::Cosine,
        functions,
        second_derivatives: Some(second),
    }
}
