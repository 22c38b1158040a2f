//! Simultaneous diagonalisation of the covariance form and the roughness
//! penalty.
//!
//! For a covariance kernel `C` the pairs `(ρ_k, φ_k)` satisfy, in weak form,
//!
//! ```text
//!     J(φ_k, w) = ρ_k V(φ_k, w)   for all w,
//!     V(φ, ψ) = ∬ C(s,t) φ(s) ψ(t),   J(φ, ψ) = ∫ φ'' ψ''
//! ```
//!
//! and the functional-response variant replaces `J` by
//! `J_ℓ(x,w) = ∫x''w'' + 2ω²∫x'w' + ω⁴∫xw` with `ω = (ℓ−1)π`.
//! Both are discretised by Galerkin projection onto cubic B-splines and solved
//! as a symmetric generalized eigenproblem. No boundary rows are imposed; the
//! weak form carries the natural boundary conditions.

mod spline;

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::funcspace::{cosine_basis, BasisKind, BasisSet, Curve, Curve2D, Grid};

pub use spline::SplineSpace;

/// Order of the Sobolev penalty. Only `m = 2` is implemented.
pub const SOBOLEV_ORDER: usize = 2;

pub const DEFAULT_GALERKIN_DIM: usize = 40;

/// Covariance-spectrum modes below this fraction of `trace(V)` are discarded.
const V_FILTER: f64 = 1e-10;

/// Penalty eigenvalues below this fraction of the largest are treated as the
/// penalty null space (linear functions when ℓ = 1).
const J_NULL: f64 = 1e-10;

/// Minimum gap between the truncation level and the Galerkin dimension.
const TRUNCATION_MARGIN: usize = 4;

/// Default truncation level `min(20, ⌊n/4⌋)` for a sample of size `n`.
pub fn default_truncation(n: usize) -> usize {
    (n / 4).min(20)
}

/// Truncated eigen-system `{(ρ̂_k, φ̂_k)}` for one penalty form.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    space: SplineSpace,
    grid: Grid,
    ell: usize,
    coefficients: DMatrix<f64>,
    rhos: Vec<f64>,
    basis: Vec<Curve>,
    second_derivatives: Vec<Curve>,
    metric: Curve2D,
}

impl EigenSystem {
    pub fn r(&self) -> usize {
        self.rhos.len()
    }

    /// Eigenvalues in ascending order.
    pub fn rhos(&self) -> &[f64] {
        &self.rhos
    }

    pub fn basis(&self) -> &[Curve] {
        &self.basis
    }

    pub fn second_derivatives(&self) -> &[Curve] {
        &self.second_derivatives
    }

    pub fn basis_set(&self) -> BasisSet {
        BasisSet::new(
            self.grid,
            BasisKind::GalerkinSpline,
            self.basis.clone(),
            Some(self.second_derivatives.clone()),
        )
        .expect("basis curves share the grid")
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// The covariance kernel that defines the `V` form.
    pub fn metric(&self) -> &Curve2D {
        &self.metric
    }

    pub fn sobolev_order(&self) -> usize {
        SOBOLEV_ORDER
    }

    /// Cosine frequency index of the penalty (1 for the scalar problem).
    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn space(&self) -> &SplineSpace {
        &self.space
    }

    /// Spline coefficients, one column per eigenfunction.
    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coefficients
    }

    /// `deriv`-th derivative (0..=2) of `φ̂_k` at an arbitrary `x ∈ [0,1]`.
    pub fn eval(&self, k: usize, x: f64, deriv: usize) -> f64 {
        let col: Vec<f64> = self.coefficients.column(k).iter().copied().collect();
        self.space.eval(&col, x, deriv)
    }

    /// Write eigenvalues, spline coefficients and grid values as one CSV.
    /// Columns: `k, rho, ell, c1..c_dim, s=<coord>...`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::new();
        let mut header = vec!["k".to_string(), "rho".into(), "ell".into()];
        header.extend((1..=self.space.dim()).map(|j| format!("c{j}")));
        header.extend(self.grid.points().iter().map(|s| format!("s={s:.16e}")));
        writeln!(out, "{}", header.join(",")).expect("vec write");
        for k in 0..self.r() {
            let mut row = vec![(k + 1).to_string(), format!("{:.16e}", self.rhos[k]), self.ell.to_string()];
            row.extend(self.coefficients.column(k).iter().map(|c| format!("{c:.16e}")));
            row.extend(self.basis[k].values().iter().map(|v| format!("{v:.16e}")));
            writeln!(out, "{}", row.join(",")).expect("vec write");
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Read a bundle written by [`EigenSystem::write_csv`]. The covariance
    /// kernel is not stored in the bundle and must be supplied.
    pub fn read_csv(path: impl AsRef<Path>, metric: Curve2D) -> Result<Self> {
        let path = path.as_ref();
        let bad = |row: usize, message: String| Error::Csv {
            path: path.to_path_buf(),
            row,
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().ok_or_else(|| bad(0, "empty bundle".into()))?.split(',').collect();
        let dim = header.iter().filter(|h| h.starts_with('c')).count();
        let npts = header.iter().filter(|h| h.starts_with("s=")).count();
        if header.len() != 3 + dim + npts || npts != metric.grid_s().n_points() {
            return Err(bad(0, "header does not match the covariance grid".into()));
        }
        let mut rhos = Vec::new();
        let mut cols = Vec::new();
        let mut ell = 1;
        for (i, line) in lines.enumerate() {
            let fields: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| bad(i + 1, e.to_string()))?;
            if fields.len() != header.len() {
                return Err(bad(i + 1, format!("ragged row: {} fields", fields.len())));
            }
            rhos.push(fields[1]);
            ell = fields[2] as usize;
            cols.push(fields[3..3 + dim].to_vec());
        }
        let coefficients = DMatrix::from_fn(dim, cols.len(), |i, k| cols[k][i]);
        Ok(build_system(SplineSpace::new(dim), metric, ell, coefficients, rhos))
    }
}

/// Per-frequency eigen-systems for the functional-response problem together
/// with the cosine factors `η_ℓ`.
#[derive(Debug, Clone)]
pub struct TensorEigenSystem {
    systems: Vec<EigenSystem>,
    cosines: BasisSet,
}

impl TensorEigenSystem {
    pub fn r(&self) -> usize {
        self.systems.len()
    }

    /// System for frequency `ell` (1-based).
    pub fn system(&self, ell: usize) -> &EigenSystem {
        &self.systems[ell - 1]
    }

    pub fn systems(&self) -> &[EigenSystem] {
        &self.systems
    }

    pub fn cosines(&self) -> &BasisSet {
        &self.cosines
    }

    pub fn grid(&self) -> Grid {
        self.cosines.grid()
    }
}

fn validate(cov: &Curve2D, r: usize, galerkin_dim: usize) -> Result<()> {
    if cov.grid_s() != cov.grid_t() {
        return Err(Error::GridMismatch("covariance kernel must live on a square grid".into()));
    }
    if !cov.is_symmetric(1e-12) {
        return Err(Error::InvalidInput("covariance kernel is not symmetric".into()));
    }
    if galerkin_dim < 2 * TRUNCATION_MARGIN {
        return Err(Error::InvalidInput(format!(
            "Galerkin dimension must be at least {}",
            2 * TRUNCATION_MARGIN
        )));
    }
    if r == 0 || r + TRUNCATION_MARGIN > galerkin_dim {
        return Err(Error::InvalidInput(format!(
            "truncation r={r} must be in 1..={} for Galerkin dimension {galerkin_dim}",
            galerkin_dim - TRUNCATION_MARGIN
        )));
    }
    Ok(())
}

/// Galerkin matrix `V_ij = ∬ C ψ_i ψ_j` by tensor trapezoid on the kernel grid.
fn covariance_form(space: &SplineSpace, cov: &Curve2D) -> DMatrix<f64> {
    let grid = cov.grid_s();
    let w = grid.weights();
    let mut psi = space.eval_matrix(&grid.points(), 0);
    for (i, wi) in w.iter().enumerate() {
        psi.row_mut(i).scale_mut(*wi);
    }
    let v = psi.transpose() * cov.values() * &psi;
    symmetrize(v)
}

fn penalty_form(space: &SplineSpace, ell: usize) -> DMatrix<f64> {
    let j2 = space.derivative_gram(2);
    if ell == 1 {
        return symmetrize(j2);
    }
    let omega = (ell - 1) as f64 * PI;
    let j1 = space.derivative_gram(1);
    let j0 = space.derivative_gram(0);
    symmetrize(j2 + j1 * (2.0 * omega * omega) + j0 * omega.powi(4))
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Solve `J b = ρ V b` for the `r` smallest finite ρ with `bᵀVb = 1`.
///
/// `V` is split along its eigenvectors at `V_FILTER·trace(V)`. The weak-form
/// rows belonging to the discarded directions carry no V mass, so those
/// coordinates are eliminated through `J_nn b_n = −J_nk b_k` (a Schur
/// complement). In the reduced problem the penalty null space gives the
/// `ρ = 0` modes exactly; on its V-orthogonal complement the penalty is
/// positive definite and the problem is solved in the inverted form
/// `V b = μ J b`, `ρ = 1/μ`, which keeps small eigenvalues relatively
/// accurate.
fn solve_pencil(j: &DMatrix<f64>, v: &DMatrix<f64>, r: usize) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let dim = v.nrows();
    let veig = SymmetricEigen::new(v.clone());
    let trace: f64 = veig.eigenvalues.iter().sum();
    if trace.is_nan() || trace <= 0.0 {
        return Err(Error::RankDeficient(
            "covariance form is zero; a larger sample is needed".into(),
        ));
    }
    let keep: Vec<usize> = (0..dim).filter(|&i| veig.eigenvalues[i] > V_FILTER * trace).collect();
    if keep.len() < r {
        return Err(Error::RankDeficient(format!(
            "covariance form has numerical rank {} < r={r}; use a larger sample or smaller r",
            keep.len()
        )));
    }
    let u = veig.eigenvectors.select_columns(&keep);
    let d: Vec<f64> = keep.iter().map(|&i| veig.eigenvalues[i]).collect();
    let k = keep.len();
    let dmat = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(d.clone()));

    let dropped: Vec<usize> = (0..dim).filter(|i| !keep.contains(i)).collect();
    let un = veig.eigenvectors.select_columns(&dropped);
    let mut jr = symmetrize(u.transpose() * j * &u);
    let mut lift = u.clone();
    if !dropped.is_empty() {
        let jnn = symmetrize(un.transpose() * j * &un);
        let jnk = un.transpose() * j * &u;
        let neig = SymmetricEigen::new(jnn);
        let nmax = neig.eigenvalues.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        // J_nn⁺ J_nk; directions in ker J_nn are penalty-free and V-null,
        // and J_nk has no component along them.
        let mut proj = neig.eigenvectors.transpose() * &jnk;
        for (i, lam) in neig.eigenvalues.iter().enumerate() {
            let scale = if *lam > J_NULL * nmax { -1.0 / lam } else { 0.0 };
            proj.row_mut(i).scale_mut(scale);
        }
        let elim = &neig.eigenvectors * proj;
        jr = symmetrize(&jr + jnk.transpose() * &elim);
        lift += &un * &elim;
    }
    let jeig = SymmetricEigen::new(jr);
    let jmax = jeig.eigenvalues.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let (null_idx, range_idx): (Vec<usize>, Vec<usize>) =
        (0..k).partition(|&i| jeig.eigenvalues[i] <= J_NULL * jmax);

    let mut pairs: Vec<(f64, nalgebra::DVector<f64>)> = Vec::with_capacity(k);

    let nmat = jeig.eigenvectors.select_columns(&null_idx);
    let rmat = jeig.eigenvectors.select_columns(&range_idx);
    let mut complement = rmat.clone();
    if !null_idx.is_empty() {
        let g = symmetrize(nmat.transpose() * &dmat * &nmat);
        let geig = SymmetricEigen::new(g.clone());
        for i in 0..null_idx.len() {
            let gamma = geig.eigenvalues[i];
            if gamma <= 0.0 {
                return Err(Error::Numerical("null-space covariance form is not positive".into()));
            }
            let c = &nmat * geig.eigenvectors.column(i) / gamma.sqrt();
            pairs.push((0.0, c));
        }
        // V-orthogonal projection of the penalty range off the null space.
        let ginv = g
            .cholesky()
            .ok_or_else(|| Error::Numerical("null-space covariance form is singular".into()))?;
        let coupling = nmat.transpose() * &dmat * &rmat;
        complement = &rmat - &nmat * ginv.solve(&coupling);
    }

    if !range_idx.is_empty() {
        let inv_sqrt: Vec<f64> = range_idx.iter().map(|&i| 1.0 / jeig.eigenvalues[i].sqrt()).collect();
        let mut scaled = complement.clone();
        for (col, s) in inv_sqrt.iter().enumerate() {
            scaled.column_mut(col).scale_mut(*s);
        }
        let m = symmetrize(scaled.transpose() * &dmat * &scaled);
        let meig = SymmetricEigen::new(m);
        for i in 0..range_idx.len() {
            let mu = meig.eigenvalues[i];
            if mu > 0.0 {
                let c = &scaled * meig.eigenvectors.column(i) / mu.sqrt();
                pairs.push((1.0 / mu, c));
            }
        }
    }

    if pairs.len() < r {
        return Err(Error::RankDeficient(format!(
            "only {} finite eigenpairs; use a larger sample or smaller r={r}",
            pairs.len()
        )));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.truncate(r);
    let rhos = pairs.iter().map(|p| p.0).collect();
    let coeffs = DMatrix::from_fn(dim, r, |_, _| 0.0);
    let mut coeffs = coeffs;
    for (col, (_, c)) in pairs.iter().enumerate() {
        coeffs.set_column(col, &(&lift * c));
    }
    Ok((coeffs, rhos))
}

fn build_system(
    space: SplineSpace,
    metric: Curve2D,
    ell: usize,
    coefficients: DMatrix<f64>,
    rhos: Vec<f64>,
) -> EigenSystem {
    let grid = metric.grid_s();
    let pts = grid.points();
    let vals = space.eval_matrix(&pts, 0) * &coefficients;
    let d2 = space.eval_matrix(&pts, 2) * &coefficients;
    let to_curves = |m: &DMatrix<f64>| {
        (0..m.ncols())
            .map(|k| Curve::new(grid, m.column(k).iter().copied().collect()).expect("finite spline values"))
            .collect::<Vec<_>>()
    };
    EigenSystem {
        basis: to_curves(&vals),
        second_derivatives: to_curves(&d2),
        space,
        grid,
        ell,
        coefficients,
        rhos,
        metric,
    }
}

/// Flip signs so that `∫φ̂_k > 0`; when the integral vanishes, the first
/// non-negligible spline coefficient is made positive.
fn fix_signs(space: &SplineSpace, grid: Grid, coeffs: &mut DMatrix<f64>) {
    let w = grid.weights();
    let psi = space.eval_matrix(&grid.points(), 0);
    for k in 0..coeffs.ncols() {
        let vals = &psi * coeffs.column(k);
        let integral: f64 = vals.iter().zip(&w).map(|(v, w)| v * w).sum();
        let norm = vals.iter().zip(&w).map(|(v, w)| v * v * w).sum::<f64>().sqrt();
        let flip = if integral.abs() > 1e-8 * norm {
            integral < 0.0
        } else {
            let amax = coeffs.column(k).amax();
            coeffs
                .column(k)
                .iter()
                .find(|c| c.abs() > 1e-8 * amax)
                .is_some_and(|c| *c < 0.0)
        };
        if flip {
            coeffs.column_mut(k).neg_mut();
        }
    }
}

fn solve_one(cov: &Curve2D, r: usize, space: &SplineSpace, v: &DMatrix<f64>, ell: usize) -> Result<EigenSystem> {
    let j = penalty_form(space, ell);
    let (mut coeffs, rhos) = solve_pencil(&j, v, r).map_err(|e| match e {
        Error::RankDeficient(m) if ell > 1 => Error::RankDeficient(format!("frequency ℓ={ell}: {m}")),
        other => other,
    })?;
    fix_signs(space, cov.grid_s(), &mut coeffs);
    Ok(build_system(space.clone(), cov.clone(), ell, coeffs, rhos))
}

/// Eigen-system of `ρ ∫ C(s,t) φ(t) dt = φ⁽⁴⁾(s)` with natural boundary
/// conditions, truncated to the `r` smallest eigenvalues.
pub fn solve_eigen_scalar(cov: &Curve2D, r: usize, galerkin_dim: usize) -> Result<EigenSystem> {
    solve_eigen_scalar_with_order(cov, r, galerkin_dim, SOBOLEV_ORDER)
}

pub fn solve_eigen_scalar_with_order(
    cov: &Curve2D,
    r: usize,
    galerkin_dim: usize,
    sobolev_order: usize,
) -> Result<EigenSystem> {
    if sobolev_order != SOBOLEV_ORDER {
        return Err(Error::InvalidInput(format!(
            "only Sobolev order {SOBOLEV_ORDER} is supported, got {sobolev_order}"
        )));
    }
    validate(cov, r, galerkin_dim)?;
    let space = SplineSpace::new(galerkin_dim);
    let v = covariance_form(&space, cov);
    solve_one(cov, r, &space, &v, 1)
}

/// Per-frequency eigen-systems for `ℓ = 1..=r`.
pub fn solve_eigen_functional(cov: &Curve2D, r: usize, galerkin_dim: usize) -> Result<TensorEigenSystem> {
    validate(cov, r, galerkin_dim)?;
    let space = SplineSpace::new(galerkin_dim);
    let v = covariance_form(&space, cov);
    let systems = (1..=r)
        .into_par_iter()
        .map(|ell| solve_one(cov, r, &space, &v, ell))
        .collect::<Result<Vec<_>>>()?;
    Ok(TensorEigenSystem {
        systems,
        cosines: cosine_basis(cov.grid_s(), r),
    })
}

/// `Φ̂_ij = ⟨φ̂_i, φ̂_j⟩_{L²}` by trapezoid quadrature on the grid.
pub fn gram_l2(sys: &EigenSystem) -> DMatrix<f64> {
    let r = sys.r();
    let grid = sys.grid;
    let mut g = DMatrix::zeros(r, r);
    for i in 0..r {
        for j in 0..=i {
            let v = grid.dot(sys.basis[i].values(), sys.basis[j].values());
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}
