//! Sequential ridge estimation of the slope in the truncated eigenbasis.
//!
//! For each sample fraction `ν_q` the coefficients solve
//! `(Ω_qᵀΩ_q + n_q λ Λ) b_q = Ω_qᵀ Y_q` using only the first `n_q`
//! observations.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigensys::{gram_l2, EigenSystem, TensorEigenSystem};
use crate::error::{Error, Result};
use crate::funcspace::{Curve, Curve2D};

/// Above this condition estimate the Cholesky solve is replaced by an
/// eigen-decomposition pseudo-inverse.
const MAX_CONDITION: f64 = 1e14;

/// Sample fractions `ν_q = ν₀ + q(1−ν₀)/Q`, `q = 1..=Q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FractionScheme {
    nu0: f64,
    q: usize,
}

impl FractionScheme {
    pub fn new(nu0: f64, q: usize) -> Result<Self> {
        if !(nu0 > 0.0 && nu0 < 1.0) {
            return Err(Error::InvalidInput(format!("nu0 must lie in (0,1), got {nu0}")));
        }
        if q == 0 {
            return Err(Error::InvalidInput("Q must be positive".into()));
        }
        Ok(FractionScheme { nu0, q })
    }

    pub fn nu0(&self) -> f64 {
        self.nu0
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// `ν_1..ν_Q`, with `ν_Q` exactly 1.
    pub fn fractions(&self) -> Vec<f64> {
        (1..=self.q)
            .map(|q| {
                if q == self.q {
                    1.0
                } else {
                    self.nu0 + q as f64 * (1.0 - self.nu0) / self.q as f64
                }
            })
            .collect()
    }

    /// Subsample sizes `n_q = ⌊n ν_q⌋` (a 1e-9 guard absorbs rounding in
    /// products that are mathematically integers).
    pub fn sizes(&self, n: usize) -> Vec<usize> {
        self.fractions()
            .iter()
            .map(|nu| ((n as f64 * nu + 1e-9).floor() as usize).min(n))
            .collect()
    }

    /// Check that the smallest subsample can determine `r` coefficients.
    pub fn check(&self, n: usize, r: usize) -> Result<()> {
        let n1 = self.sizes(n)[0];
        if n1 < r + 1 {
            return Err(Error::InvalidInput(format!(
                "first fraction uses {n1} observations but r={r} needs at least {}",
                r + 1
            )));
        }
        Ok(())
    }
}

impl Default for FractionScheme {
    fn default() -> Self {
        FractionScheme { nu0: 0.5, q: 25 }
    }
}

/// Regression design in the eigenbasis.
#[derive(Debug, Clone)]
pub struct DesignScalar {
    omega: DMatrix<f64>,
    penalty: DVector<f64>,
    y: DVector<f64>,
}

impl DesignScalar {
    pub fn new(omega: DMatrix<f64>, penalty: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if omega.nrows() != y.len() || omega.ncols() != penalty.len() {
            return Err(Error::InvalidInput(format!(
                "design is {}x{}, with {} responses and {} penalty weights",
                omega.nrows(),
                omega.ncols(),
                y.len(),
                penalty.len()
            )));
        }
        if omega.iter().chain(&y).chain(&penalty).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("design contains non-finite values".into()));
        }
        if penalty.iter().any(|p| *p < 0.0) {
            return Err(Error::InvalidInput("penalty weights must be non-negative".into()));
        }
        Ok(DesignScalar {
            omega,
            penalty: DVector::from_vec(penalty),
            y: DVector::from_vec(y),
        })
    }

    pub fn n(&self) -> usize {
        self.omega.nrows()
    }

    pub fn r(&self) -> usize {
        self.omega.ncols()
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    /// Diagonal of `Λ`.
    pub fn penalty(&self) -> &DVector<f64> {
        &self.penalty
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }
}

fn project_rows(x: &[Curve], basis: &[Curve]) -> Result<DMatrix<f64>> {
    let grid = basis.first().map(|b| b.grid());
    for (i, xi) in x.iter().enumerate() {
        if Some(xi.grid()) != grid {
            return Err(Error::GridMismatch(format!(
                "predictor {i} has {} grid points, basis has {}",
                xi.grid().n_points(),
                grid.map_or(0, |g| g.n_points())
            )));
        }
    }
    let grid = grid.ok_or_else(|| Error::InvalidInput("empty basis".into()))?;
    Ok(DMatrix::from_fn(x.len(), basis.len(), |i, k| grid.dot(x[i].values(), basis[k].values())))
}

fn clamped_rhos(sys: &EigenSystem) -> Vec<f64> {
    sys.rhos().iter().map(|r| r.max(0.0)).collect()
}

/// `ω_ik = ∫ X_i φ̂_k` by quadrature, `Λ = diag(ρ̂)`.
pub fn build_design_scalar(x: &[Curve], y: &[f64], sys: &EigenSystem) -> Result<DesignScalar> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!("{} predictors but {} responses", x.len(), y.len())));
    }
    if x.is_empty() {
        return Err(Error::EmptySample);
    }
    DesignScalar::new(project_rows(x, sys.basis())?, clamped_rhos(sys), y.to_vec())
}

/// One design block per cosine frequency `ℓ`, with responses `⟨Y_i, η_ℓ⟩`.
#[derive(Debug, Clone)]
pub struct DesignFunctional {
    blocks: Vec<DesignScalar>,
}

impl DesignFunctional {
    pub fn new(blocks: Vec<DesignScalar>) -> Result<Self> {
        let n = blocks.first().map(|b| b.n()).ok_or(Error::EmptySample)?;
        if blocks.iter().any(|b| b.n() != n) {
            return Err(Error::InvalidInput("design blocks differ in sample size".into()));
        }
        Ok(DesignFunctional { blocks })
    }

    pub fn blocks(&self) -> &[DesignScalar] {
        &self.blocks
    }

    pub fn n(&self) -> usize {
        self.blocks[0].n()
    }
}

pub fn build_design_functional(x: &[Curve], y: &[Curve], tsys: &TensorEigenSystem) -> Result<DesignFunctional> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!("{} predictors but {} responses", x.len(), y.len())));
    }
    if x.is_empty() {
        return Err(Error::EmptySample);
    }
    let responses = project_rows(y, tsys.cosines().functions())?;
    let blocks = tsys
        .systems()
        .iter()
        .enumerate()
        .map(|(l, sys)| {
            let omega = project_rows(x, sys.basis())?;
            DesignScalar::new(omega, clamped_rhos(sys), responses.column(l).iter().copied().collect())
        })
        .collect::<Result<Vec<_>>>()?;
    DesignFunctional::new(blocks)
}

/// Nested cross-products `Ω_qᵀΩ_q`, `Ω_qᵀY_q` for every fraction, built by
/// accumulating rows in order so fit `q` depends only on the first `n_q` rows.
struct CrossProducts {
    sizes: Vec<usize>,
    gram: Vec<DMatrix<f64>>,
    rhs: Vec<DVector<f64>>,
}

fn cross_products(design: &DesignScalar, sizes: &[usize]) -> CrossProducts {
    let r = design.r();
    let mut g = DMatrix::zeros(r, r);
    let mut c = DVector::zeros(r);
    let mut start = 0;
    let mut gram = Vec::with_capacity(sizes.len());
    let mut rhs = Vec::with_capacity(sizes.len());
    for &nq in sizes {
        if nq > start {
            let rows = design.omega.rows(start, nq - start);
            g += rows.transpose() * rows;
            c += rows.transpose() * design.y.rows(start, nq - start);
            start = nq;
        }
        gram.push(g.clone());
        rhs.push(c.clone());
    }
    CrossProducts {
        sizes: sizes.to_vec(),
        gram,
        rhs,
    }
}

/// Solve `A x = B` for symmetric PSD `A`; Cholesky when well conditioned,
/// otherwise a truncated eigen pseudo-inverse.
fn spd_solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        let diag = ch.l_dirty().diagonal();
        let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(*d), hi.max(*d)));
        if lo > 0.0 && (hi / lo).powi(2) <= MAX_CONDITION {
            return Some(ch.solve(b));
        }
    }
    let eig = SymmetricEigen::new(a.clone());
    let max = eig.eigenvalues.amax();
    if max == 0.0 || !max.is_finite() {
        return None;
    }
    let mut proj = eig.eigenvectors.transpose() * b;
    for (i, lam) in eig.eigenvalues.iter().enumerate() {
        let s = if *lam > max / MAX_CONDITION { 1.0 / lam } else { 0.0 };
        proj.row_mut(i).scale_mut(s);
    }
    Some(&eig.eigenvectors * proj)
}

/// Coefficients of fraction `q` (0-based) together with `tr(A⁻¹Ω_qᵀΩ_q)`.
fn solve_fraction(
    design: &DesignScalar,
    cp: &CrossProducts,
    q: usize,
    lambda: f64,
    want_trace: bool,
) -> Result<(DVector<f64>, f64)> {
    let nq = cp.sizes[q] as f64;
    let mut a = cp.gram[q].clone();
    for k in 0..design.r() {
        a[(k, k)] += nq * lambda * design.penalty[k];
    }
    let r = design.r();
    let mut rhs = DMatrix::zeros(r, if want_trace { r + 1 } else { 1 });
    rhs.set_column(0, &cp.rhs[q]);
    if want_trace {
        rhs.columns_mut(1, r).copy_from(&cp.gram[q]);
    }
    let sol = spd_solve(&a, &rhs).ok_or_else(|| Error::Singular {
        q: q + 1,
        message: "penalized normal equations are singular".into(),
    })?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular {
            q: q + 1,
            message: "non-finite solution".into(),
        });
    }
    let trace = if want_trace { (0..r).map(|k| sol[(k, k + 1)]).sum() } else { 0.0 };
    Ok((sol.column(0).into_owned(), trace))
}

/// Coefficient vectors `b̂_q` for all fractions at one λ.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequentialFit {
    coeffs: Vec<DVector<f64>>,
    lambda: f64,
    scheme: FractionScheme,
    sizes: Vec<usize>,
    gram: DMatrix<f64>,
}

impl SequentialFit {
    /// Assemble a fit from precomputed coefficients, e.g. for testing.
    pub fn from_parts(coeffs: Vec<DVector<f64>>, lambda: f64, scheme: FractionScheme, sizes: Vec<usize>, gram: DMatrix<f64>) -> Result<Self> {
        if coeffs.len() != scheme.q() || sizes.len() != scheme.q() {
            return Err(Error::InvalidInput(format!("expected {} fractions", scheme.q())));
        }
        if coeffs.iter().any(|c| c.len() != gram.nrows()) || !gram.is_square() {
            return Err(Error::InvalidInput("coefficient length does not match the Gram matrix".into()));
        }
        Ok(SequentialFit { coeffs, lambda, scheme, sizes, gram })
    }

    /// `b̂_1..b̂_Q`.
    pub fn coeffs(&self) -> &[DVector<f64>] {
        &self.coeffs
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn scheme(&self) -> FractionScheme {
        self.scheme
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// L² Gram matrix `Φ̂` of the eigenbasis.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// Coefficients per fraction as CSV: `q,nu,n_q,b1..b_r`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::new();
        let r = self.gram.nrows();
        let mut header = vec!["q".to_string(), "nu".into(), "n_q".into()];
        header.extend((1..=r).map(|k| format!("b{k}")));
        writeln!(out, "{}", header.join(",")).expect("vec write");
        for (q, (b, nu)) in self.coeffs.iter().zip(self.scheme.fractions()).enumerate() {
            let mut row = vec![(q + 1).to_string(), format!("{nu:.16e}"), self.sizes[q].to_string()];
            row.extend(b.iter().map(|v| format!("{v:.16e}")));
            writeln!(out, "{}", row.join(",")).expect("vec write");
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!("lambda must be finite and non-negative, got {lambda}")));
    }
    Ok(())
}

fn coefficient_path(design: &DesignScalar, lambda: f64, scheme: FractionScheme) -> Result<(Vec<DVector<f64>>, Vec<usize>)> {
    check_lambda(lambda)?;
    let sizes = scheme.sizes(design.n());
    if sizes[0] == 0 {
        return Err(Error::InvalidInput("first fraction contains no observations".into()));
    }
    let cp = cross_products(design, &sizes);
    let coeffs = (0..scheme.q())
        .into_par_iter()
        .map(|q| solve_fraction(design, &cp, q, lambda, false).map(|s| s.0))
        .collect::<Result<Vec<_>>>()?;
    Ok((coeffs, sizes))
}

pub fn ridge_path_scalar(
    design: &DesignScalar,
    lambda: f64,
    scheme: FractionScheme,
    gram: &DMatrix<f64>,
) -> Result<SequentialFit> {
    if gram.nrows() != design.r() || !gram.is_square() {
        return Err(Error::InvalidInput("Gram matrix does not match the design".into()));
    }
    let (coeffs, sizes) = coefficient_path(design, lambda, scheme)?;
    Ok(SequentialFit {
        coeffs,
        lambda,
        scheme,
        sizes,
        gram: gram.clone(),
    })
}

/// 30 log-spaced values spanning `[1e-8, 1e2] / n`.
pub fn default_lambda_grid(n: usize) -> Vec<f64> {
    let (lo, hi) = (-8.0f64, 2.0f64);
    let m = 30;
    (0..m)
        .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (m - 1) as f64) / n.max(1) as f64)
        .collect()
}

/// Result of a GCV search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GcvResult {
    pub lambda: f64,
    pub grid: Vec<f64>,
    /// Scores aligned with `grid`; `+∞` where some fraction has `tr/n_q = 1`.
    pub scores: Vec<f64>,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("lambda grid is empty".into()));
    }
    for l in grid {
        check_lambda(*l)?;
    }
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidInput("lambda grid must be sorted ascending".into()));
    }
    Ok(())
}

fn argmin(grid: &[f64], scores: Vec<f64>) -> Result<GcvResult> {
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        if s.is_finite() && best.is_none_or(|b| *s < scores[b]) {
            best = Some(i);
        }
    }
    let best = best.ok_or_else(|| Error::Numerical("GCV score is infinite for every lambda".into()))?;
    Ok(GcvResult {
        lambda: grid[best],
        grid: grid.to_vec(),
        scores,
    })
}

/// Residual sum of squares and hat-matrix trace of every fraction at `lambda`.
fn fraction_terms(design: &DesignScalar, cp: &CrossProducts, lambda: f64) -> Result<Vec<(f64, f64)>> {
    (0..cp.sizes.len())
        .map(|q| {
            let (b, trace) = solve_fraction(design, cp, q, lambda, true)?;
            let nq = cp.sizes[q];
            let fitted = design.omega.rows(0, nq) * &b;
            let rss = (fitted - design.y.rows(0, nq)).norm_squared();
            Ok((rss, trace))
        })
        .collect()
}

/// `+∞` once any fraction reaches `tr/n_q ≥ 1`: past the pole the score
/// falls again as λ → 0 and would select an interpolating fit. Only the
/// functional problem, whose traces are summed over ℓ, can get there.
fn gcv_score(sizes: &[usize], terms: &[(f64, f64)]) -> f64 {
    let mut total = 0.0;
    for (nq, (rss, trace)) in sizes.iter().zip(terms) {
        let nq = *nq as f64;
        if trace / nq >= 1.0 {
            return f64::INFINITY;
        }
        let denom = (1.0 - trace / nq).powi(2);
        total += rss / nq / denom;
    }
    total
}

/// Residual sum of squares and hat-matrix trace `tr{(Ω_qᵀΩ_q + n_qλΛ)⁻¹Ω_qᵀΩ_q}`
/// for every fraction at one λ.
pub fn hat_terms(design: &DesignScalar, scheme: FractionScheme, lambda: f64) -> Result<Vec<(f64, f64)>> {
    check_lambda(lambda)?;
    let sizes = scheme.sizes(design.n());
    fraction_terms(design, &cross_products(design, &sizes), lambda)
}

/// Modified GCV: `Σ_q n_q⁻¹ RSS_q / (1 − tr H_q / n_q)²`, minimized over
/// the grid (ties go to the smaller λ).
pub fn gcv_select_scalar(design: &DesignScalar, scheme: FractionScheme, lambda_grid: &[f64]) -> Result<GcvResult> {
    check_grid(lambda_grid)?;
    let sizes = scheme.sizes(design.n());
    let cp = cross_products(design, &sizes);
    let scores = lambda_grid
        .par_iter()
        .map(|&l| fraction_terms(design, &cp, l).map(|t| gcv_score(&sizes, &t)))
        .collect::<Result<Vec<_>>>()?;
    argmin(lambda_grid, scores)
}

/// Coefficients `b̂_ℓ^{(q)}` for all fractions and frequencies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequentialFitFunctional {
    /// Indexed `[q][ℓ]`.
    coeffs: Vec<Vec<DVector<f64>>>,
    lambda: f64,
    scheme: FractionScheme,
    sizes: Vec<usize>,
    grams: Vec<DMatrix<f64>>,
}

impl SequentialFitFunctional {
    pub fn from_parts(
        coeffs: Vec<Vec<DVector<f64>>>,
        lambda: f64,
        scheme: FractionScheme,
        sizes: Vec<usize>,
        grams: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        if coeffs.len() != scheme.q() || sizes.len() != scheme.q() {
            return Err(Error::InvalidInput(format!("expected {} fractions", scheme.q())));
        }
        if coeffs.iter().any(|c| c.len() != grams.len()) {
            return Err(Error::InvalidInput("one coefficient vector per frequency expected".into()));
        }
        Ok(SequentialFitFunctional {
            coeffs,
            lambda,
            scheme,
            sizes,
            grams,
        })
    }

    /// `b̂_ℓ^{(q)}` with 0-based `q` and `ℓ`.
    pub fn coeff(&self, q: usize, l: usize) -> &DVector<f64> {
        &self.coeffs[q][l]
    }

    pub fn coeffs(&self) -> &[Vec<DVector<f64>>] {
        &self.coeffs
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn scheme(&self) -> FractionScheme {
        self.scheme
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Per-frequency L² Gram matrices of the `x̂_{·ℓ}` bases.
    pub fn grams(&self) -> &[DMatrix<f64>] {
        &self.grams
    }
}

/// The ℓ-blocks of the objective separate, so each is solved on its own.
pub fn ridge_path_functional(
    designs: &DesignFunctional,
    lambda: f64,
    scheme: FractionScheme,
    grams: &[DMatrix<f64>],
) -> Result<SequentialFitFunctional> {
    if grams.len() != designs.blocks.len() {
        return Err(Error::InvalidInput("one Gram matrix per frequency expected".into()));
    }
    let per_block = designs
        .blocks
        .par_iter()
        .map(|d| coefficient_path(d, lambda, scheme).map(|c| c.0))
        .collect::<Result<Vec<_>>>()?;
    let coeffs = (0..scheme.q())
        .map(|q| per_block.iter().map(|b| b[q].clone()).collect())
        .collect();
    Ok(SequentialFitFunctional {
        coeffs,
        lambda,
        scheme,
        sizes: scheme.sizes(designs.n()),
        grams: grams.to_vec(),
    })
}

/// Functional GCV: residuals and hat-matrix traces are summed over ℓ before
/// forming the ratio. λ values with a summed trace of at least `n_q` are
/// excluded.
pub fn gcv_select_functional(designs: &DesignFunctional, scheme: FractionScheme, lambda_grid: &[f64]) -> Result<GcvResult> {
    check_grid(lambda_grid)?;
    let sizes = scheme.sizes(designs.n());
    let cps: Vec<CrossProducts> = designs.blocks.iter().map(|d| cross_products(d, &sizes)).collect();
    let scores = lambda_grid
        .par_iter()
        .map(|&l| {
            let mut summed = vec![(0.0, 0.0); sizes.len()];
            for (d, cp) in designs.blocks.iter().zip(&cps) {
                for (acc, t) in summed.iter_mut().zip(fraction_terms(d, cp, l)?) {
                    acc.0 += t.0;
                    acc.1 += t.1;
                }
            }
            Ok(gcv_score(&sizes, &summed))
        })
        .collect::<Result<Vec<_>>>()?;
    argmin(lambda_grid, scores)
}

/// How λ is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaChoice {
    Fixed(f64),
    Gcv,
}

/// GCV (over the default grid) or fixed λ, followed by the sequential fit.
pub fn fit_scalar(design: &DesignScalar, sys: &EigenSystem, scheme: FractionScheme, choice: LambdaChoice) -> Result<SequentialFit> {
    let lambda = match choice {
        LambdaChoice::Fixed(l) => l,
        LambdaChoice::Gcv => gcv_select_scalar(design, scheme, &default_lambda_grid(design.n()))?.lambda,
    };
    ridge_path_scalar(design, lambda, scheme, &gram_l2(sys))
}

pub fn fit_functional(
    designs: &DesignFunctional,
    tsys: &TensorEigenSystem,
    scheme: FractionScheme,
    choice: LambdaChoice,
) -> Result<SequentialFitFunctional> {
    let lambda = match choice {
        LambdaChoice::Fixed(l) => l,
        LambdaChoice::Gcv => gcv_select_functional(designs, scheme, &default_lambda_grid(designs.n()))?.lambda,
    };
    let grams: Vec<_> = tsys.systems().iter().map(gram_l2).collect();
    ridge_path_functional(designs, lambda, scheme, &grams)
}

fn check_q(q: usize, count: usize) -> Result<usize> {
    if q == 0 || q > count {
        return Err(Error::InvalidInput(format!("fraction index {q} outside 1..={count}")));
    }
    Ok(q - 1)
}

/// `β̃(·, ν_q) = b̂_qᵀ φ̂` on the grid (`q` is 1-based).
pub fn evaluate_estimate(fit: &SequentialFit, sys: &EigenSystem, q: usize) -> Result<Curve> {
    let q = check_q(q, fit.coeffs.len())?;
    combine(&fit.coeffs[q], sys.basis())
}

fn combine(b: &DVector<f64>, basis: &[Curve]) -> Result<Curve> {
    if b.len() != basis.len() {
        return Err(Error::InvalidInput(format!(
            "{} coefficients for {} basis functions",
            b.len(),
            basis.len()
        )));
    }
    let grid = basis[0].grid();
    let mut vals = vec![0.0; grid.n_points()];
    for (c, f) in b.iter().zip(basis) {
        for (v, fv) in vals.iter_mut().zip(f.values()) {
            *v += c * fv;
        }
    }
    Curve::new(grid, vals)
}

/// `β̃(s,t; ν_q) = Σ_ℓ (b̂_ℓ^{(q)ᵀ} x̂_ℓ)(s) η_ℓ(t)` on the grid.
pub fn evaluate_estimate_2d(fit: &SequentialFitFunctional, tsys: &TensorEigenSystem, q: usize) -> Result<Curve2D> {
    let q = check_q(q, fit.coeffs.len())?;
    let grid = tsys.grid();
    let mut out = DMatrix::zeros(grid.n_points(), grid.n_points());
    for (l, sys) in tsys.systems().iter().enumerate() {
        let x = combine(&fit.coeffs[q][l], sys.basis())?;
        let eta = &tsys.cosines().functions()[l];
        out += DVector::from_column_slice(x.values()) * DVector::from_column_slice(eta.values()).transpose();
    }
    Curve2D::new(grid, grid, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fractions_end_at_one() {
        let s = FractionScheme::new(0.5, 25).unwrap();
        let f = s.fractions();
        assert_eq!(f.len(), 25);
        assert_eq!(*f.last().unwrap(), 1.0);
        assert!((f[0] - 0.52).abs() < 1e-15);
        let sizes = s.sizes(200);
        assert_eq!(sizes[0], 104);
        assert_eq!(*sizes.last().unwrap(), 200);
        assert!(sizes.windows(2).all(|w| w[0] <= w[1]));
        assert!(FractionScheme::new(1.0, 5).is_err());
        assert!(FractionScheme::new(0.5, 0).is_err());
        assert!(s.check(200, 20).is_ok());
        assert!(s.check(20, 20).is_err());
    }

    #[test]
    fn lambda_grid_shape() {
        let g = default_lambda_grid(100);
        assert_eq!(g.len(), 30);
        assert!((g[0] - 1e-10).abs() < 1e-22);
        assert!((g[29] - 1.0).abs() < 1e-12);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn ill_conditioned_solve_falls_back() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 1, &[2.0, 0.0]);
        let x = spd_solve(&a, &b).unwrap();
        assert_eq!(x[(0, 0)], 2.0);
        assert_eq!(x[(1, 0)], 0.0);
    }
}
