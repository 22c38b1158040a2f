//! Simulation designs and Monte-Carlo rejection / coverage experiments.
//!
//! Predictors are built from `η_i = Σ_{j≤50} j⁻¹ Z_ij f_j` with the cosine
//! system `f_1 = 1`, `f_{j+1} = √2 cos(jπs)`, either as an FMA(1) process
//! `X_i = η_i + θ_i η_{i−1}` or i.i.d. `X_i = √(7/6) η_i`. Errors follow a
//! random-coefficient MA(2) with noise scaled to a target ratio
//! `var(ε)/var(‖X‖)`.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::sync::{Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigensys::{default_truncation, solve_eigen_functional, solve_eigen_scalar, DEFAULT_GALERKIN_DIM};
use crate::error::{Error, Result};
use crate::estimator::{
    build_design_functional, build_design_scalar, fit_functional, fit_scalar, FractionScheme, LambdaChoice,
};
use crate::funcspace::{cosine_fn, empirical_covariance, Curve, Curve2D, Grid};
use crate::inference::{
    confidence_intervals, decide, stats_functional, stats_one_sample_scalar, stats_two_sample, TestStatistics,
};
use crate::pivotal::QuantileTable;

/// Number of terms in the Karhunen–Loève sums.
pub const KL_TERMS: usize = 50;
pub const DEFAULT_NOISE_RATIO: f64 = 0.3;
pub const PILOT_DRAWS: usize = 10_000;
const PILOT_SEED: u64 = 0x5e_ed0f_9110;
const MIN_N: usize = 20;
const MIN_RUNS: usize = 50;
/// Share of failed runs above which an experiment is abandoned.
const MAX_FAILURE_RATE: f64 = 0.01;

const FMA_BOUND: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slope {
    S1,
    S2,
    F1,
    F2,
    Custom(Curve),
    Custom2D(Curve2D),
}

impl Slope {
    pub fn is_functional(&self) -> bool {
        matches!(self, Slope::F1 | Slope::F2 | Slope::Custom2D(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predictor {
    Fma1,
    Iid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub slope: Slope,
    pub predictor: Predictor,
    pub n: usize,
    pub noise_ratio: f64,
    pub seed: u64,
    pub grid: Grid,
}

impl DgpSpec {
    pub fn new(slope: Slope, predictor: Predictor, n: usize, seed: u64) -> Self {
        DgpSpec {
            slope,
            predictor,
            n,
            noise_ratio: DEFAULT_NOISE_RATIO,
            seed,
            grid: Grid::default(),
        }
    }

    /// A noise ratio of 0 switches the errors off entirely.
    pub fn validate(&self) -> Result<()> {
        if self.n < MIN_N {
            return Err(Error::InvalidInput(format!("sample size must be at least {MIN_N}, got {}", self.n)));
        }
        if !(self.noise_ratio >= 0.0 && self.noise_ratio.is_finite()) {
            return Err(Error::InvalidInput(format!("noise ratio must be non-negative, got {}", self.noise_ratio)));
        }
        match &self.slope {
            Slope::Custom(c) if c.grid() != self.grid => {
                Err(Error::GridMismatch("custom slope is not on the simulation grid".into()))
            }
            Slope::Custom2D(c) if c.grid_s() != self.grid || c.grid_t() != self.grid => {
                Err(Error::GridMismatch("custom slope is not on the simulation grid".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Cosine system evaluated on the grid: column `j` holds `f_{j+1}`.
fn kl_basis(grid: Grid) -> DMatrix<f64> {
    let pts = grid.points();
    DMatrix::from_fn(pts.len(), KL_TERMS, |i, j| cosine_fn(j + 1, pts[i]))
}

/// Coefficients `4(−1)^{j+1} j⁻²` (and 1 for `j=1`) of the unnormalised S1/F1 slope.
fn s1_coefficients() -> Vec<f64> {
    (1..=KL_TERMS)
        .map(|j| {
            if j == 1 {
                1.0
            } else {
                let sign = if j % 2 == 0 { -1.0 } else { 1.0 };
                4.0 * sign / (j * j) as f64
            }
        })
        .collect()
}

/// Grid-evaluated scalar slope. S1 has unit squared norm and S2
/// `‖β‖² = 4 − 4/√e`.
pub fn make_slope(slope: &Slope, grid: Grid) -> Result<Curve> {
    match slope {
        Slope::S1 => {
            let c = s1_coefficients();
            let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            let basis = kl_basis(grid);
            let vals = basis * DVector::from_vec(c) / norm;
            Curve::new(grid, vals.iter().copied().collect())
        }
        Slope::S2 => Curve::from_fn(grid, |s| std::f64::consts::SQRT_2 * (-s / 4.0).exp()),
        Slope::Custom(c) => Ok(c.clone()),
        _ => Err(Error::InvalidInput("slope is not scalar-on-function".into())),
    }
}

/// Grid-evaluated bivariate slope `β(s,t)`. F1 has unit squared norm and F2
/// `‖β‖² = 8(1 − e^{−1/2})²`.
pub fn make_slope_2d(slope: &Slope, grid: Grid) -> Result<Curve2D> {
    match slope {
        Slope::F1 => {
            let c = s1_coefficients();
            let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            let basis = kl_basis(grid);
            let scaled = DMatrix::from_diagonal(&DVector::from_vec(c)) / norm;
            Curve2D::new(grid, grid, &basis * scaled * basis.transpose())
        }
        Slope::F2 => Curve2D::from_fn(grid, grid, |s, t| std::f64::consts::SQRT_2 * (-(s + t) / 4.0).exp()),
        Slope::Custom2D(c) => Ok(c.clone()),
        _ => Err(Error::InvalidInput("slope is not function-on-function".into())),
    }
}

/// `‖β₀‖²` by quadrature.
pub fn true_norm(spec: &DgpSpec) -> Result<f64> {
    if spec.slope.is_functional() {
        Ok(make_slope_2d(&spec.slope, spec.grid)?.norm_sq())
    } else {
        Ok(make_slope(&spec.slope, spec.grid)?.norm_sq())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Response {
    Scalar(Vec<f64>),
    Functional(Vec<Curve>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<Curve>,
    pub y: Response,
}

impl Sample {
    pub fn scalar_y(&self) -> Option<&[f64]> {
        match &self.y {
            Response::Scalar(y) => Some(y),
            Response::Functional(_) => None,
        }
    }

    pub fn functional_y(&self) -> Option<&[Curve]> {
        match &self.y {
            Response::Functional(y) => Some(y),
            Response::Scalar(_) => None,
        }
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// `n` predictor curves as rows of an `n × n_points` matrix.
fn predictors(predictor: Predictor, n: usize, basis: &DMatrix<f64>, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let burn = usize::from(predictor == Predictor::Fma1);
    let mut scores = DMatrix::zeros(n + burn, KL_TERMS);
    for i in 0..n + burn {
        for j in 0..KL_TERMS {
            scores[(i, j)] = normal(rng) / (j + 1) as f64;
        }
    }
    let eta = scores * basis.transpose();
    match predictor {
        Predictor::Iid => eta * (7.0f64 / 6.0).sqrt(),
        Predictor::Fma1 => {
            let mut x = DMatrix::zeros(n, basis.nrows());
            for i in 0..n {
                let theta = rng.random_range(-FMA_BOUND..FMA_BOUND);
                let row = eta.row(i + 1) + eta.row(i) * theta;
                x.set_row(i, &row);
            }
            x
        }
    }
}

/// Random-coefficient MA(2) combination `ξ_i + υ_{i,1}ξ_{i−1} + υ_{i,2}ξ_{i−2}`
/// of the innovation rows.
fn ma2(innov: &DMatrix<f64>, n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(n, innov.ncols());
    for i in 0..n {
        let u1 = rng.random_range(-FMA_BOUND..FMA_BOUND);
        let u2 = rng.random_range(-FMA_BOUND..FMA_BOUND);
        let row = innov.row(i + 2) + innov.row(i + 1) * u1 + innov.row(i) * u2;
        out.set_row(i, &row);
    }
    out
}

fn white_noise(rows: usize, grid: Grid, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let sd = (1.0 / grid.spacing()).sqrt();
    DMatrix::from_fn(rows, grid.n_points(), |_, _| normal(rng) * sd)
}

fn sample_variance(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

fn row_norms(m: &DMatrix<f64>, grid: Grid) -> Vec<f64> {
    let w = grid.weights();
    m.row_iter()
        .map(|r| r.iter().zip(&w).map(|(v, w)| v * v * w).sum::<f64>().sqrt())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum PilotKey {
    Predictor(Predictor, usize),
    FunctionalNoise(usize),
}

fn pilot_cache() -> &'static Mutex<HashMap<PilotKey, f64>> {
    static CACHE: OnceLock<Mutex<HashMap<PilotKey, f64>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn pilot(key: PilotKey) -> f64 {
    if let Some(v) = pilot_cache().lock().expect("pilot cache").get(&key) {
        return *v;
    }
    let value = match key {
        PilotKey::Predictor(p, pts) => {
            let grid = Grid::new(pts).expect("valid grid");
            let mut rng = ChaCha8Rng::seed_from_u64(PILOT_SEED);
            let x = predictors(p, PILOT_DRAWS, &kl_basis(grid), &mut rng);
            sample_variance(&row_norms(&x, grid))
        }
        PilotKey::FunctionalNoise(pts) => {
            let grid = Grid::new(pts).expect("valid grid");
            let mut rng = ChaCha8Rng::seed_from_u64(PILOT_SEED ^ 1);
            let innov = white_noise(PILOT_DRAWS + 2, grid, &mut rng);
            sample_variance(&row_norms(&ma2(&innov, PILOT_DRAWS, &mut rng), grid))
        }
    };
    pilot_cache().lock().expect("pilot cache").insert(key, value);
    value
}

/// `var(‖X‖_{L²})` from the cached pilot simulation.
pub fn predictor_norm_variance(predictor: Predictor, grid: Grid) -> f64 {
    pilot(PilotKey::Predictor(predictor, grid.n_points()))
}

/// Scale `c₁` of the scalar errors; `var(ε) = c₁²(1 + 2·E υ²) = c₁²·4/3`.
pub fn scalar_noise_scale(spec: &DgpSpec) -> f64 {
    (spec.noise_ratio * predictor_norm_variance(spec.predictor, spec.grid) * 0.75).sqrt()
}

/// Scale `c₂` of the functional errors, matching `var(‖ε‖)` by pilot draws.
pub fn functional_noise_scale(spec: &DgpSpec) -> f64 {
    let unit = pilot(PilotKey::FunctionalNoise(spec.grid.n_points()));
    (spec.noise_ratio * predictor_norm_variance(spec.predictor, spec.grid) / unit).sqrt()
}

pub fn gen_sample(spec: &DgpSpec) -> Result<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    gen_sample_with(spec, &mut rng)
}

fn to_curves(m: &DMatrix<f64>, grid: Grid) -> Result<Vec<Curve>> {
    m.row_iter().map(|r| Curve::new(grid, r.iter().copied().collect())).collect()
}

/// Draw one sample using `rng` (the spec's own seed is ignored).
pub fn gen_sample_with(spec: &DgpSpec, rng: &mut ChaCha8Rng) -> Result<Sample> {
    spec.validate()?;
    let grid = spec.grid;
    let w = DVector::from_vec(grid.weights());
    let x = predictors(spec.predictor, spec.n, &kl_basis(grid), rng);
    let curves = to_curves(&x, grid)?;
    if spec.slope.is_functional() {
        let beta = make_slope_2d(&spec.slope, grid)?;
        // Y_i(t) = ∫ β(s,t) X_i(s) ds
        let weighted = DMatrix::from_fn(spec.n, grid.n_points(), |i, j| x[(i, j)] * w[j]);
        let mut y = weighted * beta.values();
        if spec.noise_ratio > 0.0 {
            let c2 = functional_noise_scale(spec);
            let innov = white_noise(spec.n + 2, grid, rng);
            y += ma2(&innov, spec.n, rng) * c2;
        }
        Ok(Sample {
            x: curves,
            y: Response::Functional(to_curves(&y, grid)?),
        })
    } else {
        let beta = make_slope(&spec.slope, grid)?;
        let bw = DVector::from_iterator(grid.n_points(), beta.values().iter().zip(w.iter()).map(|(b, w)| b * w));
        let mut y = &x * bw;
        if spec.noise_ratio > 0.0 {
            let c1 = scalar_noise_scale(spec);
            let innov = DMatrix::from_fn(spec.n + 2, 1, |_, _| normal(rng));
            y += ma2(&innov, spec.n, rng).column(0) * c1;
        }
        Ok(Sample {
            x: curves,
            y: Response::Scalar(y.iter().copied().collect()),
        })
    }
}

/// Estimation settings shared by every run of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub scheme: FractionScheme,
    /// `None` uses `min(20, ⌊n/4⌋)`.
    pub r: Option<usize>,
    pub galerkin_dim: usize,
    pub lambda: LambdaChoice,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            scheme: FractionScheme::default(),
            r: None,
            galerkin_dim: DEFAULT_GALERKIN_DIM,
            lambda: LambdaChoice::Gcv,
        }
    }
}

impl PipelineConfig {
    pub fn truncation(&self, n: usize) -> usize {
        self.r
            .unwrap_or_else(|| default_truncation(n))
            .min(self.galerkin_dim.saturating_sub(4))
            .max(1)
    }
}

/// Fitted statistics of one sample along with the λ chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub statistics: TestStatistics,
    pub lambdas: Vec<f64>,
    pub r: usize,
}

/// Covariance → eigen-system → λ → sequential fit → statistics.
pub fn run_pipeline(sample: &Sample, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let n = sample.x.len();
    let r = cfg.truncation(n);
    cfg.scheme.check(n, r)?;
    let cov = empirical_covariance(&sample.x)?;
    match &sample.y {
        Response::Scalar(y) => {
            let sys = solve_eigen_scalar(&cov, r, cfg.galerkin_dim)?;
            let design = build_design_scalar(&sample.x, y, &sys)?;
            let fit = fit_scalar(&design, &sys, cfg.scheme, cfg.lambda)?;
            Ok(PipelineOutput {
                statistics: stats_one_sample_scalar(&fit)?,
                lambdas: vec![fit.lambda()],
                r,
            })
        }
        Response::Functional(y) => {
            let tsys = solve_eigen_functional(&cov, r, cfg.galerkin_dim)?;
            let designs = build_design_functional(&sample.x, y, &tsys)?;
            let fit = fit_functional(&designs, &tsys, cfg.scheme, cfg.lambda)?;
            Ok(PipelineOutput {
                statistics: stats_functional(&fit)?,
                lambdas: vec![fit.lambda()],
                r,
            })
        }
    }
}

/// Two independently fitted scalar samples (λ chosen per sample).
pub fn run_pipeline_two_sample(a: &Sample, b: &Sample, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let fit_one = |s: &Sample| -> Result<_> {
        let y = s
            .scalar_y()
            .ok_or_else(|| Error::InvalidInput("two-sample test needs scalar responses".into()))?;
        let n = s.x.len();
        let r = cfg.truncation(n);
        cfg.scheme.check(n, r)?;
        let sys = solve_eigen_scalar(&empirical_covariance(&s.x)?, r, cfg.galerkin_dim)?;
        let design = build_design_scalar(&s.x, y, &sys)?;
        let fit = fit_scalar(&design, &sys, cfg.scheme, cfg.lambda)?;
        Ok((fit, sys, r))
    };
    let (f1, s1, r1) = fit_one(a)?;
    let (f2, s2, _) = fit_one(b)?;
    Ok(PipelineOutput {
        statistics: stats_two_sample(&f1, &s1, &f2, &s2)?,
        lambdas: vec![f1.lambda(), f2.lambda()],
        r: r1,
    })
}

/// Per-run RNG: stream `run + 1` of the master seed.
fn run_rng(master: u64, run: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(run as u64 + 1);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub deltas: Vec<f64>,
    pub p_reject: Vec<f64>,
    pub se: Vec<f64>,
    pub runs: usize,
    pub failures: usize,
    pub alpha: f64,
    /// Squared norm of the true slope (0 for the two-sample difference).
    pub d0: f64,
    pub mean_t: f64,
    pub sd_t: f64,
    pub spec: DgpSpec,
    pub pipeline: PipelineConfig,
}

impl ExperimentResult {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::new();
        writeln!(out, "delta,p_reject,se").expect("vec write");
        for ((d, p), s) in self.deltas.iter().zip(&self.p_reject).zip(&self.se) {
            writeln!(out, "{d},{p},{s}").expect("vec write");
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

fn check_runs(runs: usize, deltas: &[f64]) -> Result<()> {
    if runs < MIN_RUNS {
        return Err(Error::InvalidInput(format!("at least {MIN_RUNS} runs are required, got {runs}")));
    }
    if deltas.is_empty() || deltas.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
        return Err(Error::InvalidInput("delta grid must be non-empty and non-negative".into()));
    }
    Ok(())
}

/// Collect per-run statistics, tolerating fewer than 1% failures.
fn collect_runs(
    runs: usize,
    one: impl Fn(usize) -> Result<TestStatistics> + Sync + Send,
) -> Result<(Vec<TestStatistics>, usize)> {
    let outcomes: Vec<Result<TestStatistics>> = (0..runs).into_par_iter().map(one).collect();
    let mut stats = Vec::with_capacity(runs);
    let mut failures = 0;
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(s) => stats.push(s),
            Err(e) => {
                log::warn!("run {i} failed: {e}");
                failures += 1;
            }
        }
    }
    if failures as f64 >= MAX_FAILURE_RATE * runs as f64 && failures > 0 {
        return Err(Error::Numerical(format!("{failures} of {runs} runs failed")));
    }
    Ok((stats, failures))
}

#[allow(clippy::too_many_arguments)]
fn summarize(
    stats: &[TestStatistics],
    failures: usize,
    deltas: &[f64],
    alpha: f64,
    table: &QuantileTable,
    d0: f64,
    spec: &DgpSpec,
    pipeline: &PipelineConfig,
) -> Result<ExperimentResult> {
    let m = stats.len() as f64;
    let mut p_reject = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let mut hits = 0usize;
        for s in stats {
            hits += usize::from(decide(s, delta, alpha, table)?.reject);
        }
        p_reject.push(hits as f64 / m);
    }
    let se = p_reject.iter().map(|p| (p * (1.0 - p) / m).sqrt()).collect();
    let ts: Vec<f64> = stats.iter().map(|s| s.t).collect();
    let mean_t = ts.iter().sum::<f64>() / m;
    let sd_t = if ts.len() > 1 { sample_variance(&ts).sqrt() } else { 0.0 };
    Ok(ExperimentResult {
        deltas: deltas.to_vec(),
        p_reject,
        se,
        runs: stats.len(),
        failures,
        alpha,
        d0,
        mean_t,
        sd_t,
        spec: spec.clone(),
        pipeline: pipeline.clone(),
    })
}

/// Rejection frequency of the full pipeline for every Δ on shared samples.
pub fn run_rejection_experiment(
    spec: &DgpSpec,
    deltas: &[f64],
    alpha: f64,
    runs: usize,
    pipeline: &PipelineConfig,
    table: &QuantileTable,
) -> Result<ExperimentResult> {
    spec.validate()?;
    check_runs(runs, deltas)?;
    table.quantile(1.0 - alpha)?;
    let (stats, failures) = collect_runs(runs, |i| {
        let sample = gen_sample_with(spec, &mut run_rng(spec.seed, i))?;
        Ok(run_pipeline(&sample, pipeline)?.statistics)
    })?;
    summarize(&stats, failures, deltas, alpha, table, true_norm(spec)?, spec, pipeline)
}

/// Two independent scalar samples from the same design per run; the true
/// squared distance is 0.
pub fn run_two_sample_experiment(
    spec: &DgpSpec,
    deltas: &[f64],
    alpha: f64,
    runs: usize,
    pipeline: &PipelineConfig,
    table: &QuantileTable,
) -> Result<ExperimentResult> {
    spec.validate()?;
    check_runs(runs, deltas)?;
    if spec.slope.is_functional() {
        return Err(Error::InvalidInput("two-sample experiments use scalar responses".into()));
    }
    table.quantile(1.0 - alpha)?;
    let (stats, failures) = collect_runs(runs, |i| {
        let mut rng = run_rng(spec.seed, i);
        let a = gen_sample_with(spec, &mut rng)?;
        let b = gen_sample_with(spec, &mut rng)?;
        Ok(run_pipeline_two_sample(&a, &b, pipeline)?.statistics)
    })?;
    summarize(&stats, failures, deltas, alpha, table, 0.0, spec, pipeline)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageResult {
    pub d0: f64,
    pub alpha: f64,
    pub one_sided: f64,
    pub two_sided: f64,
    pub runs: usize,
    pub failures: usize,
    pub spec: DgpSpec,
    pub pipeline: PipelineConfig,
}

/// Share of runs whose one-sided `[0, u]` and two-sided `(l, u′]` intervals
/// contain the true `‖β₀‖²`.
pub fn run_coverage_experiment(
    spec: &DgpSpec,
    alpha: f64,
    runs: usize,
    pipeline: &PipelineConfig,
    table: &QuantileTable,
) -> Result<CoverageResult> {
    spec.validate()?;
    check_runs(runs, &[0.0])?;
    let d0 = true_norm(spec)?;
    let (stats, failures) = collect_runs(runs, |i| {
        let sample = gen_sample_with(spec, &mut run_rng(spec.seed, i))?;
        Ok(run_pipeline(&sample, pipeline)?.statistics)
    })?;
    let (mut one, mut two) = (0usize, 0usize);
    for s in &stats {
        let (a, b) = confidence_intervals(s, alpha, table)?;
        one += usize::from(d0 >= a.lower && d0 <= a.upper);
        two += usize::from(d0 > b.lower && d0 <= b.upper);
    }
    let m = stats.len() as f64;
    Ok(CoverageResult {
        d0,
        alpha,
        one_sided: one as f64 / m,
        two_sided: two as f64 / m,
        runs: stats.len(),
        failures,
        spec: spec.clone(),
        pipeline: pipeline.clone(),
    })
}
