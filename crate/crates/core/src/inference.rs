//! Self-normalized statistics, relevant-hypothesis decisions and confidence
//! intervals.
//!
//! Every problem reduces to the sequence `d_q` of squared L² norms of the
//! sequential estimates; then
//!
//! ```text
//!     T = d_Q,   V = { (1−ν₀)/Q · Σ_q ν_q⁴ (d_q − d_Q)² }^{1/2}
//! ```
//!
//! and `H₀: ‖β‖² ≤ Δ` is rejected when `T > q_{1−α}(W) · V + Δ`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::eigensys::EigenSystem;
use crate::error::{Error, Result};
use crate::estimator::{evaluate_estimate, FractionScheme, SequentialFit, SequentialFitFunctional};
use crate::funcspace::Curve;
use crate::pivotal::{PivotalConfig, QuantileTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestStatistics {
    pub t: f64,
    pub v: f64,
    /// Squared norms `d_1..d_Q` of the sequential estimates.
    pub d: Vec<f64>,
    pub scheme: FractionScheme,
}

impl TestStatistics {
    pub fn from_norms(d: Vec<f64>, scheme: FractionScheme) -> Result<Self> {
        if d.len() != scheme.q() {
            return Err(Error::InvalidInput(format!(
                "{} norms for {} fractions",
                d.len(),
                scheme.q()
            )));
        }
        if d.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("non-finite sequential norm".into()));
        }
        let t = d[d.len() - 1];
        let ss: f64 = scheme
            .fractions()
            .iter()
            .zip(&d)
            .map(|(nu, dq)| nu.powi(4) * (dq - t).powi(2))
            .sum();
        let v = ((1.0 - scheme.nu0()) / scheme.q() as f64 * ss).sqrt();
        Ok(TestStatistics { t, v, d, scheme })
    }
}

fn quad_form(b: &nalgebra::DVector<f64>, g: &nalgebra::DMatrix<f64>) -> f64 {
    (b.transpose() * g * b)[(0, 0)]
}

/// `d_q = b̂_qᵀ Φ̂ b̂_q`.
pub fn stats_one_sample_scalar(fit: &SequentialFit) -> Result<TestStatistics> {
    let d = fit.coeffs().iter().map(|b| quad_form(b, fit.gram())).collect();
    TestStatistics::from_norms(d, fit.scheme())
}

/// `d_q = ‖β̂(·,ν_q) − β*‖²` by quadrature of the evaluated difference.
pub fn stats_location(fit: &SequentialFit, beta_star: &Curve, sys: &EigenSystem) -> Result<TestStatistics> {
    if beta_star.grid() != sys.grid() {
        return Err(Error::GridMismatch(format!(
            "reference slope has {} grid points, the fit uses {}",
            beta_star.grid().n_points(),
            sys.grid().n_points()
        )));
    }
    let d = (1..=fit.coeffs().len())
        .map(|q| Ok(evaluate_estimate(fit, sys, q)?.sub(beta_star)?.norm_sq()))
        .collect::<Result<Vec<_>>>()?;
    TestStatistics::from_norms(d, fit.scheme())
}

/// `d_q = ‖β̂₁(·,ν_q) − β̂₂(·,ν_q)‖²`, differences taken on the grid because the
/// two eigenbases differ.
pub fn stats_two_sample(
    fit1: &SequentialFit,
    sys1: &EigenSystem,
    fit2: &SequentialFit,
    sys2: &EigenSystem,
) -> Result<TestStatistics> {
    if fit1.scheme() != fit2.scheme() {
        return Err(Error::InvalidInput("the two fits use different fraction schemes".into()));
    }
    if sys1.grid() != sys2.grid() {
        return Err(Error::GridMismatch("the two samples live on different grids".into()));
    }
    let d = (1..=fit1.coeffs().len())
        .map(|q| {
            let a = evaluate_estimate(fit1, sys1, q)?;
            let b = evaluate_estimate(fit2, sys2, q)?;
            Ok(a.sub(&b)?.norm_sq())
        })
        .collect::<Result<Vec<_>>>()?;
    TestStatistics::from_norms(d, fit1.scheme())
}

/// `d_q = Σ_ℓ b̂_ℓ^{(q)ᵀ} Φ̂_ℓ b̂_ℓ^{(q)}`.
pub fn stats_functional(fit: &SequentialFitFunctional) -> Result<TestStatistics> {
    let d = fit
        .coeffs()
        .iter()
        .map(|per_l| per_l.iter().zip(fit.grams()).map(|(b, g)| quad_form(b, g)).sum())
        .collect();
    TestStatistics::from_norms(d, fit.scheme())
}

/// The quantile levels a report at significance `alpha` needs.
pub fn required_levels(alpha: f64) -> [f64; 2] {
    [1.0 - alpha, 1.0 - alpha / 2.0]
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0,1), got {alpha}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

/// One-sided `[0, T + q_{1−α}V]` and two-sided
/// `(max{0, T − q_{1−α/2}V}, T + q_{1−α/2}V]` intervals for `‖β‖²`.
pub fn confidence_intervals(stats: &TestStatistics, alpha: f64, table: &QuantileTable) -> Result<(Interval, Interval)> {
    check_alpha(alpha)?;
    let [one, two] = required_levels(alpha);
    let q1 = table.quantile(one)?;
    let q2 = table.quantile(two)?;
    Ok((
        Interval {
            lower: 0.0,
            upper: stats.t + q1 * stats.v,
        },
        Interval {
            lower: (stats.t - q2 * stats.v).max(0.0),
            upper: stats.t + q2 * stats.v,
        },
    ))
}

/// Largest threshold Δ still rejected: `max{0, T − q_{1−α}V}`.
pub fn largest_rejected_delta(stats: &TestStatistics, alpha: f64, table: &QuantileTable) -> Result<f64> {
    check_alpha(alpha)?;
    let q = table.quantile(1.0 - alpha)?;
    Ok((stats.t - q * stats.v).max(0.0))
}

/// Everything a test run reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub statistics: TestStatistics,
    pub delta: f64,
    pub alpha: f64,
    pub quantile: f64,
    pub reject: bool,
    pub largest_rejected_delta: f64,
    pub one_sided_ci: Interval,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub two_sided_ci: Option<Interval>,
    pub pivotal: Option<PivotalConfig>,
    /// λ of each fitted sample.
    pub lambdas: Vec<f64>,
    pub r: Option<usize>,
}

impl TestReport {
    pub fn with_fit_info(mut self, lambdas: Vec<f64>, r: usize) -> Self {
        self.lambdas = lambdas;
        self.r = Some(r);
        self
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::InvalidInput(format!("delta must be finite and non-negative, got {delta}")));
    }
    Ok(())
}

/// Reject `H₀: ‖β‖² ≤ Δ` iff `T > q_{1−α}·V + Δ`. The two-sided interval is
/// filled in when the table carries the `1−α/2` level.
pub fn decide(stats: &TestStatistics, delta: f64, alpha: f64, table: &QuantileTable) -> Result<TestReport> {
    check_delta(delta)?;
    check_alpha(alpha)?;
    let q = table.quantile(1.0 - alpha)?;
    let one_sided_ci = Interval {
        lower: 0.0,
        upper: stats.t + q * stats.v,
    };
    let two_sided_ci = table.quantile(1.0 - alpha / 2.0).ok().map(|q2| Interval {
        lower: (stats.t - q2 * stats.v).max(0.0),
        upper: stats.t + q2 * stats.v,
    });
    Ok(TestReport {
        statistics: stats.clone(),
        delta,
        alpha,
        quantile: q,
        reject: stats.t > q * stats.v + delta,
        largest_rejected_delta: (stats.t - q * stats.v).max(0.0),
        one_sided_ci,
        two_sided_ci,
        pivotal: table.config,
        lambdas: Vec::new(),
        r: None,
    })
}

impl fmt::Display for TestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = &self.statistics;
        writeln!(f, "{:<24}{:>16.6e}", "T (squared L2 norm)", s.t)?;
        writeln!(f, "{:<24}{:>16.6e}", "V (self-normalizer)", s.v)?;
        writeln!(f, "{:<24}{:>16}", "nu0 / Q", format!("{} / {}", s.scheme.nu0(), s.scheme.q()))?;
        writeln!(f, "{:<24}{:>16.6}", "delta", self.delta)?;
        writeln!(f, "{:<24}{:>16.4}", "alpha", self.alpha)?;
        writeln!(f, "{:<24}{:>16.6}", "quantile", self.quantile)?;
        writeln!(f, "{:<24}{:>16}", "reject", self.reject)?;
        writeln!(f, "{:<24}{:>16.6e}", "largest rejected delta", self.largest_rejected_delta)?;
        writeln!(f, "{:<24}{:>16}", "one-sided CI", format!("[0, {:.6}]", self.one_sided_ci.upper))?;
        if let Some(ci) = self.two_sided_ci {
            writeln!(f, "{:<24}{:>16}", "two-sided CI", format!("({:.6}, {:.6}]", ci.lower, ci.upper))?;
        }
        if !self.lambdas.is_empty() {
            let l: Vec<String> = self.lambdas.iter().map(|l| format!("{l:.3e}")).collect();
            writeln!(f, "{:<24}{:>16}", "lambda", l.join(", "))?;
        }
        if let Some(r) = self.r {
            writeln!(f, "{:<24}{:>16}", "r", r)?;
        }
        if let Some(p) = self.pivotal {
            writeln!(f, "{:<24}{:>16}", "pivotal seed", p.seed)?;
        }
        Ok(())
    }
}
