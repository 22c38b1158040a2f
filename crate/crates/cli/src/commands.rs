use std::path::{Path, PathBuf};

use pivotfda::eigensys::solve_eigen_scalar;
use pivotfda::estimator::{build_design_scalar, fit_scalar, FractionScheme, LambdaChoice};
use pivotfda::funcspace::{
    empirical_covariance, read_curves_csv, read_scalars_csv, write_curves_csv, write_metadata, write_scalars_csv,
    Curve, CurveMetadata, Grid,
};
use pivotfda::inference::{confidence_intervals, decide, largest_rejected_delta, required_levels, stats_location, Interval, TestReport, TestStatistics};
use pivotfda::pivotal::{default_cache_dir, PivotalConfig, QuantileCache, QuantileTable};
use pivotfda::simharness::{
    gen_sample, run_coverage_experiment, run_pipeline, run_pipeline_two_sample, run_rejection_experiment,
    run_two_sample_experiment, true_norm, DgpSpec, PipelineConfig, Predictor, Response, Sample, Slope,
};
use serde::Serialize;
use thiserror::Error;

use crate::{Command, DgpFlags, Experiment, FitFlags, Format, OneSample, OutputFlags, PivotFlags, PredictorArg, SlopeArg, TestFlags};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{input}: {message}")]
    Data { input: String, message: String },
    #[error(transparent)]
    Lib(#[from] pivotfda::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data { .. } => 3,
            CliError::Lib(e) if e.is_numerical() => 4,
            CliError::Lib(pivotfda::Error::MissingQuantile(_)) => 4,
            CliError::Lib(_) => 3,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn usage(flag: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("--{flag}: {e}"))
}

/// Run-wide settings echoed into every report.
#[derive(Debug, Serialize)]
struct Provenance {
    grid_points: Option<usize>,
    nu0: f64,
    q: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    lambda_rule: LambdaChoice,
    r: Option<usize>,
    galerkin_dim: usize,
    pivotal: Option<PivotalConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Debug, Serialize)]
struct Envelope<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    inputs: Vec<String>,
    provenance: &'a Provenance,
    result: T,
}

#[derive(Debug, Serialize)]
struct SweepEntry {
    delta: f64,
    reject: bool,
}

#[derive(Debug, Serialize)]
struct TestOutput {
    report: TestReport,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    sweep: Vec<SweepEntry>,
}

#[derive(Debug, Serialize)]
struct CiOutput {
    statistics: TestStatistics,
    alpha: f64,
    one_sided: Interval,
    two_sided: Interval,
    largest_rejected_delta: f64,
    lambdas: Vec<f64>,
    r: usize,
}

struct Fit {
    scheme: FractionScheme,
    lambda: LambdaChoice,
    grid: Option<Grid>,
    r: Option<usize>,
    galerkin_dim: usize,
}

impl Fit {
    fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            scheme: self.scheme,
            r: self.r,
            galerkin_dim: self.galerkin_dim,
            lambda: self.lambda,
        }
    }
}

fn check_fit(f: &FitFlags, grid: Option<usize>) -> Result<Fit> {
    let scheme = FractionScheme::new(f.nu0, f.q).map_err(|e| usage("nu0/--Q", e))?;
    let lambda = if f.lambda.eq_ignore_ascii_case("gcv") {
        LambdaChoice::Gcv
    } else {
        match f.lambda.parse::<f64>() {
            Ok(v) if v >= 0.0 && v.is_finite() => LambdaChoice::Fixed(v),
            _ => return Err(usage("lambda", format!("expected `gcv` or a non-negative number, got `{}`", f.lambda))),
        }
    };
    let grid = grid
        .map(|n| Grid::new(n).map_err(|e| usage("grid", e)))
        .transpose()?;
    if f.galerkin_dim < 8 {
        return Err(usage("galerkin-dim", "must be at least 8"));
    }
    if let Some(r) = f.r {
        if r == 0 || r + 4 > f.galerkin_dim {
            return Err(usage("r", format!("must lie in 1..={} for Galerkin dimension {}", f.galerkin_dim - 4, f.galerkin_dim)));
        }
    }
    Ok(Fit {
        scheme,
        lambda,
        grid,
        r: f.r,
        galerkin_dim: f.galerkin_dim,
    })
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(usage("alpha", format!("must lie in (0,1), got {alpha}")));
    }
    Ok(())
}

fn check_pivot(p: &PivotFlags, scheme: FractionScheme) -> Result<PivotalConfig> {
    PivotalConfig::new(scheme.nu0(), scheme.q(), p.paths, p.steps, p.pivot_seed).map_err(|e| usage("paths/--steps", e))
}

fn check_deltas(t: &TestFlags) -> Result<(f64, Vec<f64>)> {
    let all: Vec<f64> = t.delta.iter().chain(&t.delta_sweep).copied().collect();
    if all.is_empty() {
        return Err(CliError::Usage("one of --delta or --delta-sweep is required".into()));
    }
    if let Some(d) = all.iter().find(|d| !(**d >= 0.0 && d.is_finite())) {
        return Err(usage("delta", format!("thresholds must be finite and non-negative, got {d}")));
    }
    Ok((all[0], t.delta_sweep.clone()))
}

struct Checked {
    fit: Fit,
    pivot: PivotalConfig,
    delta: f64,
    sweep: Vec<f64>,
}

fn check_test(t: &TestFlags) -> Result<Checked> {
    let fit = check_fit(&t.fit, t.grid)?;
    check_alpha(t.alpha)?;
    let pivot = check_pivot(&t.pivot, fit.scheme)?;
    let (delta, sweep) = check_deltas(t)?;
    Ok(Checked { fit, pivot, delta, sweep })
}

fn file_exists(p: &Path) -> Result<()> {
    if !p.is_file() {
        return Err(CliError::Data {
            input: p.display().to_string(),
            message: "no such file".into(),
        });
    }
    Ok(())
}

fn read_x(path: &Path, grid: Option<Grid>) -> Result<Vec<Curve>> {
    Ok(read_curves_csv(path, grid)?)
}

fn same_length(x: &Path, nx: usize, y: &Path, ny: usize) -> Result<()> {
    if nx != ny {
        return Err(CliError::Data {
            input: y.display().to_string(),
            message: format!("{ny} responses but {} holds {nx} predictor curves", x.display()),
        });
    }
    Ok(())
}

fn read_sample(d: &OneSample, grid: Option<Grid>, functional: bool) -> Result<Sample> {
    file_exists(&d.x)?;
    file_exists(&d.y)?;
    let x = read_x(&d.x, grid)?;
    let y = if functional {
        let y = read_curves_csv(&d.y, grid)?;
        same_length(&d.x, x.len(), &d.y, y.len())?;
        Response::Functional(y)
    } else {
        let y = read_scalars_csv(&d.y)?;
        same_length(&d.x, x.len(), &d.y, y.len())?;
        Response::Scalar(y)
    };
    Ok(Sample { x, y })
}

fn quantile_table(cfg: &PivotalConfig, alpha: f64) -> Result<QuantileTable> {
    Ok(QuantileCache::new(default_cache_dir()).table(cfg, &required_levels(alpha))?)
}

fn provenance(fit: &Fit, grid_points: usize, alpha: Option<f64>, r: Option<usize>, pivot: Option<PivotalConfig>) -> Provenance {
    Provenance {
        grid_points: Some(grid_points),
        nu0: fit.scheme.nu0(),
        q: fit.scheme.q(),
        alpha,
        lambda_rule: fit.lambda,
        r,
        galerkin_dim: fit.galerkin_dim,
        pivotal: pivot,
        seed: None,
    }
}

fn paths(p: &[&PathBuf]) -> Vec<String> {
    p.iter().map(|p| p.display().to_string()).collect()
}

fn emit(out: &OutputFlags, json: String, text: String) -> Result<()> {
    let body = match out.format {
        Format::Json => json + "\n",
        Format::Text => text,
    };
    match &out.output {
        Some(p) => std::fs::write(p, body).map_err(|e| CliError::Data {
            input: p.display().to_string(),
            message: e.to_string(),
        }),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| CliError::Lib(e.into()))
}

#[allow(clippy::too_many_arguments)]
fn finish_test(
    command: &'static str,
    inputs: Vec<String>,
    c: &Checked,
    alpha: f64,
    stats: &TestStatistics,
    lambdas: Vec<f64>,
    r: usize,
    grid_points: usize,
    out: &OutputFlags,
) -> Result<()> {
    let table = quantile_table(&c.pivot, alpha)?;
    let report = decide(stats, c.delta, alpha, &table)?.with_fit_info(lambdas, r);
    let sweep = c
        .sweep
        .iter()
        .map(|&delta| Ok(SweepEntry {
            delta,
            reject: decide(stats, delta, alpha, &table)?.reject,
        }))
        .collect::<Result<Vec<_>>>()?;
    let mut text = report.to_string();
    for s in &sweep {
        text.push_str(&format!("{:<24}{:>16}\n", format!("reject at delta={}", s.delta), s.reject));
    }
    let prov = provenance(&c.fit, grid_points, Some(alpha), Some(r), Some(c.pivot));
    let env = Envelope {
        tool: "pivotfda",
        version: env!("CARGO_PKG_VERSION"),
        command,
        inputs,
        provenance: &prov,
        result: TestOutput { report, sweep },
    };
    emit(out, to_json(&env)?, text)
}

fn test_one(command: &'static str, data: &OneSample, t: &TestFlags, functional: bool) -> Result<()> {
    let c = check_test(t)?;
    let sample = read_sample(data, c.fit.grid, functional)?;
    let grid_points = sample.x[0].grid().n_points();
    let out = run_pipeline(&sample, &c.fit.pipeline())?;
    finish_test(command, paths(&[&data.x, &data.y]), &c, t.alpha, &out.statistics, out.lambdas, out.r, grid_points, &t.out)
}

fn test_two_sample(x1: &Path, y1: &Path, x2: &Path, y2: &Path, t: &TestFlags) -> Result<()> {
    let c = check_test(t)?;
    let a = read_sample(&OneSample { x: x1.into(), y: y1.into() }, c.fit.grid, false)?;
    let b = read_sample(&OneSample { x: x2.into(), y: y2.into() }, c.fit.grid, false)?;
    let ga = a.x[0].grid();
    if b.x[0].grid() != ga {
        return Err(CliError::Data {
            input: x2.display().to_string(),
            message: format!("grid of {} points differs from {} ({} points)", b.x[0].grid().n_points(), x1.display(), ga.n_points()),
        });
    }
    let out = run_pipeline_two_sample(&a, &b, &c.fit.pipeline())?;
    let inputs = paths(&[&x1.to_path_buf(), &y1.to_path_buf(), &x2.to_path_buf(), &y2.to_path_buf()]);
    finish_test("test-two-sample", inputs, &c, t.alpha, &out.statistics, out.lambdas, out.r, ga.n_points(), &t.out)
}

fn test_location(data: &OneSample, beta_star: &Path, t: &TestFlags) -> Result<()> {
    let c = check_test(t)?;
    let sample = read_sample(data, c.fit.grid, false)?;
    let grid = sample.x[0].grid();
    file_exists(beta_star)?;
    let star = read_curves_csv(beta_star, Some(grid))?;
    if star.len() != 1 {
        return Err(CliError::Data {
            input: beta_star.display().to_string(),
            message: format!("expected exactly one curve, found {}", star.len()),
        });
    }
    let pipeline = c.fit.pipeline();
    let n = sample.x.len();
    let r = pipeline.truncation(n);
    c.fit.scheme.check(n, r)?;
    let sys = solve_eigen_scalar(&empirical_covariance(&sample.x)?, r, c.fit.galerkin_dim)?;
    let y = sample.scalar_y().expect("scalar sample");
    let design = build_design_scalar(&sample.x, y, &sys)?;
    let fit = fit_scalar(&design, &sys, c.fit.scheme, c.fit.lambda)?;
    let stats = stats_location(&fit, &star[0], &sys)?;
    let inputs = paths(&[&data.x, &data.y, &beta_star.to_path_buf()]);
    finish_test("test-location", inputs, &c, t.alpha, &stats, vec![fit.lambda()], r, grid.n_points(), &t.out)
}

fn ci(data: &OneSample, functional: bool, grid: Option<usize>, f: &FitFlags, p: &PivotFlags, alpha: f64, out: &OutputFlags) -> Result<()> {
    let fit = check_fit(f, grid)?;
    check_alpha(alpha)?;
    let pivot = check_pivot(p, fit.scheme)?;
    let sample = read_sample(data, fit.grid, functional)?;
    let grid_points = sample.x[0].grid().n_points();
    let res = run_pipeline(&sample, &fit.pipeline())?;
    let table = quantile_table(&pivot, alpha)?;
    let (one, two) = confidence_intervals(&res.statistics, alpha, &table)?;
    let lrd = largest_rejected_delta(&res.statistics, alpha, &table)?;
    let text = format!(
        "{:<24}{:>16.6e}\n{:<24}{:>16}\n{:<24}{:>16}\n{:<24}{:>16.6e}\n",
        "T",
        res.statistics.t,
        "one-sided CI",
        format!("[0, {:.6}]", one.upper),
        "two-sided CI",
        format!("({:.6}, {:.6}]", two.lower, two.upper),
        "largest rejected delta",
        lrd
    );
    let prov = provenance(&fit, grid_points, Some(alpha), Some(res.r), Some(pivot));
    let env = Envelope {
        tool: "pivotfda",
        version: env!("CARGO_PKG_VERSION"),
        command: "ci",
        inputs: paths(&[&data.x, &data.y]),
        provenance: &prov,
        result: CiOutput {
            statistics: res.statistics,
            alpha,
            one_sided: one,
            two_sided: two,
            largest_rejected_delta: lrd,
            lambdas: res.lambdas,
            r: res.r,
        },
    };
    emit(out, to_json(&env)?, text)
}

#[allow(clippy::too_many_arguments)]
fn quantiles(nu0: f64, q: usize, levels: &[f64], paths_: usize, steps: usize, seed: u64, out: &OutputFlags) -> Result<()> {
    let scheme = FractionScheme::new(nu0, q).map_err(|e| usage("nu0/--Q", e))?;
    let cfg = PivotalConfig::new(nu0, q, paths_, steps, seed).map_err(|e| usage("paths/--steps", e))?;
    if let Some(l) = levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
        return Err(usage("levels", format!("levels must lie in (0,1), got {l}")));
    }
    let table = QuantileCache::new(default_cache_dir()).table(&cfg, levels)?;
    let mut text = format!("nu0={} Q={} paths={} steps={} seed={}\n", nu0, q, paths_, steps, seed);
    for (l, v) in &table.entries {
        text.push_str(&format!("{:>6.3}  {:.4}\n", l, v));
    }
    let prov = Provenance {
        grid_points: None,
        nu0: scheme.nu0(),
        q: scheme.q(),
        alpha: None,
        lambda_rule: LambdaChoice::Gcv,
        r: None,
        galerkin_dim: 0,
        pivotal: Some(cfg),
        seed: Some(seed),
    };
    let env = Envelope {
        tool: "pivotfda",
        version: env!("CARGO_PKG_VERSION"),
        command: "quantiles",
        inputs: Vec::new(),
        provenance: &prov,
        result: &table,
    };
    emit(out, to_json(&env)?, text)
}

fn dgp_spec(d: &DgpFlags) -> Result<DgpSpec> {
    let slope = match d.slope {
        SlopeArg::S1 => Slope::S1,
        SlopeArg::S2 => Slope::S2,
        SlopeArg::F1 => Slope::F1,
        SlopeArg::F2 => Slope::F2,
    };
    let predictor = match d.predictor {
        PredictorArg::Fma1 => Predictor::Fma1,
        PredictorArg::Iid => Predictor::Iid,
    };
    let mut spec = DgpSpec::new(slope, predictor, d.n, d.seed);
    spec.noise_ratio = d.noise_ratio;
    spec.grid = Grid::new(d.grid).map_err(|e| usage("grid", e))?;
    spec.validate().map_err(|e| usage("n/--noise-ratio", e))?;
    Ok(spec)
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    d: &DgpFlags,
    experiment: Experiment,
    runs: usize,
    deltas: &[f64],
    alpha: f64,
    f: &FitFlags,
    p: &PivotFlags,
    csv: Option<&Path>,
    out: &OutputFlags,
) -> Result<()> {
    let spec = dgp_spec(d)?;
    let fit = check_fit(f, None)?;
    check_alpha(alpha)?;
    let pivot = check_pivot(p, fit.scheme)?;
    if runs < 50 {
        return Err(usage("runs", format!("at least 50 runs are required, got {runs}")));
    }
    if let Some(x) = deltas.iter().find(|x| !(**x >= 0.0 && x.is_finite())) {
        return Err(usage("deltas", format!("thresholds must be finite and non-negative, got {x}")));
    }
    if experiment == Experiment::TwoSample && spec.slope.is_functional() {
        return Err(usage("experiment", "two-sample experiments need a scalar slope (s1 or s2)"));
    }
    let n = spec.n;
    let r = fit.pipeline().truncation(n);
    fit.scheme.check(n, r).map_err(|e| usage("n/--r", e))?;
    let table = quantile_table(&pivot, alpha)?;
    let mut prov = provenance(&fit, spec.grid.n_points(), Some(alpha), Some(r), Some(pivot));
    prov.seed = Some(spec.seed);
    let pipeline = fit.pipeline();
    let (json, text) = match experiment {
        Experiment::Coverage => {
            let c = run_coverage_experiment(&spec, alpha, runs, &pipeline, &table)?;
            let text = format!(
                "d0={:.6} one-sided={:.4} two-sided={:.4} runs={} failures={}\n",
                c.d0, c.one_sided, c.two_sided, c.runs, c.failures
            );
            (to_json(&envelope("simulate", &prov, &c))?, text)
        }
        Experiment::Rejection | Experiment::TwoSample => {
            let default = if experiment == Experiment::TwoSample { 0.0 } else { true_norm(&spec)? };
            let deltas = if deltas.is_empty() { vec![default] } else { deltas.to_vec() };
            let res = if experiment == Experiment::TwoSample {
                run_two_sample_experiment(&spec, &deltas, alpha, runs, &pipeline, &table)?
            } else {
                run_rejection_experiment(&spec, &deltas, alpha, runs, &pipeline, &table)?
            };
            if let Some(path) = csv {
                res.write_csv(path)?;
            }
            let mut text = format!("d0={:.6} mean_T={:.6} sd_T={:.6} runs={} failures={}\n", res.d0, res.mean_t, res.sd_t, res.runs, res.failures);
            for ((dl, pr), se) in res.deltas.iter().zip(&res.p_reject).zip(&res.se) {
                text.push_str(&format!("delta={dl} reject={pr:.4} se={se:.4}\n"));
            }
            (to_json(&envelope("simulate", &prov, &res))?, text)
        }
    };
    emit(out, json, text)
}

fn envelope<'a, T: Serialize>(command: &'static str, prov: &'a Provenance, result: T) -> Envelope<'a, T> {
    Envelope {
        tool: "pivotfda",
        version: env!("CARGO_PKG_VERSION"),
        command,
        inputs: Vec::new(),
        provenance: prov,
        result,
    }
}

fn generate(d: &DgpFlags, out_dir: &Path) -> Result<()> {
    let spec = dgp_spec(d)?;
    let sample = gen_sample(&spec)?;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::Data {
        input: out_dir.display().to_string(),
        message: e.to_string(),
    })?;
    write_curves_csv(out_dir.join("x.csv"), &sample.x)?;
    match &sample.y {
        Response::Scalar(y) => write_scalars_csv(out_dir.join("y.csv"), y)?,
        Response::Functional(y) => write_curves_csv(out_dir.join("y.csv"), y)?,
    }
    let meta = CurveMetadata {
        grid_points: spec.grid.n_points(),
        basis_kind: None,
        description: Some(format!(
            "simulated: slope {:?}, predictor {:?}, n {}, noise ratio {}, seed {}, version {}",
            d.slope,
            d.predictor,
            spec.n,
            spec.noise_ratio,
            spec.seed,
            env!("CARGO_PKG_VERSION")
        )),
    };
    write_metadata(out_dir.join("metadata.json"), &meta)?;
    println!("{}", out_dir.join("x.csv").display());
    println!("{}", out_dir.join("y.csv").display());
    Ok(())
}

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::TestScalar { data, test } => test_one("test-scalar", &data, &test, false),
        Command::TestFunctional { data, test } => test_one("test-functional", &data, &test, true),
        Command::TestTwoSample { x1, y1, x2, y2, test } => test_two_sample(&x1, &y1, &x2, &y2, &test),
        Command::TestLocation { data, beta_star, test } => test_location(&data, &beta_star, &test),
        Command::Ci {
            data,
            functional,
            grid,
            fit,
            pivot,
            alpha,
            out,
        } => ci(&data, functional, grid, &fit, &pivot, alpha, &out),
        Command::Quantiles {
            nu0,
            q,
            levels,
            paths,
            steps,
            pivot_seed,
            out,
        } => quantiles(nu0, q, &levels, paths, steps, pivot_seed, &out),
        Command::Simulate {
            dgp,
            experiment,
            runs,
            deltas,
            alpha,
            fit,
            pivot,
            csv,
            out,
        } => simulate(&dgp, experiment, runs, &deltas, alpha, &fit, &pivot, csv.as_deref(), &out),
        Command::Generate { dgp, out_dir } => generate(&dgp, &out_dir),
    }
}
