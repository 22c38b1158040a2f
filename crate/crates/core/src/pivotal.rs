//! Monte-Carlo distribution of the pivotal ratio
//!
//! ```text
//!     W_Q = B(1) / { (1−ν₀)/Q · Σ_q |ν_q B(ν_q) − ν_q² B(1)|² }^{1/2}
//! ```
//!
//! for a standard Brownian motion `B`.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::FractionScheme;

pub const DEFAULT_LEVELS: [f64; 3] = [0.90, 0.95, 0.99];
pub const DEFAULT_PATHS: usize = 10_000;
pub const DEFAULT_STEPS: usize = 2048;
pub const DEFAULT_SEED: u64 = 20_190_601;
pub const CACHE_ENV: &str = "PIVOTFDA_CACHE_DIR";

const MIN_STEPS: usize = 512;
const MIN_PATHS: usize = 1000;
const MIN_DENOMINATOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PivotalConfig {
    pub nu0: f64,
    pub q: usize,
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
}

impl Default for PivotalConfig {
    fn default() -> Self {
        PivotalConfig {
            nu0: 0.5,
            q: 25,
            n_paths: DEFAULT_PATHS,
            n_steps: DEFAULT_STEPS,
            seed: DEFAULT_SEED,
        }
    }
}

impl PivotalConfig {
    pub fn new(nu0: f64, q: usize, n_paths: usize, n_steps: usize, seed: u64) -> Result<Self> {
        let cfg = PivotalConfig {
            nu0,
            q,
            n_paths,
            n_steps,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        FractionScheme::new(self.nu0, self.q)?;
        if self.n_steps < MIN_STEPS {
            return Err(Error::InvalidInput(format!(
                "Brownian grid needs at least {MIN_STEPS} steps, got {}",
                self.n_steps
            )));
        }
        if self.n_paths < MIN_PATHS {
            return Err(Error::InvalidInput(format!(
                "at least {MIN_PATHS} paths are required, got {}",
                self.n_paths
            )));
        }
        Ok(())
    }

    pub fn scheme(&self) -> FractionScheme {
        FractionScheme::new(self.nu0, self.q).expect("validated config")
    }

    /// Brownian grid index read for each `ν_q`: the largest grid point `≤ ν_q`.
    pub fn snapped_indices(&self) -> Vec<usize> {
        self.scheme()
            .fractions()
            .iter()
            .map(|nu| ((nu * self.n_steps as f64 + 1e-9).floor() as usize).min(self.n_steps))
            .collect()
    }
}

/// `W_Q` from Brownian values `b[q] = B(ν_q)` (so the last entry is `B(1)`).
pub fn statistic_from_values(b: &[f64], nu0: f64, fractions: &[f64]) -> f64 {
    let q = fractions.len();
    let b1 = b[q - 1];
    let ss: f64 = fractions
        .iter()
        .zip(b)
        .map(|(nu, bq)| (nu * bq - nu * nu * b1).powi(2))
        .sum();
    b1 / ((1.0 - nu0) / q as f64 * ss).sqrt()
}

/// `W_Q` from a discretised path `path[j] = B(j / n_steps)`, `j = 0..=n_steps`.
pub fn statistic_from_path(path: &[f64], cfg: &PivotalConfig) -> f64 {
    debug_assert_eq!(path.len(), cfg.n_steps + 1);
    let vals: Vec<f64> = cfg.snapped_indices().iter().map(|&j| path[j]).collect();
    statistic_from_values(&vals, cfg.nu0, &cfg.scheme().fractions())
}

/// Draws of `W_Q`, one per path; deterministic in `cfg.seed` and independent
/// of the number of worker threads (path `i` uses RNG stream `i`).
///
/// The statistic reads the random walk only at the snapped indices, so each
/// path samples the walk's values there directly: the sum of `k` i.i.d.
/// `N(0, 1/n_steps)` increments is one `N(0, k/n_steps)` draw. This has the
/// same law as building the full walk.
pub fn draw_pivotal(cfg: &PivotalConfig) -> Result<Vec<f64>> {
    Ok(draw_with_redraws(cfg)?.0)
}

/// As [`draw_pivotal`], also returning how many paths were redrawn because the
/// denominator vanished.
pub fn draw_with_redraws(cfg: &PivotalConfig) -> Result<(Vec<f64>, usize)> {
    cfg.validate()?;
    Ok(draw_inner(cfg))
}

fn draw_inner(cfg: &PivotalConfig) -> (Vec<f64>, usize) {
    let idx = cfg.snapped_indices();
    let fractions = cfg.scheme().fractions();
    let steps = cfg.n_steps as f64;
    let out: Vec<(f64, usize)> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(path as u64);
            let mut vals = vec![0.0; idx.len()];
            let mut redraws = 0;
            loop {
                let (mut pos, mut level) = (0usize, 0.0f64);
                for (v, &j) in vals.iter_mut().zip(&idx) {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    level += z * ((j - pos) as f64 / steps).sqrt();
                    pos = j;
                    *v = level;
                }
                let w = statistic_from_values(&vals, cfg.nu0, &fractions);
                if w.is_finite() && denominator_ok(&vals, cfg.nu0, &fractions) {
                    return (w, redraws);
                }
                redraws += 1;
            }
        })
        .collect();
    let redraws = out.iter().map(|o| o.1).sum();
    if redraws > 0 {
        log::warn!("{redraws} pivotal paths redrawn after a vanishing denominator");
    }
    (out.into_iter().map(|o| o.0).collect(), redraws)
}

fn denominator_ok(b: &[f64], nu0: f64, fractions: &[f64]) -> bool {
    let b1 = *b.last().unwrap();
    let ss: f64 = fractions.iter().zip(b).map(|(nu, bq)| (nu * bq - nu * nu * b1).powi(2)).sum();
    ((1.0 - nu0) / fractions.len() as f64 * ss).sqrt() >= MIN_DENOMINATOR
}

/// Empirical quantile: the `⌈level·n⌉`-th order statistic.
pub fn order_statistic(sorted: &[f64], level: f64) -> f64 {
    let n = sorted.len();
    let k = ((level * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    sorted[k - 1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileTable {
    pub config: Option<PivotalConfig>,
    /// `(level, quantile)` pairs sorted by level.
    pub entries: Vec<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub draws: Option<Vec<f64>>,
}

impl QuantileTable {
    /// Quantile at `level`, which must be one of the table's levels.
    pub fn quantile(&self, level: f64) -> Result<f64> {
        self.entries
            .iter()
            .find(|(l, _)| (l - level).abs() < 1e-12)
            .map(|e| e.1)
            .ok_or(Error::MissingQuantile(level))
    }

    pub fn levels(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.0).collect()
    }
}

fn check_levels(levels: &[f64]) -> Result<()> {
    if let Some(l) = levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
        return Err(Error::InvalidInput(format!("quantile level {l} outside (0,1)")));
    }
    Ok(())
}

pub fn quantiles(draws: &[f64], levels: &[f64]) -> Result<QuantileTable> {
    if draws.is_empty() {
        return Err(Error::EmptySample);
    }
    check_levels(levels)?;
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut entries: Vec<(f64, f64)> = levels.iter().map(|&l| (l, order_statistic(&sorted, l))).collect();
    entries.sort_by(|a, b| a.0.total_cmp(&b.0));
    entries.dedup_by(|a, b| a.0 == b.0);
    Ok(QuantileTable {
        config: None,
        entries,
        draws: None,
    })
}

/// Simulate and tabulate in one step.
pub fn simulate_table(cfg: &PivotalConfig, levels: &[f64]) -> Result<QuantileTable> {
    let draws = draw_pivotal(cfg)?;
    let mut t = quantiles(&draws, levels)?;
    t.config = Some(*cfg);
    Ok(t)
}

/// Cache directory from the environment, else a folder under the system
/// temporary directory.
pub fn default_cache_dir() -> PathBuf {
    std::env::var_os(CACHE_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("pivotfda-cache"))
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    config: PivotalConfig,
    sorted_draws: Vec<f64>,
}

/// On-disk store of sorted pivotal draws, one JSON document per config.
#[derive(Debug)]
pub struct QuantileCache {
    dir: PathBuf,
    simulations: AtomicUsize,
}

impl QuantileCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        QuantileCache {
            dir: dir.into(),
            simulations: AtomicUsize::new(0),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Number of simulations this cache has run (cache misses).
    pub fn simulations(&self) -> usize {
        self.simulations.load(Ordering::SeqCst)
    }

    fn path_for(&self, cfg: &PivotalConfig) -> PathBuf {
        self.dir.join(format!(
            "pivotal_nu{:016x}_q{}_paths{}_steps{}_seed{}.json",
            cfg.nu0.to_bits(),
            cfg.q,
            cfg.n_paths,
            cfg.n_steps,
            cfg.seed
        ))
    }

    fn load(&self, cfg: &PivotalConfig) -> Option<Vec<f64>> {
        let path = self.path_for(cfg);
        let text = std::fs::read_to_string(&path).ok()?;
        match serde_json::from_str::<CacheEntry>(&text) {
            Ok(e) if e.config == *cfg && e.sorted_draws.len() == cfg.n_paths => Some(e.sorted_draws),
            Ok(_) => {
                log::warn!("cache entry {} does not match its key; recomputing", path.display());
                None
            }
            Err(err) => {
                log::warn!("corrupt cache entry {}: {err}; recomputing", path.display());
                None
            }
        }
    }

    /// Sorted draws for `cfg`, simulated and stored on a miss.
    pub fn sorted_draws(&self, cfg: &PivotalConfig) -> Result<Vec<f64>> {
        cfg.validate()?;
        if let Some(d) = self.load(cfg) {
            return Ok(d);
        }
        let mut draws = draw_pivotal(cfg)?;
        self.simulations.fetch_add(1, Ordering::SeqCst);
        draws.sort_by(f64::total_cmp);
        let entry = CacheEntry {
            config: *cfg,
            sorted_draws: draws,
        };
        let path = self.path_for(cfg);
        let written = std::fs::create_dir_all(&self.dir)
            .and_then(|_| std::fs::write(&path, serde_json::to_vec(&entry).expect("serializable")));
        if let Err(e) = written {
            log::warn!("could not write pivotal cache {}: {e}", path.display());
        }
        Ok(entry.sorted_draws)
    }

    pub fn table(&self, cfg: &PivotalConfig, levels: &[f64]) -> Result<QuantileTable> {
        check_levels(levels)?;
        let sorted = self.sorted_draws(cfg)?;
        let mut t = quantiles(&sorted, levels)?;
        t.config = Some(*cfg);
        Ok(t)
    }

    pub fn quantile(&self, cfg: &PivotalConfig, level: f64) -> Result<f64> {
        self.table(cfg, &[level])?.quantile(level)
    }
}

/// One-shot cached lookup of a single quantile.
pub fn cached_quantile(cfg: &PivotalConfig, level: f64, cache_dir: impl Into<PathBuf>) -> Result<f64> {
    QuantileCache::new(cache_dir).quantile(cfg, level)
}
