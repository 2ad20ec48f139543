//! Monte Carlo experiments on random polynomials.
//!
//! Trial `i` at coefficient count `n` draws its coefficients from stream
//! `(derive_seed(seed, [n]), i)`, so every estimate below is a function of
//! the configuration alone. Counts are aggregated as integers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::persistence::MCEstimate;
use crate::poly::{sample_coefficients, CoefficientDistribution, Polynomial};
use crate::rng::{derive_seed, RandomStream};
use crate::roots::{
    certified_real_zero, has_no_real_zero_exact, numeric_count, numeric_zeros, resolve_backend, sturm_count, Backend, ExactCounter,
    Grid, GridSpec, IntPoly, Regime,
};

/// Coefficient counts used for exponent fits: `2^k + 1`, i.e. even degrees.
pub const STANDARD_LADDER: [usize; 5] = [17, 33, 65, 129, 257];

fn default_output() -> String {
    "results".to_string()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub distribution: CoefficientDistribution,
    /// Numbers of coefficients `n` (degree `n - 1`).
    pub n_values: Vec<usize>,
    pub trials_per_n: u64,
    pub seed: u64,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub backend: Backend,
    #[serde(default = "default_output")]
    pub output_path: String,
}

impl ExperimentConfig {
    pub fn new(distribution: CoefficientDistribution, n_values: Vec<usize>, trials_per_n: u64, seed: u64) -> Self {
        Self {
            distribution,
            n_values,
            trials_per_n,
            seed,
            grid: GridSpec::default(),
            backend: Backend::Auto,
            output_path: default_output(),
        }
    }

    pub fn with_backend(self, backend: Backend) -> Self {
        Self { backend, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        self.distribution.validate()?;
        self.grid.validate()?;
        if self.n_values.is_empty() {
            return Err(Error::InvalidParameter("n_values is empty".into()));
        }
        if let Some(n) = self.n_values.iter().find(|&&n| n < 2) {
            return Err(Error::InvalidParameter(format!("n = {n}: need at least 2 coefficients")));
        }
        if self.trials_per_n == 0 {
            return Err(Error::InvalidParameter("trials_per_n must be at least 1".into()));
        }
        if self.backend == Backend::Exact && !self.distribution.is_integer_valued() {
            return Err(Error::InvalidParameter(format!(
                "the exact backend needs an integer-valued law, got {}",
                self.distribution
            )));
        }
        Ok(())
    }

    fn stream(&self, n: usize, trial: u64) -> RandomStream {
        RandomStream::new(derive_seed(self.seed, &[n as u64]), trial)
    }

    fn polynomial(&self, n: usize, trial: u64) -> Polynomial {
        sample_coefficients(&self.distribution, n, &mut self.stream(n, trial))
    }
}

/// True for the even-degree (odd `n`) experiments the exponent refers to.
pub fn is_theorem_ladder(n: usize) -> bool {
    n % 2 == 1
}

fn check_n(cfg: &ExperimentConfig, n: usize) -> Result<()> {
    cfg.validate()?;
    if n < 2 {
        return Err(Error::InvalidParameter(format!("n = {n}: need at least 2 coefficients")));
    }
    Ok(())
}

/// Distinct real-zero count of one trial, or `None` when the numeric count
/// is suspect and cannot be recounted exactly.
fn trial_count(poly: &Polynomial, grid: &Grid, backend: Backend) -> Result<Option<usize>> {
    if poly.is_zero() {
        return Ok(None);
    }
    match resolve_backend(backend, poly) {
        Backend::Exact => Ok(Some(sturm_count(poly)?.count)),
        _ => {
            let r = numeric_count(poly, grid);
            if !r.is_suspect() {
                Ok(Some(r.count))
            } else if poly.integer_coeffs().is_some() {
                Ok(Some(sturm_count(poly)?.count))
            } else {
                Ok(None)
            }
        }
    }
}

/// Whether one trial has no real zero, or `None` when excluded. A certified
/// sign change settles the question without a full count, so a trial with
/// a suspect count elsewhere is only excluded when the event itself is
/// undecided.
fn trial_zero_free(poly: &Polynomial, grid: &Grid, backend: Backend) -> Result<Option<bool>> {
    if poly.is_zero() {
        return Ok(None);
    }
    match resolve_backend(backend, poly) {
        Backend::Exact => Ok(Some(has_no_real_zero_exact(poly, grid)?)),
        _ if certified_real_zero(poly, grid) => Ok(Some(false)),
        _ => Ok(trial_count(poly, grid, backend)?.map(|c| c == 0)),
    }
}

fn try_sum<T, F>(trials: u64, f: F) -> Result<T>
where
    T: Send + Default + std::ops::Add<Output = T>,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..trials)
        .into_par_iter()
        .map(f)
        .try_reduce(T::default, |a, b| Ok(a + b))
}

#[derive(Clone, Copy, Default)]
struct Tally {
    successes: u64,
    excluded: u64,
}

impl std::ops::Add for Tally {
    type Output = Tally;

    fn add(self, o: Tally) -> Tally {
        Tally { successes: self.successes + o.successes, excluded: self.excluded + o.excluded }
    }
}

/// `P_n`: probability that the polynomial with `n` coefficients has no real
/// zero. Suspect numeric trials are recounted exactly for integer laws and
/// otherwise excluded from both numerator and denominator; the number
/// excluded is reported in the estimate.
pub fn estimate_pn(cfg: &ExperimentConfig, n: usize) -> Result<MCEstimate> {
    check_n(cfg, n)?;
    let grid = Grid::new(&cfg.grid, n - 1);
    let tally = try_sum(cfg.trials_per_n, |i| {
        let poly = cfg.polynomial(n, i);
        Ok(match trial_zero_free(&poly, &grid, cfg.backend)? {
            Some(free) => Tally { successes: free as u64, excluded: 0 },
            None => Tally { successes: 0, excluded: 1 },
        })
    })?;
    Ok(MCEstimate::from_counts(tally.successes, cfg.trials_per_n - tally.excluded, cfg.seed).with_excluded(tally.excluded))
}

/// Distribution of the distinct real-zero count over the trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountDistribution {
    pub n: usize,
    /// `counts[k]` trials had exactly `k` distinct real zeros.
    pub counts: Vec<u64>,
    pub excluded: u64,
    pub seed: u64,
}

impl CountDistribution {
    pub fn degree(&self) -> usize {
        self.n - 1
    }

    pub fn used(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Trials whose count has the wrong parity for the degree.
    pub fn parity_violations(&self) -> u64 {
        let d = self.degree();
        self.counts.iter().enumerate().filter(|(k, _)| (d + k) % 2 == 1).map(|(_, c)| c).sum()
    }

    pub fn estimate(&self, k: usize) -> MCEstimate {
        let s = self.counts.get(k).copied().unwrap_or(0);
        MCEstimate::from_counts(s, self.used(), self.seed).with_excluded(self.excluded)
    }

    pub fn mean_and_variance(&self) -> (f64, f64) {
        let n = self.used() as f64;
        let (s1, s2) = self
            .counts
            .iter()
            .enumerate()
            .fold((0u128, 0u128), |(a, b), (k, &c)| (a + k as u128 * c as u128, b + (k * k) as u128 * c as u128));
        let mean = s1 as f64 / n;
        let var = (s2 as f64 - n * mean * mean) / (n - 1.0);
        (mean, var.max(0.0))
    }
}

#[derive(Clone, Default)]
struct Histogram(Vec<u64>, u64);

impl std::ops::Add for Histogram {
    type Output = Histogram;

    fn add(mut self, o: Histogram) -> Histogram {
        if self.0.len() < o.0.len() {
            self.0.resize(o.0.len(), 0);
        }
        self.0.iter_mut().zip(&o.0).for_each(|(a, b)| *a += b);
        Histogram(self.0, self.1 + o.1)
    }
}

pub fn count_distribution(cfg: &ExperimentConfig, n: usize) -> Result<CountDistribution> {
    check_n(cfg, n)?;
    let grid = Grid::new(&cfg.grid, n - 1);
    let h = try_sum(cfg.trials_per_n, |i| {
        let poly = cfg.polynomial(n, i);
        Ok(match trial_count(&poly, &grid, cfg.backend)? {
            Some(k) => {
                let mut v = vec![0; k + 1];
                v[k] = 1;
                Histogram(v, 0)
            }
            None => Histogram(Vec::new(), 1),
        })
    })?;
    let mut counts = h.0;
    counts.resize(counts.len().max(n), 0);
    Ok(CountDistribution { n, counts, excluded: h.1, seed: cfg.seed })
}

/// `p_{n,k}`: probability of exactly `k` distinct real zeros. For laws
/// without atoms any mass on counts of the wrong parity is an error. `k = 0`
/// is the event of [`estimate_pn`] and is estimated by it, on the same
/// trials; the count distribution can differ from it only through trials
/// excluded as suspect.
pub fn estimate_pnk(cfg: &ExperimentConfig, n: usize, k: usize) -> Result<MCEstimate> {
    if k == 0 {
        return estimate_pn(cfg, n);
    }
    let dist = count_distribution(cfg, n)?;
    let bad = dist.parity_violations();
    if cfg.distribution.is_continuous() && bad > 0 {
        return Err(Error::Certification(format!("{bad} trials at n = {n} have a count of the wrong parity")));
    }
    Ok(dist.estimate(k))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub n: usize,
    pub trials: u64,
    pub excluded: u64,
    pub mean: f64,
    pub variance: f64,
    /// Standard error of the mean.
    pub stderr: f64,
    /// Standard error of the variance, from the fourth central moment.
    pub variance_stderr: f64,
}

/// Mean and variance of the distinct real-zero count.
pub fn estimate_en_vn(cfg: &ExperimentConfig, n: usize) -> Result<MomentEstimate> {
    if cfg.trials_per_n < 2 {
        return Err(Error::InvalidParameter("need at least 2 trials for a variance".into()));
    }
    let dist = count_distribution(cfg, n)?;
    moments_of(&dist)
}

pub fn moments_of(dist: &CountDistribution) -> Result<MomentEstimate> {
    let used = dist.used();
    if used < 2 {
        return Err(Error::InvalidParameter("fewer than 2 usable trials".into()));
    }
    let (mean, variance) = dist.mean_and_variance();
    let m = used as f64;
    let m4 = dist
        .counts
        .iter()
        .enumerate()
        .map(|(k, &c)| c as f64 * (k as f64 - mean).powi(4))
        .sum::<f64>()
        / m;
    Ok(MomentEstimate {
        n: dist.n,
        trials: used,
        excluded: dist.excluded,
        mean,
        variance,
        stderr: (variance / m).sqrt(),
        variance_stderr: ((m4 - variance * variance).max(0.0) / m).sqrt(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub points_used: usize,
}

/// Weighted least squares of `ln p_hat` on `ln n`, weights `N p / (1 - p)`
/// (inverse delta-method variance of `ln p_hat`). With more than two points
/// the slope error is scaled by the weighted residuals, so an exact power
/// law has zero error; with two it is the model error.
pub fn fit_exponent(points: &[(usize, MCEstimate)]) -> Result<ExponentFit> {
    let usable: Vec<(f64, f64, f64)> = points
        .iter()
        .filter(|(_, e)| e.successes > 0 && e.p_hat > 0.0 && e.p_hat < 1.0)
        .map(|(n, e)| ((*n as f64).ln(), e.p_hat.ln(), e.trials as f64 * e.p_hat / (1.0 - e.p_hat)))
        .collect();
    let k = usable.len();
    if k < 2 {
        return Err(Error::DegenerateFit(format!("{k} usable points; need at least 2")));
    }
    if usable.iter().all(|p| p.0 == usable[0].0) {
        return Err(Error::DegenerateFit("all points share the same n".into()));
    }
    let sw: f64 = usable.iter().map(|p| p.2).sum();
    let xm = usable.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let ym = usable.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = usable.iter().map(|p| p.2 * (p.0 - xm).powi(2)).sum();
    let sxy: f64 = usable.iter().map(|p| p.2 * (p.0 - xm) * (p.1 - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let slope_stderr = if k > 2 {
        let rss: f64 = usable.iter().map(|p| p.2 * (p.1 - intercept - slope * p.0).powi(2)).sum();
        (rss / (k - 2) as f64 / sxx).sqrt()
    } else {
        (1.0 / sxx).sqrt()
    };
    Ok(ExponentFit { slope, intercept, slope_stderr, points_used: k })
}

/// Zero locations binned by depth `t = -ln(1 - u)` within each regime
/// (`x = u`, `1/u`, `-1/u`, `-u` with `u in [0, 1]`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroHistogram {
    pub n: usize,
    /// Bin edges in `t`, shared by the regimes.
    pub edges: Vec<f64>,
    /// `counts[r][b]` for regime `r` in [`Regime::ALL`] order; the last cell
    /// of each row collects `t >= edges.last()`, including `x = ±1`.
    pub counts: Vec<Vec<u64>>,
    pub total: u64,
    pub trials: u64,
    pub excluded: u64,
}

impl ZeroHistogram {
    /// Fraction of all zeros with depth at least `t` (rounded to a bin edge).
    pub fn fraction_beyond(&self, t: f64) -> f64 {
        let first = self.edges.iter().position(|&e| e >= t).unwrap_or(self.edges.len() - 1);
        let deep: u64 = self.counts.iter().map(|row| row[first..].iter().sum::<u64>()).sum();
        deep as f64 / self.total as f64
    }
}

const BIN_WIDTH: f64 = 0.5;

fn bin_of(edges: &[f64], t: f64) -> usize {
    // edges start at 0, so t >= 0 always lands somewhere
    edges.partition_point(|&e| e <= t).saturating_sub(1).min(edges.len() - 1)
}

/// Per-cell counts of one polynomial from exact interval counts.
fn exact_cells(poly: &Polynomial, edges: &[f64]) -> Result<Vec<Vec<u64>>> {
    let ints = poly.integer_coeffs().ok_or_else(|| Error::InvalidParameter("exact binning needs integers".into()))?;
    let counter = ExactCounter::new(&IntPoly::from_i64(&ints))?;
    let cells = edges.len();
    let mut out = vec![vec![0u64; cells]; 4];
    let u: Vec<f64> = edges.iter().map(|&t| -(-t).exp_m1()).collect();
    // partition of the real line into (a, b] pieces, each inside one cell
    let mut pieces: Vec<(f64, Regime, usize)> = Vec::new();
    for b in 1..cells {
        pieces.push((-1.0 / u[b], Regime::NegInverse, b - 1));
    }
    pieces.push((-1.0, Regime::NegInverse, cells - 1));
    for b in (1..cells).rev() {
        pieces.push((-u[b], Regime::Negate, b));
    }
    pieces.push((0.0, Regime::Negate, 0));
    for b in 1..cells {
        pieces.push((u[b], Regime::Identity, b - 1));
    }
    pieces.push((1.0, Regime::Identity, cells - 1));
    for b in (1..cells).rev() {
        pieces.push((1.0 / u[b], Regime::Inverse, b));
    }
    pieces.push((f64::INFINITY, Regime::Inverse, 0));
    let mut lo = f64::NEG_INFINITY;
    for (hi, regime, bin) in pieces {
        out[regime.index()][bin] += counter.count_in(lo, hi)? as u64;
        lo = hi;
    }
    // zeros sitting on -1 and 0 were counted by the piece ending there
    let at = |x: f64| poly.evaluate(x) == 0.0;
    if at(-1.0) {
        out[Regime::NegInverse.index()][cells - 1] -= 1;
        out[Regime::Negate.index()][cells - 1] += 1;
    }
    if at(0.0) {
        out[Regime::Negate.index()][0] -= 1;
        out[Regime::Identity.index()][0] += 1;
    }
    Ok(out)
}

#[derive(Clone, Default)]
struct Cells(Vec<Vec<u64>>, u64);

impl std::ops::Add for Cells {
    type Output = Cells;

    fn add(self, o: Cells) -> Cells {
        if self.0.is_empty() {
            return Cells(o.0, self.1 + o.1);
        }
        if o.0.is_empty() {
            return Cells(self.0, self.1 + o.1);
        }
        let merged = self
            .0
            .into_iter()
            .zip(o.0)
            .map(|(a, b)| a.into_iter().zip(b).map(|(x, y)| x + y).collect())
            .collect();
        Cells(merged, self.1 + o.1)
    }
}

/// Histogram of zero locations over `cfg.trials_per_n` trials.
pub fn zero_histogram(cfg: &ExperimentConfig, n: usize) -> Result<ZeroHistogram> {
    check_n(cfg, n)?;
    let degree = n - 1;
    let grid = Grid::new(&cfg.grid, degree);
    let top = (cfg.grid.t_max_for(degree) / BIN_WIDTH).ceil() as usize;
    let edges: Vec<f64> = (0..=top).map(|k| k as f64 * BIN_WIDTH).collect();
    let cells = try_sum(cfg.trials_per_n, |i| {
        let poly = cfg.polynomial(n, i);
        polynomial_cells(&poly, &grid, &edges, cfg.backend)
    })?;
    let counts = if cells.0.is_empty() { vec![vec![0; edges.len()]; 4] } else { cells.0 };
    let total = counts.iter().flatten().sum();
    Ok(ZeroHistogram { n, edges, counts, total, trials: cfg.trials_per_n - cells.1, excluded: cells.1 })
}

fn polynomial_cells(poly: &Polynomial, grid: &Grid, edges: &[f64], backend: Backend) -> Result<Cells> {
    if poly.is_zero() {
        return Ok(Cells(Vec::new(), 1));
    }
    let exact = |p: &Polynomial| exact_cells(p, edges).map(|c| Cells(c, 0));
    if resolve_backend(backend, poly) == Backend::Exact {
        return exact(poly);
    }
    let z = numeric_zeros(poly, grid);
    if !z.suspect.is_empty() {
        return if poly.integer_coeffs().is_some() { exact(poly) } else { Ok(Cells(Vec::new(), 1)) };
    }
    let mut out = vec![vec![0u64; edges.len()]; 4];
    for zero in &z.zeros {
        out[zero.regime.index()][bin_of(edges, zero.t())] += 1;
    }
    Ok(Cells(out, 0))
}

/// Zero histogram of a single given polynomial.
pub fn polynomial_histogram(poly: &Polynomial, spec: &GridSpec, backend: Backend) -> Result<ZeroHistogram> {
    let degree = poly.degree().max(1);
    let grid = Grid::new(spec, degree);
    let top = (spec.t_max_for(degree) / BIN_WIDTH).ceil() as usize;
    let edges: Vec<f64> = (0..=top).map(|k| k as f64 * BIN_WIDTH).collect();
    let cells = polynomial_cells(poly, &grid, &edges, backend)?;
    let counts = if cells.0.is_empty() { vec![vec![0; edges.len()]; 4] } else { cells.0 };
    let total = counts.iter().flatten().sum();
    Ok(ZeroHistogram { n: poly.coeffs().len(), edges, counts, total, trials: 1 - cells.1, excluded: cells.1 })
}
