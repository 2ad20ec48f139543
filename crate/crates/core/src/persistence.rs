//! Persistence probabilities `P(sup_{[0,T]} X <= level)` and the exponent
//! `b = -4 lim (1/T) log P`.
//!
//! Trials are drawn in pairs: trials `2j` and `2j + 1` come from stream
//! `(seed, j)`, so every estimate depends only on the seed and the trial
//! count, never on scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{grid_index, CovarianceKind, GridPath, Monitor, PathSampler, PathSpec};
use crate::rng::{derive_seed, RandomStream};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959963984540054;

const BRIDGE_LABEL: u64 = 0xb41d;
const SPLIT_LABEL: u64 = 0x5b17;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub trials: u64,
    pub successes: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub std_error: f64,
    /// Trials dropped before counting (suspect zero counts).
    #[serde(default)]
    pub excluded: u64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<PathSpec>,
}

/// 95% Wilson score interval.
pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

impl MCEstimate {
    pub fn from_counts(successes: u64, trials: u64, seed: u64) -> Self {
        let (p_hat, std_error) = if trials == 0 {
            (f64::NAN, f64::NAN)
        } else {
            let p = successes as f64 / trials as f64;
            (p, (p * (1.0 - p) / trials as f64).sqrt())
        };
        let (ci_low, ci_high) = wilson_interval(successes, trials);
        Self { trials, successes, p_hat, ci_low, ci_high, std_error, excluded: 0, seed, spec: None }
    }

    pub fn with_spec(self, spec: PathSpec) -> Self {
        Self { spec: Some(spec), ..self }
    }

    pub fn with_excluded(self, excluded: u64) -> Self {
        Self { excluded, ..self }
    }

    /// Binomial standard deviation of the estimator if the truth were `p`.
    pub fn sigma_at(&self, p: f64) -> f64 {
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }

    /// `|p_hat - p|` in units of [`sigma_at`](Self::sigma_at).
    pub fn z_score(&self, p: f64) -> f64 {
        (self.p_hat - p).abs() / self.sigma_at(p)
    }

    /// Standard error of `log p_hat`, read off the confidence interval.
    pub fn log_error(&self) -> f64 {
        (self.ci_high.ln() - self.ci_low.ln()) / (2.0 * Z95)
    }
}

/// Which side of the level the path must stay on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// `sup X <= level`.
    Below,
    /// `inf X >= level`.
    Above,
}

fn sum_over_pairs<F>(trials: u64, f: F) -> u64
where
    F: Fn(u64, usize) -> u64 + Sync,
{
    let pairs = trials.div_ceil(2);
    (0..pairs)
        .into_par_iter()
        .map(|j| {
            let both = if 2 * j + 1 < trials { 2 } else { 1 };
            f(j, both)
        })
        .sum()
}

/// `ln` of the probability that a Brownian bridge of the time-changed OU
/// path stays below 0 between every pair of grid points, given the grid
/// values are all `<= 0`.
fn ou_bridge_log_survival(values: &[f64], dt: f64) -> f64 {
    // in Lamperti time s = e^t the bridge crossing probability between
    // neighbours is exp(-2 u_i u_{i+1} / ds) with u = e^{t/2} x; the time
    // dependence cancels
    let c = 2.0 * (dt / 2.0).exp() / dt.exp_m1();
    values.windows(2).map(|w| (-(-c * w[0] * w[1]).exp()).ln_1p()).sum()
}

fn path_succeeds(path: &GridPath, spec: &PathSpec, side: Side, uniform: impl FnOnce() -> f64) -> bool {
    let stays = match side {
        Side::Below => path.values.iter().all(|&x| x <= spec.level),
        Side::Above => path.values.iter().all(|&x| x >= spec.level),
    };
    if !stays || spec.monitor == Monitor::Grid {
        return stays;
    }
    let log_survive = match side {
        Side::Below => ou_bridge_log_survival(&path.values, path.dt),
        Side::Above => {
            let flipped: Vec<f64> = path.values.iter().map(|x| -x).collect();
            ou_bridge_log_survival(&flipped, path.dt)
        }
    };
    uniform().ln() < log_survive
}

/// Monte Carlo estimate of `P(sup X <= level)` on the grid of `spec` (or in
/// continuous time with the bridge monitor).
pub fn persist_prob(spec: &PathSpec, trials: u64, seed: u64) -> Result<MCEstimate> {
    persist_prob_side(spec, Side::Below, trials, seed)
}

pub fn persist_prob_side(spec: &PathSpec, side: Side, trials: u64, seed: u64) -> Result<MCEstimate> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let sampler = PathSampler::new(spec)?;
    persist_with_sampler(&sampler, side, trials, seed)
}

/// Same as [`persist_prob_side`] with a prebuilt sampler.
pub fn persist_with_sampler(sampler: &PathSampler, side: Side, trials: u64, seed: u64) -> Result<MCEstimate> {
    let spec = *sampler.spec();
    let bridge_seed = derive_seed(seed, &[BRIDGE_LABEL]);
    let successes = sum_over_pairs(trials, |j, both| {
        let paths = sampler.sample_pair(&mut RandomStream::new(seed, j));
        paths[..both]
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let index = 2 * j + k as u64;
                path_succeeds(p, &spec, side, || RandomStream::new(bridge_seed, index).uniform()) as u64
            })
            .sum()
    });
    Ok(MCEstimate::from_counts(successes, trials, seed).with_spec(spec))
}

/// Continuous-time OU persistence `P(sup_{[0,T]} X <= 0) = (1/π) arctan((e^T - 1)^{-1/2})`.
pub fn ou_persist_exact(t: f64) -> f64 {
    if t < 0.0 {
        return f64::NAN;
    }
    (1.0 / t.exp_m1().sqrt()).atan() / std::f64::consts::PI
}

/// Horizon actually covered by the grid of `spec`.
pub fn grid_horizon(spec: &PathSpec) -> f64 {
    (spec.points() - 1) as f64 * spec.dt
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub t: f64,
    pub estimate: MCEstimate,
    /// `-4 ln(p_hat) / T`.
    pub b_hat: f64,
    /// `4 δ(ln p) / T` with `δ(ln p)` from the Wilson interval.
    pub b_err: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PersistenceCurve {
    pub points: Vec<CurvePoint>,
    /// First horizon with no successes; the curve stops before it.
    pub extinct_at: Option<f64>,
}

impl PersistenceCurve {
    /// Estimate and error bar at the largest horizon reached.
    pub fn final_b(&self) -> Option<(f64, f64)> {
        self.points.last().map(|p| (p.b_hat, p.b_err))
    }

    /// `b_hat(T)` never rises by more than `k` combined standard errors.
    pub fn is_non_increasing(&self, k: f64) -> bool {
        self.points
            .windows(2)
            .all(|w| w[1].b_hat <= w[0].b_hat + k * w[0].b_err.hypot(w[1].b_err))
    }
}

/// `b_hat(T)` for each horizon in `horizons`, from `trials` paths sampled
/// once at the largest horizon. Each horizon uses the prefix of the same
/// paths, so the estimates are coupled.
pub fn estimate_b(kind: CovarianceKind, horizons: &[f64], dt: f64, trials: u64, seed: u64) -> Result<PersistenceCurve> {
    estimate_b_monitored(kind, horizons, dt, Monitor::Grid, trials, seed)
}

pub fn estimate_b_monitored(
    kind: CovarianceKind,
    horizons: &[f64],
    dt: f64,
    monitor: Monitor,
    trials: u64,
    seed: u64,
) -> Result<PersistenceCurve> {
    if horizons.is_empty() || horizons.windows(2).any(|w| w[1] <= w[0]) || horizons[0] <= 0.0 {
        return Err(Error::InvalidParameter("horizons must be positive and strictly increasing".into()));
    }
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let t_max = *horizons.last().unwrap();
    let spec = PathSpec::new(kind, t_max, dt).with_monitor(monitor);
    let sampler = PathSampler::new(&spec)?;
    let cuts: Vec<usize> = horizons.iter().map(|&t| grid_index(t, dt)).collect();
    let bridge_seed = derive_seed(seed, &[BRIDGE_LABEL]);
    let bridge_c = 2.0 * (dt / 2.0).exp() / dt.exp_m1();

    let counts = (0..trials.div_ceil(2))
        .into_par_iter()
        .map(|j| {
            let mut counts = vec![0u64; cuts.len()];
            let paths = sampler.sample_pair(&mut RandomStream::new(seed, j));
            let both = if 2 * j + 1 < trials { 2 } else { 1 };
            for (k, path) in paths[..both].iter().enumerate() {
                let log_u = match monitor {
                    Monitor::Grid => f64::NEG_INFINITY,
                    Monitor::Bridge => RandomStream::new(bridge_seed, 2 * j + k as u64).uniform().ln(),
                };
                let v = &path.values;
                let mut max = f64::NEG_INFINITY;
                let mut log_survive = 0.0;
                let mut start = 0;
                for (c, &cut) in cuts.iter().enumerate() {
                    for i in start..=cut {
                        max = max.max(v[i]);
                        if monitor == Monitor::Bridge && i > 0 {
                            log_survive += (-(-bridge_c * v[i - 1] * v[i]).exp()).ln_1p();
                        }
                    }
                    start = cut + 1;
                    if max > 0.0 || log_u >= log_survive {
                        break;
                    }
                    counts[c] += 1;
                }
            }
            counts
        })
        .reduce(
            || vec![0u64; cuts.len()],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );

    let mut points = Vec::new();
    let mut extinct_at = None;
    for (&t, &s) in horizons.iter().zip(&counts) {
        if s == 0 {
            extinct_at = Some(t);
            break;
        }
        let estimate = MCEstimate::from_counts(s, trials, seed).with_spec(PathSpec { t_max: t, ..spec });
        let b_hat = -4.0 * estimate.p_hat.ln() / t;
        let b_err = 4.0 * estimate.log_error() / t;
        points.push(CurvePoint { t, estimate, b_hat, b_err });
    }
    if points.is_empty() {
        return Err(Error::Extinction { horizon: horizons[0] });
    }
    Ok(PersistenceCurve { points, extinct_at })
}

/// Grid-refinement pair at level `spec.level`: paths are sampled on the
/// grid with step `dt / 2` and the coarse estimate uses every other point
/// of the same paths, so `coarse.successes >= fine.successes` always.
pub fn refinement_pair(spec: &PathSpec, trials: u64, seed: u64) -> Result<(MCEstimate, MCEstimate)> {
    let fine_spec = PathSpec { dt: spec.dt / 2.0, monitor: Monitor::Grid, ..*spec };
    let sampler = PathSampler::new(&fine_spec)?;
    let level = spec.level;
    let both_counts = |j: u64, both: usize| -> (u64, u64) {
        let paths = sampler.sample_pair(&mut RandomStream::new(seed, j));
        paths[..both].iter().fold((0, 0), |(c, f), p| {
            let coarse = p.values.iter().step_by(2).all(|&x| x <= level);
            let fine = coarse && p.values.iter().all(|&x| x <= level);
            (c + coarse as u64, f + fine as u64)
        })
    };
    let (c, f) = (0..trials.div_ceil(2))
        .into_par_iter()
        .map(|j| both_counts(j, if 2 * j + 1 < trials { 2 } else { 1 }))
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok((
        MCEstimate::from_counts(c, trials, seed).with_spec(PathSpec { monitor: Monitor::Grid, ..*spec }),
        MCEstimate::from_counts(f, trials, seed).with_spec(fine_spec),
    ))
}

/// Tuning of the splitting estimator's Markov moves.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplittingConfig {
    /// Preconditioned Crank-Nicolson moves per particle and stage.
    pub moves: usize,
    /// Correlation between the current path and the proposal.
    pub rho: f64,
}

impl Default for SplittingConfig {
    fn default() -> Self {
        Self { moves: 6, rho: 0.8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplittingOutcome {
    pub estimate: MCEstimate,
    pub levels: Vec<f64>,
    /// Fraction of particles below each level, given the previous one.
    pub fractions: Vec<f64>,
    /// Acceptance rate of the moves, per stage after the first.
    pub acceptance: Vec<f64>,
}

struct Particle {
    values: Vec<f64>,
    max: f64,
}

impl Particle {
    fn new(values: Vec<f64>) -> Self {
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self { values, max }
    }
}

fn checked_levels(spec: &PathSpec, levels: &[f64]) -> Result<Vec<f64>> {
    if spec.monitor != Monitor::Grid {
        return Err(Error::InvalidParameter("splitting uses the grid monitor".into()));
    }
    if levels.is_empty() || levels.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidParameter("levels must be nonempty and strictly decreasing".into()));
    }
    let last = *levels.last().unwrap();
    if last < spec.level {
        return Err(Error::InvalidParameter(format!("level {last} is below the target {}", spec.level)));
    }
    let mut out = levels.to_vec();
    if last > spec.level {
        out.push(spec.level);
    }
    Ok(out)
}

fn initial_population(sampler: &PathSampler, n: u64, seed: u64) -> Vec<Particle> {
    let mut pop: Vec<Particle> = (0..n.div_ceil(2))
        .into_par_iter()
        .flat_map_iter(|j| {
            let [a, b] = sampler.sample_pair(&mut RandomStream::new(seed, j));
            [Particle::new(a.values), Particle::new(b.values)]
        })
        .collect();
    pop.truncate(n as usize);
    pop
}

/// Resample the survivors of `bound` back to `n` particles (cycling through
/// them) and apply pCN moves that keep the conditioned law invariant.
fn regenerate(
    sampler: &PathSampler,
    pop: &[Particle],
    bound: f64,
    n: u64,
    stream_seed: u64,
    cfg: &SplittingConfig,
) -> (Vec<Particle>, f64) {
    let survivors: Vec<&Particle> = pop.iter().filter(|p| p.max <= bound).collect();
    let c = (1.0 - cfg.rho * cfg.rho).sqrt();
    let results: Vec<(Particle, u64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let start = survivors[i as usize % survivors.len()];
            let mut x = start.values.clone();
            let mut max = start.max;
            let mut stream = RandomStream::new(stream_seed, i);
            let mut accepted = 0;
            let mut proposal = vec![0.0; x.len()];
            let mut done = 0;
            while done < cfg.moves {
                let fresh = sampler.sample_pair(&mut stream);
                for f in fresh.iter().take(cfg.moves - done) {
                    let mut pmax = f64::NEG_INFINITY;
                    for ((z, &xi), &fi) in proposal.iter_mut().zip(&x).zip(&f.values) {
                        *z = cfg.rho * xi + c * fi;
                        pmax = pmax.max(*z);
                    }
                    if pmax <= bound {
                        std::mem::swap(&mut x, &mut proposal);
                        max = pmax;
                        accepted += 1;
                    }
                    done += 1;
                }
            }
            (Particle { values: x, max }, accepted)
        })
        .collect();
    let accepted: u64 = results.iter().map(|r| r.1).sum();
    let rate = accepted as f64 / (n as f64 * cfg.moves.max(1) as f64);
    (results.into_iter().map(|r| r.0).collect(), rate)
}

/// Multilevel splitting estimate of `P(sup X <= spec.level)` with the
/// default move settings. `levels` must decrease strictly; `spec.level` is
/// appended if it is not the last entry.
pub fn splitting_persist(spec: &PathSpec, levels: &[f64], trials_per_level: u64, seed: u64) -> Result<MCEstimate> {
    Ok(splitting_persist_with(spec, levels, trials_per_level, seed, &SplittingConfig::default())?.estimate)
}

/// Fixed-effort splitting. Stage 0 is plain Monte Carlo with the same
/// streams as [`persist_prob`]; each later stage resamples the survivors,
/// moves them, and records the fraction below the next level. The estimate
/// is the product of the fractions; its relative variance is approximated
/// by `Σ (1 - p_k) / (n p_k)`, ignoring correlation between particles.
pub fn splitting_persist_with(
    spec: &PathSpec,
    levels: &[f64],
    trials_per_level: u64,
    seed: u64,
    cfg: &SplittingConfig,
) -> Result<SplittingOutcome> {
    if trials_per_level == 0 {
        return Err(Error::InvalidParameter("trials_per_level must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&cfg.rho) {
        return Err(Error::InvalidParameter(format!("rho = {} must lie in [0, 1)", cfg.rho)));
    }
    let levels = checked_levels(spec, levels)?;
    let sampler = PathSampler::new(spec)?;
    let n = trials_per_level;
    let mut pop = initial_population(&sampler, n, seed);
    let mut fractions = Vec::with_capacity(levels.len());
    let mut acceptance = Vec::new();
    let mut last_count = 0;
    for (k, &level) in levels.iter().enumerate() {
        if k > 0 {
            let (next, rate) = regenerate(&sampler, &pop, levels[k - 1], n, derive_seed(seed, &[SPLIT_LABEL, k as u64]), cfg);
            pop = next;
            acceptance.push(rate);
        }
        let count = pop.iter().filter(|p| p.max <= level).count() as u64;
        if count == 0 {
            return Err(Error::LevelExtinction { stage: k, level });
        }
        fractions.push(count as f64 / n as f64);
        last_count = count;
    }

    let estimate = if levels.len() == 1 {
        MCEstimate::from_counts(last_count, n, seed)
    } else {
        let p: f64 = fractions.iter().product();
        let rel_var: f64 = fractions.iter().map(|&f| (1.0 - f) / (n as f64 * f)).sum();
        let rel = rel_var.sqrt();
        MCEstimate {
            trials: n,
            successes: last_count,
            p_hat: p,
            ci_low: p * (-Z95 * rel).exp(),
            ci_high: (p * (Z95 * rel).exp()).min(1.0),
            std_error: p * rel,
            excluded: 0,
            seed,
            spec: None,
        }
    };
    Ok(SplittingOutcome { estimate: estimate.with_spec(*spec), levels, fractions, acceptance })
}

/// Choose splitting levels from a pilot run so that roughly `keep` of the
/// particles survive each stage.
pub fn adaptive_levels(spec: &PathSpec, pilot: u64, keep: f64, seed: u64, cfg: &SplittingConfig) -> Result<Vec<f64>> {
    const MAX_STAGES: usize = 200;
    if !(keep > 0.0 && keep < 1.0) || pilot < 2 {
        return Err(Error::InvalidParameter("keep must lie in (0, 1) and pilot must be at least 2".into()));
    }
    let sampler = PathSampler::new(&PathSpec { monitor: Monitor::Grid, ..*spec })?;
    let mut pop = initial_population(&sampler, pilot, seed);
    let mut levels: Vec<f64> = Vec::new();
    for stage in 0..MAX_STAGES {
        let mut maxes: Vec<f64> = pop.iter().map(|p| p.max).collect();
        maxes.sort_by(f64::total_cmp);
        let idx = ((keep * pilot as f64).ceil() as usize).clamp(1, maxes.len()) - 1;
        let mut level = maxes[idx];
        if let Some(&prev) = levels.last() {
            if level >= prev {
                level = prev - 0.1 * (prev - spec.level);
            }
        }
        if level <= spec.level {
            levels.push(spec.level);
            return Ok(levels);
        }
        levels.push(level);
        let stream_seed = derive_seed(seed, &[SPLIT_LABEL, u64::MAX - stage as u64]);
        pop = regenerate(&sampler, &pop, level, pilot, stream_seed, cfg).0;
    }
    Err(Error::Convergence { target: spec.level, achieved: *levels.last().unwrap() })
}
