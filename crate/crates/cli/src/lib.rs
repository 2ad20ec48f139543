//! Command-line driver: parses flags and a JSON config, runs one experiment
//! and writes CSV, JSON and two-column TSV files into the output directory.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use randpoly::analytic::{
    certify_bound_chain, en_asymptote, kac_en, lemma_b_constants, slepian_bound, vn_asymptote,
};
use randpoly::gp::{fourier_transform_numeric, spectral_density, CovarianceKind, Monitor, PathSpec};
use randpoly::harness::{
    count_distribution, estimate_pn, fit_exponent, is_theorem_ladder, moments_of, zero_histogram, ExperimentConfig,
    STANDARD_LADDER,
};
use randpoly::persistence::{
    adaptive_levels, estimate_b_monitored, grid_horizon, ou_persist_exact, persist_prob, refinement_pair,
    splitting_persist_with, MCEstimate, SplittingConfig,
};
use randpoly::poly::CoefficientDistribution;
use randpoly::roots::{Backend, GridSpec, Regime};

pub const SCHEMA_VERSION: u32 = 1;
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Frequencies of the spectral identity check.
const SPECTRAL_OMEGAS: [f64; 5] = [0.0, 0.5, 1.0, 2.0, 5.0];
const SPECTRAL_TOL: f64 = 1e-6;
const OU_B_BAND: (f64, f64) = (1.9, 2.2);
const OU_B_HORIZON: f64 = 32.0;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("check failed: {0}")]
    Check(String),
    #[error(transparent)]
    Core(#[from] randpoly::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use randpoly::Error as E;
        match self {
            CliError::Config(_) | CliError::Json(_) => 2,
            CliError::Core(E::InvalidParameter(_) | E::Domain(_)) => 2,
            CliError::Check(_) | CliError::Core(E::Certification(_)) => 3,
            _ => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "randpoly", version, about = "Persistence experiments for random polynomials and Gaussian processes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Probability of no real zero for each n.
    EstimatePn(Options),
    /// Probability of exactly k distinct real zeros.
    EstimatePnk(Options),
    /// Mean and variance of the number of real zeros.
    EstimateEnVn(Options),
    /// Fit the power-law exponent of P_n over the n ladder.
    FitB(Options),
    /// Persistence probability of a stationary Gaussian process.
    GpPersist(Options),
    /// Exponent estimates -4 ln P(T) / T over several horizons.
    GpEstimateB(Options),
    /// Compare OU persistence against its closed form.
    OuValidate(Options),
    /// Expected number of real zeros from Kac's integral.
    Kac(Options),
    /// Certify the constants of the bound 0.4 <= b <= 2.
    Bounds(Options),
    /// Check numeric Fourier transforms against the spectral densities.
    GpValidate(Options),
    /// Histogram of zero locations.
    ZeroHist(Options),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::EstimatePn(_) => "estimate-pn",
            Command::EstimatePnk(_) => "estimate-pnk",
            Command::EstimateEnVn(_) => "estimate-en-vn",
            Command::FitB(_) => "fit-b",
            Command::GpPersist(_) => "gp-persist",
            Command::GpEstimateB(_) => "gp-estimate-b",
            Command::OuValidate(_) => "ou-validate",
            Command::Kac(_) => "kac",
            Command::Bounds(_) => "bounds",
            Command::GpValidate(_) => "gp-validate",
            Command::ZeroHist(_) => "zero-hist",
        }
    }

    fn options(&self) -> &Options {
        match self {
            Command::EstimatePn(o)
            | Command::EstimatePnk(o)
            | Command::EstimateEnVn(o)
            | Command::FitB(o)
            | Command::GpPersist(o)
            | Command::GpEstimateB(o)
            | Command::OuValidate(o)
            | Command::Kac(o)
            | Command::Bounds(o)
            | Command::GpValidate(o)
            | Command::ZeroHist(o) => o,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Options {
    /// JSON config file; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Coefficient counts (degrees for `kac`), comma separated.
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Coefficient law: normal, rademacher, uniform[:half-width], cauchy, with optional @mean.
    #[arg(long)]
    pub dist: Option<String>,
    /// exact, numeric or auto.
    #[arg(long)]
    pub backend: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Time step of the process grid.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Horizons, comma separated.
    #[arg(long = "t-max", value_delimiter = ',')]
    pub t_max: Option<Vec<f64>>,
    /// Covariance: y, z, ou or alpha:<a>.
    #[arg(long)]
    pub kind: Option<String>,
    /// Level of the persistence event sup X <= level.
    #[arg(long, allow_hyphen_values = true)]
    pub level: Option<f64>,
    /// grid or bridge.
    #[arg(long)]
    pub monitor: Option<String>,
    /// Number of real zeros for `estimate-pnk`; all counts when omitted.
    #[arg(long)]
    pub k: Option<usize>,
    /// Use multilevel splitting in `gp-persist`.
    #[arg(long)]
    pub splitting: bool,
    /// Also report the estimate at half the time step.
    #[arg(long)]
    pub refine: bool,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

/// Config file contents; every field is optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub distribution: Option<CoefficientDistribution>,
    pub n_values: Option<Vec<usize>>,
    pub trials_per_n: Option<u64>,
    pub seed: Option<u64>,
    pub grid: Option<GridSpec>,
    pub backend: Option<Backend>,
    pub output_path: Option<String>,
    pub kind: Option<CovarianceKind>,
    pub t_values: Option<Vec<f64>>,
    pub dt: Option<f64>,
    pub level: Option<f64>,
    pub monitor: Option<Monitor>,
    pub k: Option<usize>,
}

/// Fully resolved settings of one run; hashed into every output row.
#[derive(Debug, Clone, Serialize)]
pub struct Settings {
    pub command: String,
    pub experiment: ExperimentConfig,
    pub kind: CovarianceKind,
    pub t_values: Vec<f64>,
    pub dt: f64,
    pub level: f64,
    pub monitor: Monitor,
    pub k: Option<usize>,
    pub splitting: bool,
    pub refine: bool,
}

impl Settings {
    /// SHA-256 of the settings without the output path.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.experiment.output_path.clear();
        let bytes = serde_json::to_vec(&canonical).expect("settings serialize");
        format!("{:x}", Sha256::digest(bytes))
    }
}

fn parse<T: std::str::FromStr>(what: &str, s: &str) -> CliResult<T>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e| CliError::Config(format!("--{what} {s}: {e}")))
}

fn parse_monitor(s: &str) -> CliResult<Monitor> {
    match s.to_ascii_lowercase().as_str() {
        "grid" => Ok(Monitor::Grid),
        "bridge" => Ok(Monitor::Bridge),
        _ => Err(CliError::Config(format!("--monitor {s}: expected grid or bridge"))),
    }
}

fn defaults(command: &str) -> FileConfig {
    let mut d = FileConfig {
        distribution: Some(CoefficientDistribution::Rademacher),
        n_values: Some(STANDARD_LADDER.to_vec()),
        trials_per_n: Some(20_000),
        seed: Some(1),
        output_path: Some("results".into()),
        kind: Some(CovarianceKind::Y),
        t_values: Some(vec![8.0, 16.0, 24.0, 32.0]),
        dt: Some(0.01),
        level: Some(0.0),
        monitor: Some(Monitor::Grid),
        ..FileConfig::default()
    };
    match command {
        "ou-validate" => {
            d.kind = Some(CovarianceKind::OU);
            d.monitor = Some(Monitor::Bridge);
            d.t_values = Some(vec![1.0, 2.0, 4.0, 2f64.ln()]);
            d.dt = Some(0.005);
            d.trials_per_n = Some(100_000);
        }
        "gp-persist" => d.t_values = Some(vec![16.0]),
        "gp-estimate-b" => d.trials_per_n = Some(100_000),
        "kac" => d.n_values = Some(vec![1, 2, 10, 64, 1024, 10_000]),
        "bounds" => d.n_values = Some(vec![50]),
        "estimate-en-vn" => {
            d.distribution = Some(CoefficientDistribution::StandardNormal);
            d.n_values = Some(vec![65]);
        }
        "zero-hist" => {
            d.distribution = Some(CoefficientDistribution::StandardNormal);
            d.n_values = Some(vec![257]);
            d.trials_per_n = Some(1_000);
        }
        _ => {}
    }
    d
}

/// Merge command defaults, the config file and flags, in that order.
pub fn resolve(command: &Command) -> CliResult<Settings> {
    let name = command.name();
    let o = command.options();
    let file = match &o.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str::<FileConfig>(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => FileConfig::default(),
    };
    let d = defaults(name);
    macro_rules! pick {
        ($flag:expr, $field:ident) => {
            $flag.or(file.$field.clone()).or(d.$field.clone())
        };
    }
    let distribution = match &o.dist {
        Some(s) => parse::<CoefficientDistribution>("dist", s)?,
        None => file.distribution.clone().or(d.distribution).unwrap(),
    };
    let backend = match &o.backend {
        Some(s) => parse::<Backend>("backend", s)?,
        None => file.backend.unwrap_or_default(),
    };
    let kind = match &o.kind {
        Some(s) => parse::<CovarianceKind>("kind", s)?,
        None => file.kind.or(d.kind).unwrap(),
    };
    let monitor = match &o.monitor {
        Some(s) => parse_monitor(s)?,
        None => file.monitor.or(d.monitor).unwrap(),
    };
    let output_path = match &o.out {
        Some(p) => p.to_string_lossy().into_owned(),
        None => file.output_path.clone().or(d.output_path.clone()).unwrap(),
    };
    let experiment = ExperimentConfig {
        distribution,
        n_values: pick!(o.n.clone(), n_values).unwrap(),
        trials_per_n: pick!(o.trials, trials_per_n).unwrap(),
        seed: pick!(o.seed, seed).unwrap(),
        grid: file.grid.clone().unwrap_or_default(),
        backend,
        output_path,
    };
    let settings = Settings {
        command: name.to_string(),
        experiment,
        kind,
        t_values: pick!(o.t_max.clone(), t_values).unwrap(),
        dt: pick!(o.dt, dt).unwrap(),
        level: pick!(o.level, level).unwrap(),
        monitor,
        k: o.k.or(file.k),
        splitting: o.splitting,
        refine: o.refine,
    };
    validate(&settings)?;
    Ok(settings)
}

fn validate(s: &Settings) -> CliResult<()> {
    let e = &s.experiment;
    if e.n_values.is_empty() {
        return Err(CliError::Config("n list is empty".into()));
    }
    if e.trials_per_n == 0 {
        return Err(CliError::Config("trials must be at least 1".into()));
    }
    match s.command.as_str() {
        "kac" | "bounds" | "gp-validate" => {}
        "gp-persist" | "gp-estimate-b" | "ou-validate" => {
            if s.t_values.is_empty() {
                return Err(CliError::Config("t-max list is empty".into()));
            }
            for &t in &s.t_values {
                PathSpec::new(s.kind, t, s.dt)
                    .with_level(s.level)
                    .with_monitor(s.monitor)
                    .validate()
                    .map_err(|err| CliError::Config(err.to_string()))?;
            }
        }
        _ => e.validate().map_err(|err| CliError::Config(err.to_string()))?,
    }
    Ok(())
}

/// What a run produced.
#[derive(Debug)]
pub struct Report {
    pub command: String,
    pub files: Vec<PathBuf>,
    pub summary: Value,
    /// Human-readable lines for stdout.
    pub lines: Vec<String>,
    /// Set when a built-in check failed; the files are still written.
    pub failure: Option<String>,
}

#[derive(Serialize)]
struct EstimateRow<'a> {
    n: usize,
    trials: u64,
    successes: u64,
    p_hat: f64,
    ci_low: f64,
    ci_high: f64,
    excluded_suspect: u64,
    seed: u64,
    code_version: &'a str,
    config_hash: &'a str,
}

#[derive(Serialize)]
struct CountRow<'a> {
    n: usize,
    k: usize,
    trials: u64,
    successes: u64,
    p_hat: f64,
    ci_low: f64,
    ci_high: f64,
    excluded_suspect: u64,
    seed: u64,
    code_version: &'a str,
    config_hash: &'a str,
}

#[derive(Serialize)]
struct MomentRow<'a> {
    n: usize,
    trials: u64,
    mean: f64,
    variance: f64,
    stderr: f64,
    variance_stderr: f64,
    excluded_suspect: u64,
    seed: u64,
    code_version: &'a str,
    config_hash: &'a str,
}

#[derive(Serialize)]
struct HorizonRow<'a> {
    t: f64,
    trials: u64,
    successes: u64,
    p_hat: f64,
    ci_low: f64,
    ci_high: f64,
    b_hat: f64,
    b_err: f64,
    seed: u64,
    code_version: &'a str,
    config_hash: &'a str,
}

struct Output {
    dir: PathBuf,
    stem: String,
    files: Vec<PathBuf>,
}

impl Output {
    fn new(settings: &Settings) -> CliResult<Self> {
        let dir = PathBuf::from(&settings.experiment.output_path);
        fs::create_dir_all(&dir)?;
        Ok(Self { dir, stem: settings.command.clone(), files: Vec::new() })
    }

    fn path(&mut self, suffix: &str) -> PathBuf {
        let p = self.dir.join(format!("{}{suffix}", self.stem));
        self.files.push(p.clone());
        p
    }

    fn csv<R: Serialize>(&mut self, rows: &[R]) -> CliResult<()> {
        let mut w = csv::Writer::from_path(self.path(".csv"))?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    fn tsv(&mut self, suffix: &str, header: (&str, &str), rows: &[(f64, f64)]) -> CliResult<()> {
        let mut f = fs::File::create(self.path(&format!("{suffix}.tsv")))?;
        writeln!(f, "{}\t{}", header.0, header.1)?;
        for (x, y) in rows {
            writeln!(f, "{x}\t{y}")?;
        }
        Ok(())
    }

    fn json(&mut self, settings: &Settings, results: &Value) -> CliResult<Value> {
        let summary = json!({
            "schema_version": SCHEMA_VERSION,
            "code_version": CODE_VERSION,
            "config_hash": settings.hash(),
            "command": settings.command,
            "config": settings,
            "results": results,
        });
        fs::write(self.path(".json"), serde_json::to_string_pretty(&summary)? + "\n")?;
        Ok(summary)
    }
}

fn estimate_row<'a>(n: usize, e: &MCEstimate, hash: &'a str) -> EstimateRow<'a> {
    EstimateRow {
        n,
        trials: e.trials,
        successes: e.successes,
        p_hat: e.p_hat,
        ci_low: e.ci_low,
        ci_high: e.ci_high,
        excluded_suspect: e.excluded,
        seed: e.seed,
        code_version: CODE_VERSION,
        config_hash: hash,
    }
}

fn log_points(points: &[(usize, MCEstimate)]) -> Vec<(f64, f64)> {
    points
        .iter()
        .filter(|(_, e)| e.p_hat > 0.0)
        .map(|(n, e)| ((*n as f64).ln(), e.p_hat.ln()))
        .collect()
}

fn pn_points(cfg: &ExperimentConfig, lines: &mut Vec<String>) -> CliResult<Vec<(usize, MCEstimate)>> {
    let mut points = Vec::new();
    for &n in &cfg.n_values {
        let e = estimate_pn(cfg, n)?;
        let flag = if is_theorem_ladder(n) { "" } else { "  (odd degree)" };
        lines.push(format!(
            "n = {n:>5}  p = {:.6e}  [{:.6e}, {:.6e}]  {}/{}  excluded {}{flag}",
            e.p_hat, e.ci_low, e.ci_high, e.successes, e.trials, e.excluded
        ));
        points.push((n, e));
    }
    Ok(points)
}

fn ladder_metadata(cfg: &ExperimentConfig) -> Value {
    json!({
        "ladder": cfg.n_values,
        "ladder_source": "project choice: n values, trial counts and fitting window are not taken from the source simulations",
        "odd_degree_n": cfg.n_values.iter().filter(|&&n| !is_theorem_ladder(n)).collect::<Vec<_>>(),
    })
}

fn cmd_estimate_pn(s: &Settings, out: &mut Output, lines: &mut Vec<String>) -> CliResult<(Value, Option<String>)> {
    let hash = s.hash();
    let points = pn_points(&s.experiment, lines)?;
    let rows: Vec<_> = points.iter().map(|(n, e)| estimate_row(*n, e, &hash)).collect();
    out.csv(&rows)?;
    out.tsv("", ("ln_n", "ln_p_hat"), &log_points(&points))?;
    let estimates: Vec<_> = points.iter().map(|(n, e)| json!({ "n": n, "estimate": e })).collect();
    Ok((json!({ "estimates": estimates, "metadata": ladder_metadata(&s.experiment) }), None))
}

fn cmd_fit_b(s: &Settings, out: &mut Output, lines: &mut Vec<String>) -> CliResult<(Value, Option<String>)> {
    let hash = s.hash();
    let points = pn_points(&s.experiment, lines)?;
    let rows: Vec<_> = points.iter().map(|(n, e)| estimate_row(*n, e, &hash)).collect();
    out.csv(&rows)?;
    out.tsv("", ("ln_n", "ln_p_hat"), &log_points(&points))?;
    let fit = fit_exponent(&points)?;
    lines.push(format!(
        "slope = {:.4} +- {:.4}  (b_hat = {:.4}, {} points)",
        fit.slope, fit.slope_stderr, -fit.slope, fit.points_used
    ));
    let estimates: Vec<_> = points.iter().map(|(n, e)| json!({ "n": n, "estimate": e })).collect();
    Ok((
        json!({
            "estimates": estimates,
            "fit": fit,
            "b_hat": -fit.slope,
            "metadata": ladder_metadata(&s.experiment),
        }),
        None,
    ))
}

fn cmd_estimate_pnk(s: &Settings, out: &mut Output, lines: &mut Vec<String>) -> CliResult<(Value, Option<String>)> {
    let hash = s.hash();
    let cfg = &s.experiment;
    let mut rows = Vec::new();
    let mut results = Vec::new();
    let mut failure = None;
    for &n in &cfg.n_values {
        let dist = count_distribution(cfg, n)?;
        let violations = dist.parity_violations();
        if violations > 0 && cfg.distribution.is_continuous() {
            failure = Some(format!("{violations} trials at n = {n} have a zero count of the wrong parity"));
        }
        let ks: Vec<usize> = match s.k {
            Some(k) => vec![k],
            None => (0..dist.counts.len()).collect(),
        };
        for k in ks {
            let e = dist.estimate(k);
            if s.k.is_some() || e.successes > 0 {
                lines.push(format!("n = {n:>5}  k = {k:>3}  p = {:.6e}  [{:.6e}, {:.6e}]", e.p_hat, e.ci_low, e.ci_high));
            }
            rows.push(CountRow {
                n,
                k,
                trials: e.trials,
                successes: e.successes,
                p_hat: e.p_hat,
                ci_low: e.ci_low,
                ci_high: e.ci_high,
                excluded_suspect: e.excluded,
                seed: e.seed,
                code_version: CODE_VERSION,
                config_hash: &hash,
            });
        }
        lines.push(format!("n = {n:>5}  parity violations: {violations}"));
        results.push(json!({ "n": n, "distribution": dist, "parity_violations": violations }));
    }
    out.csv(&rows)?;
    let plot: Vec<(f64, f64)> = rows.iter().filter(|r| r.n == cfg.n_values[0]).map(|r| (r.k as f64, r.p_hat)).collect();
    out.tsv("", ("k", "p_hat"), &plot)?;
    Ok((json!({ "counts": results }), failure))
}

fn cmd_en_vn(s: &Settings, out: &mut Output, lines: &mut Vec<String>) -> CliResult<(Value, Option<String>)> {
    let hash = s.hash();
    let cfg = &s.experiment;
    if cfg.trials_per_n < 2 {
        return Err(CliError::Config("need at least 2 trials".into()));
    }
    let mut rows = Vec::new();
    let mut results = Vec::new();
    let gaussian = cfg.distribution == CoefficientDistribution::StandardNormal;
    for &n in &cfg.n_values {
        let m = moments_of(&count_distribution(cfg, n)?)?;
        let degree = n - 1;
        let kac = if gaussian { Some(kac_en(degree)?.e_n) } else { None };
        lines.push(format!(
            "n = {n:>5}  mean = {:.5} +- {:.5}  var = {:.5} +- {:.5}{}",
            m.mean,
            m.stderr,
            m.variance,
            m.variance_stderr,
            kac.map(|e| format!("  kac = {e:.5}")).unwrap_or_default()
        ));
        rows.push(MomentRow {
            n,
            trials: m.trials,
            mean: m.mean,
            variance: m.variance,
            stderr: m.stderr,
            variance_stderr: m.variance_stderr,
            excluded_suspect: m.excluded,
            seed: cfg.seed,
            code_version: CODE_VERSION,
            config_hash: &hash,
        });
        results.push(json!({
            "n": n,
            "moments": m,
            "kac_mean": kac,
            "mean_asymptote": en_asymptote(degree as f64),
            "variance_asymptote": vn_asymptote(degree as f64),
        }));
    }
    out.csv(&rows)?;
    let plot: Vec<_> = rows.iter().map(|r| (((r.n - 1).max(1) as f64).ln(), r.mean)).collect();
    out.tsv("", ("ln_degree", "mean_zeros"), &plot)?;
    Ok((json!({ "moments": results }), None))
}

fn horizon_row<'a>(t: f64, e: &MCEstimate, b: (f64, f64), hash: &'a str) -> HorizonRow<'a> {
    HorizonRow {
        t,
        trials: e.trials,
        successes: e.successes,
        p_hat: e.p_hat,
        ci_low: e.ci_low,
        ci_high: e.ci_high,
        b_hat: b.0,
        b_err: b.1,
        seed: e.seed,
        code_version: CODE_VERSION,
        config_hash: hash,
    }
}

fn b_of(e: &MCEstimate, t: f64) -> (f64, f64) {
    if e.p_hat > 0.0 {
        (-4.0 * e.p_hat.ln() / t, 4.0 * e.log_error() / t)
    } else {
        (f64::INFINITY, f64::INFINITY)
    }
}

fn spec_of(s: &Settings, t: f64) -> PathSpec {
    PathSpec::new(s.kind, t, s.dt).with_level(s.level).with_monitor(s.monitor)
}

fn cmd_gp_persist(s: &Settings, out: &mut Output, lines: &mut Vec<String>) -> CliResult<(Value, Option<String>)> {
    let hash = s.hash();
    let trials = s.experiment.trials_per_n;
    let seed = s.experiment.seed;
    let mut rows = Vec::new();
    let mut results = Vec::new();
    for &t in &s.t_values {
        let spec = spec_of(s, t);
        let (e, extra) = if s.splitting {
            let cfg = SplittingConfig::default();
            let levels = adaptive_levels(&spec, trials.min(2_000), 0.3, seed ^ 0x1e7e15, &cfg)?;
            let outcome = splitting_persist_with(&spec, &levels, trials, seed, &cfg)?;
            let extra = json!({ "levels": outcome.levels, "fractions": outcome.fractions, "acceptance": outcome.acceptance });
            (outcome.estimate, extra)
        } else {
            (persist_prob(&spec, trials, seed)?, Value::Null)
        };
        let exact = (s.kind == CovarianceKind::OU && s.level == 0.0).then(|| ou_persist_exact(grid_horizon(&spec)));
        lines.push(format!(
            "T = {t:>7.4}  p = {:.6e} +- {:.2e}{}",
            e.p_hat,
            e.std_error,
            exact.map(|x| format!("  exact = {x:.6e}")).unwrap_or_default()
        ));
        rows.push(horizon_row(t, &e, b_of(&e, t), &hash));
        results.push(json!({ "t": t, "estimate": e, "ou_exact": exact, "splitting": extra }));
    }
    out.csv(&rows)?;
    let plot: Vec<_> = rows.iter().map(|r| (r.t, r.p_hat)).collect();
    out.tsv("", ("t", "p_hat"), &plot)?;
    Ok((json!({ "estimates": results }), None))
}

fn cmd_gp_estimate_b(s: &Settings, out: &mut Output, lines: &mut Vec<String>) -> CliResult<(Value, Option<String>)> {
    let hash = s.hash();
    let (trials, seed) = (s.experiment.trials_per_n, s.experiment.seed);
    let curve = estimate_b_monitored(s.kind, &s.t_values, s.dt, s.monitor, trials, seed)?;
    let rows: Vec<_> =
        curve.points.iter().map(|p| horizon_row(p.t, &p.estimate, (p.b_hat, p.b_err), &hash)).collect();
    for p in &curve.points {
        lines.push(format!("T = {:>6.2}  p = {:.6e}  b = {:.4} +- {:.4}", p.t, p.estimate.p_hat, p.b_hat, p.b_err));
    }
    if let Some(t) = curve.extinct_at {
        lines.push(format!("no successes at T = {t}; curve truncated"));
    }
    let non_increasing = curve.is_non_increasing(3.0);
    lines.push(format!("non-increasing within 3 sigma: {non_increasing}"));
    let refinement = if s.refine {
        let t = *s.t_values.last().unwrap();
        let (coarse, fine) = refinement_pair(&spec_of(s, t), trials, seed)?;
        lines.push(format!(
            "refinement at T = {t}: dt {} -> p = {:.6e}, dt {} -> p = {:.6e}",
            s.dt,
            coarse.p_hat,
            s.dt / 2.0,
            fine.p_hat
        ));
        json!({ "t": t, "coarse": coarse, "fine": fine })
    } else {
        Value::Null
    };
    out.csv(&rows)?;
    let plot: Vec<_> = rows.iter().map(|r| (r.t, r.b_hat)).collect();
    out.tsv("", ("t", "b_hat"), &plot)?;
    Ok((json!({ "curve": curve, "non_increasing": non_increasing, "refinement": refinement }), None))
}

fn cmd_ou_validate(s: &Settings, out: &mut Output, lines: &mut Vec<String>) -> CliResult<(Value, Option<String>)> {
    if s.kind != CovarianceKind::OU {
        return Err(CliError::Config("ou-validate needs kind ou".into()));
    }
    let hash = s.hash();
    let (trials, seed) = (s.experiment.trials_per_n, s.experiment.seed);
    let mut rows = Vec::new();
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for (i, &t) in s.t_values.iter().enumerate() {
        let spec = spec_of(s, t);
        let e = persist_prob(&spec, trials, randpoly::rng::derive_seed(seed, &[i as u64]))?;
        let exact = ou_persist_exact(grid_horizon(&spec));
        let z = e.z_score(exact);
        let pass = z < 3.0;
        if !pass {
            failures.push(format!("T = {t}: z = {z:.2}"));
        }
        lines.push(format!(
            "T = {t:>7.4}  p = {:.6e}  exact = {exact:.6e}  z = {z:.2}  {}",
            e.p_hat,
            if pass { "ok" } else { "MISMATCH" }
        ));
        rows.push(horizon_row(t, &e, b_of(&e, t), &hash));
        results.push(json!({ "t": t, "estimate": e, "exact": exact, "z": z, "pass": pass }));
    }
    let b32 = -4.0 * ou_persist_exact(OU_B_HORIZON).ln() / OU_B_HORIZON;
    let b_pass = (OU_B_BAND.0..=OU_B_BAND.1).contains(&b32);
    if !b_pass {
        failures.push(format!("b({OU_B_HORIZON}) = {b32}"));
    }
    lines.push(format!("b({OU_B_HORIZON}) from the closed form = {b32:.4}"));
    out.csv(&rows)?;
    let plot: Vec<_> = rows.iter().map(|r| (r.t, r.p_hat)).collect();
    out.tsv("", ("t", "p_hat"), &plot)?;
    let failure = (!failures.is_empty()).then(|| failures.join("; "));
    Ok((json!({ "estimates": results, "b_32": b32, "b_32_pass": b_pass }), failure))
}

fn cmd_kac(s: &Settings, out: &mut Output, lines: &mut Vec<String>) -> CliResult<(Value, Option<String>)> {
    #[derive(Serialize)]
    struct Row {
        degree: usize,
        e_n: f64,
        abs_err: f64,
        asymptote: f64,
        ratio: f64,
    }
    let mut rows = Vec::new();
    for &n in &s.experiment.n_values {
        let r = kac_en(n)?;
        let a = en_asymptote(n as f64);
        lines.push(format!("degree {n:>6}  E = {:.10}  (+- {:.1e})  E / (2/pi) ln n = {:.4}", r.e_n, r.abs_err, r.e_n / a));
        rows.push(Row { degree: n, e_n: r.e_n, abs_err: r.abs_err, asymptote: a, ratio: r.e_n / a });
    }
    out.csv(&rows)?;
    let plot: Vec<_> = rows.iter().map(|r| (r.degree as f64, r.e_n)).collect();
    out.tsv("", ("degree", "expected_zeros"), &plot)?;
    Ok((json!({ "kac": rows }), None))
}

fn cmd_bounds(s: &Settings, out: &mut Output, lines: &mut Vec<String>) -> CliResult<(Value, Option<String>)> {
    #[derive(Serialize)]
    struct Row {
        n: usize,
        bound: f64,
        target: f64,
    }
    let n_max = *s.experiment.n_values.iter().max().unwrap();
    let c = lemma_b_constants()?;
    lines.push(format!("rho     = {:.6}", c.rho));
    lines.push(format!("lambda0 = {:.6}", c.lambda0));
    lines.push(format!("lambda  = {:.4}", c.lambda));
    lines.push(format!("log ratio = {:.6} (<= -1)", c.log_ratio));
    let failure = match certify_bound_chain(n_max.max(2)) {
        Ok(_) => {
            lines.push(format!("bound chain certified for 2 <= n <= {}", n_max.max(2)));
            None
        }
        Err(e) => Some(e.to_string()),
    };
    let rows: Vec<_> =
        (2..=n_max.max(2)).map(|n| Row { n, bound: slepian_bound(n, &c), target: (-0.5 * n as f64).exp() }).collect();
    out.csv(&rows)?;
    let plot: Vec<_> = rows.iter().map(|r| (r.n as f64, r.bound)).collect();
    out.tsv("", ("n", "bound"), &plot)?;
    Ok((json!({ "constants": c, "certified": failure.is_none(), "n_max": n_max }), failure))
}

fn cmd_gp_validate(_s: &Settings, out: &mut Output, lines: &mut Vec<String>) -> CliResult<(Value, Option<String>)> {
    #[derive(Serialize)]
    struct Row {
        kind: String,
        omega: f64,
        numeric: f64,
        closed_form: f64,
        rel_err: f64,
    }
    let mut rows = Vec::new();
    for kind in [CovarianceKind::Y, CovarianceKind::OU] {
        for w in SPECTRAL_OMEGAS {
            let numeric = fourier_transform_numeric(kind, w)?;
            let closed = spectral_density(kind, w);
            let rel = ((numeric - closed) / closed).abs();
            lines.push(format!("{kind:>3}  omega = {w:>4}  numeric = {numeric:.12}  closed = {closed:.12}  rel = {rel:.1e}"));
            rows.push(Row { kind: kind.to_string(), omega: w, numeric, closed_form: closed, rel_err: rel });
        }
    }
    let worst = rows.iter().map(|r| r.rel_err).fold(0.0, f64::max);
    let failure = (worst > SPECTRAL_TOL).then(|| format!("worst relative error {worst:.2e}"));
    out.csv(&rows)?;
    let plot: Vec<_> = rows.iter().filter(|r| r.kind == "y").map(|r| (r.omega, r.numeric)).collect();
    out.tsv("", ("omega", "spectral_density"), &plot)?;
    Ok((json!({ "spectral": rows, "tolerance": SPECTRAL_TOL, "worst_rel_err": worst }), failure))
}

fn cmd_zero_hist(s: &Settings, out: &mut Output, lines: &mut Vec<String>) -> CliResult<(Value, Option<String>)> {
    #[derive(Serialize)]
    struct Row<'a> {
        n: usize,
        regime: String,
        t_lo: f64,
        t_hi: f64,
        count: u64,
        code_version: &'a str,
        config_hash: &'a str,
    }
    let hash = s.hash();
    let mut rows = Vec::new();
    let mut results = Vec::new();
    for &n in &s.experiment.n_values {
        let h = zero_histogram(&s.experiment, n)?;
        lines.push(format!(
            "n = {n:>5}  zeros = {}  trials = {}  excluded = {}  share with t >= 1.5: {:.3}",
            h.total,
            h.trials,
            h.excluded,
            h.fraction_beyond(1.5)
        ));
        for r in Regime::ALL {
            for (b, &count) in h.counts[r.index()].iter().enumerate() {
                let t_hi = h.edges.get(b + 1).copied().unwrap_or(f64::INFINITY);
                rows.push(Row {
                    n,
                    regime: format!("{r:?}").to_lowercase(),
                    t_lo: h.edges[b],
                    t_hi,
                    count,
                    code_version: CODE_VERSION,
                    config_hash: &hash,
                });
            }
        }
        let plot: Vec<_> = h
            .edges
            .iter()
            .enumerate()
            .map(|(b, &t)| (t, h.counts.iter().map(|row| row[b]).sum::<u64>() as f64))
            .collect();
        out.tsv(&format!("_n{n}"), ("t_lo", "zeros"), &plot)?;
        results.push(h);
    }
    out.csv(&rows)?;
    Ok((json!({ "histograms": results }), None))
}

fn dispatch(s: &Settings) -> CliResult<Report> {
    let mut out = Output::new(s)?;
    let mut lines = Vec::new();
    let run = match s.command.as_str() {
        "estimate-pn" => cmd_estimate_pn,
        "estimate-pnk" => cmd_estimate_pnk,
        "estimate-en-vn" => cmd_en_vn,
        "fit-b" => cmd_fit_b,
        "gp-persist" => cmd_gp_persist,
        "gp-estimate-b" => cmd_gp_estimate_b,
        "ou-validate" => cmd_ou_validate,
        "kac" => cmd_kac,
        "bounds" => cmd_bounds,
        "gp-validate" => cmd_gp_validate,
        "zero-hist" => cmd_zero_hist,
        other => return Err(CliError::Config(format!("unknown command {other}"))),
    };
    let (results, failure) = run(s, &mut out, &mut lines)?;
    let summary = out.json(s, &json!({ "data": results, "failure": failure }))?;
    Ok(Report { command: s.command.clone(), files: out.files, summary, lines, failure })
}

/// Resolve the settings and run the command, on `--threads` workers if given.
pub fn run(cli: &Cli) -> CliResult<Report> {
    let settings = resolve(&cli.command)?;
    match cli.command.options().threads {
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| CliError::Config(format!("--threads {t}: {e}")))?;
            pool.install(|| dispatch(&settings))
        }
        None => dispatch(&settings),
    }
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(report) => {
            for l in &report.lines {
                println!("{l}");
            }
            for f in &report.files {
                println!("wrote {}", f.display());
            }
            match &report.failure {
                Some(msg) => {
                    eprintln!("check failed: {msg}");
                    3
                }
                None => 0,
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
