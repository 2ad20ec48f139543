//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero if any fail.

use std::f64::consts::LN_2;
use std::time::Instant;

use clap::Parser;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use serde_json::Value;

use randpoly::analytic::{discrete_slepian_check, en_asymptote, kac_en};
use randpoly::gp::{covariance, CovarianceKind};
use randpoly::harness::{count_distribution, estimate_pn, fit_exponent, moments_of, ExperimentConfig, STANDARD_LADDER};
use randpoly::persistence::MCEstimate;
use randpoly::poly::{c_n, c_n_ratio, g_cov, sample_coefficients, CoefficientDistribution};
use randpoly::rng::RandomStream;
use randpoly::roots::{numeric_count, sturm_count, Backend, Grid, GridSpec};
use randpoly_cli::{run, Cli, Report};

type Check = Result<String, String>;

fn cli(args: &[&str], out: &std::path::Path) -> Result<Report, String> {
    let mut argv = vec!["randpoly"];
    argv.extend_from_slice(args);
    let out = out.to_str().unwrap().to_string();
    argv.extend_from_slice(&["--out", &out]);
    let parsed = Cli::try_parse_from(&argv).map_err(|e| e.to_string())?;
    run(&parsed).map_err(|e| e.to_string())
}

fn data(report: &Report) -> &Value {
    &report.summary["results"]["data"]
}

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn bounds_constants(out: &std::path::Path) -> Check {
    let start = Instant::now();
    let r = cli(&["bounds"], out)?;
    let c = &data(&r)["constants"];
    let f = |k: &str| c[k].as_f64().unwrap();
    let printed = (
        format!("{:.6}", f("rho")),
        format!("{:.6}", f("lambda0")),
        format!("{:.4}", f("lambda")),
    );
    let secs = start.elapsed().as_secs_f64();
    let detail = format!(
        "rho={} lambda0={} lambda={} log_ratio={:.6} certified={} in {secs:.2} s",
        printed.0,
        printed.1,
        printed.2,
        f("log_ratio"),
        r.failure.is_none()
    );
    ensure(
        printed == ("0.163071".into(), "0.029361".into(), "1.3555".into())
            && f("log_ratio") <= -1.0
            && r.failure.is_none()
            && secs < 1.0,
        detail,
    )
}

fn ou_exactness(out: &std::path::Path) -> Check {
    let ln2 = LN_2.to_string();
    let t = format!("1,2,4,{ln2}");
    let r = cli(&["ou-validate", "--t-max", &t, "--dt", "0.005", "--trials", "100000", "--seed", "2024"], out)?;
    let d = data(&r);
    let zs: Vec<String> = d["estimates"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| format!("T={:.3}: z={:.2}", e["t"].as_f64().unwrap(), e["z"].as_f64().unwrap()))
        .collect();
    let b32 = d["b_32"].as_f64().unwrap();
    ensure(r.failure.is_none(), format!("{}; b(32)={b32:.4}", zs.join(", ")))
}

fn spectral_identity(out: &std::path::Path) -> Check {
    let start = Instant::now();
    let r = cli(&["gp-validate"], out)?;
    let worst = data(&r)["worst_rel_err"].as_f64().unwrap();
    let secs = start.elapsed().as_secs_f64();
    ensure(
        r.failure.is_none() && secs < 1.0,
        format!("worst relative error {worst:.2e} over omega in {{0,0.5,1,2,5}} in {secs:.2} s"),
    )
}

fn kac_baseline() -> Check {
    let e1 = kac_en(1).map_err(|e| e.to_string())?;
    let e64 = kac_en(64).map_err(|e| e.to_string())?;
    let big = kac_en(10_000).map_err(|e| e.to_string())?;
    let ratio = big.e_n / en_asymptote(1e4);
    let cfg = ExperimentConfig::new(CoefficientDistribution::StandardNormal, vec![65], 100_000, 4);
    let m = moments_of(&count_distribution(&cfg, 65).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let z = (m.mean - e64.e_n).abs() / m.stderr;
    ensure(
        (e1.e_n - 1.0).abs() <= 1e-8 && z < 3.0 && (1.0..=1.2).contains(&ratio),
        format!(
            "E_1={:.10}, E_64={:.6} vs MC {:.4}+-{:.4} (z={z:.2}, {} excluded), E/(2/pi ln n) at 1e4 = {ratio:.4}",
            e1.e_n, e64.e_n, m.mean, m.stderr, m.excluded
        ),
    )
}

fn gp_exponent(out: &std::path::Path) -> Check {
    let r = cli(
        &["gp-estimate-b", "--kind", "y", "--t-max", "8,16,24,32", "--dt", "0.01", "--trials", "1000000", "--seed", "76"],
        out,
    )?;
    let d = data(&r);
    let pts = d["curve"]["points"].as_array().unwrap();
    let line: Vec<String> = pts
        .iter()
        .map(|p| format!("b({})={:.4}+-{:.4}", p["t"], p["b_hat"].as_f64().unwrap(), p["b_err"].as_f64().unwrap()))
        .collect();
    let last = pts.last().unwrap();
    let reached = last["t"].as_f64().unwrap() == 32.0;
    let b32 = last["b_hat"].as_f64().unwrap();
    let mono = d["non_increasing"].as_bool().unwrap();
    ensure(
        reached && (0.65..=0.95).contains(&b32) && mono,
        format!("{}; non-increasing within 3 sigma: {mono}", line.join(", ")),
    )
}

fn ladder(dist: CoefficientDistribution, ns: &[usize], trials: u64, seed: u64) -> Result<Vec<(usize, MCEstimate)>, String> {
    let cfg = ExperimentConfig::new(dist, ns.to_vec(), trials, seed);
    ns.iter().map(|&n| estimate_pn(&cfg, n).map(|e| (n, e)).map_err(|e| e.to_string())).collect()
}

fn polynomial_exponent() -> Check {
    let start = Instant::now();
    let smoke = ladder(CoefficientDistribution::Rademacher, &[17, 33, 65], 20_000, 61)?;
    let smoke_secs = start.elapsed().as_secs_f64();
    let smoke_fit = fit_exponent(&smoke).map_err(|e| e.to_string())?;

    let rad = ladder(CoefficientDistribution::Rademacher, &STANDARD_LADDER, 200_000, 62)?;
    let gau = ladder(CoefficientDistribution::StandardNormal, &STANDARD_LADDER, 200_000, 63)?;
    let fr = fit_exponent(&rad).map_err(|e| e.to_string())?;
    let fg = fit_exponent(&gau).map_err(|e| e.to_string())?;
    let (br, bg) = (-fr.slope, -fg.slope);
    let combined = fr.slope_stderr.hypot(fg.slope_stderr);
    let decreasing = rad.windows(2).all(|w| {
        let (a, b) = (&w[0].1, &w[1].1);
        b.p_hat <= a.p_hat + 3.0 * a.std_error.hypot(b.std_error)
    });
    let ps: Vec<String> = rad.iter().map(|(n, e)| format!("P_{n}={:.4e}", e.p_hat)).collect();
    ensure(
        (0.6..=0.95).contains(&br) && (br - bg).abs() <= 3.0 * combined && decreasing && smoke_secs < 300.0,
        format!(
            "rademacher b={br:.4}+-{:.4} ({}); gaussian b={bg:.4}+-{:.4}; |diff|={:.4} vs 3 sigma {:.4}; \
             smoke ladder b={:.3} in {smoke_secs:.1} s",
            fr.slope_stderr,
            ps.join(" "),
            fg.slope_stderr,
            (br - bg).abs(),
            3.0 * combined,
            -smoke_fit.slope
        ),
    )
}

fn exact_vs_numeric() -> Check {
    let spec = GridSpec::default();
    let (mut agree, mut disagree, mut unflagged) = (0u32, 0u32, 0u32);
    for i in 0..10_000u64 {
        let degree = 1 + (i % 64) as usize;
        let p = sample_coefficients(&CoefficientDistribution::Rademacher, degree + 1, &mut RandomStream::new(7, i));
        let exact = sturm_count(&p).map_err(|e| e.to_string())?.count;
        let numeric = numeric_count(&p, &Grid::new(&spec, p.degree()));
        if numeric.count == exact {
            agree += 1;
        } else {
            disagree += 1;
            if !numeric.is_suspect() {
                unflagged += 1;
            }
        }
    }
    let rate = agree as f64 / 10_000.0;
    ensure(
        rate >= 0.999 && unflagged == 0,
        format!("agreement {:.2}% ({disagree} disagreements, {unflagged} unflagged)", 100.0 * rate),
    )
}

fn enumeration_and_parity() -> Check {
    let cfg = ExperimentConfig::new(CoefficientDistribution::Rademacher, vec![3], 100_000, 8).with_backend(Backend::Exact);
    let e = estimate_pn(&cfg, 3).map_err(|e| e.to_string())?;
    let z = e.z_score(0.5);
    let mut violations = 0;
    let mut runs = 0;
    for dist in [
        CoefficientDistribution::StandardNormal,
        CoefficientDistribution::Uniform { half_width: 1.0 },
        CoefficientDistribution::Cauchy,
        CoefficientDistribution::shifted(CoefficientDistribution::StandardNormal, 1.0),
    ] {
        for n in [2, 3, 4, 5, 16, 17, 33, 65] {
            let cfg = ExperimentConfig::new(dist.clone(), vec![n], 10_000, 9 + n as u64);
            violations += count_distribution(&cfg, n).map_err(|e| e.to_string())?.parity_violations();
            runs += 1;
        }
    }
    ensure(
        z < 3.0 && violations == 0,
        format!("P_3={:.5} (z={z:.2} vs 1/2); {violations} parity violations over {runs} continuous-law runs", e.p_hat),
    )
}

fn brute_force_c(n: usize, x: f64, y: f64) -> f64 {
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n as i32 {
        sxy += (x * y).powi(i);
        sxx += x.powi(2 * i);
        syy += y.powi(2 * i);
    }
    sxy / (sxx * syy).sqrt()
}

fn covariance_suite() -> Check {
    let mut failures = Vec::new();
    let mut check = |name: &str, r: Result<(), String>| {
        if let Err(e) = r {
            failures.push(format!("{name}: {e}"));
        }
    };
    let runner = |cases| TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
    let unit = -0.999f64..0.999;
    check(
        "c_n ratio vs sum",
        runner(200)
            .run(&((0usize..=250).prop_map(|k| 2 * k + 1), unit.clone(), unit), |(n, x, y)| {
                let (r, b) = (c_n_ratio(n, x, y).unwrap(), brute_force_c(n, x, y));
                prop_assert!(((r - b) / b).abs() <= 1e-10);
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );
    check(
        "g lemma",
        runner(10_000)
            .run(&(1e-6f64..=0.5, 1e-6f64..=0.5), |(z, w)| {
                let g = g_cov(1.0 - z, 1.0 - w).unwrap();
                let q = z.max(w) * (1.0 - (z + w) / (2.0 * (z * w).sqrt() * g));
                let d2 = (w - z).powi(2);
                prop_assert!(q >= d2 / 8.0 - 1e-14 && q <= d2 + 1e-14);
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );
    let off = || (-0.99f64..0.99).prop_filter("nonzero", |x| x.abs() > 0.01);
    check(
        "g symmetries",
        runner(10_000)
            .run(&(off(), off()), |(x, y)| {
                let g = g_cov(x, y).unwrap();
                prop_assert!(((g_cov(-x, -y).unwrap() - g) / g).abs() <= 1e-12);
                prop_assert!(((g_cov(1.0 / x, 1.0 / y).unwrap() - g) / g).abs() <= 1e-12);
                prop_assert!(g >= 1.0);
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );
    check(
        "OU lower bound",
        runner(10_000)
            .run(&(1usize..=250, 0f64..1.0, 0f64..1.0), |(k, x, y)| {
                let (t, s) = (-(-x).ln_1p(), -(-y).ln_1p());
                prop_assert!(c_n(2 * k + 1, x, y).unwrap() >= (-(t - s).abs() / 2.0).exp() - 1e-12);
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );
    check(
        "mixture identity",
        runner(10_000)
            .run(&(0f64..=1.0, -30f64..30.0), |(alpha, tau)| {
                let mixed = covariance(CovarianceKind::Alpha { alpha }, tau);
                let linear =
                    (1.0 - alpha) * covariance(CovarianceKind::Y, tau) + alpha * covariance(CovarianceKind::Z, tau);
                prop_assert!((mixed - linear).abs() <= 1e-15);
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );
    let below = (0..=50_000).map(|i| i as f64 * 1e-3).find(|&t| covariance(CovarianceKind::Y, t) < (-t / 2.0).exp());
    check("sech above OU", below.map_or(Ok(()), |t| Err(format!("fails at {t}"))));
    ensure(failures.is_empty(), if failures.is_empty() { "6 property groups hold".into() } else { failures.join("; ") })
}

fn discrete_slepian() -> Check {
    let mut parts = Vec::new();
    let mut ok = true;
    for n in [4usize, 8] {
        let e = discrete_slepian_check(n, 10_000_000, 100 + n as u64).map_err(|e| e.to_string())?;
        let target = (-0.5 * n as f64).exp();
        ok &= e.ci_high <= target;
        parts.push(format!("n={n}: p={:.5e}, upper {:.5e} <= {target:.5e}", e.p_hat, e.ci_high));
    }
    ensure(ok, parts.join("; "))
}

fn main() {
    let dir = tempfile::tempdir().expect("temporary directory");
    let out = dir.path();
    let criteria: Vec<(&str, Box<dyn Fn() -> Check>)> = vec![
        ("1 bound constants", Box::new(|| bounds_constants(&out.join("c1")))),
        ("2 OU exactness", Box::new(|| ou_exactness(&out.join("c2")))),
        ("3 spectral identity", Box::new(|| spectral_identity(&out.join("c3")))),
        ("4 Kac baseline", Box::new(kac_baseline)),
        ("5 GP exponent", Box::new(|| gp_exponent(&out.join("c5")))),
        ("6 polynomial exponent", Box::new(polynomial_exponent)),
        ("7 exact vs numeric counting", Box::new(exact_vs_numeric)),
        ("8 enumeration and parity", Box::new(enumeration_and_parity)),
        ("9 covariance suite", Box::new(covariance_suite)),
        ("10 discrete Slepian check", Box::new(discrete_slepian)),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let start = Instant::now();
        let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(check))
            .unwrap_or_else(|_| Err("panicked".to_string()));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS criterion {name}: {detail} [{secs:.1} s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name}: {detail} [{secs:.1} s]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
