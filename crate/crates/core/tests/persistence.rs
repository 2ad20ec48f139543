use randpoly::gp::{CovarianceKind, Monitor, PathSpec};
use randpoly::persistence::{
    adaptive_levels, estimate_b, estimate_b_monitored, grid_horizon, ou_persist_exact, persist_prob,
    persist_prob_side, refinement_pair, splitting_persist, splitting_persist_with, Side, SplittingConfig,
};

fn ou(t: f64, dt: f64) -> PathSpec {
    PathSpec::new(CovarianceKind::OU, t, dt).with_monitor(Monitor::Bridge)
}

#[test]
fn ou_bridge_estimates_match_closed_form() {
    for t in [1.0, 2.0, 4.0, 8.0, 2f64.ln()] {
        let spec = ou(t, 0.005);
        let e = persist_prob(&spec, 100_000, 1000 + t.to_bits() % 97).unwrap();
        let exact = ou_persist_exact(grid_horizon(&spec));
        assert!(e.z_score(exact) < 3.0, "T = {t}: {} vs {exact} (z = {:.2})", e.p_hat, e.z_score(exact));
    }
}

#[test]
fn bridge_check_only_removes_successes() {
    let grid = PathSpec::new(CovarianceKind::OU, 2.0, 0.1);
    let g = persist_prob(&grid, 20_000, 5).unwrap();
    let b = persist_prob(&grid.with_monitor(Monitor::Bridge), 20_000, 5).unwrap();
    assert!(b.successes < g.successes);
    // a coarse grid misses excursions, so it overestimates
    assert!(g.p_hat > ou_persist_exact(2.0) + 3.0 * g.std_error);
}

#[test]
fn tiny_horizon_gives_one_half() {
    let spec = PathSpec::new(CovarianceKind::OU, 1e-6, 1e-6);
    let e = persist_prob(&spec, 100_000, 2).unwrap();
    assert!(e.z_score(0.5) < 3.0);
}

#[test]
fn ou_exponent_from_closed_form() {
    let b = -4.0 * ou_persist_exact(32.0).ln() / 32.0;
    assert!((1.9..=2.2).contains(&b), "{b}");
    let mut last = f64::INFINITY;
    for t in [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0] {
        let b = -4.0 * ou_persist_exact(t).ln() / t;
        assert!(b < last);
        last = b;
    }
}

#[test]
fn ou_curve_tracks_closed_form() {
    let curve = estimate_b_monitored(CovarianceKind::OU, &[1.0, 2.0, 4.0, 8.0], 0.005, Monitor::Bridge, 100_000, 9).unwrap();
    assert_eq!(curve.points.len(), 4);
    assert!(curve.is_non_increasing(3.0));
    for p in &curve.points {
        let exact = -4.0 * ou_persist_exact(p.t).ln() / p.t;
        assert!((p.b_hat - exact).abs() < 3.0 * p.b_err, "T = {}: {} vs {exact}", p.t, p.b_hat);
    }
}

#[test]
fn sech_persistence_is_within_the_proven_bounds() {
    let spec = PathSpec::new(CovarianceKind::Y, 16.0, 0.01);
    let e = persist_prob(&spec, 100_000, 31).unwrap();
    assert!(e.ci_low > (-0.5f64 * 16.0).exp() && e.ci_high < (-0.1f64 * 16.0).exp(), "{e:?}");

    let curve = estimate_b(CovarianceKind::Y, &[8.0, 16.0], 0.01, 100_000, 32).unwrap();
    assert!(curve.is_non_increasing(3.0));
    for p in &curve.points {
        assert!((0.3..=2.2).contains(&p.b_hat), "T = {}: {}", p.t, p.b_hat);
    }
}

#[test]
fn extinction_truncates_the_curve() {
    let curve = estimate_b(CovarianceKind::OU, &[0.5, 40.0], 0.05, 200, 1).unwrap();
    assert_eq!(curve.points.len(), 1);
    assert_eq!(curve.extinct_at, Some(40.0));
    assert!(estimate_b(CovarianceKind::OU, &[40.0], 0.05, 50, 1).is_err());
}

#[test]
fn sign_symmetry() {
    let spec = PathSpec::new(CovarianceKind::Y, 4.0, 0.02);
    let below = persist_prob_side(&spec, Side::Below, 100_000, 1).unwrap();
    let above = persist_prob_side(&spec, Side::Above, 100_000, 2).unwrap();
    let se = below.std_error.hypot(above.std_error);
    assert!((below.p_hat - above.p_hat).abs() < 3.0 * se);
}

#[test]
fn level_monotonicity_is_exact_with_shared_seeds() {
    let base = PathSpec::new(CovarianceKind::Y, 4.0, 0.05);
    let counts: Vec<u64> = [-0.5, 0.0, 0.5, 1.0, 2.0]
        .iter()
        .map(|&l| persist_prob(&base.with_level(l), 20_000, 77).unwrap().successes)
        .collect();
    assert!(counts.windows(2).all(|w| w[0] <= w[1]), "{counts:?}");
}

#[test]
fn refinement_never_increases_persistence() {
    let spec = PathSpec::new(CovarianceKind::Y, 8.0, 0.02);
    let (coarse, fine) = refinement_pair(&spec, 50_000, 4).unwrap();
    assert!(fine.successes <= coarse.successes);
    let plain_fine = persist_prob(&PathSpec { dt: 0.01, ..spec }, 50_000, 5).unwrap();
    let plain_coarse = persist_prob(&spec, 50_000, 6).unwrap();
    assert!(plain_fine.p_hat <= plain_coarse.p_hat + 3.0 * plain_fine.std_error.hypot(plain_coarse.std_error));
}

#[test]
fn single_level_splitting_is_plain_monte_carlo() {
    let spec = PathSpec::new(CovarianceKind::Y, 3.0, 0.05);
    let plain = persist_prob(&spec, 5001, 8).unwrap();
    let split = splitting_persist(&spec, &[0.0], 5001, 8).unwrap();
    assert_eq!(plain, split);
}

#[test]
fn splitting_matches_ou_closed_form() {
    let spec = PathSpec::new(CovarianceKind::OU, 8.0, 0.001);
    let cfg = SplittingConfig::default();
    let levels = adaptive_levels(&spec, 1000, 0.3, 40, &cfg).unwrap();
    assert!(levels.len() >= 2 && *levels.last().unwrap() == 0.0);
    let out = splitting_persist_with(&spec, &levels, 2000, 41, &cfg).unwrap();
    let exact = ou_persist_exact(8.0);
    let e = &out.estimate;
    assert!((e.p_hat - exact).abs() < 3.0 * e.std_error, "{} vs {exact} (se {})", e.p_hat, e.std_error);
    assert!(out.acceptance.iter().all(|&a| a > 0.05));
}

#[test]
fn splitting_matches_plain_monte_carlo_for_sech() {
    let spec = PathSpec::new(CovarianceKind::Y, 16.0, 0.01);
    let cfg = SplittingConfig::default();
    let levels = adaptive_levels(&spec, 1000, 0.3, 50, &cfg).unwrap();
    let split = splitting_persist_with(&spec, &levels, 4000, 51, &cfg).unwrap().estimate;
    let plain = persist_prob(&spec, 100_000, 52).unwrap();
    let se = split.std_error.hypot(plain.std_error);
    assert!((split.p_hat - plain.p_hat).abs() < 3.0 * se, "{} vs {}", split.p_hat, plain.p_hat);
}

#[test]
fn splitting_reports_extinction_and_bad_levels() {
    let spec = PathSpec::new(CovarianceKind::OU, 1.0, 0.1);
    assert!(splitting_persist(&spec, &[0.0, 1.0], 10, 0).is_err());
    let err = splitting_persist(&PathSpec::new(CovarianceKind::OU, 60.0, 0.1).with_level(-3.0), &[-3.0], 20, 0);
    assert!(matches!(err, Err(randpoly::Error::LevelExtinction { stage: 0, .. })));
}
