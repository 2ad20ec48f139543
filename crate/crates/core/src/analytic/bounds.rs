use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{covariance, CovarianceKind};
use crate::persistence::MCEstimate;
use crate::rng::RandomStream;

/// Spacing of the sampled points `Y_{5i}`.
const SPACING: f64 = 5.0;
const TAIL_TERM: f64 = 1e-18;

/// Constants of the comparison argument for `b >= 0.4`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaBConstants {
    /// `2e^{-2.5} / (1 + e^{-5})`, the correlation of neighbours 5 apart.
    pub rho: f64,
    /// `4 Σ_{i>=2} e^{-2.5i} / (1 + e^{-5i})`.
    pub lambda0: f64,
    /// `1 + 2 rho + lambda0`.
    pub lambda: f64,
    /// `ln(lambda / (2 (1 - lambda0 + sqrt((1 - lambda0)^2 - 4 rho^2))))`.
    pub log_ratio: f64,
}

/// Compute the constants and certify `log_ratio <= -1`, which gives
/// `P(max_{i<=n} Y_{5i} <= 0) <= e^{-n/2}` for every `n`.
pub fn lemma_b_constants() -> Result<LemmaBConstants> {
    let rho = 2.0 * (-2.5f64).exp() / (1.0 + (-5.0f64).exp());
    let mut lambda0 = 0.0;
    for i in 2.. {
        let x = i as f64;
        let term = 4.0 * (-2.5 * x).exp() / (1.0 + (-5.0 * x).exp());
        lambda0 += term;
        if term < TAIL_TERM {
            break;
        }
    }
    let lambda = 1.0 + 2.0 * rho + lambda0;
    let d = 1.0 - lambda0;
    let log_ratio = (lambda / (2.0 * (d + (d * d - 4.0 * rho * rho).sqrt()))).ln();
    if !(log_ratio <= -1.0) {
        return Err(Error::Certification(format!("log ratio {log_ratio} exceeds -1")));
    }
    Ok(LemmaBConstants { rho, lambda0, lambda, log_ratio })
}

/// Determinant of the `n x n` symmetric tridiagonal matrix with constant
/// diagonal and off-diagonal, by `D_k = diag D_{k-1} - off^2 D_{k-2}`.
pub fn tridiag_det(n: usize, diag: f64, off: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, diag);
    if n == 0 {
        return prev;
    }
    for _ in 1..n {
        let next = diag * cur - off * off * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `((diag + sqrt(diag^2 - 4 off^2)) / 2)^n`, a lower bound for
/// [`tridiag_det`] when `diag >= 2|off|`.
pub fn tridiag_lower_bound(n: usize, diag: f64, off: f64) -> Option<f64> {
    if diag < 2.0 * off.abs() {
        return None;
    }
    Some(((diag + (diag * diag - 4.0 * off * off).sqrt()) / 2.0).powi(n as i32))
}

/// Same determinant from a dense LU factorization.
pub fn tridiag_det_dense(n: usize, diag: f64, off: f64) -> f64 {
    DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
        0 => diag,
        1 => off,
        _ => 0.0,
    })
    .determinant()
}

/// `(lambda^n / (4^n D_n))^{1/2}`, the bound on `P(max_{i<=n} Y_{5i} <= 0)`
/// obtained by comparing with independent `N(0, lambda)` variables.
pub fn slepian_bound(n: usize, c: &LemmaBConstants) -> f64 {
    let dn = tridiag_det(n, 1.0 - c.lambda0, c.rho);
    (c.lambda.powi(n as i32) / (4f64.powi(n as i32) * dn)).sqrt()
}

/// Check, for every `2 <= n <= n_max`, that the recursion dominates its
/// closed-form lower bound and that the resulting bound is `<= e^{-n/2}`.
pub fn certify_bound_chain(n_max: usize) -> Result<LemmaBConstants> {
    let c = lemma_b_constants()?;
    let diag = 1.0 - c.lambda0;
    for n in 2..=n_max {
        let dn = tridiag_det(n, diag, c.rho);
        let lower = tridiag_lower_bound(n, diag, c.rho)
            .ok_or_else(|| Error::Certification("tridiagonal matrix is not diagonally dominant".into()))?;
        if dn < lower {
            return Err(Error::Certification(format!("D_{n} = {dn} is below its bound {lower}")));
        }
        let via_bound = (0.5 * n as f64 * c.log_ratio).exp();
        let direct = slepian_bound(n, &c);
        let target = (-0.5 * n as f64).exp();
        if direct > via_bound * (1.0 + 1e-12) || via_bound > target {
            return Err(Error::Certification(format!("bound chain fails at n = {n}")));
        }
    }
    Ok(c)
}

/// Orthant probability `P(X_1 <= 0, X_2 <= 0)` for a standard bivariate
/// normal with correlation `r`.
pub fn bivariate_orthant(r: f64) -> f64 {
    0.25 + r.asin() / (2.0 * PI)
}

/// Monte Carlo estimate of `P(max_{1<=i<=n} Y_{5i} <= 0)` from the dense
/// Cholesky factor of the `n`-point sech covariance.
pub fn discrete_slepian_check(n: usize, trials: u64, seed: u64) -> Result<MCEstimate> {
    if !(2..=12).contains(&n) {
        return Err(Error::InvalidParameter(format!("n = {n} must lie in 2..=12")));
    }
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let gram = DMatrix::from_fn(n, n, |i, j| covariance(CovarianceKind::Y, SPACING * i.abs_diff(j) as f64));
    let l = gram
        .cholesky()
        .ok_or_else(|| Error::Embedding("sech Gram matrix is not positive definite".into()))?
        .l();
    let successes: u64 = (0..trials)
        .into_par_iter()
        .map_init(
            || DVector::zeros(n),
            |xi, i| {
                let mut s = RandomStream::new(seed, i);
                xi.iter_mut().for_each(|v| *v = s.normal());
                // row-wise so the first positive coordinate stops the work
                let below = (0..n).all(|r| (0..=r).map(|k| l[(r, k)] * xi[k]).sum::<f64>() <= 0.0);
                below as u64
            },
        )
        .sum();
    Ok(MCEstimate::from_counts(successes, trials, seed))
}
