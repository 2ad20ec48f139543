use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate_panels, uniform_breaks};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KacResult {
    /// Degree of the polynomial.
    pub n: usize,
    pub e_n: f64,
    pub abs_err: f64,
}

/// Below this distance from `t = 1` the closed form loses digits to
/// cancellation and the moment sums are used instead.
const NEAR_ONE: f64 = 1e-4;
const TARGET_ERR: f64 = 1e-8;
/// `e^{-40}` bounds the neglected tail relative to the density at `t = 1`.
const TAIL_LOG: f64 = 40.0;

/// Kac density `sqrt(A C - B^2) / A` at `t = 1 - delta` for degree `n`,
/// with `A = Σ t^{2i}`, `B = Σ i t^{2i-1}`, `C = Σ i^2 t^{2i-2}`.
pub fn kac_density(n: usize, delta: f64) -> f64 {
    let m = (n + 1) as f64;
    if delta < NEAR_ONE || m * delta < 1.0 {
        // A C - B^2 = A^2 Var(i) / t^2 under weights t^{2i}
        let t = 1.0 - delta;
        let t2 = t * t;
        let mut w = 1.0;
        let (mut s0, mut s1) = (0.0, 0.0);
        for i in 0..=n {
            s0 += w;
            s1 += i as f64 * w;
            w *= t2;
        }
        let mean = s1 / s0;
        let mut w = 1.0;
        let mut s2 = 0.0;
        for i in 0..=n {
            let d = i as f64 - mean;
            s2 += d * d * w;
            w *= t2;
        }
        return (s2 / s0).sqrt() / t;
    }
    let a = 1.0 / (delta * (2.0 - delta)).powi(2);
    let l = (-delta).ln_1p();
    let num = m * m * (2.0 * n as f64 * l).exp();
    let den = (2.0 * m * l).exp_m1().powi(2);
    (a - num / den).max(0.0).sqrt()
}

/// Expected number of real zeros of a degree-`n` polynomial with i.i.d.
/// standard normal coefficients:
/// `E_n = (4/π) ∫_0^1 sqrt(1/(t^2-1)^2 - (n+1)^2 t^{2n}/(t^{2n+2}-1)^2) dt`,
/// the other three quarters of the real line following from `t -> -t` and
/// `t -> 1/t`. The substitution `t = 1 - e^{-s}` spreads the peak at `t = 1`.
pub fn kac_en(n: usize) -> Result<KacResult> {
    if n == 0 {
        return Err(Error::InvalidParameter("kac_en needs degree n >= 1".into()));
    }
    let s_max = ((n + 1) as f64).ln() + TAIL_LOG;
    let scale = 4.0 / PI;
    let r = integrate_panels(
        |s: f64| {
            let delta = (-s).exp();
            kac_density(n, delta) * delta
        },
        &uniform_breaks(0.0, s_max, 0.5),
        0.1 * TARGET_ERR / scale,
    )?;
    let tail = kac_density(n, 0.0) * (-s_max).exp();
    let abs_err = scale * (r.abs_err + tail);
    if abs_err > TARGET_ERR {
        return Err(Error::Convergence { target: TARGET_ERR, achieved: abs_err });
    }
    Ok(KacResult { n, e_n: scale * (r.value + tail), abs_err })
}

/// `(2/π) ln n`.
pub fn en_asymptote(n: f64) -> f64 {
    2.0 / PI * n.ln()
}

/// `(4/π)(1 - 2/π) ln n`.
pub fn vn_asymptote(n: f64) -> f64 {
    4.0 / PI * (1.0 - 2.0 / PI) * n.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_polynomial_has_one_zero() {
        let r = kac_en(1).unwrap();
        assert!((r.e_n - 1.0).abs() < 1e-8, "{r:?}");
        assert!(r.abs_err <= 1e-8);
        // n = 1 density is 1/(1 + t^2)
        for d in [1e-6, 1e-3, 0.3, 0.9] {
            let t: f64 = 1.0 - d;
            assert!((kac_density(1, d) - 1.0 / (1.0 + t * t)).abs() < 1e-12);
        }
    }

    #[test]
    fn branches_agree_where_they_meet() {
        for n in [3, 50, 1000] {
            for d in [2e-4, 1e-3, 5e-2] {
                if (n + 1) as f64 * d < 1.0 {
                    continue;
                }
                let t = 1.0 - d;
                let exact = {
                    let w: Vec<f64> = (0..=n).map(|i| t.powi(2 * i as i32)).collect();
                    let a: f64 = w.iter().sum();
                    let mu = (0..=n).map(|i| i as f64 * w[i]).sum::<f64>() / a;
                    let var = (0..=n).map(|i| (i as f64 - mu).powi(2) * w[i]).sum::<f64>() / a;
                    var.sqrt() / t
                };
                let closed = kac_density(n, d);
                assert!(((closed - exact) / exact).abs() < 1e-9, "n {n} d {d}: {closed} vs {exact}");
            }
        }
    }

    #[test]
    fn density_at_one() {
        for n in [1usize, 4, 64] {
            let nf = n as f64;
            assert!((kac_density(n, 0.0) - (nf * (nf + 2.0) / 12.0).sqrt()).abs() < 1e-10);
        }
    }

    #[test]
    fn asymptotes() {
        assert!((en_asymptote(PI.exp()) - 2.0).abs() < 1e-14);
        assert!((en_asymptote(1024.0) - 4.4127120030530325).abs() < 1e-12);
        for n in [2.0, 10.0, 1e6] {
            assert!((vn_asymptote(n) / en_asymptote(n) - 2.0 * (1.0 - 2.0 / PI)).abs() < 1e-14);
        }
        assert!((2.0 * (1.0 - 2.0 / PI) - 0.72676).abs() < 1e-5);
    }

    #[test]
    fn large_degree_ratio() {
        let r = kac_en(10_000).unwrap();
        let ratio = r.e_n / en_asymptote(1e4);
        assert!((1.0..=1.2).contains(&ratio), "{ratio}");
    }

    #[test]
    fn rejects_degree_zero() {
        assert!(kac_en(0).is_err());
    }
}
