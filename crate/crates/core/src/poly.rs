//! Dense random polynomials `f(x) = a_0 + a_1 x + ... + a_{n-1} x^{n-1}` and
//! the normalized covariance of `f(x)` and `f(y)` when the `a_i` are i.i.d.
//! with unit variance.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// Below this value of `|1 - x^2|` the closed forms for `sigma` and `c_n`
/// lose too many digits and direct summation is used instead.
pub const NEAR_UNIT_SWITCH: f64 = 1e-6;

/// Coefficients are stored lowest degree first. Trailing zeros are stripped,
/// so the last stored coefficient is the leading one (unless the polynomial
/// is identically zero, in which case a single `0.0` is kept).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Self { coeffs }
    }

    pub fn from_integers(coeffs: &[i64]) -> Self {
        Self::new(coeffs.iter().map(|&c| c as f64).collect())
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.len() == 1 && self.coeffs[0] == 0.0
    }

    pub fn leading(&self) -> f64 {
        self.coeffs[self.coeffs.len() - 1]
    }

    /// Horner evaluation. Overflow propagates as an infinity.
    pub fn evaluate(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    /// `x^d f(1/x)`: the coefficient vector read backwards.
    ///
    /// Zeros of `f` other than `0` map to zeros of the reversal under
    /// `x -> 1/x`. A zero constant term of `f` becomes a trailing zero and is
    /// stripped, which lowers the degree.
    pub fn reversed(&self) -> Self {
        let mut c = self.coeffs.clone();
        c.reverse();
        Self::new(c)
    }

    /// `f(-x)`.
    pub fn reflected(&self) -> Self {
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .map(|(i, &c)| if i % 2 == 1 { -c } else { c })
                .collect(),
        )
    }

    /// The coefficients as exact integers, if every one of them is integral
    /// and representable without rounding.
    pub fn integer_coeffs(&self) -> Option<Vec<i64>> {
        const EXACT: f64 = 9_007_199_254_740_992.0; // 2^53
        self.coeffs
            .iter()
            .map(|&c| {
                if c.is_finite() && c.fract() == 0.0 && c.abs() <= EXACT {
                    Some(c as i64)
                } else {
                    None
                }
            })
            .collect()
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (i, &c) in self.coeffs.iter().enumerate() {
            if c == 0.0 && self.coeffs.len() > 1 {
                continue;
            }
            if !first {
                f.write_str(if c < 0.0 { " - " } else { " + " })?;
            } else if c < 0.0 {
                f.write_str("-")?;
            }
            first = false;
            match i {
                0 => write!(f, "{}", c.abs())?,
                1 => write!(f, "{}x", c.abs())?,
                _ => write!(f, "{}x^{}", c.abs(), i)?,
            }
        }
        Ok(())
    }
}

/// `sigma_k(x) = sqrt(E f_k(x)^2) = sqrt(sum_{i<k} x^{2i})` for unit-variance
/// coefficients.
pub fn sigma(k: usize, x: f64) -> f64 {
    assert!(k >= 1, "sigma needs at least one coefficient");
    let one_minus_sq = (1.0 - x) * (1.0 + x);
    if one_minus_sq.abs() < NEAR_UNIT_SWITCH {
        let x2 = x * x;
        let mut term = 1.0;
        let mut sum = 0.0;
        for _ in 0..k {
            sum += term;
            term *= x2;
        }
        sum.sqrt()
    } else {
        let num = 1.0 - (x * x).powi(k as i32);
        (num / one_minus_sq).abs().sqrt()
    }
}

/// A real number held as `p / q` with `|p|, |q| <= 1`, so that large
/// arguments never overflow.
#[derive(Clone, Copy)]
struct Ratio {
    p: f64,
    q: f64,
}

impl Ratio {
    fn of(x: f64) -> Self {
        if x.abs() <= 1.0 {
            Ratio { p: x, q: 1.0 }
        } else {
            Ratio { p: 1.0, q: 1.0 / x }
        }
    }

    fn pow(x: f64, n: usize) -> Self {
        if x.abs() <= 1.0 {
            Ratio { p: x.powi(n as i32), q: 1.0 }
        } else {
            Ratio { p: 1.0, q: (1.0 / x).powi(n as i32) }
        }
    }

    /// `|q^2 - p^2|`, factored to limit cancellation near `|x| = 1`.
    fn gap(self) -> f64 {
        ((self.q - self.p) * (self.q + self.p)).abs()
    }
}

fn g_ratio(x: Ratio, y: Ratio) -> f64 {
    (x.p * y.p - x.q * y.q).abs() / (x.gap() * y.gap()).sqrt()
}

/// `g(x, y) = |xy - 1| / sqrt(|(1 - x^2)(1 - y^2)|)`.
pub fn g_cov(x: f64, y: f64) -> Result<f64> {
    if x.abs() == 1.0 || y.abs() == 1.0 {
        return Err(Error::Domain(format!(
            "g(x, y) is undefined at |x| = 1 or |y| = 1 (x = {x}, y = {y})"
        )));
    }
    Ok(g_ratio(Ratio::of(x), Ratio::of(y)))
}

fn check_odd(n: usize) -> Result<()> {
    if n == 0 || n % 2 == 0 {
        return Err(Error::InvalidParameter(format!(
            "c_n needs an odd number of coefficients, got n = {n}"
        )));
    }
    Ok(())
}

/// Closed form `c_n(x, y) = g(x^n, y^n) / g(x, y)`.
pub fn c_n_ratio(n: usize, x: f64, y: f64) -> Result<f64> {
    check_odd(n)?;
    let base = g_cov(x, y)?;
    let top = g_ratio(Ratio::pow(x, n), Ratio::pow(y, n));
    Ok(top / base)
}

/// Direct form `sum_i (xy)^i / (sigma_n(x) sigma_n(y))`, computed as a cosine
/// between the vectors `(x^i)` and `(y^i)`. Arguments outside `[-1, 1]` are
/// folded through `x -> 1/x`, which only reverses the vector because `n - 1`
/// is even.
pub fn c_n_sum(n: usize, x: f64, y: f64) -> Result<f64> {
    check_odd(n)?;
    let powers = |v: f64| -> Vec<f64> {
        let (base, rev) = if v.abs() <= 1.0 { (v, false) } else { (1.0 / v, true) };
        let mut out = Vec::with_capacity(n);
        let mut term = 1.0;
        for _ in 0..n {
            out.push(term);
            term *= base;
        }
        if rev {
            out.reverse();
        }
        out
    };
    let a = powers(x);
    let b = powers(y);
    let dot: f64 = a.iter().zip(&b).map(|(u, v)| u * v).sum();
    let na: f64 = a.iter().map(|u| u * u).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Normalized covariance of `f_n(x)` and `f_n(y)` for odd `n`.
///
/// Uses the closed form away from `|x| = 1`, `|y| = 1` and the summed form
/// within [`NEAR_UNIT_SWITCH`] of those points (including at them).
pub fn c_n(n: usize, x: f64, y: f64) -> Result<f64> {
    check_odd(n)?;
    let near = |v: f64| ((1.0 - v) * (1.0 + v)).abs() < NEAR_UNIT_SWITCH;
    if near(x) || near(y) {
        c_n_sum(n, x, y)
    } else {
        c_n_ratio(n, x, y)
    }
}

/// Law of the i.i.d. coefficients.
///
/// The uniform law is parameterized by its half-width and the laws are used
/// raw: real-zero counts do not change when every coefficient is scaled by
/// the same positive constant, so no variance normalization is applied.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CoefficientDistribution {
    StandardNormal,
    Rademacher,
    Uniform { half_width: f64 },
    Cauchy,
    Shifted { base: Box<CoefficientDistribution>, mu: f64 },
}

impl CoefficientDistribution {
    pub fn shifted(base: CoefficientDistribution, mu: f64) -> Self {
        CoefficientDistribution::Shifted { base: Box::new(base), mu }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CoefficientDistribution::Uniform { half_width } if !(*half_width > 0.0 && half_width.is_finite()) => {
                Err(Error::InvalidParameter(format!("uniform half-width must be positive, got {half_width}")))
            }
            CoefficientDistribution::Shifted { base, mu } => {
                if !mu.is_finite() {
                    return Err(Error::InvalidParameter(format!("mean shift must be finite, got {mu}")));
                }
                base.validate()
            }
            _ => Ok(()),
        }
    }

    /// The mean shift `mu` (zero for the centered laws).
    pub fn mean_shift(&self) -> f64 {
        match self {
            CoefficientDistribution::Shifted { base, mu } => mu + base.mean_shift(),
            _ => 0.0,
        }
    }

    /// True when every draw is an exact integer, so the exact root counter applies.
    pub fn is_integer_valued(&self) -> bool {
        match self {
            CoefficientDistribution::Rademacher => true,
            CoefficientDistribution::Shifted { base, mu } => mu.fract() == 0.0 && base.is_integer_valued(),
            _ => false,
        }
    }

    /// True for laws without atoms, under which multiple zeros have probability zero.
    pub fn is_continuous(&self) -> bool {
        match self {
            CoefficientDistribution::Rademacher => false,
            CoefficientDistribution::Shifted { base, .. } => base.is_continuous(),
            _ => true,
        }
    }

    pub fn sample(&self, stream: &mut RandomStream) -> f64 {
        match self {
            CoefficientDistribution::StandardNormal => stream.normal(),
            CoefficientDistribution::Rademacher => {
                if stream.coin() {
                    1.0
                } else {
                    -1.0
                }
            }
            CoefficientDistribution::Uniform { half_width } => half_width * (2.0 * stream.uniform() - 1.0),
            CoefficientDistribution::Cauchy => (std::f64::consts::PI * (stream.uniform() - 0.5)).tan(),
            CoefficientDistribution::Shifted { base, mu } => mu + base.sample(stream),
        }
    }
}

impl fmt::Display for CoefficientDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoefficientDistribution::StandardNormal => f.write_str("normal"),
            CoefficientDistribution::Rademacher => f.write_str("rademacher"),
            CoefficientDistribution::Uniform { half_width } => write!(f, "uniform:{half_width}"),
            CoefficientDistribution::Cauchy => f.write_str("cauchy"),
            CoefficientDistribution::Shifted { base, mu } => write!(f, "{base}@{mu}"),
        }
    }
}

/// Parses `normal`, `rademacher`, `uniform`, `uniform:<half-width>`,
/// `cauchy`, optionally followed by `@<mu>` for a mean shift.
impl FromStr for CoefficientDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some((base, mu)) = s.rsplit_once('@') {
            let mu: f64 = mu
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad mean shift in '{s}'")))?;
            let dist = CoefficientDistribution::shifted(base.parse()?, mu);
            dist.validate()?;
            return Ok(dist);
        }
        let dist = match s.to_ascii_lowercase().as_str() {
            "normal" | "gaussian" | "standard-normal" => CoefficientDistribution::StandardNormal,
            "rademacher" | "sign" => CoefficientDistribution::Rademacher,
            "uniform" => CoefficientDistribution::Uniform { half_width: 1.0 },
            "cauchy" => CoefficientDistribution::Cauchy,
            other => match other.strip_prefix("uniform:") {
                Some(hw) => CoefficientDistribution::Uniform {
                    half_width: hw
                        .parse()
                        .map_err(|_| Error::InvalidParameter(format!("bad half-width in '{s}'")))?,
                },
                None => return Err(Error::InvalidParameter(format!("unknown distribution '{s}'"))),
            },
        };
        dist.validate()?;
        Ok(dist)
    }
}

/// Draw `count` i.i.d. coefficients.
pub fn sample_coefficients(dist: &CoefficientDistribution, count: usize, stream: &mut RandomStream) -> Polynomial {
    assert!(count >= 1, "a polynomial needs at least one coefficient");
    Polynomial::new((0..count).map(|_| dist.sample(stream)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn evaluate_examples() {
        let p = Polynomial::from_integers(&[1, 1, 1]);
        assert_eq!(p.evaluate(0.0), 1.0);
        assert_eq!(p.evaluate(1.0), 3.0);
        assert_eq!(Polynomial::from_integers(&[1, -3, 1]).evaluate(2.0), -1.0);
    }

    #[test]
    fn evaluate_overflows_to_infinity() {
        let p = Polynomial::new(vec![0.0; 400].into_iter().chain([1.0]).collect());
        assert_eq!(p.evaluate(1e10), f64::INFINITY);
    }

    #[test]
    fn normalization_strips_trailing_zeros() {
        let p = Polynomial::new(vec![1.0, 2.0, 0.0, 0.0]);
        assert_eq!(p.degree(), 1);
        let z = Polynomial::new(vec![0.0, 0.0]);
        assert!(z.is_zero());
        assert_eq!(z.degree(), 0);
        assert!(Polynomial::new(vec![]).is_zero());
    }

    #[test]
    fn reversal_is_coefficient_reversal() {
        let p = Polynomial::from_integers(&[1, 2, 3]);
        assert_eq!(p.reversed().coeffs(), &[3.0, 2.0, 1.0]);
        let x = 0.37;
        assert!(close(p.reversed().evaluate(x), x * x * p.evaluate(1.0 / x), 1e-14));
        assert_eq!(Polynomial::from_integers(&[0, 1, 1]).reversed().degree(), 1);
    }

    #[test]
    fn integer_detection() {
        assert_eq!(Polynomial::from_integers(&[1, -1]).integer_coeffs(), Some(vec![1, -1]));
        assert_eq!(Polynomial::new(vec![0.5, 1.0]).integer_coeffs(), None);
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(sigma(9, 1.0), 3.0);
        assert_eq!(sigma(9, -1.0), 3.0);
        for x in [-3.0, -0.5, 0.0, 0.2, 0.999_999_9, 4.0] {
            assert!(close(sigma(1, x), 1.0, 1e-12), "x = {x}");
        }
        assert!(close(sigma(2, 0.5), 1.25f64.sqrt(), 1e-15));
        assert!(close(sigma(2, 0.5), 1.118034, 1e-6));
    }

    #[test]
    fn sigma_is_continuous_across_unit() {
        let k = 301;
        for d in [1e-3f64, 1e-5, 6e-7, 4e-7, 1e-9] {
            for x in [1.0 - d, 1.0 + d, -1.0 + d] {
                let brute = (0..k).map(|i| x.powi(2 * i as i32)).sum::<f64>().sqrt();
                assert!(close(sigma(k, x), brute, 1e-9), "x = {x}");
            }
        }
    }

    #[test]
    fn g_examples() {
        assert!(close(g_cov(0.5, 0.5).unwrap(), 1.0, 1e-15));
        assert!(close(g_cov(0.5, 0.0).unwrap(), 1.0 / 0.75f64.sqrt(), 1e-15));
        assert!(close(g_cov(0.5, 0.0).unwrap(), 1.154701, 1e-6));
        assert!(close(g_cov(0.5, 0.25).unwrap(), g_cov(2.0, 4.0).unwrap(), 1e-14));
        assert!(matches!(g_cov(1.0, 0.3), Err(Error::Domain(_))));
        assert!(matches!(g_cov(0.3, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn c_n_examples() {
        assert!(close(c_n(7, 0.3, 0.3).unwrap(), 1.0, 1e-15));
        // brute force: sum_{i<3} (1/8)^i / sqrt(sum 0.25^i * sum 0.0625^i)
        let brute = (1.0 + 0.125 + 0.015625) / ((1.0 + 0.25 + 0.0625) * (1.0f64 + 0.0625 + 0.00390625)).sqrt();
        assert!(close(c_n(3, 0.5, 0.25).unwrap(), brute, 1e-14));
        assert!(close(c_n(3, 0.5, 0.25).unwrap(), 0.96412, 1e-5));
        assert!(c_n(4, 0.5, 0.25).is_err());
        assert!(c_n_ratio(5, 1.0, 0.25).is_err());
        // the automatic form is defined at +-1
        assert!(close(c_n(5, 1.0, 1.0).unwrap(), 1.0, 1e-15));
        assert!(close(c_n(5, -1.0, 1.0).unwrap(), 1.0 / 5.0, 1e-15));
    }

    #[test]
    fn c_n_dominates_ou_covariance() {
        let n = 5;
        let x: f64 = 0.9;
        let t = -(1.0 - x).ln();
        for k in 0..100 {
            let y = k as f64 / 100.0;
            let s = -(1.0 - y).ln();
            assert!(c_n(n, x, y).unwrap() >= (-(t - s).abs() / 2.0).exp() - 1e-15);
        }
    }

    #[test]
    fn c_n_large_arguments_do_not_overflow() {
        let v = c_n(501, 3.0, 7.0).unwrap();
        let w = c_n(501, 1.0 / 3.0, 1.0 / 7.0).unwrap();
        assert!(v.is_finite() && close(v, w, 1e-12));
        assert!(close(c_n(501, 3.0, 0.2).unwrap(), c_n_sum(501, 3.0, 0.2).unwrap(), 1e-10));
    }

    #[test]
    fn distribution_parsing() {
        assert_eq!("rademacher".parse::<CoefficientDistribution>().unwrap(), CoefficientDistribution::Rademacher);
        assert_eq!(
            "uniform:2.5".parse::<CoefficientDistribution>().unwrap(),
            CoefficientDistribution::Uniform { half_width: 2.5 }
        );
        let s: CoefficientDistribution = "normal@1".parse().unwrap();
        assert_eq!(s.mean_shift(), 1.0);
        assert_eq!(s.to_string().parse::<CoefficientDistribution>().unwrap(), s);
        assert!("uniform:0".parse::<CoefficientDistribution>().is_err());
        assert!("poisson".parse::<CoefficientDistribution>().is_err());
        assert!("rademacher@2".parse::<CoefficientDistribution>().unwrap().is_integer_valued());
        assert!(!"rademacher@0.5".parse::<CoefficientDistribution>().unwrap().is_integer_valued());
    }

    #[test]
    fn rademacher_support() {
        let mut s = RandomStream::new(11, 0);
        let p = sample_coefficients(&CoefficientDistribution::Rademacher, 4, &mut s);
        assert_eq!(p.coeffs().len(), 4);
        assert!(p.coeffs().iter().all(|&c| c == 1.0 || c == -1.0));
    }

    #[test]
    fn sample_means_obey_clt_bound() {
        let n = 1_000_000;
        let tol = 4.0 / (n as f64).sqrt();
        let mut s = RandomStream::new(2024, 0);
        let p = sample_coefficients(&CoefficientDistribution::StandardNormal, n, &mut s);
        let mean = p.coeffs().iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < tol, "mean {mean}");

        let mut s = RandomStream::new(2024, 1);
        let d = CoefficientDistribution::shifted(CoefficientDistribution::StandardNormal, 2.0);
        let p = sample_coefficients(&d, n, &mut s);
        let mean = p.coeffs().iter().sum::<f64>() / n as f64;
        assert!((mean - 2.0).abs() < tol, "mean {mean}");
    }

    #[test]
    fn sampling_is_reproducible() {
        let d = CoefficientDistribution::Cauchy;
        let a = sample_coefficients(&d, 16, &mut RandomStream::new(5, 9));
        let b = sample_coefficients(&d, 16, &mut RandomStream::new(5, 9));
        assert_eq!(a, b);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn ratio_form_matches_brute_force(half in 0usize..=250, x in -0.999f64..0.999, y in -0.999f64..0.999) {
            let n = 2 * half + 1;
            let brute = {
                let s: f64 = (0..n).map(|i| (x * y).powi(i as i32)).sum();
                let sx: f64 = (0..n).map(|i| (x * x).powi(i as i32)).sum();
                let sy: f64 = (0..n).map(|i| (y * y).powi(i as i32)).sum();
                s / (sx * sy).sqrt()
            };
            let r = c_n_ratio(n, x, y).unwrap();
            prop_assert!(close(r, brute, 1e-10), "n={} x={} y={} ratio={} brute={}", n, x, y, r, brute);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn g_lemma_sandwich(z in 1e-9f64..=0.5, w in 1e-9f64..=0.5) {
            let h = 1.0 - w * z / (w + z);
            let core = (h - (1.0 - z / 2.0).sqrt() * (1.0 - w / 2.0).sqrt()) * z.max(w) / h;
            let d2 = (w - z) * (w - z);
            // absolute slack covers rounding in the bracket when w ~ z
            let slack = 1e-15;
            prop_assert!(core >= d2 / 8.0 - slack, "z={} w={} core={} lower={}", z, w, core, d2 / 8.0);
            prop_assert!(core <= d2 + slack, "z={} w={} core={} upper={}", z, w, core, d2);
        }

        #[test]
        fn g_symmetries(x in -0.99f64..0.99, y in -0.99f64..0.99) {
            prop_assume!(x.abs() > 1e-3 && y.abs() > 1e-3);
            let g = g_cov(x, y).unwrap();
            prop_assert!(close(g, g_cov(-x, -y).unwrap(), 1e-12));
            prop_assert!(close(g, g_cov(1.0 / x, 1.0 / y).unwrap(), 1e-12));
            prop_assert!(g >= 1.0 - 1e-12);
        }

        #[test]
        fn ou_lower_bound(half in 1usize..=250, x in 0.0f64..1.0, y in 0.0f64..1.0) {
            let n = 2 * half + 1;
            let t = -(1.0 - x).ln();
            let s = -(1.0 - y).ln();
            let c = c_n(n, x, y).unwrap();
            prop_assert!(c >= (-(t - s).abs() / 2.0).exp() * (1.0 - 1e-12), "n={} x={} y={}", n, x, y);
        }
    }
}
