//! Counting distinct real zeros, exactly and numerically.

pub mod exact;
pub mod numeric;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::Polynomial;

pub use exact::{ExactCounter, IntPoly};
pub use numeric::{certified_real_zero, numeric_count, numeric_zeros, Grid, GridSpec, LocatedZero, Regime};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuspectInterval {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroCountResult {
    pub count: usize,
    pub certified: bool,
    pub suspect_intervals: Vec<SuspectInterval>,
}

impl ZeroCountResult {
    pub fn is_suspect(&self) -> bool {
        !self.suspect_intervals.is_empty()
    }
}

/// Which counter to use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Exact,
    Numeric,
    /// Exact for integer coefficients up to [`AUTO_EXACT_MAX_DEGREE`], numeric otherwise.
    #[default]
    Auto,
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Ok(Backend::Exact),
            "numeric" => Ok(Backend::Numeric),
            "auto" => Ok(Backend::Auto),
            _ => Err(Error::InvalidParameter(format!("unknown backend '{s}'"))),
        }
    }
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Backend::Exact => "exact",
            Backend::Numeric => "numeric",
            Backend::Auto => "auto",
        })
    }
}

pub const AUTO_EXACT_MAX_DEGREE: usize = 128;

fn to_int_poly(poly: &Polynomial) -> Result<IntPoly> {
    let ints = poly.integer_coeffs().ok_or_else(|| {
        Error::InvalidParameter("the exact counter needs integer coefficients".to_string())
    })?;
    Ok(IntPoly::from_i64(&ints))
}

/// Exact number of distinct real zeros of an integer polynomial.
pub fn sturm_count(poly: &Polynomial) -> Result<ZeroCountResult> {
    if poly.is_zero() {
        return Err(Error::ZeroPolynomial);
    }
    let counter = ExactCounter::new(&to_int_poly(poly)?)?;
    Ok(ZeroCountResult { count: counter.count(), certified: true, suspect_intervals: Vec::new() })
}

/// Exact number of distinct zeros in `(a, b]`.
///
/// Endpoints are used at their exact binary values; a zero sitting exactly
/// on `a` is excluded and one on `b` included, so counts over a partition
/// add up.
pub fn sturm_count_interval(poly: &Polynomial, a: f64, b: f64) -> Result<usize> {
    if poly.is_zero() {
        return Err(Error::ZeroPolynomial);
    }
    ExactCounter::new(&to_int_poly(poly)?)?.count_in(a, b)
}

/// Fast check for the event "no real zero" on the numeric grid: true iff
/// the numeric count is zero with no suspect interval. Odd degree is
/// answered without sampling.
pub fn has_no_real_zero(poly: &Polynomial, grid: &Grid) -> bool {
    if poly.degree() % 2 == 1 {
        return false;
    }
    let r = numeric_count(poly, grid);
    r.count == 0 && !r.is_suspect()
}

/// Exact version of [`has_no_real_zero`]: a certified sign change on the
/// grid settles "has a zero" cheaply, otherwise the Sturm count decides.
pub fn has_no_real_zero_exact(poly: &Polynomial, grid: &Grid) -> Result<bool> {
    if poly.is_zero() {
        return Err(Error::ZeroPolynomial);
    }
    if certified_real_zero(poly, grid) {
        return Ok(false);
    }
    Ok(sturm_count(poly)?.count == 0)
}

/// Resolve `Auto` for a polynomial.
pub fn resolve_backend(backend: Backend, poly: &Polynomial) -> Backend {
    match backend {
        Backend::Auto => {
            if poly.degree() <= AUTO_EXACT_MAX_DEGREE && poly.integer_coeffs().is_some() {
                Backend::Exact
            } else {
                Backend::Numeric
            }
        }
        b => b,
    }
}

/// Count with the requested backend. Numeric results flagged suspect are
/// recounted exactly when the coefficients are integers.
pub fn count_zeros(poly: &Polynomial, grid: &Grid, backend: Backend) -> Result<ZeroCountResult> {
    match resolve_backend(backend, poly) {
        Backend::Exact => sturm_count(poly),
        _ => {
            let r = numeric_count(poly, grid);
            if r.is_suspect() && poly.integer_coeffs().is_some() && !poly.is_zero() {
                sturm_count(poly)
            } else {
                Ok(r)
            }
        }
    }
}
