//! Grid-based real-zero counting in floating point.
//!
//! The real line is split into the four pieces `[0, 1]`, `[1, inf)`,
//! `(-inf, -1]` and `[-1, 0]`, each parameterized by `u in [0, 1]` through
//! `x = u`, `1/u`, `-1/u` and `-u`. On the outer pieces the polynomial is
//! replaced by its reversal `x^d f(1/x)`, so every evaluation happens at
//! `|u| <= 1`. Zeros pile up near `x = +-1`, so `u` is sampled on a grid that
//! is uniform in `t = -log(1 - u)` and merged with a uniform grid in `u`.
//!
//! Sign changes of `f / s` between samples count one zero each, where
//! `s(u) = sqrt(sum a_i^2 u^{2i})`. Local minima of `|f| / s` are refined to
//! catch pairs of zeros between two samples; a minimum that gets below the
//! suspect threshold without crossing is reported as a suspect interval.

use serde::{Deserialize, Serialize};

use crate::poly::Polynomial;

use super::{SuspectInterval, ZeroCountResult};

/// The four symmetry maps of `[0, 1]` onto the real line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    /// `x = u`
    Identity,
    /// `x = 1/u`
    Inverse,
    /// `x = -1/u`
    NegInverse,
    /// `x = -u`
    Negate,
}

impl Regime {
    pub const ALL: [Regime; 4] = [Regime::Identity, Regime::Inverse, Regime::NegInverse, Regime::Negate];

    pub fn index(self) -> usize {
        match self {
            Regime::Identity => 0,
            Regime::Inverse => 1,
            Regime::NegInverse => 2,
            Regime::Negate => 3,
        }
    }

    pub fn to_x(self, u: f64) -> f64 {
        match self {
            Regime::Identity => u,
            Regime::Inverse => 1.0 / u,
            Regime::NegInverse => -1.0 / u,
            Regime::Negate => -u,
        }
    }

    /// `x` range covered by `u in [a, b]`, ordered.
    fn x_interval(self, a: f64, b: f64) -> (f64, f64) {
        let (p, q) = (self.to_x(a), self.to_x(b));
        if p <= q {
            (p, q)
        } else {
            (q, p)
        }
    }

    /// Which `u` values belong to this regime, so shared endpoints are
    /// counted once: `x = 0` and `x = 1` go to `Identity`, `x = -1` to
    /// `Negate`; `u = 0` on the outer pieces is the point at infinity.
    fn owns(self, u: f64) -> bool {
        match self {
            Regime::Identity => true,
            Regime::Negate => u > 0.0,
            Regime::Inverse | Regime::NegInverse => u > 0.0 && u < 1.0,
        }
    }
}

/// Sampling parameters for the numeric backend.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Depth in `t = -log(1 - u)`; `None` means `log(degree) + 6`.
    pub t_max: Option<f64>,
    pub points_per_unit_t: usize,
    pub interior_points: usize,
    /// Bisection stops once a bracket is this narrow in `t`.
    pub bracket_tol: f64,
    /// `|f| / s` below this without a sign change marks a suspect interval.
    pub suspect_threshold: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            t_max: None,
            points_per_unit_t: 64,
            interior_points: 256,
            bracket_tol: 1e-12,
            suspect_threshold: 1e-8,
        }
    }
}

impl GridSpec {
    pub fn t_max_for(&self, degree: usize) -> f64 {
        self.t_max.unwrap_or_else(|| (degree.max(1) as f64).ln() + 6.0)
    }

    pub fn validate(&self) -> crate::Result<()> {
        let bad = |m: &str| Err(crate::Error::InvalidParameter(m.to_string()));
        if let Some(t) = self.t_max {
            if !(t > 0.0 && t.is_finite()) {
                return bad("t_max must be positive");
            }
        }
        if self.points_per_unit_t < 2 || self.interior_points < 2 {
            return bad("grid point counts must be at least 2");
        }
        if !(self.bracket_tol > 0.0) || !(self.suspect_threshold >= 0.0) {
            return bad("tolerances must be positive");
        }
        Ok(())
    }
}

/// The sorted `u` samples for one degree, shared by all four regimes.
#[derive(Clone, Debug)]
pub struct Grid {
    spec: GridSpec,
    u: Vec<f64>,
}

impl Grid {
    pub fn new(spec: &GridSpec, degree: usize) -> Self {
        let t_max = spec.t_max_for(degree);
        let steps = (t_max * spec.points_per_unit_t as f64).ceil() as usize;
        let mut u: Vec<f64> = (0..=steps)
            .map(|k| {
                let t = t_max * k as f64 / steps as f64;
                -(-t).exp_m1()
            })
            .collect();
        u.extend((0..=spec.interior_points).map(|j| j as f64 / spec.interior_points as f64));
        u.push(1.0);
        u.sort_by(|a, b| a.partial_cmp(b).unwrap());
        u.dedup();
        Self { spec: spec.clone(), u }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn points(&self) -> &[f64] {
        &self.u
    }
}

/// A located zero: regime, parameter `u` and the real point `x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocatedZero {
    pub regime: Regime,
    pub u: f64,
    pub x: f64,
}

impl LocatedZero {
    /// `t = -log(1 - u)`; infinite for zeros at `x = +-1`.
    pub fn t(&self) -> f64 {
        -(-self.u).ln_1p()
    }
}

#[derive(Clone, Debug, Default)]
pub struct NumericZeros {
    pub zeros: Vec<LocatedZero>,
    pub suspect: Vec<SuspectInterval>,
}

/// Evaluates `p(u)` and `p(-u)` together from the even and odd parts, plus
/// the scale `sqrt(sum c_i^2 u^{2i})`.
struct Evaluator {
    even: Vec<f64>,
    odd: Vec<f64>,
    squares: Vec<f64>,
}

impl Evaluator {
    fn new(coeffs: &[f64]) -> Self {
        Self {
            even: coeffs.iter().step_by(2).copied().collect(),
            odd: coeffs.iter().skip(1).step_by(2).copied().collect(),
            squares: coeffs.iter().map(|c| c * c).collect(),
        }
    }

    fn horner(c: &[f64], x: f64) -> f64 {
        c.iter().rev().fold(0.0, |acc, &v| acc * x + v)
    }

    /// `(p(u), p(-u), scale(u))`
    #[inline]
    fn eval(&self, u: f64) -> (f64, f64, f64) {
        let u2 = u * u;
        let e = Self::horner(&self.even, u2);
        let o = u * Self::horner(&self.odd, u2);
        let s = Self::horner(&self.squares, u2).sqrt();
        (e + o, e - o, s)
    }

    fn normalized(&self, u: f64, negate: bool) -> f64 {
        let (p, m, s) = self.eval(u);
        let v = if negate { m } else { p };
        if s > 0.0 {
            v / s
        } else {
            v
        }
    }
}

fn t_of(u: f64) -> f64 {
    -(-u).ln_1p()
}

/// Bisect a bracket with a sign change of `h` down to `tol` in `t`.
fn bisect(h: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut h_lo = h(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || t_of(hi) - t_of(lo) < tol {
            break;
        }
        let hm = h(mid);
        if hm == 0.0 {
            return mid;
        }
        if (hm > 0.0) == (h_lo > 0.0) {
            lo = mid;
            h_lo = hm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Golden-section search for the minimum of `h` on `[a, b]`.
fn golden_min(h: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut hc = h(c);
    let mut hd = h(d);
    for _ in 0..80 {
        if !(b - a > 1e-15 * b.abs().max(1e-300)) {
            break;
        }
        if hc < hd {
            b = d;
            d = c;
            hd = hc;
            c = b - INV_PHI * (b - a);
            hc = h(c);
        } else {
            a = c;
            c = d;
            hc = hd;
            d = a + INV_PHI * (b - a);
            hd = h(d);
        }
        if hc.min(hd) < 0.0 {
            break;
        }
    }
    if hc < hd {
        (c, hc)
    } else {
        (d, hd)
    }
}

fn scan_regime(
    regime: Regime,
    ev: &Evaluator,
    negate: bool,
    values: &[f64],
    grid: &Grid,
    out: &mut NumericZeros,
) {
    let u = grid.points();
    let spec = grid.spec();
    let h = |x: f64| ev.normalized(x, negate);
    let push = |out: &mut NumericZeros, uu: f64| {
        out.zeros.push(LocatedZero { regime, u: uu, x: regime.to_x(uu) });
    };

    for (k, &v) in values.iter().enumerate() {
        if v == 0.0 && regime.owns(u[k]) {
            push(out, u[k]);
        }
    }
    for k in 0..values.len() - 1 {
        let (a, b) = (values[k], values[k + 1]);
        if a != 0.0 && b != 0.0 && (a > 0.0) != (b > 0.0) {
            let r = bisect(&h, u[k], u[k + 1], spec.bracket_tol);
            push(out, r);
        }
    }

    // local minima of |h| between samples of equal sign
    let n = values.len();
    for k in 0..n {
        let v = values[k];
        if v == 0.0 {
            continue;
        }
        let left = if k > 0 { Some(values[k - 1]) } else { None };
        let right = if k + 1 < n { Some(values[k + 1]) } else { None };
        let same_side = |w: Option<f64>| w.map_or(true, |w| w != 0.0 && (w > 0.0) == (v > 0.0) && w.abs() >= v.abs());
        if !(same_side(left) && same_side(right)) {
            continue;
        }
        let lo = if k > 0 { u[k - 1] } else { u[k] };
        let hi = if k + 1 < n { u[k + 1] } else { u[k] };
        if hi <= lo {
            continue;
        }
        let s = v.signum();
        let (um, hm) = golden_min(|x| s * h(x), lo, hi);
        if hm < 0.0 {
            let left_root = bisect(&h, lo, um, spec.bracket_tol);
            let right_root = bisect(&h, um, hi, spec.bracket_tol);
            push(out, left_root);
            push(out, right_root);
        } else if hm == 0.0 {
            push(out, um);
            let (x0, x1) = regime.x_interval(lo, hi);
            out.suspect.push(SuspectInterval { lo: x0, hi: x1 });
        } else if hm < spec.suspect_threshold {
            let (x0, x1) = regime.x_interval(lo, hi);
            out.suspect.push(SuspectInterval { lo: x0, hi: x1 });
        }
    }
}

/// Locate the real zeros of `poly` on `grid`.
pub fn numeric_zeros(poly: &Polynomial, grid: &Grid) -> NumericZeros {
    let mut out = NumericZeros::default();
    if poly.is_zero() {
        out.suspect.push(SuspectInterval { lo: f64::NEG_INFINITY, hi: f64::INFINITY });
        return out;
    }
    if poly.degree() == 0 {
        return out;
    }
    let direct = Evaluator::new(poly.coeffs());
    let mut rev_coeffs = poly.coeffs().to_vec();
    rev_coeffs.reverse();
    let reversed = Evaluator::new(&rev_coeffs);

    let u = grid.points();
    let mut vals = [vec![0.0; u.len()], vec![0.0; u.len()], vec![0.0; u.len()], vec![0.0; u.len()]];
    for (k, &uk) in u.iter().enumerate() {
        let (p, m, s) = direct.eval(uk);
        let (rp, rm, rs) = reversed.eval(uk);
        let norm = |v: f64, s: f64| if s > 0.0 { v / s } else { v };
        vals[Regime::Identity.index()][k] = norm(p, s);
        vals[Regime::Negate.index()][k] = norm(m, s);
        vals[Regime::Inverse.index()][k] = norm(rp, rs);
        vals[Regime::NegInverse.index()][k] = norm(rm, rs);
    }
    for regime in Regime::ALL {
        let (ev, negate) = match regime {
            Regime::Identity => (&direct, false),
            Regime::Negate => (&direct, true),
            Regime::Inverse => (&reversed, false),
            Regime::NegInverse => (&reversed, true),
        };
        scan_regime(regime, ev, negate, &vals[regime.index()], grid, &mut out);
    }
    out
}

/// Count distinct real zeros numerically. Never certified.
pub fn numeric_count(poly: &Polynomial, grid: &Grid) -> ZeroCountResult {
    let z = numeric_zeros(poly, grid);
    ZeroCountResult { count: z.zeros.len(), certified: false, suspect_intervals: z.suspect }
}

/// Sparse first pass of [`certified_real_zero`]: every this many grid points.
const PROBE_STRIDE: usize = 16;

/// True if the samples prove a real zero exists: two values of opposite
/// sign anywhere on the real line whose magnitudes exceed a rigorous bound
/// on the Horner rounding error, or an exact zero at a point where the
/// arithmetic is exact (`x = 0`, and `x = +-1` for small integers). The
/// signs at `0` and `+-inf` come straight from the coefficients; a sparse
/// pass over the grid runs before the full one.
pub fn certified_real_zero(poly: &Polynomial, grid: &Grid) -> bool {
    if poly.is_zero() {
        return true;
    }
    let d = poly.degree();
    if d == 0 {
        return false;
    }
    if d % 2 == 1 {
        return true;
    }
    let coeffs = poly.coeffs();
    if coeffs[0] == 0.0 {
        return true;
    }
    let mut seen = [false; 2];
    let mut record = |positive: bool| {
        seen[positive as usize] = true;
        seen[0] && seen[1]
    };
    record(poly.leading() > 0.0);
    if record(coeffs[0] > 0.0) {
        return true;
    }
    let exact_ints = poly
        .integer_coeffs()
        .is_some_and(|c| c.iter().map(|v| v.unsigned_abs() as f64).sum::<f64>() < 9.0e15);
    let mut rev = coeffs.to_vec();
    rev.reverse();
    let gamma = {
        let nu = 2.0 * (d as f64 + 1.0) * f64::EPSILON / 2.0;
        nu / (1.0 - nu)
    };
    let abs_sum = |c: &[f64], u: f64| c.iter().rev().fold(0.0, |acc, &v| acc * u + v.abs());
    let u = grid.points();
    for stride in [PROBE_STRIDE, 1] {
        for (c, negate) in [(coeffs, false), (coeffs, true), (&rev[..], false), (&rev[..], true)] {
            for &uk in u.iter().step_by(stride) {
                let x = if negate { -uk } else { uk };
                let v = c.iter().rev().fold(0.0, |acc, &v| acc * x + v);
                if v == 0.0 && exact_ints && uk == 1.0 {
                    return true;
                }
                // reversal and reflection keep the sign for even degree
                if v.abs() > 4.0 * gamma * abs_sum(c, uk) && record(v > 0.0) {
                    return true;
                }
            }
        }
    }
    false
}
