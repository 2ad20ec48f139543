//! Exact real-zero counting for integer polynomials.
//!
//! The Sturm sequence is generated as a subresultant polynomial remainder
//! sequence, which keeps coefficient growth polynomial in the degree. Each
//! subresultant `r_i` is a nonzero constant multiple `c_i S_i` of the
//! classical Sturm polynomial `S_i`; only the sign of `c_i` is needed, and it
//! is tracked alongside the sequence.

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};

/// Dense integer polynomial, lowest degree first, no trailing zeros.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntPoly {
    coeffs: Vec<BigInt>,
}

impl IntPoly {
    pub fn new(mut coeffs: Vec<BigInt>) -> Self {
        while coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn from_i64(coeffs: &[i64]) -> Self {
        Self::new(coeffs.iter().map(|&c| BigInt::from(c)).collect())
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree; the zero polynomial reports 0.
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn coeffs(&self) -> &[BigInt] {
        &self.coeffs
    }

    fn lc(&self) -> &BigInt {
        self.coeffs.last().expect("leading coefficient of the zero polynomial")
    }

    pub fn derivative(&self) -> Self {
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| c * BigInt::from(i))
                .collect(),
        )
    }

    fn content(&self) -> BigInt {
        self.coeffs.iter().fold(BigInt::zero(), |g, c| g.gcd(c))
    }

    /// Divide out the content and make the leading coefficient positive.
    pub fn primitive_part(&self) -> Self {
        if self.is_zero() {
            return self.clone();
        }
        let mut g = self.content();
        if self.lc().is_negative() {
            g = -g;
        }
        Self::new(self.coeffs.iter().map(|c| c / &g).collect())
    }

    fn sign_at_pos_infinity(&self) -> Sign {
        self.lc().sign()
    }

    fn sign_at_neg_infinity(&self) -> Sign {
        let s = self.lc().sign();
        if self.degree() % 2 == 1 {
            -s
        } else {
            s
        }
    }

    /// Sign of the polynomial at the exact value of a finite `f64`.
    pub fn sign_at(&self, x: f64) -> Sign {
        assert!(x.is_finite(), "sign_at needs a finite point");
        if self.is_zero() {
            return Sign::NoSign;
        }
        if x == 0.0 {
            return self.coeffs[0].sign();
        }
        // x = mantissa * 2^exp exactly
        let (mantissa, exp, sgn) = num_traits::float::FloatCore::integer_decode(x);
        let m = BigInt::from(mantissa) * BigInt::from(sgn);
        let d = self.degree();
        if exp >= 0 {
            let xv = m << (exp as usize);
            let mut acc = BigInt::zero();
            for c in self.coeffs.iter().rev() {
                acc = acc * &xv + c;
            }
            acc.sign()
        } else {
            // 2^{k d} f(m / 2^k) = sum_i c_i m^i 2^{k (d - i)}
            let k = (-exp) as usize;
            let mut acc = self.coeffs[d].clone();
            for i in (0..d).rev() {
                acc = acc * &m + (&self.coeffs[i] << (k * (d - i)));
            }
            acc.sign()
        }
    }
}

/// Pseudo-remainder `prem(a, b) = lc(b)^{deg a - deg b + 1} a mod b`.
fn prem(a: &IntPoly, b: &IntPoly) -> IntPoly {
    let db = b.degree();
    let lc = b.lc().clone();
    let mut r = a.coeffs.clone();
    let mut k = a.degree() as i64 - db as i64 + 1;
    while !r.is_empty() && r.len() - 1 >= db {
        let dr = r.len() - 1;
        let t = r[dr].clone();
        let shift = dr - db;
        for c in r.iter_mut() {
            *c *= &lc;
        }
        for (j, bc) in b.coeffs.iter().enumerate() {
            r[j + shift] -= &t * bc;
        }
        debug_assert!(r[dr].is_zero());
        r.pop();
        while r.last().is_some_and(|c| c.is_zero()) {
            r.pop();
        }
        k -= 1;
    }
    if k > 0 {
        let f = num_traits::pow(lc, k as usize);
        for c in r.iter_mut() {
            *c *= &f;
        }
    }
    IntPoly::new(r)
}

fn exact_div(p: IntPoly, d: &BigInt) -> IntPoly {
    IntPoly::new(
        p.coeffs
            .into_iter()
            .map(|c| {
                let (q, r) = c.div_rem(d);
                debug_assert!(r.is_zero(), "subresultant division must be exact");
                q
            })
            .collect(),
    )
}

fn sign_of(b: &BigInt) -> i32 {
    sign_i32(b.sign())
}

fn sign_i32(s: Sign) -> i32 {
    match s {
        Sign::Minus => -1,
        Sign::NoSign => 0,
        Sign::Plus => 1,
    }
}

/// A Sturm sequence stored as subresultants plus the sign of each scale factor.
#[derive(Clone, Debug)]
pub struct SturmSequence {
    polys: Vec<IntPoly>,
    scale_signs: Vec<i32>,
}

impl SturmSequence {
    /// Sequence for `p, p', ...`. `p` should be square-free for the count
    /// to be exact at zeros of `p`; use [`ExactCounter`] for general input.
    pub fn new(p: &IntPoly) -> Self {
        let (polys, scale_signs) = subresultant_prs(p, &p.derivative());
        Self { polys, scale_signs }
    }

    pub fn len(&self) -> usize {
        self.polys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.polys.is_empty()
    }

    /// Last nonzero element: a constant multiple of `gcd(p, p')`.
    fn gcd(&self) -> &IntPoly {
        self.polys.last().expect("nonempty sequence")
    }

    fn variations<I: Iterator<Item = i32>>(signs: I) -> usize {
        let mut last = 0;
        let mut count = 0;
        for s in signs.filter(|&s| s != 0) {
            if last != 0 && s != last {
                count += 1;
            }
            last = s;
        }
        count
    }

    fn variations_at(&self, x: f64) -> usize {
        Self::variations(
            self.polys
                .iter()
                .zip(&self.scale_signs)
                .map(|(p, s)| s * sign_i32(p.sign_at(x))),
        )
    }

    fn variations_at_infinity(&self, positive: bool) -> usize {
        Self::variations(self.polys.iter().zip(&self.scale_signs).map(|(p, s)| {
            let sg = if positive { p.sign_at_pos_infinity() } else { p.sign_at_neg_infinity() };
            s * sign_i32(sg)
        }))
    }

    /// Distinct zeros over the whole real line.
    pub fn count_all(&self) -> usize {
        self.variations_at_infinity(false) - self.variations_at_infinity(true)
    }

    /// Distinct zeros in `(a, b]`.
    pub fn count_in(&self, a: f64, b: f64) -> usize {
        let va = self.variations_at(a);
        let vb = self.variations_at(b);
        va.saturating_sub(vb)
    }
}

/// Subresultant PRS of `a`, `b` with `deg a >= deg b`. Returns the sequence
/// and, for each element, the sign of the constant relating it to the
/// classical negated-remainder (Sturm) sequence.
fn subresultant_prs(a: &IntPoly, b: &IntPoly) -> (Vec<IntPoly>, Vec<i32>) {
    let mut polys = vec![a.clone()];
    let mut signs = vec![1];
    if b.is_zero() {
        return (polys, signs);
    }
    polys.push(b.clone());
    signs.push(1);

    let mut psi = BigInt::from(-1);
    let mut prev_delta = 0usize;
    let mut i = 1;
    loop {
        let r_prev = &polys[i - 1];
        let r_cur = &polys[i];
        let delta = r_prev.degree() - r_cur.degree();
        let beta = if i == 1 {
            if (delta + 1) % 2 == 0 {
                BigInt::one()
            } else {
                BigInt::from(-1)
            }
        } else {
            let gamma_prev = polys[i - 1].lc().clone();
            // psi_i = (-gamma_{i-1})^{d_{i-1}} / psi_{i-1}^{d_{i-1} - 1}
            let num = num_traits::pow(-gamma_prev.clone(), prev_delta);
            psi = if prev_delta == 0 {
                // degenerate (only when deg a == deg b at the first step)
                num * &psi
            } else {
                let den = num_traits::pow(psi.clone(), prev_delta - 1);
                let (q, r) = num.div_rem(&den);
                debug_assert!(r.is_zero());
                q
            };
            -gamma_prev * num_traits::pow(psi.clone(), delta)
        };
        let rem = prem(r_prev, r_cur);
        if rem.is_zero() {
            break;
        }
        let next = exact_div(rem, &beta);
        // r_{i+1} = -gamma_i^{d_i+1} c_{i-1} S_{i+1} / beta_i
        let gamma_sign = sign_of(r_cur.lc());
        let gpow = if (delta + 1) % 2 == 0 { 1 } else { gamma_sign };
        let s = -gpow * signs[i - 1] * sign_of(&beta);
        polys.push(next);
        signs.push(s);
        prev_delta = delta;
        i += 1;
        if polys[i].degree() == 0 {
            break;
        }
    }
    (polys, signs)
}

/// Square-free part `p / gcd(p, p')`, primitive with positive leading coefficient.
pub fn square_free_part(p: &IntPoly) -> IntPoly {
    let seq = SturmSequence::new(p);
    let g = seq.gcd();
    if g.degree() == 0 {
        return p.clone();
    }
    exact_quotient(p, &g.primitive_part())
}

/// `p / g` for `g` dividing `p` over the rationals, returned primitive.
fn exact_quotient(p: &IntPoly, g: &IntPoly) -> IntPoly {
    let dg = g.degree();
    let lc = g.lc().clone();
    let mut r = p.coeffs.clone();
    let dq = p.degree() - dg;
    let mut q = vec![BigInt::zero(); dq + 1];
    // pseudo-division, scaling quotient as we go
    for k in (0..=dq).rev() {
        let t = r[k + dg].clone();
        for c in q.iter_mut() {
            *c *= &lc;
        }
        for c in r.iter_mut() {
            *c *= &lc;
        }
        q[k] += &t;
        for (j, gc) in g.coeffs.iter().enumerate() {
            r[j + k] -= &t * gc;
        }
    }
    debug_assert!(r.iter().all(|c| c.is_zero()), "gcd must divide p");
    IntPoly::new(q).primitive_part()
}

/// Sturm data for counting the distinct real zeros of `p`.
#[derive(Clone, Debug)]
pub struct ExactCounter {
    sequence: SturmSequence,
}

impl ExactCounter {
    pub fn new(p: &IntPoly) -> Result<Self> {
        if p.is_zero() {
            return Err(Error::ZeroPolynomial);
        }
        let seq = SturmSequence::new(p);
        let sequence = if seq.gcd().degree() == 0 {
            seq
        } else {
            SturmSequence::new(&exact_quotient(p, &seq.gcd().primitive_part()))
        };
        Ok(Self { sequence })
    }

    pub fn count(&self) -> usize {
        self.sequence.count_all()
    }

    /// Distinct zeros in `(a, b]`; requires `a < b`.
    pub fn count_in(&self, a: f64, b: f64) -> Result<usize> {
        if !(a < b) {
            return Err(Error::InvalidParameter(format!("empty interval ({a}, {b}]")));
        }
        match (a.is_finite(), b.is_finite()) {
            (true, true) => Ok(self.sequence.count_in(a, b)),
            _ => {
                let va = if a.is_finite() {
                    self.sequence.variations_at(a)
                } else {
                    self.sequence.variations_at_infinity(false)
                };
                let vb = if b.is_finite() {
                    self.sequence.variations_at(b)
                } else {
                    self.sequence.variations_at_infinity(true)
                };
                Ok(va.saturating_sub(vb))
            }
        }
    }
}
