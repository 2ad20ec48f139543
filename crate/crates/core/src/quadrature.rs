//! Adaptive integration on top of the tanh-sinh rule from `quadrature`.
//!
//! The underlying rule caps its own work at a few hundred evaluations, so
//! intervals it cannot resolve are bisected, worst first.

use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Most pieces a single integral may be cut into.
const MAX_PIECES: usize = 4000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub abs_err: f64,
    pub evaluations: u64,
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}

impl Eq for Piece {}

impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}

impl Ord for Piece {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&o.err)
    }
}

fn rule<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, evaluations: &mut u64) -> Piece {
    let out = quadrature::integrate(f, a, b, tol);
    *evaluations += out.num_function_evaluations as u64;
    Piece { a, b, value: out.integral, err: out.error_estimate }
}

/// Integrate `f` over `[a, b]` to absolute error `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<Integral> {
    integrate_panels(f, &[a, b], tol)
}

/// Integrate over consecutive panels `[p_0, p_1], [p_1, p_2], ...`. Panels
/// let oscillatory or sharply varying integrands be handed to the rule in
/// digestible pieces; after that the piece with the largest error estimate
/// is bisected until the total meets `tol` or is down to rounding level.
pub fn integrate_panels<F: Fn(f64) -> f64>(f: F, breaks: &[f64], tol: f64) -> Result<Integral> {
    if breaks.len() < 2 || !(tol > 0.0) {
        return Err(Error::InvalidParameter("need at least one panel and a positive tolerance".into()));
    }
    let share = tol / (breaks.len() - 1) as f64;
    let mut evaluations = 0;
    let mut heap: BinaryHeap<Piece> = breaks.windows(2).map(|w| rule(&f, w[0], w[1], share, &mut evaluations)).collect();
    loop {
        let err: f64 = heap.iter().map(|p| p.err).sum();
        let value: f64 = heap.iter().map(|p| p.value).sum();
        let scale: f64 = heap.iter().map(|p| p.value.abs()).sum();
        let floor = 16.0 * f64::EPSILON * scale;
        if err <= tol.max(floor) {
            return Ok(Integral { value, abs_err: err, evaluations });
        }
        if heap.len() >= MAX_PIECES {
            return Err(Error::Convergence { target: tol, achieved: err });
        }
        let worst = heap.pop().expect("at least one piece");
        let mid = 0.5 * (worst.a + worst.b);
        if !(worst.a < mid && mid < worst.b) {
            return Err(Error::Convergence { target: tol, achieved: err });
        }
        let sub = 0.5 * worst.err.min(tol);
        heap.push(rule(&f, worst.a, mid, sub, &mut evaluations));
        heap.push(rule(&f, mid, worst.b, sub, &mut evaluations));
    }
}

/// Evenly spaced panel boundaries covering `[a, b]` with width at most `width`.
pub fn uniform_breaks(a: f64, b: f64, width: f64) -> Vec<f64> {
    let k = ((b - a) / width).ceil().max(1.0) as usize;
    (0..=k).map(|i| if i == k { b } else { a + (b - a) * i as f64 / k as f64 }).collect()
}
