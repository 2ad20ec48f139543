//! Persistence exponents of random polynomials.
//!
//! A random polynomial `f_n(x) = sum_{i<n} a_i x^i` with i.i.d. centered
//! coefficients has no real zero with probability `n^{-b + o(1)}`, where `b`
//! is the persistence exponent of the stationary Gaussian process with
//! correlation `sech(t/2)`. This crate provides the pieces needed to
//! measure `b` both ways and to check the numerics against closed forms:
//!
//! - [`poly`]: polynomials, coefficient laws and the covariance `c_n(x, y)`;
//! - [`roots`]: exact (Sturm) and grid-based real-zero counting;
//! - [`gp`]: covariances, spectral densities and path samplers;
//! - [`persistence`]: Monte Carlo and splitting estimators of `P(sup Y <= 0)`;
//! - [`analytic`]: Kac's integral, asymptotic laws and the bound `0.4 <= b <= 2`;
//! - [`harness`]: polynomial experiments and power-law fitting.

pub mod error;
pub mod rng;
pub mod poly;
pub mod roots;
pub mod quadrature;
pub mod gp;
pub mod persistence;
pub mod analytic;

pub use error::{Error, Result};
pub mod harness;
