//! Closed-form baselines: Kac's integral for the mean number of real
//! zeros, the logarithmic asymptotics, and the computation behind the
//! bounds `0.4 <= b <= 2`.

mod bounds;
mod kac;

pub use bounds::{
    bivariate_orthant, certify_bound_chain, discrete_slepian_check, lemma_b_constants, slepian_bound,
    tridiag_det, tridiag_det_dense, tridiag_lower_bound, LemmaBConstants,
};
pub use kac::{en_asymptote, kac_density, kac_en, vn_asymptote, KacResult};
