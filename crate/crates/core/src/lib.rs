//! Numerical laboratory for Chung's law of the iterated logarithm for the
//! linear stochastic fractional heat equation
//! `du/dt = -(-Δ)^{α/2} u + Ẇ` at a fixed spatial site.
//!
//! * [`params`]: admissible parameters and derived constants `θ, C_H, c21, κ`.
//! * [`covariance`]: closed-form temporal covariance of `u`, of the slab
//!   fields `u_n` and of the remainders `Y_n`; [`quadrature`] is the
//!   independent numerical route to the same integrals.
//! * [`sampler`]: exact Gaussian path ensembles (dense Cholesky, plus a
//!   circulant fBm fixture).
//! * [`smallball`]: Monte Carlo small-ball curves and rate fits.
//! * [`lil`]: the localization experiment behind the Chung limit.
//! * [`cli`]: the `cllb` command line front end.
// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod covariance;
pub mod error;
pub mod lil;
pub mod linalg;
pub mod output;
pub mod par;
pub mod params;
pub mod quadrature;
pub mod rng;
pub mod sampler;
pub mod smallball;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
