//! Numerical library for the moment structure of the critical 2d stochastic
//! heat flow (SHF): explicit moment kernels, the matched Gaussian
//! multiplicative chaos (GMC) moments, lattice/continuum critical windows,
//! replica Monte Carlo, and desk-scale verification of the strict
//! inequalities separating the SHF from its GMC surrogate.
//!
//! Layout:
//! - [`special_fn`]: heat kernel, Dickman renewal density `G_theta`,
//!   Gaussian product identities.
//! - [`quadrature`]: adaptive 1-d integration, time-simplex integration
//!   (deterministic and importance-sampled MC), seeded RNG streams.
//! - [`lattice_renewal`]: lattice window (`R_N`, `sigma_N^2`, `beta_N^2`,
//!   `U_N`) and continuum window (`R_eps`, constant `C`, `beta_eps^2`).
//! - [`kernels`]: second-moment kernel `K2`, GMC kernel, covariance kernel,
//!   correlation-product series.
//! - [`third_moment`]: exact Gaussian reduction of the third-moment
//!   integrand, the `I3`/`I3_tilde` series and the strict-gap verdict.
//! - [`higher_moments`]: h-th moment series via exact Gaussian conditioning,
//!   GMC h-th moments, factorization and excess reports.
//! - [`simulate`]: directed-polymer and mollified-SHE replica Monte Carlo.
//! - [`eta_bound`]: the deterministic quadrature chain producing the strict
//!   excess constant `eta`.
//! - [`cli`]: the `shflab` command-line surface and the reproduction driver.
//! - [`acceptance`]: the acceptance criteria behind `shflab reproduce` and
//!   the `acceptance` integration test target.

pub mod acceptance;
pub mod cli;
pub mod error;
pub mod eta_bound;
pub mod higher_moments;
pub mod kernels;
pub mod lattice_renewal;
pub mod num;
pub mod quadrature;
pub mod simulate;
pub mod special_fn;
pub mod table_io;
pub mod third_moment;

pub use error::{Error, Result};

/// Scalar type used by the concrete engines.
pub type Scalar = f64;
/// Planar point over the concrete scalar.
pub type Point = num::Pt<f64>;
