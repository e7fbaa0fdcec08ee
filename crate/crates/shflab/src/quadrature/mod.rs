//! Integration engines and randomness plumbing.

pub mod gk;
pub mod rng;
pub mod simplex;

pub use gk::{integrate_1d, qk15, QuadSpec};
pub use rng::{run_mc, run_mc_multi, standard_normal, stream, MCEstimate, MultiEstimate};
pub use simplex::{
    mc_simplex_gtheta, sample_chain_gweighted, sample_time_chain, simplex_integral,
    simplex_integral_gtheta, ImportanceProfile, TimeChain,
};
