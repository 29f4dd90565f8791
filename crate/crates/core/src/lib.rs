//! Simulation and latent event history estimation for quasi-reaction systems.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ekf;
pub mod em;
pub mod eval;
pub mod error;
pub mod gauss_gamma;
pub mod gillespie;
pub mod io;
pub mod lla;
pub mod network;
pub mod rng;

pub use error::{Error, Result};
pub use network::{build_sir, parse_network, LogRates, ReactionNetwork, Trajectory};
