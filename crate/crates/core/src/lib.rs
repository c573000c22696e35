//! Ruin probabilities for multivariate random walks with subexponential
//! radial increments.

pub mod asymptotics;
pub mod config;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod par;
pub mod quadrature;
pub mod radial;
pub mod model;
pub mod rng;
pub mod simulate;
pub mod stats;
pub mod taildiag;

pub use error::{Error, Result};
