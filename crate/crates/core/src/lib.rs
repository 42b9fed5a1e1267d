//! Noisy density-matrix simulation and extrapolation-based error mitigation.

pub mod cert;
pub mod channel;
pub mod circuit;
pub mod error;
pub mod inverse_emre;
pub mod linalg;
pub mod mitigation;
pub mod noise;
pub mod pauli;
pub mod seed;
pub mod simulator;

pub use error::{Error, Result};
