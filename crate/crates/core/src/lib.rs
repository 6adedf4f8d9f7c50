pub mod artifact;
pub mod asymptotics;
pub mod error;
pub mod grid;
pub mod harness;
pub mod kernel;
pub mod measures;
pub mod parabolic;
pub mod quadrature;
pub mod rng;
pub mod sine;
pub mod spectrum;
pub mod stats;
pub mod tridiag;
pub mod wave;

pub use error::{Error, Result};
