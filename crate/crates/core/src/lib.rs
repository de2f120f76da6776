//! Random walks on ℤ driven by a quasi-periodic environment
//! `p(x + kα)`: scale functions, occupation measures, exact distribution
//! propagation and Monte Carlo estimators.

pub mod cli;
pub mod environment;
pub mod error;
pub mod exact_dp;
pub mod martingale;
pub mod measure;
pub mod monte_carlo;
pub mod occupation;
pub mod rotation;
pub mod verify;

pub use environment::{Environment, TrigPolynomial};
pub use error::{Error, Result};
pub use measure::{Atom, AtomicCircleMeasure, Harmonic};
pub use rotation::Frequency;
