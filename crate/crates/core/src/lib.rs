//! Numerical laboratory for geometric phases of adiabatically driven open
//! quantum systems.

pub mod error;
pub mod matcore;
pub mod transport;
pub mod lindblad;
pub mod models;
pub mod analytic;
pub mod config;
pub mod experiments;

pub use error::{Error, Result};
