//! Simulation and moment reconstruction for dual-path amplified detection
//! of bosonic fields.

pub mod benchmark;
pub mod chain;
pub mod cli;
pub mod config;
pub mod entanglement;
pub mod error;
pub mod estimate;
pub mod gaussian;
pub mod io;
pub mod math;
pub mod reconstruction;
pub mod sampler;
pub mod tables;
pub mod wick;

pub use error::{Error, Result};

pub type C64 = num_complex::Complex64;
