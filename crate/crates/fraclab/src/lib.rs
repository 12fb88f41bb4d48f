//! Numerical tools for the fractional Allen–Cahn equation (-Δ)^s u = f(u).

pub mod analysis;
pub mod conv;
pub mod energy;
pub mod error;
pub mod extension;
pub mod fracop;
pub mod linalg;
pub mod model;
pub mod quad;
pub mod solver;

pub use error::{Error, Result};
