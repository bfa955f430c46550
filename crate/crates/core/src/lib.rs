//! Risk-averse feedback synthesis for a heat equation coupled through its
//! boundary to a linear SDE.
//!
//! The pipeline: [`spectral`] builds the Robin eigenbasis and boundary
//! lifters, [`reduction`] assembles the finite-dimensional augmented SDE,
//! [`sde`] simulates it (and [`cosim`] simulates the original coupled
//! system as an oracle), [`lq`] computes the mean-optimal gain and
//! [`optimizer`] runs projected gradient descent–ascent on CVaR.

pub mod config;
pub mod cosim;
pub mod error;
pub mod experiment;
pub mod func;
pub mod io;
pub mod lq;
mod matrix;
pub mod optimizer;
pub mod par;
pub mod reduction;
pub mod report;
pub mod risk;
pub mod sde;
pub mod spectral;

pub use error::{Error, Result};
pub use func::{h1_inner, FunctionDescriptor};
