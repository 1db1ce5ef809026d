//! Circular β-ensemble toolkit.
//!
//! Samplers for the circular β-ensemble, an Euler–Maruyama integrator for
//! circular Dyson Brownian motion, exact generator algebra on power sums, the
//! Stein-method Wasserstein-1 bound for the vector of the first `d` power
//! sums, an exact empirical transport solver, and the Fourier/Sobolev
//! machinery for the logarithm of the characteristic polynomial.
//!
//! Every Monte Carlo driver takes a master seed; per-task random streams are
//! derived from `(seed, tags...)` so results do not depend on the number of
//! worker threads.

// `!(x > 0.0)` deliberately rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod field;
pub mod fit;
pub mod io;
mod par;
pub mod rng;
pub mod stats;
pub mod statistics;
pub mod stein;
pub mod transport;

pub use ensemble::{Configuration, EnsembleParams, McmcConfig, SampleBatch, Sampler};
pub use error::{Error, Result};
pub use num_complex::Complex64;
