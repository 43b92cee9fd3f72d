//! Learning graph Laplacians from signals modelled as sparse combinations of
//! multi-scale heat diffusion processes.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x >= 0.0)` also rejects NaN

pub mod dictionary;
pub mod error;
pub mod experiment;
pub mod graphs;
pub mod io;
pub mod localization;
pub mod metrics;
pub mod qp;
pub mod rng;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};
