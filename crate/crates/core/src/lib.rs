#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

//! Numerical laboratory for conditioned Fokker–Planck equations of
//! stochastically forced 3D Navier–Stokes Galerkin systems.

pub mod besov;
pub mod config;
pub mod counterexample;
pub mod density;
pub mod error;
pub mod fokker_planck;
pub mod grid;
pub mod noise;
pub mod nonlinearity;
pub mod pipeline;
pub mod report;
pub mod sde;
pub mod serde_float;
pub mod spectral;

pub use error::{Error, Result};
