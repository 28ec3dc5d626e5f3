//! Numerical laboratory for SABR-type diffusions.
//!
//! The crate covers path simulation with absorption at zero, the random time
//! change that decouples SABR into a CEV process on a stochastic clock, the
//! hyperbolic geometry behind the radial weight functions, symmetrizability
//! and closability of the associated Dirichlet forms, and large-time
//! absorption estimates.

pub mod asymptotics;
pub mod dirichlet;
pub mod error;
pub mod geometry;
pub mod process_models;
pub mod rng;
pub mod simulation;
pub mod stats;
pub mod time_change;
pub mod weights;

pub use error::{Error, Result};
pub use process_models::{GeneratorKind, GeneratorSpec, ModelParams, ScalarField, State2};
pub use rng::SeedSpec;
pub use simulation::{Path, TimeGrid};
