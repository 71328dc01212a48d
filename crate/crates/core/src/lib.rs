//! Simulation library for finite-data, finite-copy quantum binary
//! classification: state primitives, dataset generators, measurement
//! sampling, classifiers, a phase-estimation Helstrom pipeline, closed-form
//! complexity bounds and an experiment harness.

pub mod bounds;
pub mod classifiers;
pub mod embeddings;
pub mod error;
pub mod harness;
pub mod qcore;
pub mod rng;
pub mod sampling;
pub mod transductive;

pub use error::{Error, Result};
