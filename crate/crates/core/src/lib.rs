//! Local independence training.
//!
//! Trains ensembles of binary classifiers whose log-odds input gradients are
//! pushed towards mutual orthogonality, on synthetic datasets where several
//! different decision rules explain the training labels equally well, and
//! measures how well each ensemble member recovers one of those rules.

pub mod autodiff;
pub mod datasets;
pub mod error;
pub mod evaluation;
pub mod models;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
