//! Experiment driver for the label-augmentation lab: the identity
//! verification suite, seeded training runs, sweeps and exact descent.

pub mod config;
pub mod data;
pub mod descent;
pub mod error;
pub mod rng;
pub mod sweep;
pub mod train;
pub mod verify;

pub use config::{ConfigError, RunConfig};
pub use error::RunError;
