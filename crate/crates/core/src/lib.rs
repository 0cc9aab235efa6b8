//! Quality-diversity search over populations of complete RL agents.

pub mod blob;
pub mod config;
pub mod env;
pub mod error;
pub mod export;
pub mod nn;
pub mod orchestrator;
pub mod repertoire;
pub mod rl;
pub mod rng;
pub mod tessellation;
pub mod variation;

pub use error::{Error, Result};
