//! Link-level simulation of FDD full-dimensional MIMO downlink channel
//! estimation from uplink observations.

pub mod array;
pub mod baselines;
pub mod channel;
pub mod codebook;
pub mod config;
pub mod correlation;
pub mod dsce;
pub mod error;
pub mod linalg;
pub mod link;
pub mod plot;
pub mod presets;
pub mod rng;
pub mod spectrum;
pub mod sweep;

pub use error::{Error, Result};
