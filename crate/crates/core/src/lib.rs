//! Statistical simulation of ex-situ weight transfers onto passive ReRAM
//! crossbars, and hardware-aware training of small networks against it.
//!
//! The pipeline: fit a [`VariabilityModel`] from characterisation data (or use
//! the synthetic one), train a [`DenseNet`] with simulated transfer noise
//! injected per batch, then measure robustness over many Monte-Carlo
//! transfers.

pub mod datasets;
pub mod error;
pub mod experiments;
pub mod nn;
pub mod rng;
pub mod training;
pub mod transfer;
pub mod variability;

pub use error::{Error, Result};
pub use nn::DenseNet;
pub use transfer::{ConductanceRange, TransferOutcome, TransferParams};
pub use variability::VariabilityModel;
