//! Crack segmentation on image sequences: synthetic data generation, dataset
//! preparation, the two networks, training and evaluation.

pub mod datapipe;
pub mod error;
pub mod evalsuite;
pub mod imaging;
pub mod nets;
pub mod synthgen;
pub mod trainer;
pub mod seeds;

pub use error::{Error, Result};
