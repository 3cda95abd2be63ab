pub mod architecture;
pub mod codec;
pub mod config;
pub mod cost_model;
pub mod entropy;
pub mod error;
pub mod geometry;
pub mod gradient_suite;
pub mod metrics;
pub mod nn;

pub use error::{Error, Result};
