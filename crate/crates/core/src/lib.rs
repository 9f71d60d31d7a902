//! Multimodal transformer pipeline for multi-day Kp index forecasting.

mod binio;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod features;
pub mod fetch;
pub mod forecast;
pub mod ingest;
pub mod loss;
pub mod model;
pub mod nn;
pub mod synthetic;
pub mod table;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use table::TimeTable;
pub use tensor::Tensor;
