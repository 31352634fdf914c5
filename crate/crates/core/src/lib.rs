pub mod autodiff;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod metrics;
pub mod model;
pub mod objectives;
pub mod ranking;
pub mod training;

pub use error::{Error, Result};
