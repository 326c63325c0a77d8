pub mod cli;
pub mod data;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod model;
pub mod numkernel;
pub mod optim;

pub use error::{Error, Result};
