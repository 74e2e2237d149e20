pub mod error;
pub mod field;
pub mod lcc;
pub mod quantize;
pub mod distance;
pub mod wire;
pub mod data;
pub mod federation;
pub mod clustering;
pub mod metrics;
pub mod privacy;
pub mod config;
pub mod experiment;

pub use error::{Error, Result};
