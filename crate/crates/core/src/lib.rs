pub mod agent;
pub mod config;
pub mod env;
pub mod error;
pub mod eval;
pub mod nn;
pub mod perception;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
