pub mod cli;
pub mod config;
pub mod data;
pub mod ensemble;
pub mod env;
pub mod error;
pub mod harness;
pub mod nn;
pub mod planner;
pub mod seed;
mod textio;

pub use error::{Error, Result};
