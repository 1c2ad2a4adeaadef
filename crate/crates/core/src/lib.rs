pub mod cli;
pub mod config;
pub mod error;
pub mod link;
pub mod optimizer;
pub mod pdp;
pub mod rng;
pub mod sim;
pub mod special;

pub use error::{Error, Result};
