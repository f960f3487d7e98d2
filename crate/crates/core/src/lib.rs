pub mod conduct;
pub mod config;
pub mod error;
pub mod export;
pub mod inference;
pub mod math;
pub mod outcome;
pub mod rng;
pub mod simulator;
pub mod stage1;
pub mod stage2;

pub use error::{Error, Result};
