pub mod cli;
pub mod encoders;
pub mod error;
pub mod evalkit;
pub mod fsutil;
pub mod gradnet;
pub mod objective;
pub mod rng;
pub mod synthgen;
pub mod textlab;
pub mod trainkit;

pub use error::{Error, Result};
