//! Knowledge-graph unlearning laboratory.

pub mod bench;
pub mod cli;
pub mod error;
pub mod eval;
pub mod kg;
pub mod lm;
pub mod pipeline;
pub mod unlearn;

pub use error::{Error, Result};
