pub mod cli;
pub mod covmodel;
pub mod design;
pub mod environment;
pub mod error;
pub mod harness;
pub mod ingest;
pub mod inference;
pub mod policies;
pub mod rng;

pub use error::{Error, Result};
