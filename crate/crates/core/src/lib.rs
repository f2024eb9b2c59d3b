pub mod annotations;
pub mod cli;
pub mod audio;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod features;
pub mod hmm;
pub mod manifest;
pub mod nn;
pub mod pipeline;
pub mod sync;
pub mod synth;
pub mod tatum;

pub use error::{Error, Result};
