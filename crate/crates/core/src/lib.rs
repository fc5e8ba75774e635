//! Code clone detection over flow-augmented Java ASTs.
//!
//! Java fragments are parsed ([`frontend`]), turned into typed-edge graphs
//! ([`flow`]), embedded by a gated graph network or a graph matching network
//! ([`model`]) and compared by cosine similarity ([`pipeline`]).

pub mod cli;
pub mod dataset;
pub mod error;
pub mod flow;
pub mod frontend;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod util;
pub mod vocab;

pub use error::{Error, Result};
