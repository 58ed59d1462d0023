//! Dataset inference: decide whether a suspect model was derived from a
//! victim's private training data.

pub mod container;
pub mod data;
pub mod embed;
pub mod error;
pub mod experiment;
pub mod inference;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod stats;
pub mod stealing;
pub mod theory;

pub use error::{Error, Result};
