//! Remote oracle access: serve a model over newline-delimited JSON and
//! query it with exact accounting on both sides.

pub mod client;
pub mod server;
pub mod wire;

pub use client::RemoteOracle;
pub use server::{serve_model, ServeMode, ServerConfig, ServerHandle};
