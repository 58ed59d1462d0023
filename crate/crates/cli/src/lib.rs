//! Experiment driver behind the `dinfer` binary.

pub mod artifacts;
pub mod checks;
pub mod commands;
pub mod theory_suite;
