//! Command-line front end: TOML experiment configs, the train / diagnose /
//! residue / audit / report commands, and CSV/JSON/SVG artifact emission.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;
pub mod svg;

pub use error::{CliError, CliResult};
