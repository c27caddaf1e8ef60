//! Deterministic federated local-SGD simulator with Hessian-spectral
//! diagnostics.
//!
//! The crate is organized around a small closed set of loss problems
//! ([`model`]), a federation layer that runs synchronous local-SGD rounds
//! over client shards ([`fedsim`]), a dense symmetric eigendecomposition
//! plus the spectral predictions and energy accounting built on it
//! ([`spectral`]), and Monte-Carlo estimation of the second-order expansion
//! residue ([`residue`]).
//!
//! Everything is reproducible: random draws are keyed by
//! (seed, domain, client, round, counter) rather than by call order, and all
//! parallel reductions fold partial results in a fixed order. Results are
//! bit-identical with the `parallel` feature on or off and under any rayon
//! thread count.

pub mod data;
pub mod error;
pub mod fedsim;
pub mod model;
pub mod par;
pub mod residue;
pub mod spectral;

pub use error::{Error, Result};

/// Library version, for embedding in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
