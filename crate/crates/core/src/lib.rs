//! Exact Fock-space simulation of a heralded polarization CNOT built from
//! linear optics, an entangled ancilla pair and post-selection.
//!
//! The crate is organized bottom-up:
//!
//! - [`fock`]: mode registry and sparse bosonic states,
//! - [`elements`]: linear-optical elements and their action on states,
//! - [`sources`]: Bell ancilla, input qubits and perturbative SPDC emission,
//! - [`circuit`]: element lists with their herald rule and source model,
//! - [`measurement`]: heralding, feed-forward, coincidence tables, fidelity
//!   and interference visibility,
//! - [`experiments`]: the canonical gate circuit, scenario runners, config
//!   files, reports and the CLI.

pub mod circuit;
pub mod elements;
pub mod error;
pub mod experiments;
pub mod fock;
pub mod measurement;
pub mod sources;

pub use error::{Error, Result};
