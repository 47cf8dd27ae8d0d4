//! Dissipative Bose-Hubbard chain simulator: Lindblad dynamics after local
//! doublon/holon injection, two-site entanglement negativity, moment-based
//! state tomography, and quasiparticle-speed extraction.

pub mod analysis;
pub mod config;
pub mod dynamics;
pub mod entanglement;
pub mod error;
pub mod hilbert;
pub(crate) mod kernel;
pub(crate) mod kernels;
pub(crate) mod sector;
pub mod runner;
pub mod states;
pub mod trajectory;

pub use error::{Error, Result};
