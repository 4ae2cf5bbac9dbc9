//! Exact simulation of interferometric entanglement, teleportation, GHZ
//! preparation and entanglement swapping of atomic qubits.

pub mod analytic;
pub mod cli;
pub mod error;
pub mod fock;
pub mod joint;
pub mod measurement;
pub mod protocol;
pub mod qubit;
mod special;
