//! Coherent-state quantum multiplexing.
//!
//! Qubits encoded as `mu|-alpha> + nu|alpha>` are scaled, summed and separated
//! again with passive optics and photon-counting heralds. Everything is
//! simulated exactly as finite superpositions of multimode coherent states.

pub mod analytics;
pub mod blocks;
pub mod error;
pub mod fock;
pub mod logc;
pub mod mux;
pub mod special;
pub mod state;

pub use error::{Error, Result};
pub use logc::LogComplex;
pub use state::{HeraldClass, Mode, ModeKind, NormMode, QubitSpec, SuperState};
