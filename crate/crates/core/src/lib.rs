//! Fast-wave/slow-wave IMEX spectral deferred corrections.

pub mod collocation;
pub mod error;
pub mod harness;
pub mod imex;
pub mod problems;
pub mod reference;
pub mod sdc;
pub mod snapshot;

pub use error::{Error, Result};
pub use imex::ImexSystem;
