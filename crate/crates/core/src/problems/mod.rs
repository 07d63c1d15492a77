//! Model problems: a two-rate Dahlquist scalar, 1D periodic advection, 1D
//! acoustics with slow advection and a linear 2D gravity-wave slice.

mod acoustic;
mod advection;
mod dahlquist;
mod gravity;
mod stencil;

pub use acoustic::AcousticAdvection1D;
pub use advection::{Advection1D, ExactAdvection};
pub use dahlquist::DahlquistTwoRate;
pub use gravity::{GravityWave2D, HorizontalAdvection};
