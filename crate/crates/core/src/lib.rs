pub mod blend;
pub mod chart;
pub mod config;
pub mod error;
pub mod exprdiff;
pub mod fnspace;
pub mod integrator;
pub mod io;
pub mod kernel_basis;
pub mod sample;
pub mod system;
pub mod verify;

pub use error::{Error, Result};
