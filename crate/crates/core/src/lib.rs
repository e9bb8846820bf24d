//! Pseudo-spectral solver for the fractional Navier–Stokes equations on a
//! periodic box with randomized rough initial data.

pub mod checkpoint;
pub mod decay;
pub mod error;
pub mod evolution;
pub mod field;
pub mod grid;
pub mod mild;
pub mod nonlinearity;
pub mod norms;
pub mod params;
pub mod randomization;
pub mod semigroup;
pub mod stats;
pub mod trajectory;
pub mod verify;

pub use error::{Error, Result};
pub use field::SpectralVectorField;
pub use grid::Grid;
