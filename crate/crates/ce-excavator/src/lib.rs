//! Numerical parameter exclusion for slowly recurrent Collet-Eckmann
//! rational maps.
//!
//! Layers, bottom up: [`sphere`] (projective arithmetic), [`family`]
//! (one-parameter families and constants), [`orbit`] (returns and bound
//! periods along critical orbits) and [`exclusion`] (the windowed
//! partition engine).

pub mod error;
pub mod scalar;
pub mod sphere;
pub mod family;
pub mod orbit;
pub mod exclusion;

pub use error::{Error, Result};
