//! Numerical laboratory for a degenerate diffusion-chemotaxis system.
//!
//! The crate couples a positivity-preserving IMEX solver for the regularized
//! biomass/nutrient system with the norm and level-set machinery needed to
//! measure stability, dissipativity, smoothing contraction, finite
//! propagation speed and the box-counting dimension of trajectory snapshots.

pub mod analysis;
pub mod error;
pub mod experiments;
pub mod fld;
pub mod grid;
pub mod model;
pub mod norms;
pub mod solver;

pub use error::{Error, Result};
