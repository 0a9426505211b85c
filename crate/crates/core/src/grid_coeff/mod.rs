//! Spatial grid, control window and coefficient sampling.
//!
//! Coefficients of the diffusion term are stored at cell interfaces as
//! harmonic cell averages, which in one dimension reproduces the
//! homogenized coefficient as the oscillation period shrinks.

mod grid;
mod profile;
mod quadrature;
mod recipe;
mod sampling;

pub use grid::{ControlWindow, Grid};
pub use profile::Profile;
pub use recipe::{CoefficientRecipe, RecipeKind};
pub use sampling::{
    homogenized_constant, sample_coefficients, CoefficientField, Quadrature, SamplingOptions,
};
