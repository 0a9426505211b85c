pub mod analysis;
pub mod error;
pub mod grid_coeff;
pub mod hum;
pub mod linalg;
pub mod ocp;
pub mod operators;
pub mod pde;
pub mod riccati;

pub use error::{Error, Result};
